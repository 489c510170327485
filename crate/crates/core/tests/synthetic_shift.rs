use monograd::datagen::{generate_synthetic, SynthSpec};
use monograd::Tensor;

fn column(x: &Tensor, j: usize) -> Vec<f64> {
    (0..x.rows()).map(|i| x.at(i, j)).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// Orthonormal basis of the row space of `a` by Gram-Schmidt.
fn row_basis(a: &Tensor) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..a.rows() {
        let mut v = a.row(i).to_vec();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn residual_norm(row: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut v = row.to_vec();
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
    v.iter().map(|x| x * x).sum::<f64>().sqrt() / row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn train_and_valid_rows_share_the_expansion_subspace_and_test_rows_leave_it() {
    let data = generate_synthetic(&SynthSpec::new(2000, 20, 4, 3)).unwrap();
    let basis = row_basis(&data.expansion);
    assert_eq!(basis.len(), 6);
    for d in [&data.train, &data.valid] {
        for i in 0..d.len() {
            assert!(residual_norm(d.features.row(i), &basis) < 1e-9);
        }
    }
    let shifted = (0..data.test.len())
        .filter(|&i| residual_norm(data.test.features.row(i), &basis) > 1e-3)
        .count();
    assert_eq!(shifted, data.test.len());
}

#[test]
fn valid_ranges_match_train() {
    let data = generate_synthetic(&SynthSpec::new(20_000, 20, 4, 5)).unwrap();
    for j in 0..20 {
        let range = |x: &Tensor| {
            let c = column(x, j);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let (rt, rv) = (range(&data.train.features), range(&data.valid.features));
        assert!((rt - rv).abs() / rt < 0.2, "dim {j}: {rt} vs {rv}");
    }
}

// Latent coordinates are zero-mean, so the shift shows in the spread of each
// feature (Σ_k A_kj² · Var X'_k) rather than in its mean.
#[test]
fn test_split_variance_shift_is_detectable() {
    let data = generate_synthetic(&SynthSpec::new(20_000, 20, 4, 7)).unwrap();
    let sq = |a: &Tensor, j: usize| (0..a.rows()).map(|k| a.at(k, j).powi(2)).sum::<f64>();
    let mut checked = 0;
    for j in 0..20 {
        let expected_ratio = sq(&data.test_expansion, j) / sq(&data.expansion, j);
        if (expected_ratio.ln()).abs() < 0.3 {
            continue;
        }
        let (_, vt) = mean_var(&column(&data.train.features, j));
        let (_, vs) = mean_var(&column(&data.test.features, j));
        let (nt, ns) = (data.train.len() as f64, data.test.len() as f64);
        // Normal-theory standard error of the log variance ratio; the
        // features are lighter-tailed than normal, so this is conservative.
        let z = (vs / vt).ln() / (2.0 / nt + 2.0 / ns).sqrt();
        assert!(z.abs() > 2.576, "dim {j}: z = {z}");
        assert_eq!(z.signum(), expected_ratio.ln().signum());
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn no_shift_at_alpha_zero() {
    let mut spec = SynthSpec::new(2000, 20, 4, 9);
    spec.alpha = 0.0;
    let data = generate_synthetic(&spec).unwrap();
    let basis = row_basis(&data.expansion);
    for i in 0..data.test.len() {
        assert!(residual_norm(data.test.features.row(i), &basis) < 1e-9);
    }
}

#[test]
fn target_is_nondecreasing_along_monotone_coordinates() {
    let data = generate_synthetic(&SynthSpec::new(200, 20, 4, 11)).unwrap();
    let f = |x: &[f64]| -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                if i < 4 {
                    monograd::datagen::monotone_component(v)
                } else {
                    monograd::datagen::free_component(v)
                }
            })
            .sum()
    };
    for i in 0..20 {
        let mut x = data.train.features.row(i).to_vec();
        for m in 0..4 {
            let mut prev = f(&x);
            for _ in 0..200 {
                x[m] += 0.37;
                let cur = f(&x);
                assert!(cur > prev);
                prev = cur;
            }
        }
    }
}
