//! Datasets: the synthetic covariate-shift generator, CSV ingestion and
//! Gaussian blobs.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::DomainBox;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(TaskKind::Regression),
            "classification" => Ok(TaskKind::Classification),
            other => Err(Error::invalid(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    /// Class indices in `0..classes`.
    Labels {
        labels: Vec<usize>,
        classes: usize,
    },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(v) => v.len(),
            Targets::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Real(v) => Targets::Real(idx.iter().map(|&i| v[i]).collect()),
            Targets::Labels { labels, classes } => Targets::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[n, D]`
    pub features: Tensor,
    pub targets: Targets,
    /// Monotone feature indices.
    pub monotone: Vec<usize>,
    /// Input-space bounds, taken from the training split.
    pub domain: DomainBox,
    pub split: SplitTag,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        targets: Targets,
        monotone: Vec<usize>,
        domain: DomainBox,
        split: SplitTag,
    ) -> Result<Self> {
        if features.rank() != 2 || features.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: features.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let dim = features.cols();
        if domain.dim() != dim {
            return Err(Error::invalid("domain box dimension differs from feature width"));
        }
        if let Some(&bad) = monotone.iter().find(|&&m| m >= dim) {
            return Err(Error::invalid(format!("monotone feature {bad} out of range")));
        }
        if let Targets::Labels { labels, classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&y| y >= *classes) {
                return Err(Error::invalid(format!("label {bad} out of range")));
            }
        }
        Ok(Dataset {
            features,
            targets,
            monotone,
            domain,
            split,
            feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> TaskKind {
        match self.targets {
            Targets::Real(_) => TaskKind::Regression,
            Targets::Labels { .. } => TaskKind::Classification,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Labels { classes, .. } => Some(classes),
            Targets::Real(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Labels { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    pub fn real_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Real(v) => Some(v),
            Targets::Labels { .. } => None,
        }
    }

    /// Rows `idx`, keeping every other attribute.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            targets: self.targets.select(idx),
            monotone: self.monotone.clone(),
            domain: self.domain.clone(),
            split: self.split,
            feature_names: self.feature_names.clone(),
        }
    }

    fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }
}

/// Shuffles and partitions rows into train/valid/test by the given
/// fractions (test takes the remainder). The domain box of every part is
/// recomputed from the training rows.
pub fn split_dataset(
    data: &Dataset,
    train_fraction: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let n = data.len();
    let (n_train, n_valid) = split_counts(n, train_fraction, valid_fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = data.subset(&idx[..n_train]).with_split(SplitTag::Train);
    let mut valid = data
        .subset(&idx[n_train..n_train + n_valid])
        .with_split(SplitTag::Valid);
    let mut test = data.subset(&idx[n_train + n_valid..]).with_split(SplitTag::Test);
    let domain = DomainBox::from_data(&train.features)?;
    for d in [&mut train, &mut valid, &mut test] {
        d.domain = domain.clone();
    }
    Ok((train, valid, test))
}

fn split_counts(n: usize, train_fraction: f64, valid_fraction: f64) -> Result<(usize, usize)> {
    if !(train_fraction > 0.0 && valid_fraction >= 0.0 && train_fraction + valid_fraction <= 1.0) {
        return Err(Error::invalid("split fractions must be positive and sum to at most 1"));
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_valid = ((n as f64) * valid_fraction).round() as usize;
    if n_train == 0 || n_train + n_valid > n {
        return Err(Error::invalid(format!("cannot split {n} rows with these fractions")));
    }
    Ok((n_train, n_valid))
}

/// Per-feature affine standardisation fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Tensor) -> Self {
        let (n, d) = (features.rows(), features.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(features.row(i)) {
                *m += v / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, features: &Tensor) -> Tensor {
        let d = features.cols();
        let mut out = features.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.mean[j]) / self.scale[j];
        }
        out
    }

    /// Standardises all three splits with statistics of `train`; the domain
    /// box follows the transformed training rows.
    pub fn apply_to_splits(train: &mut Dataset, valid: &mut Dataset, test: &mut Dataset) -> Result<Self> {
        let st = Standardizer::fit(&train.features);
        for d in [&mut *train, &mut *valid, &mut *test] {
            d.features = st.transform(&d.features);
        }
        let domain = DomainBox::from_data(&train.features)?;
        for d in [train, valid, test] {
            d.domain = domain.clone();
        }
        Ok(st)
    }
}

// ---------------------------------------------------------------------------
// Synthetic data with covariate shift

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub samples: usize,
    pub dim: usize,
    pub monotone: Vec<usize>,
    /// Interpolation weight towards the fresh expansion matrix for the test split.
    pub alpha: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl SynthSpec {
    /// `samples` rows in `dim` dimensions, monotone in the first
    /// `monotone_count` features, `alpha = 0.8`, 70/15/15 split.
    pub fn new(samples: usize, dim: usize, monotone_count: usize, seed: u64) -> Self {
        SynthSpec {
            samples,
            dim,
            monotone: (0..monotone_count.min(dim)).collect(),
            alpha: 0.8,
            seed,
            train_fraction: 0.7,
            valid_fraction: 0.15,
        }
    }

    pub fn latent_dim(&self) -> usize {
        (3 * self.dim) / 10
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim() < 1 {
            return Err(Error::invalid(format!(
                "dimension {} too small: the latent dimension floor(0.3 D) must be at least 1",
                self.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        if let Some(&bad) = self.monotone.iter().find(|&&m| m >= self.dim) {
            return Err(Error::invalid(format!("monotone dimension {bad} out of range")));
        }
        split_counts(self.samples, self.train_fraction, self.valid_fraction)?;
        Ok(())
    }
}

/// Strictly increasing component used on monotone coordinates.
pub fn monotone_component(t: f64) -> f64 {
    t + 0.5 * softplus(t)
}

/// Non-monotone component used on the remaining coordinates.
pub fn free_component(t: f64) -> f64 {
    (0.5 * t).sin()
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// The generated splits and the expansion matrices behind them.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// `[d, D]` expansion used for train and valid.
    pub expansion: Tensor,
    /// Independently drawn `[d, D]` expansion.
    pub alt_expansion: Tensor,
    /// `alpha · alt + (1 - alpha) · expansion`, used for test.
    pub test_expansion: Tensor,
    pub target_mean: f64,
    pub target_std: f64,
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).expect("sized above")
}

fn raw_targets(x: &Tensor, monotone: &[usize]) -> Vec<f64> {
    let d = x.cols();
    let mut is_mono = vec![false; d];
    monotone.iter().for_each(|&m| is_mono[m] = true);
    (0..x.rows())
        .map(|i| {
            x.row(i)
                .iter()
                .zip(&is_mono)
                .map(|(&v, &m)| if m { monotone_component(v) } else { free_component(v) })
                .sum()
        })
        .collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (big_d, d) = (spec.dim, spec.latent_dim());
    let (n_train, n_valid) = split_counts(spec.samples, spec.train_fraction, spec.valid_fraction)?;
    let n_test = spec.samples - n_train - n_valid;

    let expansion = uniform_matrix(d, big_d, 0.0, 1.0, &mut rng);
    let alt_expansion = uniform_matrix(d, big_d, 0.0, 1.0, &mut rng);
    let test_expansion = expansion.zip_map(&alt_expansion, |a, b| spec.alpha * b + (1.0 - spec.alpha) * a);

    let mut expand = |n: usize, a: &Tensor| {
        let latent = uniform_matrix(n, d, -10.0, 10.0, &mut rng);
        let (data, _, _) = crate::tensor::matmul_raw(latent.data(), (n, d), false, a.data(), (d, big_d), false);
        Tensor::new(vec![n, big_d], data).expect("sized above")
    };
    let x_train = expand(n_train, &expansion);
    let x_valid = expand(n_valid, &expansion);
    let x_test = expand(n_test, &test_expansion);

    let y_train = raw_targets(&x_train, &spec.monotone);
    let mean = y_train.iter().sum::<f64>() / n_train as f64;
    let var = y_train.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n_train as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let standardize = |v: Vec<f64>| v.into_iter().map(|y| (y - mean) / std).collect::<Vec<_>>();

    let domain = DomainBox::from_data(&x_train)?;
    let make = |x: Tensor, split| {
        let y = standardize(raw_targets(&x, &spec.monotone));
        Dataset::new(x, Targets::Real(y), spec.monotone.clone(), domain.clone(), split)
    };
    Ok(SyntheticData {
        train: make(x_train, SplitTag::Train)?,
        valid: make(x_valid, SplitTag::Valid)?,
        test: make(x_test, SplitTag::Test)?,
        expansion,
        alt_expansion,
        test_expansion,
        target_mean: mean,
        target_std: std,
    })
}

// ---------------------------------------------------------------------------
// CSV

/// Which columns play which role in a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub target: String,
    pub task: TaskKind,
    pub monotone: Vec<String>,
    /// Feature columns in order; `None` means every column except the target.
    pub features: Option<Vec<String>>,
}

/// Parses a comma-separated file with a header row. Features are returned
/// as read; standardisation happens when splits are assembled
/// (see [`load_manifest`]).
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string(), schema)
}

pub fn parse_csv(text: &str, source: &str, schema: &CsvSchema) -> Result<Dataset> {
    let csv_err = |row: usize, column: &str, message: &str| Error::Csv {
        path: source.to_string(),
        row,
        column: column.to_string(),
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| csv_err(1, "", "empty file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| csv_err(1, name, "missing column"))
    };
    let target_col = find(&schema.target)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => columns
            .iter()
            .filter(|c| **c != schema.target)
            .map(|c| c.to_string())
            .collect(),
    };
    let feature_cols = feature_names.iter().map(|f| find(f)).collect::<Result<Vec<_>>>()?;
    let monotone = schema
        .monotone
        .iter()
        .map(|m| {
            feature_names
                .iter()
                .position(|f| f == m)
                .ok_or_else(|| csv_err(1, m, "monotone feature is not a feature column"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (line_idx, line) in lines {
        let row = line_idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(csv_err(
                row,
                "",
                &format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        let parse = |c: usize| {
            cells[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_err(row, columns[c], &format!("non-numeric cell `{}`", cells[c])))
        };
        for &c in &feature_cols {
            features.push(parse(c)?);
        }
        targets.push((row, parse(target_col)?));
    }
    if targets.is_empty() {
        return Err(csv_err(1, "", "no data rows"));
    }
    let n = targets.len();
    let x = Tensor::new(vec![n, feature_cols.len()], features)?;
    let targets = match schema.task {
        TaskKind::Regression => Targets::Real(targets.into_iter().map(|(_, v)| v).collect()),
        TaskKind::Classification => {
            let labels = targets
                .into_iter()
                .map(|(row, v)| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(csv_err(
                            row,
                            &schema.target,
                            "class label must be a nonnegative integer",
                        ))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
            Targets::Labels { labels, classes }
        }
    };
    let domain = DomainBox::from_data(&x)?;
    let mut ds = Dataset::new(x, targets, monotone, domain, SplitTag::All)?;
    ds.feature_names = feature_names;
    Ok(ds)
}

/// A dataset manifest: `key = value` lines naming the data files and
/// column roles.
///
/// ```text
/// train = compas_train.csv
/// test = compas_test.csv      # optional; split from train otherwise
/// valid = compas_valid.csv    # optional
/// target = two_year_recid
/// task = classification
/// monotone = priors_count, juv_fel_count
/// features = age, priors_count, juv_fel_count   # optional
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: CsvSchema,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut train = None;
        let mut valid = None;
        let mut test = None;
        let mut target = None;
        let mut task = TaskKind::Regression;
        let mut monotone = Vec::new();
        let mut features = None;
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "train" => train = Some(base.join(value)),
                "valid" => valid = Some(base.join(value)),
                "test" => test = Some(base.join(value)),
                "target" => target = Some(value.to_string()),
                "task" => {
                    task = value.parse().map_err(|e: Error| Error::Config {
                        key: key.into(),
                        message: e.to_string(),
                    })?
                }
                "monotone" => monotone = list(value),
                "features" => features = Some(list(value)),
                other => {
                    return Err(Error::Config {
                        key: other.to_string(),
                        message: "unknown manifest key".into(),
                    })
                }
            }
        }
        let missing = |k: &str| Error::Config {
            key: k.to_string(),
            message: "required".into(),
        };
        Ok(DatasetManifest {
            train: train.ok_or_else(|| missing("train"))?,
            valid,
            test,
            schema: CsvSchema {
                target: target.ok_or_else(|| missing("target"))?,
                task,
                monotone,
                features,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Loads the splits a manifest names, splitting the training file 70/15/15
/// for any that are missing, and standardises features with training
/// statistics.
pub fn load_manifest(path: &Path, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let manifest = DatasetManifest::load(path)?;
    let all = load_csv(&manifest.train, &manifest.schema)?;
    let (mut train, mut valid, mut test) = match (&manifest.valid, &manifest.test) {
        (Some(v), Some(t)) => (
            all.with_split(SplitTag::Train),
            load_csv(v, &manifest.schema)?.with_split(SplitTag::Valid),
            load_csv(t, &manifest.schema)?.with_split(SplitTag::Test),
        ),
        (None, Some(t)) => {
            let (tr, va, _) = split_dataset(&all, 0.85, 0.15, seed)?;
            (tr, va, load_csv(t, &manifest.schema)?.with_split(SplitTag::Test))
        }
        (Some(v), None) => {
            let (tr, _, te) = split_dataset(&all, 0.85, 0.0, seed)?;
            (tr, load_csv(v, &manifest.schema)?.with_split(SplitTag::Valid), te)
        }
        (None, None) => split_dataset(&all, 0.7, 0.15, seed)?,
    };
    if let (Some(a), Some(b), Some(c)) = (train.classes(), valid.classes(), test.classes()) {
        let k = a.max(b).max(c);
        for d in [&mut train, &mut valid, &mut test] {
            if let Targets::Labels { classes, .. } = &mut d.targets {
                *classes = k;
            }
        }
    }
    Standardizer::apply_to_splits(&mut train, &mut valid, &mut test)?;
    Ok((train, valid, test))
}

/// Writes features and target as CSV with a header row.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = data.feature_names.join(",");
    out.push_str(",y\n");
    for i in 0..data.len() {
        let row: Vec<String> = data.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        match &data.targets {
            Targets::Real(v) => {
                let _ = writeln!(out, ",{:?}", v[i]);
            }
            Targets::Labels { labels, .. } => {
                let _ = writeln!(out, ",{}", labels[i]);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Blobs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance of each class mean from the origin, in noise standard deviations.
    pub separation: f64,
    pub seed: u64,
}

/// Class means: `separation · e_k` when there are at least as many
/// dimensions as classes, otherwise seeded random unit directions.
pub fn blob_means(spec: &BlobSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_b10b);
    (0..spec.classes)
        .map(|k| {
            if spec.classes <= spec.dim {
                let mut m = vec![0.0; spec.dim];
                m[k] = spec.separation;
                m
            } else {
                let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| spec.separation * x / norm).collect()
            }
        })
        .collect()
}

/// Isotropic unit-variance Gaussian clusters around [`blob_means`], rows
/// shuffled, labels `0..classes`.
pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::invalid("blobs need at least two classes"));
    }
    if spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::invalid("blobs need positive size and dimension"));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::invalid("separation must be nonnegative"));
    }
    let means = blob_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..spec.classes * spec.per_class).map(|i| i % spec.classes).collect();
    order.shuffle(&mut rng);
    let mut features = Vec::with_capacity(order.len() * spec.dim);
    for &k in &order {
        for &mu in &means[k] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mu + z);
        }
    }
    let x = Tensor::new(vec![order.len(), spec.dim], features)?;
    let domain = DomainBox::from_data(&x)?;
    Dataset::new(
        x,
        Targets::Labels {
            labels: order,
            classes: spec.classes,
        },
        Vec::new(),
        domain,
        SplitTag::All,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shapes_and_latent_dim() {
        let spec = SynthSpec::new(100, 20, 4, 1);
        assert_eq!(spec.latent_dim(), 6);
        let data = generate_synthetic(&spec).unwrap();
        assert_eq!(data.expansion.shape(), &[6, 20]);
        let rows = data.train.len() + data.valid.len() + data.test.len();
        assert_eq!(rows, 100);
        assert_eq!(data.train.features.shape(), &[70, 20]);
        assert_eq!(data.valid.len(), 15);
        assert_eq!(data.test.len(), 15);
    }

    #[test]
    fn alpha_endpoints() {
        let mut spec = SynthSpec::new(100, 20, 4, 2);
        spec.alpha = 0.0;
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.test_expansion, d.expansion);
        spec.alpha = 1.0;
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.test_expansion, d.alt_expansion);
    }

    #[test]
    fn synthetic_validation() {
        assert!(generate_synthetic(&SynthSpec::new(100, 3, 1, 0)).is_err());
        assert!(generate_synthetic(&SynthSpec::new(100, 4, 1, 0)).is_ok());
        let mut bad = SynthSpec::new(100, 10, 2, 0);
        bad.alpha = 1.5;
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&SynthSpec::new(60, 10, 3, 7)).unwrap();
        let b = generate_synthetic(&SynthSpec::new(60, 10, 3, 7)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate_synthetic(&SynthSpec::new(60, 10, 3, 8)).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn train_targets_are_standardized() {
        let d = generate_synthetic(&SynthSpec::new(400, 10, 3, 3)).unwrap();
        let y = d.train.real_targets().unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_component_increases() {
        let mut prev = monotone_component(-200.0);
        let mut t = -200.0;
        while t < 200.0 {
            t += 0.01;
            let v = monotone_component(t);
            assert!(v > prev, "not increasing at {t}");
            prev = v;
        }
        // sin(t/2) is not monotone over any range of width > 2π
        assert!(free_component(std::f64::consts::PI) > free_component(3.0 * std::f64::consts::PI));
    }

    const SMALL: &str = "a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n7.0,8.0,9.0\n";

    fn schema(mono: &[&str]) -> CsvSchema {
        CsvSchema {
            target: "y".into(),
            task: TaskKind::Regression,
            monotone: mono.iter().map(|s| s.to_string()).collect(),
            features: None,
        }
    }

    #[test]
    fn csv_schema_mapping() {
        let d = parse_csv(SMALL, "mem", &schema(&["a"])).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.monotone, vec![0]);
        assert_eq!(d.len(), 3);
        assert_eq!(d.real_targets().unwrap(), &[3.0, 6.0, 9.0]);
    }

    #[test]
    fn csv_errors_name_location() {
        let bad = "a,b,y\n1.0,2.0,3.0\n4.0,oops,6.0\n";
        match parse_csv(bad, "mem", &schema(&[])) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv("", "mem", &schema(&[])), Err(Error::Csv { .. })));
        match parse_csv(SMALL, "mem", &schema(&["zzz"])) {
            Err(Error::Csv { column, .. }) => assert_eq!(column, "zzz"),
            other => panic!("unexpected {other:?}"),
        }
        let no_target = CsvSchema {
            target: "t".into(),
            ..schema(&[])
        };
        assert!(parse_csv(SMALL, "mem", &no_target).is_err());
    }

    #[test]
    fn compas_shaped_schema() {
        let names: Vec<String> = (0..13).map(|i| format!("f{i}")).collect();
        let mut text = names.join(",");
        text.push_str(",label\n");
        for r in 0..20 {
            let row: Vec<String> = (0..13).map(|c| format!("{}", (r * 13 + c) % 7)).collect();
            text.push_str(&row.join(","));
            text.push_str(&format!(",{}\n", r % 2));
        }
        let schema = CsvSchema {
            target: "label".into(),
            task: TaskKind::Classification,
            monotone: vec!["f0".into(), "f3".into(), "f5".into(), "f9".into()],
            features: None,
        };
        let d = parse_csv(&text, "compas", &schema).unwrap();
        assert_eq!(d.dim(), 13);
        assert_eq!(d.monotone, vec![0, 3, 5, 9]);
        assert_eq!(d.classes(), Some(2));
    }

    #[test]
    fn manifest_load_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("a,b,y\n");
        for i in 0..40 {
            csv.push_str(&format!("{},{},{}\n", i, 100 - 2 * i, i % 3));
        }
        std::fs::write(dir.path().join("d.csv"), csv).unwrap();
        std::fs::write(
            dir.path().join("d.manifest"),
            "train = d.csv\ntarget = y\ntask = regression\nmonotone = a\n",
        )
        .unwrap();
        let (train, valid, test) = load_manifest(&dir.path().join("d.manifest"), 1).unwrap();
        assert_eq!(train.len() + valid.len() + test.len(), 40);
        let st = Standardizer::fit(&train.features);
        assert!(st.mean.iter().all(|m| m.abs() < 1e-12));
        assert!(st.scale.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((0..train.len()).all(|i| train.domain.contains(train.features.row(i))));
        assert!(DatasetManifest::parse("bogus = 1\ntrain = x\ntarget = y", Path::new(".")).is_err());
    }

    #[test]
    fn blobs_are_balanced_and_labelled() {
        let spec = BlobSpec {
            classes: 3,
            per_class: 10,
            dim: 4,
            separation: 5.0,
            seed: 0,
        };
        let d = generate_blobs(&spec).unwrap();
        assert_eq!(d.len(), 30);
        let labels = d.labels().unwrap();
        for k in 0..3 {
            assert_eq!(labels.iter().filter(|&&y| y == k).count(), 10);
        }
        let zero = blob_means(&BlobSpec {
            separation: 0.0,
            ..spec.clone()
        });
        assert!(zero.iter().all(|m| m.iter().all(|&v| v == 0.0)));
        assert!(generate_blobs(&BlobSpec { classes: 1, ..spec }).is_err());
    }

    #[test]
    fn well_separated_blobs_are_nearest_centroid_separable() {
        let spec = BlobSpec {
            classes: 4,
            per_class: 200,
            dim: 6,
            separation: 10.0,
            seed: 4,
        };
        let d = generate_blobs(&spec).unwrap();
        let means = blob_means(&spec);
        let labels = d.labels().unwrap();
        for i in 0..d.len() {
            let x = d.features.row(i);
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&means[a]).map(|(u, v)| (u - v).powi(2)).sum();
                    let db: f64 = x.iter().zip(&means[b]).map(|(u, v)| (u - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(nearest, labels[i]);
        }
    }

    #[test]
    fn split_dataset_partitions_rows() {
        let spec = BlobSpec {
            classes: 2,
            per_class: 50,
            dim: 3,
            separation: 1.0,
            seed: 9,
        };
        let d = generate_blobs(&spec).unwrap();
        let (a, b, c) = split_dataset(&d, 0.7, 0.15, 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (70, 15, 15));
        assert_eq!(a.split, SplitTag::Train);
        assert!((0..a.len()).all(|i| a.domain.contains(a.features.row(i))));
    }
}
