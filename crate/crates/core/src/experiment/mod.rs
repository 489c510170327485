//! Config-driven runners behind the `monograd` command line.
//!
//! Each command returns its report and, when `run.out` is set, writes it
//! under that directory. Reports carry no timings, so a rerun with the same
//! config and seed reproduces them byte for byte.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{AttackConfig, AuditConfig, DataConfig, DataSource, ExperimentConfig, ModelSettings, SphereConfig};

use crate::attacks::{pgd_linf, AttackSpec};
use crate::datagen::{
    generate_blobs, generate_synthetic, load_manifest, split_dataset, write_csv, BlobSpec, Dataset, SplitTag,
    Standardizer, SynthSpec, TaskKind,
};
use crate::error::{Error, Result};
use crate::metrics::{
    auc_roc, normalized_entropy, predicted_classes, prediction_metric, rho_hat_with_slack, rho_random,
    sphere_prob_mixup, sphere_prob_mixup_exact, sphere_prob_uniform, total_activation_accuracy, BallMode,
    MetricsReport, SampleSizes,
};
use crate::models::{load_model, save_model, AnyModel, MlpConfig, MlpModel, Model, SlicedClassifier, SlicedConfig};
use crate::penalties::{DomainBox, PenaltyKind};
use crate::trainer::{history_jsonl, train};

/// Train, validation and test parts of one repeat's data.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

fn data_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    cfg.data.seed.unwrap_or(cfg.seed.wrapping_add(repeat as u64))
}

fn run_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    cfg.seed.wrapping_add(repeat as u64)
}

fn synth_spec(cfg: &ExperimentConfig, seed: u64) -> SynthSpec {
    let d = &cfg.data;
    SynthSpec {
        alpha: d.alpha,
        train_fraction: d.train_fraction,
        valid_fraction: d.valid_fraction,
        ..SynthSpec::new(d.samples, d.dim, d.monotone_count, seed)
    }
}

/// Builds the standardised splits for `repeat`.
pub fn prepare_data(cfg: &ExperimentConfig, repeat: usize) -> Result<Splits> {
    let seed = data_seed(cfg, repeat);
    let d = &cfg.data;
    let (mut train, mut valid, mut test) = match d.source {
        DataSource::Synthetic => {
            let s = generate_synthetic(&synth_spec(cfg, seed))?;
            (s.train, s.valid, s.test)
        }
        DataSource::Csv => {
            let path = d.manifest.as_ref().ok_or_else(|| Error::Config {
                key: "data.manifest".into(),
                message: "required when data.source = csv".into(),
            })?;
            return load_manifest(path, seed).map(|(train, valid, test)| Splits { train, valid, test });
        }
        DataSource::Blobs => {
            let blobs = generate_blobs(&BlobSpec {
                classes: d.classes,
                per_class: d.per_class,
                dim: d.blob_dim,
                separation: d.separation,
                seed,
            })?;
            split_dataset(&blobs, d.train_fraction, d.valid_fraction, seed)?
        }
    };
    Standardizer::apply_to_splits(&mut train, &mut valid, &mut test)?;
    Ok(Splits { train, valid, test })
}

/// MLP sized for `data`: one output for regression and binary labels, `K`
/// logits otherwise. The split input layer is used only when the monotone
/// set is a proper nonempty subset.
pub fn build_mlp(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<MlpModel> {
    let output_dim = match data.classes() {
        Some(k) if k > 2 => k,
        _ => 1,
    };
    let m = data.monotone.len();
    let mc = MlpConfig {
        input_dim: data.dim(),
        output_dim,
        depth: cfg.model.depth,
        hidden: cfg.model.hidden,
        activation: cfg.model.activation,
        split_input: cfg.model.split_input && m >= 1 && m < data.dim(),
        monotone: data.monotone.clone(),
    };
    MlpModel::new(&mc, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn build_sliced(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<SlicedClassifier> {
    let classes = data
        .classes()
        .ok_or_else(|| Error::invalid("the sliced classifier needs a classification dataset"))?;
    let m = &cfg.model;
    let sc = SlicedConfig {
        trunk_depth: m.trunk_depth,
        trunk_hidden: m.trunk_hidden,
        slice_layer_width: m.slice_per_class * classes,
        head_hidden: m.head_hidden,
        activation: m.activation,
        ..SlicedConfig::new(data.dim(), classes)
    };
    SlicedClassifier::new(&sc, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Mean and, for two or more values, the normal-approximation 95% interval
/// `mean ± 1.96 s / √R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Aggregate {
            mean,
            ci_low: None,
            ci_high: None,
            n,
        });
    }
    let s = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let half = 1.96 * s / (n as f64).sqrt();
    Ok(Aggregate {
        mean,
        ci_low: Some(mean - half),
        ci_high: Some(mean + half),
        n,
    })
}

fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Regression => "rmse",
        TaskKind::Classification => "accuracy",
    }
}

/// Violation rates over random, train and test points plus prediction
/// metrics on every split. Violation rates are skipped when the data have
/// no monotone features or the model has several outputs.
pub fn audit_model<M: Model + ?Sized>(
    model: &M,
    splits: &Splits,
    audit: &AuditConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let Splits { train, valid, test } = splits;
    if train.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "audit",
            left: vec![train.dim()],
            right: vec![model.input_dim()],
        });
    }
    let task = train.task();
    let mut report = MetricsReport {
        metric: metric_name(task).into(),
        seed,
        sample_sizes: SampleSizes {
            random: 0,
            train: train.len(),
            valid: valid.len(),
            test: test.len(),
        },
        ..Default::default()
    };
    let metric = |d: &Dataset| (!d.is_empty()).then(|| prediction_metric(model, d)).transpose();
    report.train = metric(train)?;
    report.valid = metric(valid)?;
    report.test = metric(test)?;
    if !train.monotone.is_empty() && model.output_dim() == 1 {
        let mono = &train.monotone;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        report.rho_random = Some(rho_random(
            model,
            &train.domain,
            audit.random_points,
            mono,
            audit.slack,
            &mut rng,
        )?);
        report.sample_sizes.random = audit.random_points;
        report.rho_train = Some(rho_hat_with_slack(model, &train.features, mono, audit.slack)?);
        if !test.is_empty() {
            report.rho_test = Some(rho_hat_with_slack(model, &test.features, mono, audit.slack)?);
        }
    }
    if let Some(s) = model.as_sliced() {
        if !test.is_empty() {
            report.total_activation_accuracy = Some(total_activation_accuracy(s, test)?);
        }
    }
    report.validate()?;
    Ok(report)
}

fn report_fields(r: &MetricsReport) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut push = |name: String, v: Option<f64>| {
        if let Some(v) = v {
            out.push((name, v));
        }
    };
    push("rho_random".into(), r.rho_random);
    push("rho_train".into(), r.rho_train);
    push("rho_test".into(), r.rho_test);
    push(format!("train_{}", r.metric), r.train);
    push(format!("valid_{}", r.metric), r.valid);
    push(format!("test_{}", r.metric), r.test);
    push("total_activation_accuracy".into(), r.total_activation_accuracy);
    push("detection_auc".into(), r.detection_auc);
    out
}

fn aggregate_reports(reports: &[MetricsReport]) -> Result<BTreeMap<String, Aggregate>> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (k, v) in report_fields(r) {
            columns.entry(k).or_default().push(v);
        }
    }
    columns.into_iter().map(|(k, v)| Ok((k, aggregate(&v)?))).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn fmt_aggregate(a: &Aggregate) -> String {
    match (a.ci_low, a.ci_high) {
        (Some(lo), Some(hi)) => format!("{:.6} [{:.6}, {:.6}]", a.mean, lo, hi),
        _ => format!("{:.6}", a.mean),
    }
}

fn aggregate_csv(rows: &[(String, &BTreeMap<String, Aggregate>)]) -> String {
    let mut out = String::from("group,metric,mean,ci_low,ci_high,n\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    for (name, agg) in rows {
        for (metric, a) in agg.iter() {
            let _ = writeln!(
                out,
                "{name},{metric},{:?},{},{},{}",
                a.mean,
                opt(a.ci_low),
                opt(a.ci_high),
                a.n
            );
        }
    }
    out
}

fn summary_text(title: &str, rows: &[(String, &BTreeMap<String, Aggregate>)]) -> String {
    let mut out = format!("{title}\n");
    for (name, agg) in rows {
        let _ = writeln!(out, "\n[{name}]");
        for (metric, a) in agg.iter() {
            let _ = writeln!(out, "  {metric:<28} {}", fmt_aggregate(a));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantResult {
    pub penalty: String,
    pub repeats: Vec<MetricsReport>,
    pub aggregate: BTreeMap<String, Aggregate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub variants: Vec<VariantResult>,
}

impl TrainReport {
    pub fn variant(&self, kind: PenaltyKind) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.penalty == kind.name())
    }

    fn rows(&self) -> Vec<(String, &BTreeMap<String, Aggregate>)> {
        self.variants
            .iter()
            .map(|v| (v.penalty.clone(), &v.aggregate))
            .collect()
    }

    /// Human-readable table of the aggregates.
    pub fn table(&self) -> String {
        summary_text("train", &self.rows())
    }
}

/// Trains every configured penalty variant for every repeat, audits each
/// model and aggregates across repeats. Within a repeat all variants share
/// the data and the initial weights.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut per_variant: Vec<Vec<MetricsReport>> = vec![Vec::new(); cfg.variants.len()];
    for repeat in 0..cfg.repeats {
        let splits = prepare_data(cfg, repeat)?;
        let seed = run_seed(cfg, repeat);
        for (vi, &kind) in cfg.variants.iter().enumerate() {
            if kind == PenaltyKind::Group {
                return Err(Error::Config {
                    key: "run.variants".into(),
                    message: "the group penalty is run by the `group` command".into(),
                });
            }
            let mut model = build_mlp(cfg, &splits.train, seed)?;
            if kind != PenaltyKind::None && model.output_dim() != 1 {
                return Err(Error::invalid(
                    "monotonicity penalties need a single-output model (regression or binary labels)",
                ));
            }
            let outcome = train(&mut model, &splits.train, &splits.valid, &cfg.train_config(kind, seed))?;
            let report = audit_model(&model, &splits, &cfg.audit, seed)?;
            if let Some(out) = &cfg.out {
                let dir = out.join(kind.name()).join(format!("repeat-{repeat}"));
                ensure_dir(&dir)?;
                std::fs::write(dir.join("history.jsonl"), history_jsonl(&outcome.history)?)?;
                write_json(&dir.join("report.json"), &report)?;
                save_model(&AnyModel::Mlp(model), &dir.join("model.txt"))?;
            }
            per_variant[vi].push(report);
        }
    }
    let variants = cfg
        .variants
        .iter()
        .zip(per_variant)
        .map(|(kind, repeats)| {
            Ok(VariantResult {
                penalty: kind.name().into(),
                aggregate: aggregate_reports(&repeats)?,
                repeats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = TrainReport {
        config: cfg.to_map(),
        seed: cfg.seed,
        variants,
    };
    if let Some(out) = &cfg.out {
        write_run_files(out, cfg, &report, &report.rows(), "train")?;
    }
    Ok(report)
}

fn write_run_files<T: Serialize>(
    out: &Path,
    cfg: &ExperimentConfig,
    report: &T,
    rows: &[(String, &BTreeMap<String, Aggregate>)],
    title: &str,
) -> Result<()> {
    ensure_dir(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    write_json(&out.join("report.json"), report)?;
    std::fs::write(out.join("aggregate.csv"), aggregate_csv(rows))?;
    std::fs::write(out.join("summary.txt"), summary_text(title, rows))?;
    Ok(())
}

/// PGD settings for `data`: ε is the configured fraction of the mean
/// per-feature training range, the box is the training domain.
pub fn attack_spec(attack: &AttackConfig, domain: &DomainBox, seed: u64) -> AttackSpec {
    let mean_range = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(lo, hi)| hi - lo)
        .sum::<f64>()
        / domain.dim() as f64;
    let epsilon = attack.epsilon_fraction * mean_range;
    AttackSpec {
        epsilon,
        steps: attack.steps,
        step_size: attack.step_fraction * epsilon,
        input_box: Some(domain.clone()),
        seed,
        random_start: attack.random_start,
    }
}

/// Normalized-entropy scores of clean and PGD-perturbed test points, and
/// the AUC of separating them (perturbed points are the positives).
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub auc: f64,
    pub adversarial_accuracy: f64,
}

pub fn detection_eval(model: &SlicedClassifier, test: &Dataset, spec: &AttackSpec) -> Result<Detection> {
    let labels = test
        .labels()
        .ok_or_else(|| Error::invalid("detection needs a labelled test set"))?;
    let adv = pgd_linf(model, &test.features, labels, spec)?;
    let score = |x: &crate::Tensor| -> Result<Vec<f64>> {
        let t = model.slice_totals_batch(x)?;
        (0..t.rows()).map(|i| normalized_entropy(t.row(i))).collect()
    };
    let auc = auc_roc(&score(&test.features)?, &score(&adv)?)?;
    let pred = predicted_classes(&model.predict_batch(&adv)?);
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(Detection {
        auc,
        adversarial_accuracy: hits as f64 / labels.len() as f64,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupRun {
    pub fraction: f64,
    pub repeat: usize,
    pub epochs: usize,
    pub baseline: MetricsReport,
    pub group: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_adversarial_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_adversarial_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupAggregate {
    pub fraction: f64,
    pub baseline: BTreeMap<String, Aggregate>,
    pub group: BTreeMap<String, Aggregate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub runs: Vec<GroupRun>,
    pub aggregate: Vec<GroupAggregate>,
}

impl GroupReport {
    fn rows(&self) -> Vec<(String, &BTreeMap<String, Aggregate>)> {
        let mut rows = Vec::new();
        for a in &self.aggregate {
            rows.push((format!("baseline@{}", a.fraction), &a.baseline));
            rows.push((format!("group@{}", a.fraction), &a.group));
        }
        rows
    }

    pub fn table(&self) -> String {
        summary_text("group", &self.rows())
    }
}

/// Rows of `data` keeping `fraction` of every class, chosen at random.
fn stratified_subsample(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if fraction >= 1.0 {
        return Ok(data.clone());
    }
    let labels = data
        .labels()
        .ok_or_else(|| Error::invalid("subsampling needs labels"))?;
    let classes = data.classes().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for k in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        idx.shuffle(&mut rng);
        let n = ((idx.len() as f64) * fraction).round().max(1.0) as usize;
        keep.extend_from_slice(&idx[..n.min(idx.len())]);
    }
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

/// Trains a plain and a group-penalised sliced classifier from the same
/// initial weights with the same iteration budget, for the full training
/// set and every subsample fraction.
pub fn cmd_group(cfg: &ExperimentConfig) -> Result<GroupReport> {
    cfg.validate()?;
    let mut fractions = vec![1.0];
    fractions.extend(cfg.subsample.iter().copied().filter(|&f| f < 1.0));
    let mut runs = Vec::new();
    for repeat in 0..cfg.repeats {
        let splits = prepare_data(cfg, repeat)?;
        if splits.train.task() != TaskKind::Classification {
            return Err(Error::invalid("the group command needs a classification dataset"));
        }
        let seed = run_seed(cfg, repeat);
        for &fraction in &fractions {
            let sub = stratified_subsample(&splits.train, fraction, seed)?;
            let epochs = ((cfg.train.epochs as f64) / fraction).round() as usize;
            let eval_splits = Splits {
                train: sub.clone(),
                valid: splits.valid.clone(),
                test: splits.test.clone(),
            };
            let mut evaluated = Vec::new();
            for kind in [PenaltyKind::None, PenaltyKind::Group] {
                let mut model = build_sliced(cfg, &sub, seed)?;
                let tc = crate::trainer::TrainConfig {
                    epochs,
                    ..cfg.train_config(kind, seed)
                };
                let outcome = train(&mut model, &sub, &splits.valid, &tc)?;
                let mut report = audit_model(&model, &eval_splits, &cfg.audit, seed)?;
                let mut adv_acc = None;
                if let Some(attack) = &cfg.attack {
                    let spec = attack_spec(attack, &splits.train.domain, seed);
                    let det = detection_eval(&model, &splits.test, &spec)?;
                    report.detection_auc = Some(det.auc);
                    adv_acc = Some(det.adversarial_accuracy);
                }
                if let Some(out) = &cfg.out {
                    let dir = out
                        .join(format!("fraction-{fraction}"))
                        .join(kind.name())
                        .join(format!("repeat-{repeat}"));
                    ensure_dir(&dir)?;
                    std::fs::write(dir.join("history.jsonl"), history_jsonl(&outcome.history)?)?;
                    write_json(&dir.join("report.json"), &report)?;
                    save_model(&AnyModel::Sliced(model), &dir.join("model.txt"))?;
                }
                evaluated.push((report, adv_acc));
            }
            let (group, group_adv) = evaluated.pop().expect("two models");
            let (baseline, baseline_adv) = evaluated.pop().expect("two models");
            runs.push(GroupRun {
                fraction,
                repeat,
                epochs,
                baseline,
                group,
                baseline_adversarial_accuracy: baseline_adv,
                group_adversarial_accuracy: group_adv,
            });
        }
    }
    let aggregate = fractions
        .iter()
        .map(|&f| {
            let pick = |g: fn(&GroupRun) -> &MetricsReport| -> Vec<MetricsReport> {
                runs.iter().filter(|r| r.fraction == f).map(|r| g(r).clone()).collect()
            };
            Ok(GroupAggregate {
                fraction: f,
                baseline: aggregate_reports(&pick(|r| &r.baseline))?,
                group: aggregate_reports(&pick(|r| &r.group))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = GroupReport {
        config: cfg.to_map(),
        seed: cfg.seed,
        runs,
        aggregate,
    };
    if let Some(out) = &cfg.out {
        write_run_files(out, cfg, &report, &report.rows(), "group")?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereRow {
    pub n: usize,
    pub r: f64,
    pub uniform_analytic: f64,
    pub uniform_monte_carlo: f64,
    pub mixup_analytic: f64,
    pub mixup_monte_carlo: f64,
    pub mixup_exact: f64,
    pub draws: usize,
}

/// Analytic and Monte-Carlo `P(‖x‖ > r)` for every dimension and radius.
/// One batch of draws per dimension and mode is shared by all radii.
pub fn cmd_sphere(cfg: &ExperimentConfig) -> Result<Vec<SphereRow>> {
    cfg.validate()?;
    let s = &cfg.sphere;
    let mut rows = Vec::new();
    for (di, &n) in s.dims.iter().enumerate() {
        let mut counts = [vec![0usize; s.radii.len()], vec![0usize; s.radii.len()]];
        for (mi, mode) in [BallMode::Uniform, BallMode::Mixup].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((2 * di + mi) as u64);
            let mut buf = Vec::with_capacity(n);
            for _ in 0..s.draws {
                crate::metrics::sample_ball_point(n, mode, &mut rng, &mut buf);
                let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (c, &r) in counts[mi].iter_mut().zip(&s.radii) {
                    if norm > r {
                        *c += 1;
                    }
                }
            }
        }
        for (ri, &r) in s.radii.iter().enumerate() {
            rows.push(SphereRow {
                n,
                r,
                uniform_analytic: sphere_prob_uniform(n, r)?,
                uniform_monte_carlo: counts[0][ri] as f64 / s.draws as f64,
                mixup_analytic: sphere_prob_mixup(n, r)?,
                mixup_monte_carlo: counts[1][ri] as f64 / s.draws as f64,
                mixup_exact: sphere_prob_mixup_exact(n, r)?,
                draws: s.draws,
            });
        }
    }
    if let Some(out) = &cfg.out {
        ensure_dir(out)?;
        std::fs::write(out.join("config.txt"), cfg.to_text())?;
        std::fs::write(out.join("sphere.csv"), sphere_csv(&rows))?;
    }
    Ok(rows)
}

pub fn sphere_csv(rows: &[SphereRow]) -> String {
    let mut out =
        String::from("n,r,uniform_analytic,uniform_monte_carlo,mixup_analytic,mixup_monte_carlo,mixup_exact,draws\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.n,
            r.r,
            r.uniform_analytic,
            r.uniform_monte_carlo,
            r.mixup_analytic,
            r.mixup_monte_carlo,
            r.mixup_exact,
            r.draws
        );
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub model: String,
    pub report: MetricsReport,
}

fn model_path(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.audit.model.as_deref().ok_or_else(|| Error::Config {
        key: "audit.model".into(),
        message: "a model file is required".into(),
    })
}

/// Audits a saved model on the configured data (first repeat's splits).
pub fn cmd_audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let path = model_path(cfg)?;
    let model = load_model(path)?;
    let splits = prepare_data(cfg, 0)?;
    let report = match &model {
        AnyModel::Mlp(m) => audit_model(m, &splits, &cfg.audit, cfg.seed)?,
        AnyModel::Sliced(s) => audit_model(s, &splits, &cfg.audit, cfg.seed)?,
    };
    let out = AuditReport {
        config: cfg.to_map(),
        seed: cfg.seed,
        model: path.display().to_string(),
        report,
    };
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        write_json(&dir.join("report.json"), &out)?;
    }
    Ok(out)
}

/// Writes the raw synthetic splits as CSV files plus a manifest that
/// `data.source = csv` can read back.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<std::path::PathBuf> {
    cfg.validate()?;
    let out = cfg.out.as_ref().ok_or_else(|| Error::Config {
        key: "run.out".into(),
        message: "synth needs an output directory".into(),
    })?;
    if cfg.data.source != DataSource::Synthetic {
        return Err(Error::Config {
            key: "data.source".into(),
            message: "synth writes synthetic data only".into(),
        });
    }
    let data = generate_synthetic(&synth_spec(cfg, data_seed(cfg, 0)))?;
    ensure_dir(out)?;
    for (name, d) in [("train", &data.train), ("valid", &data.valid), ("test", &data.test)] {
        write_csv(d, &out.join(format!("{name}.csv")))?;
    }
    let names = &data.train.feature_names;
    let mono: Vec<&str> = data.train.monotone.iter().map(|&i| names[i].as_str()).collect();
    let manifest = format!(
        "train = train.csv\nvalid = valid.csv\ntest = test.csv\ntarget = y\ntask = regression\nmonotone = {}\n",
        mono.join(",")
    );
    let path = out.join("manifest.txt");
    std::fs::write(&path, manifest)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub model: String,
    pub epsilon: f64,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection_auc: Option<f64>,
}

/// PGD against a saved classifier on the test split: clean and adversarial
/// accuracy, plus detection AUC for sliced classifiers.
pub fn cmd_attack_eval(cfg: &ExperimentConfig) -> Result<AttackReport> {
    cfg.validate()?;
    let path = model_path(cfg)?;
    let model = load_model(path)?;
    let splits = prepare_data(cfg, 0)?;
    let test = &splits.test;
    let labels = test
        .labels()
        .ok_or_else(|| Error::invalid("attack-eval needs a classification dataset"))?;
    let attack = cfg.attack.clone().unwrap_or_default();
    let spec = attack_spec(&attack, &splits.train.domain, cfg.seed);
    let accuracy = |m: &dyn ModelRef, x: &crate::Tensor| -> Result<f64> {
        let pred = predicted_classes(&m.predict(x)?);
        Ok(pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64)
    };
    let (clean, adversarial, auc) = match &model {
        AnyModel::Mlp(m) => {
            let adv = pgd_linf(m, &test.features, labels, &spec)?;
            (accuracy(m, &test.features)?, accuracy(m, &adv)?, None)
        }
        AnyModel::Sliced(s) => {
            let det = detection_eval(s, test, &spec)?;
            (accuracy(s, &test.features)?, det.adversarial_accuracy, Some(det.auc))
        }
    };
    let report = AttackReport {
        config: cfg.to_map(),
        seed: cfg.seed,
        model: path.display().to_string(),
        epsilon: spec.epsilon,
        clean_accuracy: clean,
        adversarial_accuracy: adversarial,
        detection_auc: auc,
    };
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

trait ModelRef {
    fn predict(&self, x: &crate::Tensor) -> Result<crate::Tensor>;
}

impl<M: Model> ModelRef for M {
    fn predict(&self, x: &crate::Tensor) -> Result<crate::Tensor> {
        self.predict_batch(x)
    }
}

/// Split tag names used in file layouts.
pub fn split_name(tag: SplitTag) -> &'static str {
    match tag {
        SplitTag::Train => "train",
        SplitTag::Valid => "valid",
        SplitTag::Test => "test",
        SplitTag::All => "all",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_single_value_has_no_interval() {
        let a = aggregate(&[0.25]).unwrap();
        assert_eq!(a.mean, 0.25);
        assert!(a.ci_low.is_none() && a.ci_high.is_none());
        let json = serde_json::to_string(&a).unwrap();
        assert!(!json.contains("ci_low"));
    }

    #[test]
    fn aggregate_interval_formula() {
        let a = aggregate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = (5.0f64 / 3.0).sqrt();
        assert!((a.ci_high.unwrap() - (2.5 + 1.96 * s / 2.0)).abs() < 1e-12);
        assert!((a.ci_low.unwrap() - (2.5 - 1.96 * s / 2.0)).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn sphere_rows_follow_the_closed_forms() {
        let cfg = ExperimentConfig {
            sphere: SphereConfig {
                dims: vec![3],
                radii: vec![0.0, 0.5, 1.0],
                draws: 2000,
            },
            ..Default::default()
        };
        let rows = cmd_sphere(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].uniform_analytic, 0.0);
        assert_eq!(rows[2].mixup_analytic, 0.0);
        assert_eq!(rows[0].uniform_monte_carlo, 1.0);
        for r in &rows {
            assert!(r.mixup_exact <= r.mixup_analytic);
            assert!(r.mixup_analytic <= r.uniform_analytic);
        }
    }

    #[test]
    fn stratified_subsample_keeps_every_class() {
        let cfg = ExperimentConfig {
            data: DataConfig {
                source: DataSource::Blobs,
                classes: 3,
                per_class: 20,
                ..DataConfig::default()
            },
            ..Default::default()
        };
        let splits = prepare_data(&cfg, 0).unwrap();
        let sub = stratified_subsample(&splits.train, 0.3, 1).unwrap();
        let labels = sub.labels().unwrap();
        for k in 0..3 {
            assert!(labels.contains(&k));
        }
        assert!(sub.len() < splits.train.len());
    }
}
