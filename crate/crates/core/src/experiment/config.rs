//! Flat `key = value` experiment configuration with dotted namespaces.
//!
//! Blank lines and `#` comments are ignored. Every key has a default;
//! an unrecognised key is an error naming it. [`ExperimentConfig::to_text`]
//! writes every resolved key, and parsing that text reproduces the config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::Activation;
use crate::penalties::{PenaltyKind, PenaltySpec};
use crate::trainer::{OptimizerKind, Selection, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Csv,
    Blobs,
}

impl DataSource {
    fn name(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Csv => "csv",
            DataSource::Blobs => "blobs",
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DataSource::Synthetic),
            "csv" => Ok(DataSource::Csv),
            "blobs" => Ok(DataSource::Blobs),
            other => Err(Error::invalid(format!("unknown data source `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Fixed data seed; when absent each repeat uses `run.seed + repeat`.
    pub seed: Option<u64>,
    pub samples: usize,
    pub dim: usize,
    pub monotone_count: usize,
    pub alpha: f64,
    pub manifest: Option<PathBuf>,
    pub classes: usize,
    pub per_class: usize,
    pub blob_dim: usize,
    pub separation: f64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            seed: None,
            samples: 2000,
            dim: 100,
            monotone_count: 20,
            alpha: 0.8,
            manifest: None,
            classes: 4,
            per_class: 500,
            blob_dim: 10,
            separation: 3.0,
            train_fraction: 0.7,
            valid_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub depth: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub split_input: bool,
    pub trunk_depth: usize,
    pub trunk_hidden: usize,
    /// Sliced-layer width per class.
    pub slice_per_class: usize,
    pub head_hidden: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            depth: 3,
            hidden: 100,
            activation: Activation::Relu,
            split_input: true,
            trunk_depth: 2,
            trunk_hidden: 64,
            slice_per_class: 16,
            head_hidden: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    pub random_points: usize,
    pub slack: f64,
    pub model: Option<PathBuf>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            random_points: crate::metrics::DEFAULT_RANDOM_AUDIT_POINTS,
            slack: 0.0,
            model: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    /// Budget as a fraction of each feature's training range; the L∞ radius
    /// is this fraction of the mean range.
    pub epsilon_fraction: f64,
    pub steps: usize,
    /// Step size as a fraction of ε.
    pub step_fraction: f64,
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon_fraction: 0.1,
            steps: 10,
            step_fraction: 0.25,
            random_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereConfig {
    pub dims: Vec<usize>,
    pub radii: Vec<f64>,
    pub draws: usize,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            dims: vec![2, 10, 50],
            radii: vec![0.25, 0.5, 0.9],
            draws: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repeats: usize,
    pub out: Option<PathBuf>,
    /// Penalties compared by `train`; defaults to `[train.penalty]`.
    pub variants: Vec<PenaltyKind>,
    pub data: DataConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub audit: AuditConfig,
    pub attack: Option<AttackConfig>,
    /// Training-set fractions for the group subsample sweep.
    pub subsample: Vec<f64>,
    pub sphere: SphereConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            repeats: 1,
            out: None,
            variants: vec![PenaltyKind::None],
            data: DataConfig::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            audit: AuditConfig::default(),
            attack: None,
            subsample: Vec::new(),
            sphere: SphereConfig::default(),
        }
    }
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not `key = value`", i + 1),
            })?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::Config {
                    key,
                    message: "given twice".into(),
                });
            }
        }
        Ok(Entries { map })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                message: format!("cannot parse `{v}` (line {line})"),
            }),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::Config {
                    key: key.to_string(),
                    message: format!("cannot parse list `{v}` (line {line})"),
                }),
        }
    }

    fn take_optional<T: FromStr>(&mut self, key: &str) -> Result<Option<Option<T>>> {
        match self.map.get(key) {
            Some((v, _)) if v == "none" => {
                self.map.remove(key);
                Ok(Some(None))
            }
            _ => Ok(self.take(key)?.map(Some)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Config {
                key,
                message: format!("unknown key (line {line})"),
            }),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::parse(s).ok_or_else(|| Error::invalid(format!("unknown activation `{s}`")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let mut c = ExperimentConfig::default();

        e.set("run.seed", &mut c.seed)?;
        e.set("run.repeats", &mut c.repeats)?;
        if let Some(p) = e.take::<PathBuf>("run.out")? {
            c.out = Some(base.join(p));
        }
        let variants = e.take_list::<PenaltyKind>("run.variants")?;

        let d = &mut c.data;
        e.set("data.source", &mut d.source)?;
        if let Some(s) = e.take_optional("data.seed")? {
            d.seed = s;
        }
        e.set("data.samples", &mut d.samples)?;
        e.set("data.dim", &mut d.dim)?;
        e.set("data.monotone_count", &mut d.monotone_count)?;
        e.set("data.alpha", &mut d.alpha)?;
        if let Some(p) = e.take::<PathBuf>("data.manifest")? {
            d.manifest = Some(base.join(p));
        }
        e.set("data.classes", &mut d.classes)?;
        e.set("data.per_class", &mut d.per_class)?;
        e.set("data.blob_dim", &mut d.blob_dim)?;
        e.set("data.separation", &mut d.separation)?;
        e.set("data.train_fraction", &mut d.train_fraction)?;
        e.set("data.valid_fraction", &mut d.valid_fraction)?;

        let m = &mut c.model;
        e.set("model.depth", &mut m.depth)?;
        e.set("model.hidden", &mut m.hidden)?;
        e.set("model.activation", &mut m.activation)?;
        e.set("model.split_input", &mut m.split_input)?;
        e.set("model.trunk_depth", &mut m.trunk_depth)?;
        e.set("model.trunk_hidden", &mut m.trunk_hidden)?;
        e.set("model.slice_per_class", &mut m.slice_per_class)?;
        e.set("model.head_hidden", &mut m.head_hidden)?;

        let t = &mut c.train;
        e.set("train.penalty", &mut t.penalty.kind)?;
        e.set("train.gamma", &mut t.gamma)?;
        e.set("train.optimizer", &mut t.optimizer)?;
        e.set("train.lr", &mut t.learning_rate)?;
        e.set("train.momentum", &mut t.momentum)?;
        e.set("train.weight_decay", &mut t.weight_decay)?;
        e.set("train.batch_size", &mut t.batch_size)?;
        e.set("train.epochs", &mut t.epochs)?;
        if let Some(clip) = e.take_optional("train.clip_norm")? {
            t.clip_norm = clip;
        }
        e.set("train.selection", &mut t.selection)?;
        e.set("train.random_samples", &mut t.penalty.random_samples)?;
        e.set("train.mixup_pairs", &mut t.penalty.mixup_pairs)?;
        e.set("train.mu", &mut t.penalty.mu)?;
        c.variants = variants.unwrap_or_else(|| vec![c.train.penalty.kind]);

        e.set("audit.random_points", &mut c.audit.random_points)?;
        e.set("audit.slack", &mut c.audit.slack)?;
        if let Some(p) = e.take::<PathBuf>("audit.model")? {
            c.audit.model = Some(base.join(p));
        }

        let mut attack = AttackConfig::default();
        let mut any_attack = e.take::<bool>("attack.enabled")?.unwrap_or(false);
        if let Some(v) = e.take("attack.epsilon_fraction")? {
            attack.epsilon_fraction = v;
            any_attack = true;
        }
        if let Some(v) = e.take("attack.step_fraction")? {
            attack.step_fraction = v;
            any_attack = true;
        }
        if let Some(v) = e.take("attack.steps")? {
            attack.steps = v;
            any_attack = true;
        }
        if let Some(v) = e.take("attack.random_start")? {
            attack.random_start = v;
            any_attack = true;
        }
        c.attack = any_attack.then_some(attack);

        if let Some(v) = e.take_list("group.subsample")? {
            c.subsample = v;
        }
        if let Some(v) = e.take_list("sphere.dims")? {
            c.sphere.dims = v;
        }
        if let Some(v) = e.take_list("sphere.radii")? {
            c.sphere.radii = v;
        }
        e.set("sphere.draws", &mut c.sphere.draws)?;

        e.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if self.repeats == 0 {
            return bad("run.repeats", "must be at least 1");
        }
        if self.variants.is_empty() {
            return bad("run.variants", "must name at least one penalty");
        }
        if self.data.source == DataSource::Csv && self.data.manifest.is_none() {
            return bad("data.manifest", "required when data.source = csv");
        }
        if self.audit.random_points == 0 {
            return bad("audit.random_points", "must be at least 1");
        }
        if !(self.audit.slack >= 0.0) {
            return bad("audit.slack", "must be nonnegative");
        }
        if let Some(a) = &self.attack {
            if !(a.epsilon_fraction >= 0.0) {
                return bad("attack.epsilon_fraction", "must be nonnegative");
            }
            if !(a.step_fraction > 0.0) {
                return bad("attack.step_fraction", "must be positive");
            }
        }
        if self.subsample.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("group.subsample", "fractions must lie in (0, 1]");
        }
        if self.sphere.dims.contains(&0) {
            return bad("sphere.dims", "dimensions must be at least 1");
        }
        if self.sphere.radii.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("sphere.radii", "radii must lie in [0, 1]");
        }
        if self.sphere.draws == 0 {
            return bad("sphere.draws", "must be at least 1");
        }
        self.train.validate().map_err(|e| Error::Config {
            key: "train".into(),
            message: e.to_string(),
        })
    }

    /// Every resolved key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        let list = |v: Vec<String>| v.join(", ");
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());

        kv("run.seed", self.seed.to_string());
        kv("run.repeats", self.repeats.to_string());
        if let Some(p) = path(&self.out) {
            kv("run.out", p);
        }
        kv(
            "run.variants",
            list(self.variants.iter().map(|v| v.name().to_string()).collect()),
        );

        let d = &self.data;
        kv("data.source", d.source.name().into());
        kv("data.seed", d.seed.map_or("none".into(), |s| s.to_string()));
        kv("data.samples", d.samples.to_string());
        kv("data.dim", d.dim.to_string());
        kv("data.monotone_count", d.monotone_count.to_string());
        kv("data.alpha", format!("{:?}", d.alpha));
        if let Some(p) = path(&d.manifest) {
            kv("data.manifest", p);
        }
        kv("data.classes", d.classes.to_string());
        kv("data.per_class", d.per_class.to_string());
        kv("data.blob_dim", d.blob_dim.to_string());
        kv("data.separation", format!("{:?}", d.separation));
        kv("data.train_fraction", format!("{:?}", d.train_fraction));
        kv("data.valid_fraction", format!("{:?}", d.valid_fraction));

        let m = &self.model;
        kv("model.depth", m.depth.to_string());
        kv("model.hidden", m.hidden.to_string());
        kv("model.activation", m.activation.name().into());
        kv("model.split_input", m.split_input.to_string());
        kv("model.trunk_depth", m.trunk_depth.to_string());
        kv("model.trunk_hidden", m.trunk_hidden.to_string());
        kv("model.slice_per_class", m.slice_per_class.to_string());
        kv("model.head_hidden", m.head_hidden.to_string());

        let t = &self.train;
        kv("train.penalty", t.penalty.kind.name().into());
        kv("train.gamma", format!("{:?}", t.gamma));
        kv(
            "train.optimizer",
            match t.optimizer {
                OptimizerKind::Adam => "adam".into(),
                OptimizerKind::Sgd => "sgd".into(),
            },
        );
        kv("train.lr", format!("{:?}", t.learning_rate));
        kv("train.momentum", format!("{:?}", t.momentum));
        kv("train.weight_decay", format!("{:?}", t.weight_decay));
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv(
            "train.clip_norm",
            t.clip_norm.map_or("none".into(), |c| format!("{c:?}")),
        );
        kv(
            "train.selection",
            match t.selection {
                Selection::Best => "best".into(),
                Selection::Last => "last".into(),
            },
        );
        kv("train.random_samples", t.penalty.random_samples.to_string());
        kv("train.mixup_pairs", t.penalty.mixup_pairs.to_string());
        kv("train.mu", format!("{:?}", t.penalty.mu));

        kv("audit.random_points", self.audit.random_points.to_string());
        kv("audit.slack", format!("{:?}", self.audit.slack));
        if let Some(p) = path(&self.audit.model) {
            kv("audit.model", p);
        }
        if let Some(a) = &self.attack {
            kv("attack.enabled", "true".into());
            kv("attack.epsilon_fraction", format!("{:?}", a.epsilon_fraction));
            kv("attack.steps", a.steps.to_string());
            kv("attack.step_fraction", format!("{:?}", a.step_fraction));
            kv("attack.random_start", a.random_start.to_string());
        }
        if !self.subsample.is_empty() {
            kv(
                "group.subsample",
                list(self.subsample.iter().map(|f| format!("{f:?}")).collect()),
            );
        }
        kv(
            "sphere.dims",
            list(self.sphere.dims.iter().map(|n| n.to_string()).collect()),
        );
        kv(
            "sphere.radii",
            list(self.sphere.radii.iter().map(|r| format!("{r:?}")).collect()),
        );
        kv("sphere.draws", self.sphere.draws.to_string());
        o
    }

    /// Training settings for one penalty variant.
    pub fn train_config(&self, kind: PenaltyKind, seed: u64) -> TrainConfig {
        TrainConfig {
            penalty: PenaltySpec {
                kind,
                domain: None,
                ..self.train.penalty.clone()
            },
            seed,
            ..self.train.clone()
        }
    }

    /// Resolved config as an ordered key/value map, for embedding in reports.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_text()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}
