//! Plain-text model files.
//!
//! ```text
//! monograd-model 1
//! kind mlp
//! input_dim 3
//! activation relu
//! activate_input false
//! activate_output false
//! monotone 0 2
//! input split
//! dense 2 4
//! w <row-major weights>
//! b <bias>
//! dense 1 4
//! ...
//! layers 1
//! dense 8 1
//! ...
//! end
//! ```
//!
//! A sliced classifier is `kind sliced`, `classes K`, then the trunk and the
//! head as two MLP blocks. Values are written in Rust's shortest round-trip
//! notation, so save/load is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, Dense, InputLayer, MlpModel, Model, SlicedClassifier};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "monograd-model 1";

/// Either model kind, as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Mlp(MlpModel),
    Sliced(SlicedClassifier),
}

impl From<MlpModel> for AnyModel {
    fn from(m: MlpModel) -> Self {
        AnyModel::Mlp(m)
    }
}

impl From<SlicedClassifier> for AnyModel {
    fn from(m: SlicedClassifier) -> Self {
        AnyModel::Sliced(m)
    }
}

impl AnyModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        match self {
            AnyModel::Mlp(m) => {
                out.push_str("kind mlp\n");
                write_mlp(&mut out, m);
            }
            AnyModel::Sliced(s) => {
                out.push_str("kind sliced\n");
                let _ = writeln!(out, "classes {}", s.classes());
                write_mlp(&mut out, s.trunk());
                write_mlp(&mut out, s.head());
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let magic = r.line()?;
        if magic.trim() != MAGIC {
            return Err(r.err("not a monograd model file"));
        }
        match r.keyed("kind")?.as_str() {
            "mlp" => Ok(AnyModel::Mlp(read_mlp(&mut r)?)),
            "sliced" => {
                let classes = r.parse_keyed::<usize>("classes")?;
                let trunk = read_mlp(&mut r)?;
                let head = read_mlp(&mut r)?;
                SlicedClassifier::from_parts(trunk, head, classes)
                    .map(AnyModel::Sliced)
                    .map_err(|e| r.err(&e.to_string()))
            }
            other => Err(r.err(&format!("unknown model kind `{other}`"))),
        }
    }

    pub fn as_mlp(&self) -> Option<&MlpModel> {
        match self {
            AnyModel::Mlp(m) => Some(m),
            AnyModel::Sliced(_) => None,
        }
    }

    pub fn as_sliced(&self) -> Option<&SlicedClassifier> {
        match self {
            AnyModel::Sliced(s) => Some(s),
            AnyModel::Mlp(_) => None,
        }
    }
}

pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_text())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    AnyModel::from_text(&std::fs::read_to_string(path)?)
}

fn write_values(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

fn write_dense(out: &mut String, d: &Dense) {
    let _ = writeln!(out, "dense {} {}", d.in_dim(), d.out_dim());
    write_values(out, "w", d.weight.data());
    write_values(out, "b", d.bias.data());
}

fn write_mlp(out: &mut String, m: &MlpModel) {
    let _ = writeln!(out, "input_dim {}", m.input_dim());
    let _ = writeln!(out, "activation {}", m.activation().name());
    let _ = writeln!(out, "activate_input {}", m.activates_input());
    let _ = writeln!(out, "activate_output {}", m.activates_output());
    let mono: Vec<String> = m.monotone().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "monotone {}", mono.join(" ").trim());
    match m.input_layer() {
        InputLayer::Joint(d) => {
            out.push_str("input joint\n");
            write_dense(out, d);
        }
        InputLayer::Split { monotone, other } => {
            out.push_str("input split\n");
            write_dense(out, monotone);
            write_dense(out, other);
        }
    }
    let _ = writeln!(out, "layers {}", m.layers().len());
    for l in m.layers() {
        write_dense(out, l);
    }
    out.push_str("end\n");
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::ModelFormat {
            line: self.line_no,
            message: message.to_string(),
        }
    }

    fn line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line_no = i + 1;
                Ok(l)
            }
            None => {
                self.line_no += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    /// Reads `key rest...` and returns `rest`.
    fn keyed(&mut self, key: &str) -> Result<String> {
        let line = self.line()?;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(self.err(&format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest.trim().to_string())
    }

    fn parse_keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(&format!("bad value `{v}` for `{key}`")))
    }

    fn values(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let rest = self.keyed(key)?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err(&format!("non-numeric value in `{key}`")))?;
        if values.len() != expected {
            return Err(self.err(&format!("`{key}` holds {} values, expected {expected}", values.len())));
        }
        Ok(values)
    }

    fn dense(&mut self) -> Result<Dense> {
        let dims = self.keyed("dense")?;
        let parsed: Vec<usize> = dims
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err("bad dense dimensions"))?;
        let [rows, cols] = parsed[..] else {
            return Err(self.err("dense needs two dimensions"));
        };
        let w = self.values("w", rows * cols)?;
        let b = self.values("b", cols)?;
        Dense::new(Tensor::matrix(rows, cols, w)?, Tensor::vector(b))
    }
}

fn read_mlp(r: &mut Reader<'_>) -> Result<MlpModel> {
    let input_dim = r.parse_keyed::<usize>("input_dim")?;
    let act_name = r.keyed("activation")?;
    let activation = Activation::parse(&act_name).ok_or_else(|| r.err(&format!("unknown activation `{act_name}`")))?;
    let activate_input = r.parse_keyed::<bool>("activate_input")?;
    let activate_output = r.parse_keyed::<bool>("activate_output")?;
    let mono_text = r.keyed("monotone")?;
    let monotone: Vec<usize> = mono_text
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| r.err("bad monotone dimension list"))?;
    let input = match r.keyed("input")?.as_str() {
        "joint" => InputLayer::Joint(r.dense()?),
        "split" => {
            let monotone = r.dense()?;
            let other = r.dense()?;
            InputLayer::Split { monotone, other }
        }
        other => return Err(r.err(&format!("unknown input layer `{other}`"))),
    };
    let n = r.parse_keyed::<usize>("layers")?;
    let layers = (0..n).map(|_| r.dense()).collect::<Result<Vec<_>>>()?;
    if r.line()?.trim() != "end" {
        return Err(r.err("expected `end`"));
    }
    let model = MlpModel::from_layers(input, layers, activation, monotone)
        .map_err(|e| r.err(&e.to_string()))?
        .with_activated_input(activate_input)
        .with_activated_output(activate_output);
    if model.input_dim() != input_dim {
        return Err(r.err("input_dim does not match the first layer"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MlpConfig, SlicedConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(m: &AnyModel) -> Vec<u64> {
        let params = match m {
            AnyModel::Mlp(m) => m.parameters(),
            AnyModel::Sliced(s) => s.parameters(),
        };
        params
            .into_iter()
            .flat_map(|p| p.data().iter().map(|v| v.to_bits()))
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mlp_round_trip_is_bit_exact(seed in any::<u64>(), split in any::<bool>(), scale in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = MlpConfig { split_input: split, hidden: 6, ..MlpConfig::regression(5, vec![0, 3]) };
            let mut m = MlpModel::new(&cfg, &mut rng).unwrap();
            for p in m.parameters_mut() {
                p.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let any = AnyModel::Mlp(m);
            let back = AnyModel::from_text(&any.to_text()).unwrap();
            prop_assert_eq!(bits(&any), bits(&back));
            prop_assert_eq!(any, back);
        }
    }

    #[test]
    fn sliced_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = AnyModel::Sliced(SlicedClassifier::new(&SlicedConfig::new(4, 3), &mut rng).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(m, back);
    }

    #[test]
    fn corrupt_file_reports_line() {
        let m = AnyModel::Mlp(MlpModel::linear(&[1.0, 2.0], 0.5).unwrap());
        let text = m.to_text().replace("w 1.0 2.0", "w 1.0 oops");
        match AnyModel::from_text(&text) {
            Err(Error::ModelFormat { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(AnyModel::from_text("hello").is_err());
    }
}
