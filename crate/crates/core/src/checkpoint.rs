//! Parameter checkpoints.
//!
//! A checkpoint is UTF-8 text: a magic first line, then one `key = value`
//! pair per line where every value is a JSON literal. Floats are written with
//! 17 significant digits, so parameters round-trip bit-exactly.
//!
//! ```text
//! # nsotree checkpoint
//! version = 1
//! model = "nsotree"
//! input_dim = 2
//! depth = 1
//! hidden = 1
//! activation = "softplus"
//! features = ["x0", "x1"]
//! layer.1.weights = [1.0000000000000000e0, 2.0000000000000000e0]
//! layer.1.bias = [0.0000000000000000e0]
//! head.weights = [...]
//! head.bias = 0.0000000000000000e0
//! ```
//!
//! Optional keys: `train_data` (path used for the Breslow baseline),
//! `schema` (column-role file the data was read with), `standardize.mean`
//! and `standardize.std`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::net::{Activation, NsoTreeParams};
use crate::survival::Standardization;
use crate::train::ModelKind;

const MAGIC: &str = "# nsotree checkpoint";
const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelKind,
    /// Activation the parameters were trained with.
    pub activation: Activation,
    pub params: NsoTreeParams,
    pub feature_names: Vec<String>,
    pub standardization: Option<Standardization>,
    pub train_data: Option<String>,
    pub schema: Option<String>,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn float_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| float(v)).collect();
    format!("[{}]", items.join(", "))
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "version = {VERSION}");
        let _ = writeln!(out, "model = {}", json_string(self.model.name()));
        let _ = writeln!(out, "input_dim = {}", p.input_dim());
        let _ = writeln!(out, "depth = {}", p.depth());
        let _ = writeln!(out, "hidden = {}", p.hidden());
        let _ = writeln!(out, "activation = {}", json_string(self.activation.name()));
        let names: Vec<String> = self.feature_names.iter().map(|n| json_string(n)).collect();
        let _ = writeln!(out, "features = [{}]", names.join(", "));
        if let Some(path) = &self.train_data {
            let _ = writeln!(out, "train_data = {}", json_string(path));
        }
        if let Some(path) = &self.schema {
            let _ = writeln!(out, "schema = {}", json_string(path));
        }
        if let Some(s) = &self.standardization {
            let _ = writeln!(out, "standardize.mean = {}", float_list(&s.mean));
            let _ = writeln!(out, "standardize.std = {}", float_list(&s.std));
        }
        for l in 0..p.depth() {
            let _ = writeln!(out, "layer.{}.weights = {}", l + 1, float_list(p.layer_weights(l)));
            let _ = writeln!(out, "layer.{}.bias = {}", l + 1, float_list(p.layer_bias(l)));
        }
        let _ = writeln!(out, "head.weights = {}", float_list(p.head_weights()));
        let _ = writeln!(out, "head.bias = {}", float(p.head_bias()));
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == MAGIC => {}
            _ => return Err(Error::parse(origin, 1, "missing checkpoint header")),
        }
        let mut entries: BTreeMap<String, (usize, Value)> = BTreeMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, line_no, "expected `key = value`"))?;
            let value: Value = serde_json::from_str(value.trim())
                .map_err(|e| Error::parse(origin, line_no, format!("bad value: {e}")))?;
            if entries.insert(key.trim().to_string(), (line_no, value)).is_some() {
                return Err(Error::parse(origin, line_no, format!("duplicate key `{}`", key.trim())));
            }
        }

        let get = |key: &str| -> Result<&(usize, Value)> {
            entries
                .get(key)
                .ok_or_else(|| Error::parse(origin, 0, format!("missing key `{key}`")))
        };
        let uint = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            v.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| Error::parse(origin, *line, format!("`{key}` must be a non-negative integer")))
        };
        let string = |key: &str| -> Result<String> {
            let (line, v) = get(key)?;
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::parse(origin, *line, format!("`{key}` must be a string")))
        };
        let number = |line: usize, key: &str, v: &Value| -> Result<f64> {
            v.as_f64()
                .ok_or_else(|| Error::parse(origin, line, format!("`{key}` must hold numbers")))
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            let (line, v) = get(key)?;
            v.as_array()
                .ok_or_else(|| Error::parse(origin, *line, format!("`{key}` must be a list")))?
                .iter()
                .map(|x| number(*line, key, x))
                .collect()
        };

        let version = uint("version")?;
        if version as u64 != VERSION {
            return Err(Error::parse(origin, get("version")?.0, format!("unsupported checkpoint version {version}")));
        }
        let model: ModelKind = string("model")?.parse()?;
        let activation: Activation = string("activation")?.parse()?;
        let input_dim = uint("input_dim")?;
        let depth = uint("depth")?;
        let hidden = uint("hidden")?;
        let (line, names) = get("features")?;
        let feature_names = names
            .as_array()
            .ok_or_else(|| Error::parse(origin, *line, "`features` must be a list"))?
            .iter()
            .map(|n| {
                n.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(origin, *line, "feature names must be strings"))
            })
            .collect::<Result<Vec<_>>>()?;
        if feature_names.len() != input_dim {
            return Err(Error::parse(origin, *line, "feature count differs from input_dim"));
        }
        let optional = |key: &str| -> Result<Option<String>> {
            if entries.contains_key(key) {
                string(key).map(Some)
            } else {
                Ok(None)
            }
        };
        let train_data = optional("train_data")?;
        let schema = optional("schema")?;
        let standardization = if entries.contains_key("standardize.mean") {
            let s = Standardization {
                mean: floats("standardize.mean")?,
                std: floats("standardize.std")?,
            };
            if s.mean.len() != input_dim || s.std.len() != input_dim {
                return Err(Error::parse(origin, 0, "standardization length differs from input_dim"));
            }
            Some(s)
        } else {
            None
        };

        let mut layers = Vec::with_capacity(depth);
        for l in 1..=depth {
            layers.push((floats(&format!("layer.{l}.weights"))?, floats(&format!("layer.{l}.bias"))?));
        }
        let (line, bias) = get("head.bias")?;
        let head_bias = number(*line, "head.bias", bias)?;
        let params = NsoTreeParams::from_parts(input_dim, hidden, &layers, &floats("head.weights")?, head_bias)?;
        if matches!(model, ModelKind::LinearCph) != (depth == 0) {
            return Err(Error::parse(origin, 0, "linear models have depth 0 and tree models depth >= 1"));
        }
        Ok(Self {
            model,
            activation,
            params,
            feature_names,
            standardization,
            train_data,
            schema,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(seed: u64, depth: usize, hidden: usize) -> Checkpoint {
        let names = (0..3).map(|j| format!("f \"{j}\"")).collect();
        Checkpoint {
            model: ModelKind::NsoTree,
            activation: Activation::Softplus,
            params: NsoTreeParams::init(3, depth, hidden, seed).unwrap(),
            feature_names: names,
            standardization: Some(Standardization {
                mean: vec![0.1, -2.5, 1e-300],
                std: vec![1.0 / 3.0, 7.0, 1e300],
            }),
            train_data: Some("data/train, v1.csv".into()),
            schema: Some("schema.toml".into()),
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let c = sample(3, 4, 2);
        let back = Checkpoint::parse(&c.to_text(), "mem").unwrap();
        assert_eq!(back, c);
        for (a, b) in c.params.theta().iter().zip(back.params.theta()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn linear_checkpoint_round_trip() {
        let c = Checkpoint {
            model: ModelKind::LinearCph,
            activation: Activation::Softplus,
            params: NsoTreeParams::linear(2, 0).unwrap(),
            feature_names: vec!["a".into(), "b".into()],
            standardization: None,
            train_data: None,
            schema: None,
        };
        assert_eq!(Checkpoint::parse(&c.to_text(), "mem").unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Checkpoint::parse("version = 1\n", "mem").is_err());
        let text = sample(0, 2, 1).to_text().replace("version = 1", "version = 9");
        assert!(Checkpoint::parse(&text, "mem").is_err());
        let text = sample(0, 2, 1).to_text().replace("depth = 2", "depth = 3");
        assert!(Checkpoint::parse(&text, "mem").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 12)) {
            // d=3, L=1, d_h=2: 6 weights + 2 biases + head 5 + 1 = 14
            let mut theta = values.clone();
            theta.extend_from_slice(&[f64::MIN_POSITIVE, -0.0]);
            let params = NsoTreeParams::from_flat(3, 1, 2, theta).unwrap();
            let c = Checkpoint {
                model: ModelKind::NsoTree,
                activation: Activation::Relu,
                params,
                feature_names: vec!["a".into(), "b".into(), "c".into()],
                standardization: None,
                train_data: None,
                schema: None,
            };
            let back = Checkpoint::parse(&c.to_text(), "mem").unwrap();
            for (a, b) in c.params.theta().iter().zip(back.params.theta()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
