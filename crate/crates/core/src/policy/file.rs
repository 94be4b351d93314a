//! Versioned JSON model files.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "wellclear-policy",
//!   "version": 1,
//!   "observation_order": ["heading", ...],
//!   "action_order": ["turn", "accel"],
//!   "hidden_activation": "tanh",
//!   "normalization": { "heading": [-180, 180], ... },
//!   "actor":  [ { "rows": 256, "cols": 8, "weight": [...], "bias": [...] }, ... ],
//!   "critic": [ ... ],
//!   "log_std": [0.0, 0.0]
//! }
//! ```
//!
//! Weights are row-major `(rows = outputs, cols = inputs)`. Numbers are
//! written in shortest round-trip form, so a save/load cycle is bit-exact.
//! Non-finite values cannot be written; a loader seeing `null`, `"NaN"` or
//! `"inf"` in a number slot reports [`Error::NonFiniteParameter`].

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, Mlp, PolicyModel};
use crate::observation::{NormalizationRanges, ACTION_ORDER, OBSERVATION_ORDER};
use crate::Error;

pub const FORMAT_NAME: &str = "wellclear-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub observation_order: Vec<String>,
    pub action_order: Vec<String>,
    pub hidden_activation: String,
    pub normalization: NormalizationRanges,
    pub actor: Vec<LayerRecord>,
    pub critic: Vec<LayerRecord>,
    pub log_std: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<Scalar>,
    pub bias: Vec<Scalar>,
}

/// A number slot. Anything other than a finite number is kept so the loader
/// can name it instead of failing inside the JSON parser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(TextNumber),
    Null(()),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TextNumber {
    #[serde(rename = "NaN", alias = "nan")]
    NaN,
    #[serde(rename = "inf", alias = "Infinity", alias = "+inf")]
    Inf,
    #[serde(rename = "-inf", alias = "-Infinity")]
    NegInf,
}

impl Scalar {
    fn finite(self, what: &str) -> Result<f64, Error> {
        match self {
            Scalar::Number(v) if v.is_finite() => Ok(v),
            _ => Err(Error::NonFiniteParameter(what.to_string())),
        }
    }
}

impl ModelFile {
    pub fn from_model(model: &PolicyModel) -> Self {
        let layers = |net: &Mlp| {
            net.layers
                .iter()
                .map(|l| LayerRecord {
                    rows: l.outputs(),
                    cols: l.inputs(),
                    weight: l.weight.iter().map(|&v| Scalar::Number(v)).collect(),
                    bias: l.bias.iter().map(|&v| Scalar::Number(v)).collect(),
                })
                .collect()
        };
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            observation_order: OBSERVATION_ORDER.iter().map(|s| s.to_string()).collect(),
            action_order: ACTION_ORDER.iter().map(|s| s.to_string()).collect(),
            hidden_activation: "tanh".to_string(),
            normalization: model.normalization,
            actor: layers(&model.actor),
            critic: layers(&model.critic),
            log_std: model.log_std.iter().map(|&v| Scalar::Number(v)).collect(),
        }
    }

    pub fn into_model(self) -> Result<PolicyModel, Error> {
        if self.format != FORMAT_NAME {
            return Err(Error::MalformedModel(format!("unknown format {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: self.version,
            });
        }
        if self.observation_order != OBSERVATION_ORDER {
            return Err(Error::ShapeMismatch {
                what: "observation_order".into(),
                expected: format!("{OBSERVATION_ORDER:?}"),
                found: format!("{:?}", self.observation_order),
            });
        }
        if self.action_order != ACTION_ORDER {
            return Err(Error::ShapeMismatch {
                what: "action_order".into(),
                expected: format!("{ACTION_ORDER:?}"),
                found: format!("{:?}", self.action_order),
            });
        }
        if self.hidden_activation != "tanh" {
            return Err(Error::MalformedModel(format!(
                "unsupported activation {:?}",
                self.hidden_activation
            )));
        }
        let model = PolicyModel {
            actor: build_net("actor", &self.actor)?,
            critic: build_net("critic", &self.critic)?,
            log_std: Array1::from(finite_vec("log_std", &self.log_std)?),
            normalization: self.normalization,
        };
        model.validate()?;
        Ok(model)
    }
}

fn finite_vec(what: &str, values: &[Scalar]) -> Result<Vec<f64>, Error> {
    values.iter().map(|v| v.finite(what)).collect()
}

fn build_net(name: &str, records: &[LayerRecord]) -> Result<Mlp, Error> {
    let layers = records
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let what = format!("{name} layer {k}");
            if rec.weight.len() != rec.rows * rec.cols {
                return Err(Error::ShapeMismatch {
                    what: format!("{what} weight"),
                    expected: format!("{} x {} = {}", rec.rows, rec.cols, rec.rows * rec.cols),
                    found: rec.weight.len().to_string(),
                });
            }
            if rec.bias.len() != rec.rows {
                return Err(Error::ShapeMismatch {
                    what: format!("{what} bias"),
                    expected: rec.rows.to_string(),
                    found: rec.bias.len().to_string(),
                });
            }
            let weight = Array2::from_shape_vec((rec.rows, rec.cols), finite_vec(&what, &rec.weight)?)
                .expect("length checked above");
            Ok(Dense {
                weight,
                bias: Array1::from(finite_vec(&what, &rec.bias)?),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Mlp { layers })
}

pub fn save_model(model: &PolicyModel, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    model.validate()?;
    let text = serde_json::to_string(&ModelFile::from_model(model))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PolicyModel, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

pub fn model_from_str(text: &str) -> Result<PolicyModel, Error> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    file.into_model()
}

pub fn model_to_string(model: &PolicyModel) -> Result<String, Error> {
    model.validate()?;
    Ok(serde_json::to_string(&ModelFile::from_model(model))?)
}
