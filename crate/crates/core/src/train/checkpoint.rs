//! JSON checkpoints. Parameter arrays are flat lists with explicit shapes;
//! every float is written with 17 significant digits so that loading
//! reproduces the saved bits.

use std::fs;
use std::path::Path;

use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::TrainConfig;
use crate::data::{ChannelStats, Task};
use crate::error::{Error, Result};
use crate::interp::ChannelSelection;
use crate::model::{FrontEnd, Model};
use crate::predict::BaselineMode;

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub channel_names: Vec<String>,
    pub config: TrainConfig,
    pub best_val_loss: f64,
    pub best_epoch: usize,
}

fn fmt17(x: f64) -> std::result::Result<String, String> {
    if x.is_finite() {
        Ok(format!("{x:.16e}"))
    } else {
        Err(format!("cannot store non-finite value {x}"))
    }
}

struct Exact<'a>(&'a [f64]);

impl Serialize for Exact<'_> {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let parts = self
            .0
            .iter()
            .map(|&x| fmt17(x))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(S::Error::custom)?;
        let raw = RawValue::from_string(format!("[{}]", parts.join(","))).map_err(S::Error::custom)?;
        raw.serialize(ser)
    }
}

struct ExactScalar(f64);

impl Serialize for ExactScalar {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let s = fmt17(self.0).map_err(S::Error::custom)?;
        RawValue::from_string(s).map_err(S::Error::custom)?.serialize(ser)
    }
}

#[derive(Serialize)]
struct TensorOut<'a> {
    name: &'a str,
    shape: Vec<usize>,
    data: Exact<'a>,
}

#[derive(Serialize)]
struct StatsOut<'a> {
    mean: Exact<'a>,
    std: Exact<'a>,
    degenerate: &'a [bool],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FrontEndDoc {
    Interp {
        selection: String,
        refs: usize,
        kappa: f64,
    },
    Baseline {
        mode: BaselineMode,
        bins: usize,
    },
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    schema_version: u32,
    task: Task,
    channel_names: &'a [String],
    front_end: FrontEndDoc,
    hidden: usize,
    params: Vec<TensorOut<'a>>,
    stats: StatsOut<'a>,
    config: &'a TrainConfig,
    best_val_loss: ExactScalar,
    best_epoch: usize,
}

#[derive(Deserialize)]
struct TensorIn {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    schema_version: u32,
    task: Task,
    channel_names: Vec<String>,
    front_end: FrontEndDoc,
    hidden: usize,
    params: Vec<TensorIn>,
    stats: ChannelStats,
    config: TrainConfig,
    best_val_loss: f64,
    best_epoch: usize,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut params = Vec::new();
        self.model.visit(|name, shape, data| {
            params.push(TensorOut {
                name,
                shape: shape.to_vec(),
                data: Exact(data),
            })
        });
        let front_end = match &self.model.front {
            FrontEnd::Interp {
                params,
                selection,
                grid,
            } => FrontEndDoc::Interp {
                selection: selection.label(),
                refs: grid.len(),
                kappa: params.kappa,
            },
            FrontEnd::Baseline { mode, bins } => FrontEndDoc::Baseline {
                mode: *mode,
                bins: *bins,
            },
        };
        let doc = CheckpointOut {
            schema_version: CHECKPOINT_SCHEMA,
            task: self.model.task,
            channel_names: &self.channel_names,
            front_end,
            hidden: self.model.gru.hidden,
            params,
            stats: StatsOut {
                mean: Exact(&self.model.stats.mean),
                std: Exact(&self.model.stats.std),
                degenerate: &self.model.stats.degenerate,
            },
            config: &self.config,
            best_val_loss: ExactScalar(self.best_val_loss),
            best_epoch: self.best_epoch,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointIn = serde_json::from_str(text)?;
        if doc.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::Checkpoint(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        if doc.stats.mean.len() != doc.channel_names.len() {
            return Err(Error::Checkpoint("stats do not match channel names".into()));
        }
        let config = doc.config;
        let consistent = config.hidden == doc.hidden
            && match &doc.front_end {
                FrontEndDoc::Interp {
                    selection,
                    refs,
                    kappa,
                } => {
                    config.baseline.is_none()
                        && ChannelSelection::parse(selection)? == config.selection
                        && *refs == config.refs
                        && *kappa == config.kappa
                }
                FrontEndDoc::Baseline { mode, bins } => {
                    config.baseline == Some(*mode) && *bins == config.bins.unwrap_or(config.refs)
                }
            };
        if !consistent {
            return Err(Error::Checkpoint(
                "front end or hidden size disagrees with the stored configuration".into(),
            ));
        }
        let spec = config.model_spec(doc.task, doc.channel_names.len());
        let mut model = Model::new(&spec, doc.stats, 0)?;

        let mut expected = Vec::new();
        model.visit(|name, shape, _| expected.push((name.to_string(), shape.to_vec())));
        if expected.len() != doc.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                doc.params.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&doc.params) {
            let len: usize = t.shape.iter().product();
            if *name != t.name || *shape != t.shape || len != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} with shape {:?} does not match expected {name:?} {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        let mut tensors = doc.params.into_iter();
        model.visit_mut(|_, v| v.copy_from_slice(&tensors.next().expect("checked length").data));

        Ok(Checkpoint {
            model,
            channel_names: doc.channel_names,
            config,
            best_val_loss: doc.best_val_loss,
            best_epoch: doc.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
