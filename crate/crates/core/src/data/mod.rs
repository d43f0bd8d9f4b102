//! Dataset representation and the preprocessing steps that run before the
//! interpolation network: ingestion, channel statistics, empty-channel
//! imputation, union-of-timestamps layout, hold-out masks, cross-validation
//! splits, forward-filled discretization, sparsification and synthetic data
//! generation.

mod discretize;
mod grid;
mod io;
mod mask;
mod sparsify;
mod split;
mod stats;
mod synth;

pub use discretize::{discretize_forward_fill, DiscretizedFeatures, FillRule};
pub use grid::{to_union_grid, ReferenceGrid, UnionGrid};
pub use io::{load_dataset, parse_dataset, write_dataset, DatasetHeader};
pub use mask::{sample_mask, MaskAssignment};
pub use sparsify::sparsify;
pub use split::{split_kfold, split_validation, FoldSplit};
pub use stats::{global_channel_stats, impute_empty_channels, prepare_sample, ChannelStats};
pub use synth::{synthesize, LabelMode, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::config(format!("unknown task {other:?}"))),
        }
    }
}

/// Scalar target of one sample. Regression values are stored as log-days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Label(u32),
    Value(f64),
}

impl Target {
    /// Numeric view used by the losses: the class index or the log-days value.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Target::Label(l) => l as f64,
            Target::Value(v) => v,
        }
    }

    pub fn label(&self) -> Option<u32> {
        match *self {
            Target::Label(l) => Some(l),
            Target::Value(_) => None,
        }
    }
}

/// Observations of one channel: strictly increasing times in [0, 1] and
/// their values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChannel {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeChannel {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let ch = TimeChannel { times, values };
        ch.check().map_err(|message| Error::InvalidSample {
            id: String::new(),
            message,
        })?;
        Ok(ch)
    }

    pub fn empty() -> Self {
        TimeChannel {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        if self.times.len() != self.values.len() {
            return Err(format!(
                "mismatched lengths: {} times, {} values",
                self.times.len(),
                self.values.len()
            ));
        }
        for w in self.times.windows(2) {
            if !(w[0] < w[1]) {
                return Err("non-monotone times".to_string());
            }
        }
        if let Some(t) = self.times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(format!("time {t} outside [0, 1]"));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err("non-finite value".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub channels: Vec<TimeChannel>,
    pub target: Target,
}

impl Sample {
    pub fn new(id: impl Into<String>, channels: Vec<TimeChannel>, target: Target) -> Result<Self> {
        let s = Sample {
            id: id.into(),
            channels,
            target,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_observations(&self) -> usize {
        self.channels.iter().map(TimeChannel::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidSample {
            id: self.id.clone(),
            message,
        };
        if self.channels.is_empty() {
            return Err(invalid("no channels".into()));
        }
        for (d, ch) in self.channels.iter().enumerate() {
            ch.check().map_err(|m| invalid(format!("channel {d}: {m}")))?;
        }
        if self.channels.iter().all(TimeChannel::is_empty) {
            return Err(invalid("all channels are empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub channel_names: Vec<String>,
    pub task: Task,
    pub window_hours: f64,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        channel_names: Vec<String>,
        task: Task,
        window_hours: f64,
    ) -> Result<Self> {
        let ds = Dataset {
            samples,
            channel_names,
            task,
            window_hours,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.num_channels();
        for s in &self.samples {
            s.validate()?;
            if s.num_channels() != d {
                return Err(Error::InvalidSample {
                    id: s.id.clone(),
                    message: format!("expected {d} channels, found {}", s.num_channels()),
                });
            }
            let ok = matches!(
                (self.task, s.target),
                (Task::Classification, Target::Label(_)) | (Task::Regression, Target::Value(_))
            );
            if !ok {
                return Err(Error::InvalidSample {
                    id: s.id.clone(),
                    message: format!("target does not match task {}", self.task),
                });
            }
        }
        Ok(())
    }

    /// New dataset holding clones of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            channel_names: self.channel_names.clone(),
            task: self.task,
            window_hours: self.window_hours,
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target.as_f64()).collect()
    }

    /// Relabels a multi-class dataset as `class` versus the rest.
    pub fn one_vs_rest(&self, class: u32) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.samples {
            if let Target::Label(l) = s.target {
                s.target = Target::Label(u32::from(l == class));
            }
        }
        out
    }
}
