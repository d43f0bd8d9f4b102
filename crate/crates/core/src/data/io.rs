//! JSON-Lines dataset files.
//!
//! The first line is a header naming the channels, the task and the
//! observation window in hours. Every following line is one sample whose
//! times are hours inside the window; regression targets are lengths of stay
//! in days and are converted to log-days on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Target, Task, TimeChannel};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: u32,
    pub channels: Vec<String>,
    pub task: Task,
    pub window_hours: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelRecord {
    name: String,
    t: Vec<f64>,
    x: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
    channels: Vec<ChannelRecord>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut header: Option<DatasetHeader> = None;
    let mut samples = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: DatasetHeader = serde_json::from_str(&line).map_err(|e| {
                    parse_or_schema(lineno, &e, "header")
                })?;
                check_header(&h, lineno)?;
                header = Some(h);
            }
            Some(h) => {
                let rec: SampleRecord = serde_json::from_str(&line)
                    .map_err(|e| parse_or_schema(lineno, &e, "sample"))?;
                samples.push(sample_from_record(rec, h, lineno)?);
            }
        }
    }

    let header = header.ok_or(Error::EmptyDataset)?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        samples,
        channel_names: header.channels,
        task: header.task,
        window_hours: header.window_hours,
    })
}

fn parse_or_schema(line: usize, e: &serde_json::Error, what: &str) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema {
            line,
            message: format!("{what}: {e}"),
        },
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    }
}

fn check_header(h: &DatasetHeader, line: usize) -> Result<()> {
    let schema = |message: String| Error::Schema { line, message };
    if h.schema != SCHEMA_VERSION {
        return Err(schema(format!("unsupported schema version {}", h.schema)));
    }
    if h.channels.is_empty() {
        return Err(schema("header lists no channels".into()));
    }
    if !(h.window_hours.is_finite() && h.window_hours > 0.0) {
        return Err(schema("window_hours must be positive".into()));
    }
    let mut names = h.channels.clone();
    names.sort();
    names.dedup();
    if names.len() != h.channels.len() {
        return Err(schema("duplicate channel names".into()));
    }
    Ok(())
}

fn sample_from_record(rec: SampleRecord, h: &DatasetHeader, line: usize) -> Result<Sample> {
    let schema = |message: String| Error::Schema { line, message };

    let target = match (h.task, rec.label, rec.target) {
        (Task::Classification, Some(l), _) => Target::Label(l),
        (Task::Classification, None, _) => return Err(schema("missing field `label`".into())),
        (Task::Regression, _, Some(days)) => {
            if !(days.is_finite() && days > 0.0) {
                return Err(schema(format!("target must be a positive number of days, got {days}")));
            }
            Target::Value(days.ln())
        }
        (Task::Regression, _, None) => return Err(schema("missing field `target`".into())),
    };

    let mut channels = vec![None; h.channels.len()];
    for ch in rec.channels {
        let d = h
            .channels
            .iter()
            .position(|n| *n == ch.name)
            .ok_or_else(|| schema(format!("unknown channel {:?}", ch.name)))?;
        if channels[d].is_some() {
            return Err(schema(format!("channel {:?} listed twice", ch.name)));
        }
        if ch.t.len() != ch.x.len() {
            return Err(schema(format!(
                "channel {:?}: mismatched lengths ({} times, {} values)",
                ch.name,
                ch.t.len(),
                ch.x.len()
            )));
        }
        if ch.t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(schema(format!("channel {:?}: non-monotone times", ch.name)));
        }
        if let Some(t) = ch.t.iter().find(|&&t| !(0.0..=h.window_hours).contains(&t)) {
            return Err(schema(format!(
                "channel {:?}: time {t} outside window [0, {}]",
                ch.name, h.window_hours
            )));
        }
        let times = ch.t.iter().map(|t| t / h.window_hours).collect();
        channels[d] = Some(TimeChannel {
            times,
            values: ch.x,
        });
    }

    let sample = Sample {
        id: rec.id,
        channels: channels
            .into_iter()
            .map(|c| c.unwrap_or_else(TimeChannel::empty))
            .collect(),
        target,
    };
    sample.validate().map_err(|e| schema(e.to_string()))?;
    Ok(sample)
}

/// Writes `ds` in the on-disk format, converting times back to hours and
/// regression targets back to days.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset_to(ds, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_dataset_to(ds: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    let header = DatasetHeader {
        schema: SCHEMA_VERSION,
        channels: ds.channel_names.clone(),
        task: ds.task,
        window_hours: ds.window_hours,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for s in &ds.samples {
        let (label, target) = match s.target {
            Target::Label(l) => (Some(l), None),
            Target::Value(v) => (None, Some(v.exp())),
        };
        let rec = SampleRecord {
            id: s.id.clone(),
            label,
            target,
            channels: s
                .channels
                .iter()
                .zip(&ds.channel_names)
                .filter(|(c, _)| !c.is_empty())
                .map(|(c, name)| ChannelRecord {
                    name: name.clone(),
                    t: c.times.iter().map(|t| t * ds.window_hours).collect(),
                    x: c.values.clone(),
                })
                .collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}
