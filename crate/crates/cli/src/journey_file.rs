//! Newline-delimited JSON journey files.
//!
//! The first line is a manifest declaring the channel vocabulary (which fixes
//! the dense channel ids) and the time unit, which must be `days`. Every
//! following non-empty line is one journey record:
//!
//! ```text
//! {"manifest":{"channels":["email","display"],"time_unit":"days"}}
//! {"customer_id":"c0","outcome":1.0,"eval_time":2.5,"touches":[{"channel":"email","time":0.0}]}
//! ```
//!
//! `eval_time` may be omitted and defaults to the last touch time. Customer
//! indices are assigned densely in order of first appearance of each
//! `customer_id`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use attr_core::model::Journey;
use attr_core::Touch;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub channels: Vec<String>,
    pub time_unit: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    manifest: Manifest,
}

#[derive(Serialize, Deserialize)]
struct TouchRecord {
    channel: String,
    time: f64,
}

#[derive(Serialize, Deserialize)]
struct JourneyRecord {
    customer_id: String,
    outcome: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_time: Option<f64>,
    touches: Vec<TouchRecord>,
}

/// Parses a journey file; errors carry the offending line number.
pub fn parse_journey_file(path: &Path) -> Result<(Vec<Journey>, Vec<String>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_journeys(BufReader::new(file), &path.display().to_string())
}

pub fn parse_journeys(
    reader: impl BufRead,
    path: &str,
) -> Result<(Vec<Journey>, Vec<String>)> {
    let fail = |line: usize, message: String| CliError::DataAt {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();

    let manifest = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line.map_err(|e| fail(idx + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                    fail(idx + 1, format!("expected manifest record first: {e}"))
                })?;
                break record.manifest;
            }
            None => return Err(CliError::Data(format!("{path}: empty file, manifest required"))),
        }
    };
    if manifest.time_unit != "days" {
        return Err(CliError::Data(format!(
            "{path}: time_unit {:?} unsupported, times are in days",
            manifest.time_unit
        )));
    }
    if manifest.channels.is_empty() {
        return Err(CliError::Data(format!("{path}: manifest declares no channels")));
    }
    let mut channel_ids = HashMap::new();
    for (id, name) in manifest.channels.iter().enumerate() {
        if channel_ids.insert(name.clone(), id).is_some() {
            return Err(CliError::Data(format!(
                "{path}: duplicate channel {name:?} in manifest"
            )));
        }
    }

    let mut journeys = Vec::new();
    let mut customer_index: HashMap<String, usize> = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| fail(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JourneyRecord =
            serde_json::from_str(&line).map_err(|e| fail(line_no, e.to_string()))?;
        let mut touches = Vec::with_capacity(record.touches.len());
        for t in &record.touches {
            let channel = *channel_ids.get(&t.channel).ok_or_else(|| {
                fail(line_no, format!("unknown channel {:?}", t.channel))
            })?;
            touches.push(Touch { channel, time: t.time });
        }
        let next_index = customer_index.len();
        let index = *customer_index.entry(record.customer_id.clone()).or_insert(next_index);
        let journey =
            Journey::new(record.customer_id, index, touches, record.outcome, record.eval_time)
                .map_err(|e| fail(line_no, e.to_string()))?;
        journeys.push(journey);
    }
    Ok((journeys, manifest.channels))
}

/// Writes journeys in the journey file format, channel names resolved
/// against `channels` in manifest order.
pub fn write_journey_file(
    path: &Path,
    journeys: &[Journey],
    channels: &[String],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    );
    let manifest = ManifestRecord {
        manifest: Manifest { channels: channels.to_vec(), time_unit: "days".into() },
    };
    writeln!(out, "{}", serde_json::to_string(&manifest).expect("manifest serializes"))?;
    for journey in journeys {
        let touches = journey
            .touches()
            .iter()
            .map(|t| {
                let name = channels.get(t.channel).ok_or_else(|| {
                    CliError::Data(format!(
                        "journey {:?} uses channel id {} outside the manifest",
                        journey.customer_id(),
                        t.channel
                    ))
                })?;
                Ok(TouchRecord { channel: name.clone(), time: t.time })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = JourneyRecord {
            customer_id: journey.customer_id().to_string(),
            outcome: journey.outcome(),
            eval_time: Some(journey.eval_time()),
            touches,
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("record serializes"))?;
    }
    Ok(())
}
