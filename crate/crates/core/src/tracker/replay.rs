//! Detection log replay: one JSON object per line,
//! `{"tick": 3, "source": "laser", "x": 1.2, "y": 0.4, "confidence": 0.9}`.
//! An optional boolean `gaze` field marks eye contact on vision lines.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Detection, SensorSource, Track, TrackerBank, TrackerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub tick: u64,
    pub source: SensorSource,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub gaze: bool,
}

pub fn read_detection_log(reader: impl BufRead) -> Result<Vec<DetectionRecord>, TrackerError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TrackerError::Log {
            line: n + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| TrackerError::Log {
            line: n + 1,
            msg: e.to_string(),
        })?;
        if let Some(prev) = out.last().map(|r: &DetectionRecord| r.tick) {
            if rec.tick < prev {
                return Err(TrackerError::Log {
                    line: n + 1,
                    msg: format!("tick {} precedes {prev}", rec.tick),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Feeds the records through `bank`, one tracker step per tick from the
/// first to the last tick in the log (empty ticks included). Returns the
/// track list after every step.
pub fn replay(records: &[DetectionRecord], bank: &mut TrackerBank, dt: f64) -> Result<Vec<Vec<Track>>, TrackerError> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut cursor = 0;
    for tick in first.tick..=last.tick {
        let (mut vision, mut laser, mut gaze) = (Vec::new(), Vec::new(), Vec::new());
        while cursor < records.len() && records[cursor].tick == tick {
            let r = &records[cursor];
            let d = Detection {
                source: r.source,
                pos: (r.x, r.y),
                timestamp: tick as f64 * dt,
                confidence: r.confidence,
            };
            match r.source {
                SensorSource::Vision => {
                    vision.push(d);
                    gaze.push(r.gaze);
                }
                SensorSource::Laser => laser.push(d),
            }
            cursor += 1;
        }
        bank.step(&vision, &laser, &gaze, dt)?;
        out.push(bank.tracks().to_vec());
    }
    Ok(out)
}
