//! Episode logs and the metrics derived from them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::episode::{Outcome, StepRecord};
use super::SimError;
use crate::pomdp::{Awareness, LocalAction};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    /// One JSON object per record, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut records = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| SimError::Config(format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.records.last().and_then(|r| r.outcome)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: u32,
    pub steps_to_goal: Option<u32>,
    pub success: bool,
    pub collided: bool,
    pub timed_out: bool,
    pub replans: u32,
    pub waits: u32,
    /// Distance (m) to the closest pedestrian at Wait ticks, by that
    /// pedestrian's true awareness.
    pub wait_distances_aware: Vec<f64>,
    pub wait_distances_nonaware: Vec<f64>,
    pub min_distance: Option<f64>,
}

/// Recomputes metrics from a log.
pub fn metrics(log: &EpisodeLog) -> Metrics {
    let mut m = Metrics {
        ticks: log.records.len() as u32,
        ..Metrics::default()
    };
    for r in &log.records {
        let closest = r
            .peds
            .iter()
            .filter_map(|p| p.distance_m.map(|d| (d, p.g_true)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((d, _)) = closest {
            m.min_distance = Some(m.min_distance.map_or(d, |x: f64| x.min(d)));
        }
        if r.action == LocalAction::Wait {
            m.waits += 1;
            match closest {
                Some((d, Awareness::Aware)) => m.wait_distances_aware.push(d),
                Some((d, Awareness::Unaware)) => m.wait_distances_nonaware.push(d),
                None => {}
            }
        }
        if r.replanned {
            m.replans += 1;
        }
    }
    match log.outcome() {
        Some(Outcome::Goal) => {
            m.success = true;
            m.steps_to_goal = Some(m.ticks);
        }
        Some(Outcome::Collision) => m.collided = true,
        Some(Outcome::Timeout) => m.timed_out = true,
        None => {}
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridIndex;
    use crate::sim::episode::PedRecord;

    fn rec(tick: u32, action: LocalAction, peds: &[(f64, Awareness)], outcome: Option<Outcome>) -> StepRecord {
        StepRecord {
            tick,
            decision_cell: GridIndex::new(0, 0),
            robot_cell: GridIndex::new(0, 0),
            path_index: 0,
            action,
            solver_action: action,
            replanned: false,
            peds: peds
                .iter()
                .enumerate()
                .map(|(k, &(d, g))| PedRecord {
                    id: k as u32,
                    cell: Some(GridIndex::new(1, 1)),
                    g_true: g,
                    distance_m: Some(d),
                    latched: false,
                    believed_aware: None,
                })
                .collect(),
            reward: -1.0,
            root_lower: 0.0,
            root_upper: 0.0,
            trials: 0,
            outcome,
        }
    }

    #[test]
    fn hand_built_log() {
        use Awareness::*;
        let log = EpisodeLog {
            records: vec![
                rec(0, LocalAction::Wait, &[(1.5, Aware), (2.25, Unaware)], None),
                rec(1, LocalAction::Wait, &[(3.0, Aware), (2.0, Unaware)], None),
                rec(2, LocalAction::Go, &[(0.75, Aware)], Some(Outcome::Goal)),
            ],
        };
        let m = metrics(&log);
        assert_eq!(m.steps_to_goal, Some(3));
        assert!(m.success && !m.collided);
        assert_eq!(m.wait_distances_aware, vec![1.5]);
        assert_eq!(m.wait_distances_nonaware, vec![2.0]);
        assert_eq!(m.min_distance, Some(0.75));
        assert_eq!(m.waits, 2);
    }

    #[test]
    fn no_waits_no_samples() {
        let log = EpisodeLog {
            records: vec![rec(0, LocalAction::Go, &[(1.0, Awareness::Aware)], Some(Outcome::Collision))],
        };
        let m = metrics(&log);
        assert!(m.wait_distances_aware.is_empty() && m.wait_distances_nonaware.is_empty());
        assert!(m.collided && !m.success);
        assert_eq!(m.steps_to_goal, None);
    }

    #[test]
    fn jsonl_round_trip() {
        let log = EpisodeLog {
            records: vec![rec(0, LocalAction::Wait, &[(1.5, Awareness::Aware)], None)],
        };
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(EpisodeLog::read_jsonl(text.as_bytes()).unwrap(), log);
    }
}
