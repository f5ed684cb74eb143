//! Version 1 of the JSON message protocol.

use awarenav::grid::GridIndex;
use awarenav::pomdp::{Awareness, LocalAction};
use awarenav::sim::{Metrics, Outcome, ScenarioConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub cell: GridIndex,
    pub path_index: usize,
    pub last_action: Option<LocalAction>,
    pub last_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedView {
    pub id: u32,
    pub cell: Option<GridIndex>,
    pub g_true: Awareness,
    pub latched: bool,
    pub believed_aware: Option<f64>,
    /// Gaze the simulator will emit next tick.
    pub gaze: bool,
    pub target: Option<GridIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefView {
    /// Index of the tracked pedestrian in the belief.
    pub track: usize,
    pub histogram: Vec<(GridIndex, f64)>,
    pub aware_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    State {
        tick: u32,
        paused: bool,
        robot: RobotView,
        peds: Vec<PedView>,
        belief_summary: Vec<BeliefView>,
        path: Vec<GridIndex>,
        goal: GridIndex,
        grid: GridView,
        bounds: Option<Bounds>,
    },
    Metrics {
        tick: u32,
        metrics: Metrics,
    },
    EpisodeEnd {
        tick: u32,
        outcome: Outcome,
        metrics: Metrics,
    },
    Ack {
        command_id: u64,
        status: AckStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Blocked cells.
    pub obstacles: Vec<GridIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub v: u64,
    pub episode: u64,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerMessage {
    pub fn new(episode: u64, body: ServerBody) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            episode,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn tick(&self) -> Option<u32> {
        match self.body {
            ServerBody::State { tick, .. } | ServerBody::Metrics { tick, .. } | ServerBody::EpisodeEnd { tick, .. } => {
                Some(tick)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetPedTarget {
        id: u32,
        cell: GridIndex,
    },
    ToggleGaze {
        id: u32,
        on: bool,
    },
    Pause,
    Resume,
    Step,
    SetSpeed {
        ticks_per_s: f64,
    },
    /// Restarts the episode, optionally with a new scenario or seed.
    Reset {
        #[serde(default)]
        scenario: Option<Box<ScenarioConfig>>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientCommand {
    pub v: u64,
    pub command_id: u64,
    #[serde(flatten)]
    pub command: Command,
}

impl ClientCommand {
    pub fn new(command_id: u64, command: Command) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            command_id,
            command,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("command serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("unsupported protocol version {0}")]
    VersionMismatch(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// Parses a client frame, checking the version before the body.
pub fn parse_command(text: &str) -> Result<ClientCommand, ProtocolError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match value.get("v") {
        None => return Err(ProtocolError::Malformed("missing field `v`".into())),
        Some(v) if v.as_u64() != Some(PROTOCOL_VERSION) => return Err(ProtocolError::VersionMismatch(v.to_string())),
        Some(_) => {}
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}
