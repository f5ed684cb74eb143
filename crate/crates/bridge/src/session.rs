//! The simulation side of the bridge, free of any I/O.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use awarenav::grid::Occupancy;
use awarenav::sim::{Episode, Scenario, SimError};

use crate::protocol::{
    AckStatus, BeliefView, Bounds, ClientCommand, Command, GridView, PedView, RobotView, ServerBody, ServerMessage,
};

pub const DEFAULT_TICKS_PER_S: f64 = 1.0;

/// What handling one command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    /// Goes to the sender only.
    pub ack: ServerMessage,
    /// Goes to every client.
    pub broadcast: Vec<ServerMessage>,
}

/// One episode plus playback state. Commands and ticks interleave but
/// never overlap.
#[derive(Debug)]
pub struct Session {
    scenario: Arc<Scenario>,
    base: PathBuf,
    seed: u64,
    episode: Episode,
    episode_id: u64,
    paused: bool,
    ticks_per_s: f64,
}

impl Session {
    /// `base` anchors relative map paths in scenarios sent with `reset`.
    pub fn new(scenario: Arc<Scenario>, base: &Path, seed: u64, paused: bool) -> Result<Self, SimError> {
        Ok(Self {
            episode: Episode::new(Arc::clone(&scenario), seed)?,
            scenario,
            base: base.to_path_buf(),
            seed,
            episode_id: 0,
            paused,
            ticks_per_s: DEFAULT_TICKS_PER_S,
        })
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn ticks_per_s(&self) -> f64 {
        self.ticks_per_s
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn episode_id(&self) -> u64 {
        self.episode_id
    }

    pub fn is_done(&self) -> bool {
        self.episode.is_done()
    }

    fn msg(&self, body: ServerBody) -> ServerMessage {
        ServerMessage::new(self.episode_id, body)
    }

    pub fn state_message(&self) -> ServerMessage {
        let ep = &self.episode;
        let grid = &ep.scenario().grid;
        let last = ep.records().last();
        let peds = ep
            .ped_view()
            .into_iter()
            .zip(ep.peds())
            .map(|(r, p)| PedView {
                id: r.id,
                cell: r.cell,
                g_true: r.g_true,
                latched: r.latched,
                believed_aware: r.believed_aware,
                gaze: !p.exited && p.gaze_now(ep.tick()),
                target: p.target,
            })
            .collect();
        let belief_summary = ep
            .belief_summary()
            .map(|s| {
                s.peds
                    .into_iter()
                    .enumerate()
                    .map(|(track, m)| BeliefView {
                        track,
                        histogram: m.histogram,
                        aware_fraction: m.aware_fraction,
                    })
                    .collect()
            })
            .unwrap_or_default();
        self.msg(ServerBody::State {
            tick: ep.tick(),
            paused: self.paused,
            robot: RobotView {
                cell: ep.robot_cell(),
                path_index: ep.path_index(),
                last_action: last.map(|r| r.action),
                last_reward: last.map(|r| r.reward),
            },
            peds,
            belief_summary,
            path: ep.path().waypoints.clone(),
            goal: ep.scenario().config.goal,
            grid: GridView {
                width: grid.width(),
                height: grid.height(),
                resolution: grid.resolution(),
                obstacles: grid.indices().filter(|&c| grid.get(c) == Some(Occupancy::Obstacle)).collect(),
            },
            bounds: ep.last_solve().map(|s| Bounds {
                lower: s.root_lower,
                upper: s.root_upper,
            }),
        })
    }

    /// Advances one tick. Returns the state message, followed by metrics and
    /// episode_end once the episode finishes; nothing if it already has.
    pub fn tick(&mut self) -> Result<Vec<ServerMessage>, SimError> {
        if self.episode.is_done() {
            return Ok(Vec::new());
        }
        self.episode.step()?;
        let mut out = vec![self.state_message()];
        if let Some(outcome) = self.episode.outcome() {
            let tick = self.episode.tick();
            let metrics = self.episode.metrics();
            out.push(self.msg(ServerBody::Metrics {
                tick,
                metrics: metrics.clone(),
            }));
            out.push(self.msg(ServerBody::EpisodeEnd { tick, outcome, metrics }));
        }
        Ok(out)
    }

    fn ack(&self, id: u64, result: Result<(), String>) -> ServerMessage {
        let (status, reason) = match result {
            Ok(()) => (AckStatus::Applied, None),
            Err(r) => (AckStatus::Rejected, Some(r)),
        };
        self.msg(ServerBody::Ack {
            command_id: id,
            status,
            reason,
        })
    }

    fn reset(&mut self, scenario: Option<Box<awarenav::sim::ScenarioConfig>>, seed: Option<u64>) -> Result<(), String> {
        let scenario = match scenario {
            Some(cfg) => Arc::new(Scenario::from_config(*cfg, &self.base).map_err(|e| e.to_string())?),
            None => Arc::clone(&self.scenario),
        };
        let seed = seed.unwrap_or(self.seed);
        self.episode = Episode::new(Arc::clone(&scenario), seed).map_err(|e| e.to_string())?;
        self.scenario = scenario;
        self.seed = seed;
        self.episode_id += 1;
        Ok(())
    }

    /// Applies one command between ticks.
    pub fn handle(&mut self, cmd: ClientCommand) -> Reply {
        let mut broadcast = Vec::new();
        let result = match cmd.command {
            Command::SetPedTarget { id, cell } => self.episode.set_ped_target(id, cell).map_err(|e| e.to_string()),
            Command::ToggleGaze { id, on } => self.episode.set_gaze(id, on).map_err(|e| e.to_string()),
            Command::Pause => {
                self.paused = true;
                Ok(())
            }
            Command::Resume => {
                self.paused = false;
                Ok(())
            }
            Command::SetSpeed { ticks_per_s } if ticks_per_s > 0.0 && ticks_per_s.is_finite() => {
                self.ticks_per_s = ticks_per_s;
                Ok(())
            }
            Command::SetSpeed { ticks_per_s } => Err(format!("ticks_per_s must be positive, got {ticks_per_s}")),
            Command::Step if self.episode.is_done() => Err("episode has ended; send reset".into()),
            Command::Step => {
                self.paused = true;
                match self.tick() {
                    Ok(msgs) => {
                        broadcast = msgs;
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Command::Reset { scenario, seed } => {
                let r = self.reset(scenario, seed);
                if r.is_ok() {
                    broadcast.push(self.state_message());
                }
                r
            }
        };
        Reply {
            ack: self.ack(cmd.command_id, result),
            broadcast,
        }
    }
}
