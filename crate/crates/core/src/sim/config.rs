//! Scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::belief::BeliefParams;
use crate::despot::DespotParams;
use crate::grid::{GridIndex, OccupancyGrid, DEFAULT_RESOLUTION};
use crate::mdp::MdpParams;
use crate::pomdp::{Awareness, ModelParams};
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// Path to a map file, relative to the scenario file.
    File(PathBuf),
    /// Map text in the same format as map files.
    Inline(String),
    Empty {
        width: usize,
        height: usize,
        #[serde(default = "default_resolution")]
        resolution: f64,
    },
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomTag {
    Random,
}

/// Ground-truth awareness: fixed, or drawn once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GTrueSpec {
    Fixed(Awareness),
    Random(RandomTag),
}

impl Default for GTrueSpec {
    fn default() -> Self {
        GTrueSpec::Random(RandomTag::Random)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    /// Walk the path backwards, then forwards again.
    #[default]
    Reverse,
    /// Leave the map after the last waypoint.
    Exit,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PedKind {
    RandomWalk {
        #[serde(default = "default_stay")]
        stay_prob: f64,
        /// Moves off the map edge are allowed and remove the pedestrian.
        #[serde(default)]
        may_exit: bool,
    },
    ScriptedPath {
        path: Vec<GridIndex>,
        #[serde(default)]
        end: PathEnd,
    },
}

fn default_stay() -> f64 {
    0.5
}

fn default_speed() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianSpec {
    pub kind: PedKind,
    #[serde(default)]
    pub g_true: GTrueSpec,
    /// `(tick, gaze)` switches; the latest entry at or before a tick holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_script: Option<Vec<(u32, bool)>>,
    pub start: GridIndex,
    #[serde(default = "default_speed")]
    pub speed_cells_per_tick: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub fov_deg: f64,
    pub range_m: f64,
    pub vision_sigma_m: f64,
    pub laser_sigma_m: f64,
    pub gaze_false_neg: f64,
    /// Mean spurious laser returns per tick.
    pub clutter_rate: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            fov_deg: 270.0,
            range_m: 5.0,
            vision_sigma_m: 0.1,
            laser_sigma_m: 0.05,
            gaze_false_neg: 0.1,
            clutter_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutiveParams {
    /// Consecutive Waits that force an Avoid.
    pub stuck_wait_limit: usize,
    /// Tick cap as a multiple of the initial hop count.
    pub tick_cap_factor: u32,
    /// Wall time represented by one tick (one cell at robot speed).
    pub tick_seconds: f64,
    /// Probability of `g = +1` for pedestrians with random awareness.
    pub aware_probability: f64,
}

impl Default for ExecutiveParams {
    fn default() -> Self {
        Self {
            stuck_wait_limit: 5,
            tick_cap_factor: 10,
            tick_seconds: DEFAULT_RESOLUTION / 0.22,
            aware_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub map: MapSource,
    pub start: GridIndex,
    pub goal: GridIndex,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianSpec>,
    #[serde(default)]
    pub sensors: SensorSpec,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub belief: BeliefParams,
    #[serde(default)]
    pub solver: DespotParams,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub mdp: MdpParams,
    #[serde(default)]
    pub executive: ExecutiveParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

/// A validated scenario with its map loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: OccupancyGrid,
}

fn config_err(e: serde_json::Error) -> SimError {
    SimError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl Scenario {
    /// Reads a scenario file; map files resolve relative to its directory.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let config = ScenarioConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    /// Builds a scenario; `base` anchors relative map paths.
    pub fn from_config(config: ScenarioConfig, base: &Path) -> Result<Self, SimError> {
        let grid = match &config.map {
            MapSource::File(p) => {
                let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = fs::read_to_string(&full).map_err(|e| SimError::Io(format!("{}: {e}", full.display())))?;
                text.parse::<OccupancyGrid>()
                    .map_err(|e| SimError::Config(format!("map {}: {e}", full.display())))?
            }
            MapSource::Inline(text) => text
                .parse::<OccupancyGrid>()
                .map_err(|e| SimError::Config(format!("inline map: {e}")))?,
            MapSource::Empty {
                width,
                height,
                resolution,
            } => OccupancyGrid::new(*width, *height, *resolution).map_err(|e| SimError::Config(format!("map: {e}")))?,
        };
        let s = Self { config, grid };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), SimError> {
        let c = &self.config;
        let bad = |m: String| Err(SimError::Config(m));
        if !self.grid.is_free(c.start) {
            return bad(format!("start {} is not a free cell", c.start));
        }
        if !self.grid.is_free(c.goal) {
            return bad(format!("goal {} is not a free cell", c.goal));
        }
        for (n, p) in c.pedestrians.iter().enumerate() {
            if !self.grid.is_free(p.start) {
                return bad(format!("pedestrians[{n}].start {} is not a free cell", p.start));
            }
            if !(p.speed_cells_per_tick >= 0.0 && p.speed_cells_per_tick <= 1.0) {
                return bad(format!("pedestrians[{n}].speed_cells_per_tick must lie in [0,1]"));
            }
            match &p.kind {
                PedKind::RandomWalk { stay_prob, .. } if !(0.0..=1.0).contains(stay_prob) => {
                    return bad(format!("pedestrians[{n}].kind.stay_prob must lie in [0,1]"));
                }
                PedKind::ScriptedPath { path, .. } => {
                    if path.first() != Some(&p.start) {
                        return bad(format!("pedestrians[{n}].kind.path must begin at start"));
                    }
                    if path.windows(2).any(|w| !w[0].is_adjacent8(w[1])) {
                        return bad(format!("pedestrians[{n}].kind.path is not 8-connected"));
                    }
                    if let Some(c) = path.iter().find(|c| !self.grid.is_free(**c)) {
                        return bad(format!("pedestrians[{n}].kind.path crosses blocked cell {c}"));
                    }
                }
                _ => {}
            }
        }
        let s = &c.sensors;
        if !(s.fov_deg > 0.0 && s.fov_deg <= 360.0 && s.range_m > 0.0) {
            return bad("sensors: need 0 < fov_deg <= 360 and range_m > 0".into());
        }
        if !(s.vision_sigma_m >= 0.0 && s.laser_sigma_m >= 0.0 && s.clutter_rate >= 0.0) {
            return bad("sensors: noise levels must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&s.gaze_false_neg) {
            return bad("sensors.gaze_false_neg must lie in [0,1]".into());
        }
        c.model.validate().map_err(|e| SimError::Config(format!("model: {e}")))?;
        c.solver.validate().map_err(|e| SimError::Config(format!("solver: {e}")))?;
        c.mdp.validate().map_err(|e| SimError::Config(format!("mdp: {e}")))?;
        if c.belief.k_particles == 0 {
            return bad("belief.k_particles must be at least 1".into());
        }
        let e = &c.executive;
        if e.stuck_wait_limit == 0 || e.tick_cap_factor == 0 || !(e.tick_seconds > 0.0) {
            return bad("executive: limits must be positive".into());
        }
        Ok(())
    }
}
