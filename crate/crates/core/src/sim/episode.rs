//! The executive loop: sense, track, update belief, solve, act.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GTrueSpec, Scenario};
use super::metrics::{metrics, EpisodeLog, Metrics};
use super::world::{pedestrian_step, sense, MoveContext, SimPed};
use super::SimError;
use crate::belief::{init_belief, observation_from_tracks, BeliefError, BeliefSummary, ParticleBelief, TrackPrior};
use crate::despot::{solve, SolveResult};
use crate::grid::{GridIndex, Occupancy};
use crate::mdp::{plan, replan, GlobalPath};
use crate::pomdp::{Awareness, LocalAction, NavModel};
use crate::seed::mix_seed;
use crate::tracker::{Track, TrackerBank};

const STREAM_AWARENESS: u64 = 0;
const STREAM_WORLD: u64 = 1;
const STREAM_BELIEF_INIT: u64 = 2;
const STREAM_BELIEF_UPDATE: u64 = 3;
const STREAM_SOLVER: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
}

/// One pedestrian as seen at decision time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedRecord {
    pub id: u32,
    /// `None` once the pedestrian has left the map.
    pub cell: Option<GridIndex>,
    pub g_true: Awareness,
    pub distance_m: Option<f64>,
    pub latched: bool,
    pub believed_aware: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tick: u32,
    /// Robot cell when the decision was made.
    pub decision_cell: GridIndex,
    /// Robot cell after acting.
    pub robot_cell: GridIndex,
    pub path_index: usize,
    pub action: LocalAction,
    pub solver_action: LocalAction,
    pub replanned: bool,
    pub peds: Vec<PedRecord>,
    pub reward: f64,
    pub root_lower: f64,
    pub root_upper: f64,
    pub trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("unknown pedestrian id {0}")]
    UnknownPed(u32),
    #[error("pedestrian {0} has left the map")]
    PedExited(u32),
    #[error("cell {0} is blocked or occupied")]
    CellUnavailable(GridIndex),
}

/// A steppable episode.
#[derive(Debug, Clone)]
pub struct Episode {
    scenario: Arc<Scenario>,
    seed: u64,
    tick: u32,
    tick_cap: u32,
    peds: Vec<SimPed>,
    path: GlobalPath,
    path_index: usize,
    path_version: u32,
    tracker: TrackerBank,
    belief: Option<ParticleBelief>,
    belief_key: Vec<(u32, bool)>,
    belief_path_version: u32,
    last_action: Option<LocalAction>,
    history: Vec<LocalAction>,
    world_rng: ChaCha8Rng,
    records: Vec<StepRecord>,
    outcome: Option<Outcome>,
    last_solve: Option<SolveResult>,
}

/// True iff the last `m` actions are all Wait.
pub fn avoid_trigger(history: &[LocalAction], m: usize) -> bool {
    m > 0 && history.len() >= m && history[history.len() - m..].iter().all(|&a| a == LocalAction::Wait)
}

impl Episode {
    pub fn new(scenario: Arc<Scenario>, seed: u64) -> Result<Self, SimError> {
        let c = &scenario.config;
        let path = plan(&scenario.grid, c.start, c.goal, &c.mdp)?;
        let tick_cap = (c.executive.tick_cap_factor as usize * path.hops().max(1)) as u32;
        let mut g_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_AWARENESS));
        let peds = c
            .pedestrians
            .iter()
            .enumerate()
            .map(|(n, spec)| {
                let u: f64 = g_rng.random();
                let g = match spec.g_true {
                    GTrueSpec::Fixed(g) => g,
                    GTrueSpec::Random(_) if u < c.executive.aware_probability => Awareness::Aware,
                    GTrueSpec::Random(_) => Awareness::Unaware,
                };
                SimPed::new(n as u32, spec, g)
            })
            .collect();
        Ok(Self {
            tracker: TrackerBank::new(c.tracker),
            world_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_WORLD)),
            scenario,
            seed,
            tick: 0,
            tick_cap,
            peds,
            path,
            path_index: 0,
            path_version: 0,
            belief: None,
            belief_key: Vec::new(),
            belief_path_version: 0,
            last_action: None,
            history: Vec::new(),
            records: Vec::new(),
            outcome: None,
            last_solve: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn tick_cap(&self) -> u32 {
        self.tick_cap
    }

    pub fn peds(&self) -> &[SimPed] {
        &self.peds
    }

    pub fn path(&self) -> &GlobalPath {
        &self.path
    }

    pub fn path_index(&self) -> usize {
        self.path_index
    }

    pub fn robot_cell(&self) -> GridIndex {
        self.path.waypoints[self.path_index]
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    pub fn belief(&self) -> Option<&ParticleBelief> {
        self.belief.as_ref()
    }

    pub fn belief_summary(&self) -> Option<BeliefSummary> {
        self.belief.as_ref().map(|b| b.summary())
    }

    pub fn last_solve(&self) -> Option<&SolveResult> {
        self.last_solve.as_ref()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn log(&self) -> EpisodeLog {
        EpisodeLog {
            records: self.records.clone(),
        }
    }

    pub fn metrics(&self) -> Metrics {
        metrics(&self.log())
    }

    /// Sends pedestrian `id` toward `cell` from the next tick on.
    pub fn set_ped_target(&mut self, id: u32, cell: GridIndex) -> Result<(), CommandError> {
        let robot = self.robot_cell();
        let blocked = !self.scenario.grid.is_free(cell)
            || cell == robot
            || self.peds.iter().any(|p| p.id != id && !p.exited && p.pos == cell);
        let ped = self.peds.iter_mut().find(|p| p.id == id).ok_or(CommandError::UnknownPed(id))?;
        if ped.exited {
            return Err(CommandError::PedExited(id));
        }
        if blocked {
            return Err(CommandError::CellUnavailable(cell));
        }
        ped.target = Some(cell);
        Ok(())
    }

    /// Forces pedestrian `id`'s gaze on or off from the next tick on.
    pub fn set_gaze(&mut self, id: u32, on: bool) -> Result<(), CommandError> {
        let ped = self.peds.iter_mut().find(|p| p.id == id).ok_or(CommandError::UnknownPed(id))?;
        if ped.exited {
            return Err(CommandError::PedExited(id));
        }
        ped.gaze_override = Some(on);
        Ok(())
    }

    fn heading(&self) -> (f64, f64) {
        let w = &self.path.waypoints;
        let n = w.len();
        let (a, b) = if n < 2 {
            return (1.0, 0.0);
        } else if self.path_index + 1 < n {
            (w[self.path_index], w[self.path_index + 1])
        } else {
            (w[n - 2], w[n - 1])
        };
        let (dx, dy) = (f64::from(b.i - a.i), f64::from(b.j - a.j));
        let len = dx.hypot(dy);
        (dx / len, dy / len)
    }

    fn track_cell(&self, t: &Track) -> Option<GridIndex> {
        let (x, y) = t.state.position();
        self.scenario.grid.world_to_grid(x, y).ok()
    }

    /// Index of the track that best explains pedestrian `ped`, if any.
    fn track_for(&self, ped: &SimPed) -> Option<usize> {
        let (px, py) = self.scenario.grid.grid_to_world(ped.pos);
        self.tracker
            .tracks()
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let (x, y) = t.state.position();
                (k, (x - px).hypot(y - py))
            })
            .filter(|&(_, d)| d <= self.scenario.grid.resolution() * 1.5)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }

    /// Pedestrians as the robot currently sees them.
    pub fn ped_view(&self) -> Vec<PedRecord> {
        let robot = self.robot_cell();
        let res = self.scenario.grid.resolution();
        self.peds
            .iter()
            .map(|p| {
                let track = if p.exited { None } else { self.track_for(p) };
                PedRecord {
                    id: p.id,
                    cell: (!p.exited).then_some(p.pos),
                    g_true: p.g_true,
                    distance_m: (!p.exited).then(|| robot.cell_distance(p.pos) * res),
                    latched: track.is_some_and(|k| self.tracker.tracks()[k].gaze.latched),
                    believed_aware: track
                        .and_then(|k| self.belief.as_ref().filter(|b| k < b.n_peds()).map(|b| b.aware_fraction(k))),
                }
            })
            .collect()
    }

    fn refresh_belief(&mut self, model: &NavModel) -> Result<(), SimError> {
        let c = &self.scenario.config;
        let tracks = self.tracker.tracks();
        let key: Vec<(u32, bool)> = tracks.iter().map(|t| (t.id, t.gaze.latched)).collect();
        let reuse = self.belief.is_some()
            && key == self.belief_key
            && self.belief_path_version == self.path_version
            && self.last_action.is_some();
        if reuse {
            let mut b = self.belief.take().expect("checked");
            b.clamp_to_window(model);
            let o = observation_from_tracks(model, self.path_index, tracks);
            let seed = mix_seed(mix_seed(self.seed, STREAM_BELIEF_UPDATE), u64::from(self.tick));
            match b.update(self.last_action.expect("checked"), &o, model, seed) {
                Ok(nb) => {
                    self.belief = Some(nb);
                    return Ok(());
                }
                Err(BeliefError::DegenerateBelief) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let priors: Vec<TrackPrior> = tracks.iter().map(TrackPrior::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(self.seed, STREAM_BELIEF_INIT), u64::from(self.tick)));
        self.belief = Some(init_belief(&priors, self.path_index, self.tick, model, &c.belief, &mut rng)?);
        self.belief_key = key;
        self.belief_path_version = self.path_version;
        Ok(())
    }

    /// Replans around tracked pedestrians and takes one step on the new path.
    fn avoid(&mut self) -> bool {
        let robot = self.robot_cell();
        let goal = self.scenario.config.goal;
        let humans: Vec<GridIndex> = self
            .tracker
            .tracks()
            .iter()
            .filter_map(|t| self.track_cell(t))
            .filter(|&c| c != robot && c != goal && self.scenario.grid.get(c) == Some(Occupancy::Free))
            .collect();
        let overlay = self.scenario.grid.with_humans(&humans);
        match replan(&overlay, robot, goal, &self.scenario.config.mdp) {
            Ok(p) => {
                self.path = p;
                self.path_index = usize::from(self.path.hops() > 0);
                self.path_version += 1;
                true
            }
            Err(_) => false,
        }
    }

    /// Runs one tick.
    pub fn step(&mut self) -> Result<&StepRecord, SimError> {
        if self.is_done() {
            return Err(SimError::EpisodeOver);
        }
        let scenario = Arc::clone(&self.scenario);
        let c = &scenario.config;
        let grid = &scenario.grid;
        let dt = c.executive.tick_seconds;
        let decision_cell = self.robot_cell();

        let frame = sense(
            &self.peds,
            decision_cell,
            self.heading(),
            grid,
            &c.sensors,
            self.tick,
            f64::from(self.tick) * dt,
            &mut self.world_rng,
        );
        self.tracker.step(&frame.vision, &frame.laser, &frame.gaze, dt)?;

        let model = NavModel::new(grid, self.path.waypoints.clone(), self.path_index, c.model, self.tick_cap)?;
        self.refresh_belief(&model)?;
        let mut solver = c.solver;
        solver.seed = mix_seed(mix_seed(self.seed, STREAM_SOLVER), u64::from(self.tick));
        let result = solve(self.belief.as_ref().expect("refreshed"), &model, &solver)?;
        let solver_action = result.action;

        let peds_before = self.ped_view();

        let mut action = solver_action;
        if action == LocalAction::Wait {
            let mut h = self.history.clone();
            h.push(LocalAction::Wait);
            if avoid_trigger(&h, c.executive.stuck_wait_limit) {
                action = LocalAction::Avoid;
            }
        }
        let mut replanned = false;
        match action {
            LocalAction::Go => {
                if self.path_index + 1 < self.path.waypoints.len() {
                    self.path_index += 1;
                }
            }
            LocalAction::Wait => {}
            LocalAction::Avoid => replanned = self.avoid(),
        }
        self.history.push(action);
        self.last_action = Some(action);
        let robot = self.robot_cell();

        let reached = robot == c.goal;
        let walked_into = self.peds.iter().any(|p| !p.exited && p.pos == robot);
        if !walked_into && !reached {
            let next = self.path.waypoints[(self.path_index + 1).min(self.path.waypoints.len() - 1)];
            for k in 0..self.peds.len() {
                let occupied: Vec<GridIndex> = self
                    .peds
                    .iter()
                    .enumerate()
                    .filter(|(m, p)| *m != k && !p.exited)
                    .map(|(_, p)| p.pos)
                    .collect();
                let ctx = MoveContext {
                    grid,
                    robot,
                    robot_next: next,
                    occupied: &occupied,
                    rules: &c.model.transition,
                };
                pedestrian_step(&mut self.peds[k], &ctx, &mut self.world_rng);
            }
        }

        let rp = &c.model.reward;
        let mut reward = rp.w_t * rp.r_time;
        if reached {
            reward += rp.w_g * rp.r_goal;
        }
        if action == LocalAction::Avoid {
            reward += rp.avoid_cost;
        }
        for p in self.peds.iter().filter(|p| !p.exited) {
            reward += rp.w_c * rp.collision_term(robot.cell_distance(p.pos) * grid.resolution(), p.g_true);
            if p.pos == robot {
                reward += rp.w_c * rp.r_hard_collision;
            }
        }
        let collided = self.peds.iter().any(|p| !p.exited && p.pos == robot);

        let tick = self.tick;
        self.tick += 1;
        self.outcome = if collided {
            Some(Outcome::Collision)
        } else if reached {
            Some(Outcome::Goal)
        } else if self.tick >= self.tick_cap {
            Some(Outcome::Timeout)
        } else {
            None
        };
        self.records.push(StepRecord {
            tick,
            decision_cell,
            robot_cell: robot,
            path_index: self.path_index,
            action,
            solver_action,
            replanned,
            peds: peds_before,
            reward,
            root_lower: result.root_lower,
            root_upper: result.root_upper,
            trials: result.trials,
            outcome: self.outcome,
        });
        self.last_solve = Some(result);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Steps until the episode ends.
    pub fn run_to_end(&mut self) -> Result<EpisodeLog, SimError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.log())
    }
}

/// Runs one full episode.
pub fn run_episode(scenario: &Arc<Scenario>, seed: u64) -> Result<EpisodeLog, SimError> {
    Episode::new(Arc::clone(scenario), seed)?.run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avoid_trigger_examples() {
        use LocalAction::*;
        assert!(avoid_trigger(&[Wait; 5], 5));
        assert!(!avoid_trigger(&[Wait, Wait, Wait, Wait, Go], 5));
        assert!(avoid_trigger(&[Wait], 1));
        assert!(!avoid_trigger(&[Wait; 4], 5));
        assert!(avoid_trigger(&[Go, Wait, Wait, Wait, Wait, Wait], 5));
    }
}
