//! Local-planner POMDP over a fixed global path.
//!
//! The robot state is its index along the global path; each pedestrian has a
//! window cell and a latched awareness flag. Transitions and observations are
//! generative (they draw from a caller-supplied generator) and every draw
//! count is independent of the branch taken, so a seeded stream fully
//! determinizes an outcome.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridIndex, LocalWindow, Occupancy, OccupancyGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("awareness must be -1 or +1, got {0}")]
    InvalidAwareness(i8),
    #[error("global path is empty")]
    EmptyPath,
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalAction {
    Go,
    Wait,
    Avoid,
}

impl LocalAction {
    /// Also the tie-break order.
    pub const ALL: [LocalAction; 3] = [LocalAction::Go, LocalAction::Wait, LocalAction::Avoid];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Pedestrian awareness of the robot, `G ∈ {-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Awareness {
    Unaware,
    Aware,
}

impl Awareness {
    pub fn as_i8(self) -> i8 {
        match self {
            Awareness::Aware => 1,
            Awareness::Unaware => -1,
        }
    }

    pub fn is_aware(self) -> bool {
        self == Awareness::Aware
    }
}

impl TryFrom<i8> for Awareness {
    type Error = ModelError;

    fn try_from(g: i8) -> Result<Self, Self::Error> {
        match g {
            1 => Ok(Awareness::Aware),
            -1 => Ok(Awareness::Unaware),
            other => Err(ModelError::InvalidAwareness(other)),
        }
    }
}

impl From<Awareness> for i8 {
    fn from(a: Awareness) -> i8 {
        a.as_i8()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PedState {
    pub pos: GridIndex,
    pub g: Awareness,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PomdpState {
    pub robot_path_index: usize,
    pub peds: Vec<PedState>,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalObservation {
    pub robot_cell: GridIndex,
    pub ped_cells: Vec<Option<GridIndex>>,
    pub gaze_flags: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionShape {
    /// Constant penalty inside the radius.
    Step,
    /// Penalty scaled by `1 - d/ρ` inside the radius.
    LinearRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub w_g: f64,
    pub w_c: f64,
    pub w_t: f64,
    pub r_goal: f64,
    pub r_collision: f64,
    pub r_time: f64,
    /// Collision radius for aware pedestrians, meters.
    pub rho_aware: f64,
    /// Collision radius for unaware pedestrians, meters.
    pub rho_nonaware: f64,
    /// Extra (unweighted) cost of the in-model Avoid action.
    pub avoid_cost: f64,
    pub collision_shape: CollisionShape,
    /// Added (times `w_c`) for each pedestrian on the robot's cell.
    pub r_hard_collision: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            w_g: 1.0,
            w_c: 1.0,
            w_t: 1.0,
            r_goal: 1000.0,
            r_collision: -500.0,
            r_time: -1.0,
            rho_aware: 1.5 * 0.75,
            rho_nonaware: 2.5 * 0.75,
            avoid_cost: -5.0,
            collision_shape: CollisionShape::Step,
            r_hard_collision: -10_000.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if self.w_g < 0.0 || self.w_c < 0.0 || self.w_t < 0.0 {
            return bad("reward weights must be nonnegative");
        }
        if !(self.r_goal > 0.0 && self.r_collision < 0.0 && self.r_time < 0.0) {
            return bad("need r_goal > 0, r_collision < 0, r_time < 0");
        }
        if !(self.rho_aware >= 0.0 && self.rho_aware < self.rho_nonaware) {
            return bad("need 0 <= rho_aware < rho_nonaware");
        }
        if self.avoid_cost > 0.0 || self.r_hard_collision > 0.0 {
            return bad("avoid_cost and r_hard_collision must not be positive");
        }
        Ok(())
    }

    /// Awareness-dependent collision radius,
    /// `ρ = (1+G)/2 · ρ_aware + (1−G)/2 · ρ_nonaware`.
    pub fn collision_radius(&self, g: Awareness) -> f64 {
        let g = f64::from(g.as_i8());
        (1.0 + g) / 2.0 * self.rho_aware + (1.0 - g) / 2.0 * self.rho_nonaware
    }

    /// Collision radius from a raw awareness value.
    pub fn collision_radius_raw(&self, g: i8) -> Result<f64, ModelError> {
        Awareness::try_from(g).map(|g| self.collision_radius(g))
    }

    /// Collision term of one pedestrian at `dist` meters (before `w_c`).
    pub fn collision_term(&self, dist: f64, g: Awareness) -> f64 {
        let rho = self.collision_radius(g);
        if dist > rho {
            return 0.0;
        }
        match self.collision_shape {
            CollisionShape::Step => self.r_collision,
            CollisionShape::LinearRamp if rho > 0.0 => self.r_collision * (1.0 - dist / rho),
            CollisionShape::LinearRamp => self.r_collision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionParams {
    pub ped_stay_prob: f64,
    /// Aware pedestrians never step onto the robot's current or next cell.
    pub aware_avoidance: bool,
    /// Aware pedestrians also never step closer to the robot's current or
    /// next cell.
    pub aware_keep_distance: bool,
}

impl Default for TransitionParams {
    fn default() -> Self {
        Self {
            ped_stay_prob: 0.5,
            aware_avoidance: true,
            aware_keep_distance: false,
        }
    }
}

impl TransitionParams {
    pub fn ped_move_prob(&self) -> f64 {
        1.0 - self.ped_stay_prob
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationParams {
    pub p_miss: f64,
    pub p_noise: f64,
    pub p_gfn: f64,
    pub fov_deg: f64,
    pub range_m: f64,
}

impl Default for ObservationParams {
    fn default() -> Self {
        Self {
            p_miss: 0.05,
            p_noise: 0.1,
            p_gfn: 0.1,
            fov_deg: 270.0,
            range_m: 5.0,
        }
    }
}

impl ObservationParams {
    pub fn noiseless() -> Self {
        Self {
            p_miss: 0.0,
            p_noise: 0.0,
            p_gfn: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub reward: RewardParams,
    pub transition: TransitionParams,
    pub observation: ObservationParams,
    pub gamma: f64,
    pub window_size: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            reward: RewardParams::default(),
            transition: TransitionParams::default(),
            observation: ObservationParams::default(),
            gamma: 0.95,
            window_size: 10,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.reward.validate()?;
        let t = &self.transition;
        if !(0.0..=1.0).contains(&t.ped_stay_prob) {
            return Err(ModelError::InvalidParams("ped_stay_prob not in [0,1]".into()));
        }
        let o = &self.observation;
        let probs_ok = [o.p_miss, o.p_noise, o.p_gfn].iter().all(|p| (0.0..=1.0).contains(p))
            && o.p_miss + o.p_noise <= 1.0;
        if !probs_ok {
            return Err(ModelError::InvalidParams("observation probabilities out of range".into()));
        }
        if !(o.fov_deg > 0.0 && o.fov_deg <= 360.0 && o.range_m > 0.0) {
            return Err(ModelError::InvalidParams("sensor geometry out of range".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ModelError::InvalidParams("gamma not in (0,1]".into()));
        }
        Ok(())
    }
}

/// The POMDP closed over one global path and local window.
#[derive(Debug, Clone)]
pub struct NavModel {
    path: Vec<GridIndex>,
    resolution: f64,
    window: LocalWindow,
    /// Free in-window 8-neighbors per window cell, row-major in the window.
    neighbors: Vec<Vec<GridIndex>>,
    params: ModelParams,
    episode_cap: u32,
}

impl NavModel {
    /// Builds the model for a robot at `path[robot_index]`, with the local
    /// window centered on the robot (clamped to the grid; shrunk when the
    /// grid is smaller than the configured window).
    pub fn new(
        grid: &OccupancyGrid,
        path: Vec<GridIndex>,
        robot_index: usize,
        params: ModelParams,
        episode_cap: u32,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        if path.is_empty() {
            return Err(ModelError::EmptyPath);
        }
        let center = path[robot_index.min(path.len() - 1)];
        let size = params
            .window_size
            .min(grid.width())
            .min(grid.height())
            .max(3.min(grid.width().min(grid.height())));
        let window = if size >= 3 {
            grid.local_window(center, size)?
        } else {
            // degenerate tiny maps: use the whole grid as the window
            let mut view = Vec::new();
            let s = grid.width().max(grid.height());
            for j in 0..s as i32 {
                for i in 0..s as i32 {
                    view.push(grid.get(GridIndex::new(i, j)).unwrap_or(Occupancy::Obstacle));
                }
            }
            LocalWindow {
                origin: GridIndex::new(0, 0),
                size: s,
                view,
            }
        };
        let neighbors = (0..window.size * window.size)
            .map(|o| {
                let c = window
                    .origin
                    .offset((o % window.size) as i32, (o / window.size) as i32);
                (-1..=1)
                    .flat_map(|dj| (-1..=1).map(move |di| (di, dj)))
                    .filter(|&d| d != (0, 0))
                    .map(|(di, dj)| c.offset(di, dj))
                    .filter(|n| window.get(*n) == Some(Occupancy::Free))
                    .collect()
            })
            .collect();
        Ok(Self {
            path,
            resolution: grid.resolution(),
            window,
            neighbors,
            params,
            episode_cap,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn path(&self) -> &[GridIndex] {
        &self.path
    }

    pub fn window(&self) -> &LocalWindow {
        &self.window
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn episode_cap(&self) -> u32 {
        self.episode_cap
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn last_index(&self) -> usize {
        self.path.len() - 1
    }

    pub fn robot_cell(&self, s: &PomdpState) -> GridIndex {
        self.path[s.robot_path_index.min(self.last_index())]
    }

    /// Path cell the robot would enter on Go.
    pub fn next_cell(&self, s: &PomdpState) -> GridIndex {
        self.path[(s.robot_path_index + 1).min(self.last_index())]
    }

    pub fn distance_m(&self, a: GridIndex, b: GridIndex) -> f64 {
        a.cell_distance(b) * self.resolution
    }

    /// Unit heading along the path at index `idx`.
    pub fn heading(&self, idx: usize) -> (f64, f64) {
        let n = self.path.len();
        let (a, b) = if n < 2 {
            return (1.0, 0.0);
        } else if idx + 1 < n {
            (self.path[idx], self.path[idx + 1])
        } else {
            (self.path[n - 2], self.path[n - 1])
        };
        let (dx, dy) = (f64::from(b.i - a.i), f64::from(b.j - a.j));
        let len = dx.hypot(dy);
        if len == 0.0 {
            (1.0, 0.0)
        } else {
            (dx / len, dy / len)
        }
    }

    /// Inside the sensor range and outside the blind sector behind the robot.
    pub fn is_visible(&self, robot_index: usize, ped: GridIndex) -> bool {
        let robot = self.path[robot_index.min(self.last_index())];
        sensor_covers(
            robot,
            self.heading(robot_index),
            ped,
            self.resolution,
            self.params.observation.fov_deg,
            self.params.observation.range_m,
        )
    }

    pub fn free_neighbors(&self, c: GridIndex) -> &[GridIndex] {
        if !self.window.contains(c) {
            return &[];
        }
        let li = (c.i - self.window.origin.i) as usize;
        let lj = (c.j - self.window.origin.j) as usize;
        &self.neighbors[lj * self.window.size + li]
    }

    pub fn is_terminal(&self, s: &PomdpState) -> bool {
        if s.robot_path_index >= self.last_index() || s.step >= self.episode_cap {
            return true;
        }
        let robot = self.robot_cell(s);
        s.peds.iter().any(|p| p.pos == robot)
    }

    /// Exact next-cell distribution of pedestrian `k` (independent of the
    /// robot's action). Entries are in a fixed order; the first is "stay".
    pub fn ped_move_distribution(&self, s: &PomdpState, k: usize) -> Vec<(GridIndex, f64)> {
        let ped = s.peds[k];
        let tp = &self.params.transition;
        let candidates = self.move_candidates(s, ped);
        if candidates.is_empty() {
            return vec![(ped.pos, 1.0)];
        }
        let each = tp.ped_move_prob() / candidates.len() as f64;
        let mut out = vec![(ped.pos, tp.ped_stay_prob)];
        out.extend(candidates.into_iter().map(|c| (c, each)));
        out
    }

    fn move_candidates(&self, s: &PomdpState, ped: PedState) -> Vec<GridIndex> {
        let tp = &self.params.transition;
        let all = self.free_neighbors(ped.pos);
        if !ped.g.is_aware() || !tp.aware_avoidance {
            return all.to_vec();
        }
        let robot = self.robot_cell(s);
        let next = self.next_cell(s);
        let gap = |c: GridIndex| c.cell_distance(robot).min(c.cell_distance(next));
        let here = gap(ped.pos);
        all.iter()
            .copied()
            .filter(|&c| c != robot && c != next)
            .filter(|&c| !tp.aware_keep_distance || gap(c) >= here - 1e-12)
            .collect()
    }

    fn sample_ped<R: Rng + ?Sized>(&self, s: &PomdpState, k: usize, rng: &mut R) -> GridIndex {
        let u: f64 = rng.random();
        let dist = self.ped_move_distribution(s, k);
        let mut acc = 0.0;
        for &(c, p) in &dist {
            acc += p;
            if u < acc {
                return c;
            }
        }
        dist.last().map(|d| d.0).unwrap_or(s.peds[k].pos)
    }

    /// Samples `s' ~ T(s, a, ·)`. Terminal states self-loop.
    pub fn transition<R: Rng + ?Sized>(&self, s: &PomdpState, a: LocalAction, rng: &mut R) -> PomdpState {
        if self.is_terminal(s) {
            return s.clone();
        }
        let peds = (0..s.peds.len())
            .map(|k| PedState {
                pos: self.sample_ped(s, k, rng),
                g: s.peds[k].g,
            })
            .collect();
        let robot_path_index = match a {
            LocalAction::Go => (s.robot_path_index + 1).min(self.last_index()),
            LocalAction::Wait | LocalAction::Avoid => s.robot_path_index,
        };
        PomdpState {
            robot_path_index,
            peds,
            step: s.step + 1,
        }
    }

    /// Cells a noisy detection of a pedestrian at `c` may be reported in.
    fn noise_cells(&self, c: GridIndex) -> &[GridIndex] {
        self.free_neighbors(c)
    }

    /// Samples `o ~ Z(s', a, ·)`.
    pub fn observe<R: Rng + ?Sized>(&self, s_next: &PomdpState, _a: LocalAction, rng: &mut R) -> LocalObservation {
        let op = &self.params.observation;
        let mut ped_cells = Vec::with_capacity(s_next.peds.len());
        let mut gaze_flags = Vec::with_capacity(s_next.peds.len());
        for ped in &s_next.peds {
            // fixed draw count per pedestrian
            let u: f64 = rng.random();
            let pick: f64 = rng.random();
            let ug: f64 = rng.random();
            if !self.is_visible(s_next.robot_path_index, ped.pos) {
                ped_cells.push(None);
                gaze_flags.push(false);
                continue;
            }
            let cell = if u < op.p_miss {
                None
            } else if u < op.p_miss + op.p_noise {
                let noise = self.noise_cells(ped.pos);
                if noise.is_empty() {
                    Some(ped.pos)
                } else {
                    let k = ((pick * noise.len() as f64) as usize).min(noise.len() - 1);
                    Some(noise[k])
                }
            } else {
                Some(ped.pos)
            };
            ped_cells.push(cell);
            gaze_flags.push(ped.g.is_aware() && ug >= op.p_gfn);
        }
        LocalObservation {
            robot_cell: self.robot_cell(s_next),
            ped_cells,
            gaze_flags,
        }
    }

    /// `Z(s', a, o)` for the mixture sampled by [`NavModel::observe`].
    pub fn obs_likelihood(&self, s_next: &PomdpState, _a: LocalAction, o: &LocalObservation) -> f64 {
        if o.ped_cells.len() != s_next.peds.len() || o.gaze_flags.len() != s_next.peds.len() {
            return 0.0;
        }
        if o.robot_cell != self.robot_cell(s_next) {
            return 0.0;
        }
        let op = &self.params.observation;
        let mut lik = 1.0;
        for (k, ped) in s_next.peds.iter().enumerate() {
            let visible = self.is_visible(s_next.robot_path_index, ped.pos);
            let cell_p = if !visible {
                if o.ped_cells[k].is_none() {
                    1.0
                } else {
                    0.0
                }
            } else {
                match o.ped_cells[k] {
                    None => op.p_miss,
                    Some(c) => {
                        let noise = self.noise_cells(ped.pos);
                        if c == ped.pos {
                            1.0 - op.p_miss - if noise.is_empty() { 0.0 } else { op.p_noise }
                        } else if noise.contains(&c) {
                            op.p_noise / noise.len() as f64
                        } else {
                            0.0
                        }
                    }
                }
            };
            let gaze_p = match (visible && ped.g.is_aware(), o.gaze_flags[k]) {
                (true, true) => 1.0 - op.p_gfn,
                (true, false) => op.p_gfn,
                (false, true) => 0.0,
                (false, false) => 1.0,
            };
            lik *= cell_p * gaze_p;
            if lik == 0.0 {
                return 0.0;
            }
        }
        lik
    }

    /// Immediate reward for the transition `s --a--> s_next`.
    pub fn reward(&self, _s: &PomdpState, a: LocalAction, s_next: &PomdpState) -> f64 {
        let rp = &self.params.reward;
        let mut r = rp.w_t * rp.r_time;
        if s_next.robot_path_index >= self.last_index() {
            r += rp.w_g * rp.r_goal;
        }
        let robot = self.robot_cell(s_next);
        for ped in &s_next.peds {
            r += rp.w_c * rp.collision_term(self.distance_m(robot, ped.pos), ped.g);
            if ped.pos == robot {
                r += rp.w_c * rp.r_hard_collision;
            }
        }
        if a == LocalAction::Avoid {
            r += rp.avoid_cost;
        }
        r
    }

    /// One generative step: `(s', r, o)`. Terminal states yield zero reward.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &PomdpState,
        a: LocalAction,
        rng: &mut R,
    ) -> (PomdpState, f64, LocalObservation) {
        if self.is_terminal(s) {
            let o = self.observe(s, a, rng);
            return (s.clone(), 0.0, o);
        }
        let next = self.transition(s, a, rng);
        let r = self.reward(s, a, &next);
        let o = self.observe(&next, a, rng);
        (next, r, o)
    }

    /// `(s', r)` without sampling an observation; consumes the same leading
    /// draws as [`NavModel::step`].
    pub fn transition_reward<R: Rng + ?Sized>(&self, s: &PomdpState, a: LocalAction, rng: &mut R) -> (PomdpState, f64) {
        if self.is_terminal(s) {
            return (s.clone(), 0.0);
        }
        let next = self.transition(s, a, rng);
        let r = self.reward(s, a, &next);
        (next, r)
    }

    /// Action of the rollout policy: Go unless a pedestrian is within its
    /// collision radius of the next path cell.
    pub fn default_action(&self, s: &PomdpState) -> LocalAction {
        let next = self.next_cell(s);
        let rp = &self.params.reward;
        let blocked = s
            .peds
            .iter()
            .any(|p| self.distance_m(next, p.pos) <= rp.collision_radius(p.g));
        if blocked {
            LocalAction::Wait
        } else {
            LocalAction::Go
        }
    }
}

/// Range/field-of-view test shared by the model and the simulated sensors.
pub fn sensor_covers(
    robot: GridIndex,
    heading: (f64, f64),
    target: GridIndex,
    resolution: f64,
    fov_deg: f64,
    range_m: f64,
) -> bool {
    let dx = f64::from(target.i - robot.i) * resolution;
    let dy = f64::from(target.j - robot.j) * resolution;
    let d = dx.hypot(dy);
    if d > range_m {
        return false;
    }
    if d == 0.0 || fov_deg >= 360.0 {
        return true;
    }
    let cos = ((dx * heading.0 + dy * heading.1) / d).clamp(-1.0, 1.0);
    cos.acos().to_degrees() <= fov_deg / 2.0 + 1e-9
}
