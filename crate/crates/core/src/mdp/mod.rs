//! Global planner: tabular value iteration over the occupancy grid, the
//! per-cell greedy policy, waypoint extraction and spline smoothing.
//!
//! Transitions are deterministic. An action whose target is blocked or off
//! the map self-loops. The goal is absorbing and holds `goal_reward`; every
//! other step pays `step_reward`, so the value is strictly decreasing in the
//! hop distance to the goal and the greedy policy traces shortest 8-connected
//! paths (diagonal moves cost the same as cardinal ones).

mod spline;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::grid::GlobalAction;
use crate::grid::{GridIndex, Occupancy, OccupancyGrid};
pub use spline::{smooth_path, NaturalCubicSpline, SmoothPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("goal {0} is not a free cell")]
    InvalidGoal(GridIndex),
    #[error("start {0} is not a free cell")]
    InvalidStart(GridIndex),
    #[error("grid has no free cells")]
    EmptyWorld,
    #[error("goal unreachable from {start}: {reason}")]
    Unreachable { start: GridIndex, reason: String },
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpParams {
    pub gamma: f64,
    pub epsilon_vi: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    /// `None` uses `10 · (width + height)`.
    pub max_iterations: Option<usize>,
}

impl Default for MdpParams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon_vi: 1e-4,
            step_reward: -1.0,
            goal_reward: 100.0,
            max_iterations: None,
        }
    }
}

impl MdpParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(PlanError::InvalidParams(format!("gamma {} not in (0,1)", self.gamma)));
        }
        if !(self.epsilon_vi > 0.0) {
            return Err(PlanError::InvalidParams("epsilon_vi must be positive".into()));
        }
        if !(self.step_reward < 0.0 && self.goal_reward > 0.0) {
            return Err(PlanError::InvalidParams(
                "step_reward must be negative and goal_reward positive".into(),
            ));
        }
        Ok(())
    }

    fn iteration_cap(&self, grid: &OccupancyGrid) -> usize {
        self.max_iterations
            .unwrap_or(10 * (grid.width() + grid.height()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    width: usize,
    values: Vec<f64>,
    pub iterations_used: usize,
    /// Max-norm change of the final sweep.
    pub residual: f64,
    pub converged: bool,
}

impl ValueField {
    pub fn get(&self, idx: GridIndex) -> f64 {
        self.values[idx.j as usize * self.width + idx.i as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    width: usize,
    height: usize,
    actions: Vec<Option<GlobalAction>>,
}

impl PolicyField {
    pub fn get(&self, idx: GridIndex) -> Option<GlobalAction> {
        if idx.i < 0 || idx.j < 0 || idx.i as usize >= self.width || idx.j as usize >= self.height {
            return None;
        }
        self.actions[idx.j as usize * self.width + idx.i as usize]
    }
}

/// Ordered waypoint sequence from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub waypoints: Vec<GridIndex>,
    pub resolution: f64,
}

impl GlobalPath {
    pub fn hops(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn start(&self) -> GridIndex {
        self.waypoints[0]
    }

    pub fn goal(&self) -> GridIndex {
        *self.waypoints.last().expect("path has at least one waypoint")
    }

    /// JSON array of `[i, j]` pairs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.waypoints).expect("waypoints serialize")
    }
}

/// Which occupancy states block motion during a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blocking {
    ObstaclesOnly,
    ObstaclesAndHumans,
}

impl Blocking {
    fn passable(self, occ: Option<Occupancy>) -> bool {
        match (self, occ) {
            (_, Some(Occupancy::Free)) => true,
            (Blocking::ObstaclesOnly, Some(Occupancy::Human)) => true,
            _ => false,
        }
    }
}

/// Value iteration on the static map. Human cells are ignored (treated as
/// free); use [`replan`] to route around them.
pub fn value_iteration(
    grid: &OccupancyGrid,
    goal: GridIndex,
    params: &MdpParams,
) -> Result<(ValueField, PolicyField), PlanError> {
    solve(grid, goal, params, Blocking::ObstaclesOnly)
}

fn solve(
    grid: &OccupancyGrid,
    goal: GridIndex,
    params: &MdpParams,
    blocking: Blocking,
) -> Result<(ValueField, PolicyField), PlanError> {
    params.validate()?;
    let (w, h) = (grid.width(), grid.height());
    let passable: Vec<bool> = grid.cells().iter().map(|&c| blocking.passable(Some(c))).collect();
    if !passable.iter().any(|&p| p) {
        return Err(PlanError::EmptyWorld);
    }
    if !blocking.passable(grid.get(goal)) {
        return Err(PlanError::InvalidGoal(goal));
    }
    let goal_off = goal.j as usize * w + goal.i as usize;

    // successor table: for each passable cell, the 8 targets (self on block)
    let succ: Vec<[usize; 8]> = (0..w * h)
        .map(|o| {
            let here = GridIndex::new((o % w) as i32, (o / w) as i32);
            let mut s = [o; 8];
            for (k, a) in GlobalAction::ALL.iter().enumerate() {
                let t = a.apply(here);
                if blocking.passable(grid.get(t)) {
                    s[k] = t.j as usize * w + t.i as usize;
                }
            }
            s
        })
        .collect();

    let mut v = vec![0.0; w * h];
    v[goal_off] = params.goal_reward;
    let mut next = v.clone();
    let cap = params.iteration_cap(grid).max(1);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < cap {
        iterations += 1;
        residual = 0.0;
        for o in 0..w * h {
            if !passable[o] || o == goal_off {
                continue;
            }
            let best = succ[o]
                .iter()
                .map(|&t| params.step_reward + params.gamma * v[t])
                .fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (best - v[o]).abs());
            next[o] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual < params.epsilon_vi {
            break;
        }
    }

    let actions = (0..w * h)
        .map(|o| {
            if !passable[o] {
                return None;
            }
            let mut best_a = GlobalAction::ALL[0];
            let mut best_q = f64::NEG_INFINITY;
            for (k, &a) in GlobalAction::ALL.iter().enumerate() {
                let q = params.step_reward + params.gamma * v[succ[o][k]];
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            Some(best_a)
        })
        .collect();

    Ok((
        ValueField {
            width: w,
            values: v,
            iterations_used: iterations,
            residual,
            converged: residual < params.epsilon_vi,
        },
        PolicyField {
            width: w,
            height: h,
            actions,
        },
    ))
}

/// Follows the policy greedily from `start` until `goal`.
pub fn extract_path(
    policy: &PolicyField,
    start: GridIndex,
    goal: GridIndex,
    max_len: usize,
    resolution: f64,
) -> Result<GlobalPath, PlanError> {
    let unreachable = |reason: &str| PlanError::Unreachable {
        start,
        reason: reason.to_string(),
    };
    let mut waypoints = vec![start];
    let mut seen = HashSet::from([start]);
    let mut here = start;
    while here != goal {
        if waypoints.len() > max_len {
            return Err(unreachable("path length limit exceeded"));
        }
        let a = policy.get(here).ok_or_else(|| unreachable("policy undefined on path"))?;
        let next = a.apply(here);
        if !seen.insert(next) {
            return Err(unreachable("policy cycle"));
        }
        waypoints.push(next);
        here = next;
    }
    Ok(GlobalPath {
        waypoints,
        resolution,
    })
}

/// Value iteration followed by path extraction on the static map.
pub fn plan(
    grid: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
    params: &MdpParams,
) -> Result<GlobalPath, PlanError> {
    plan_with(grid, start, goal, params, Blocking::ObstaclesOnly)
}

/// Fresh plan on a grid carrying a dynamic overlay; Human cells block.
pub fn replan(
    grid_with_dynamic: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
    params: &MdpParams,
) -> Result<GlobalPath, PlanError> {
    match plan_with(grid_with_dynamic, start, goal, params, Blocking::ObstaclesAndHumans) {
        Err(PlanError::InvalidGoal(_)) if grid_with_dynamic.get(goal) == Some(Occupancy::Human) => {
            Err(PlanError::Unreachable {
                start,
                reason: "goal occupied by a pedestrian".into(),
            })
        }
        other => other,
    }
}

fn plan_with(
    grid: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
    params: &MdpParams,
    blocking: Blocking,
) -> Result<GlobalPath, PlanError> {
    if !grid.in_bounds(start) || grid.get(start) == Some(Occupancy::Obstacle) {
        return Err(PlanError::InvalidStart(start));
    }
    let (_, policy) = solve(grid, goal, params, blocking)?;
    extract_path(&policy, start, goal, grid.width() * grid.height(), grid.resolution())
}
