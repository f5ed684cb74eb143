//! Anytime regularized DESPOT over determinized scenarios.
//!
//! Every scenario owns a seed; the outcome of stepping scenario `φ` at tree
//! depth `d` is drawn from a generator seeded with `(seed_φ, d)`, so all
//! actions at a node share random numbers and replays are exact.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::ParticleBelief;
use crate::pomdp::{LocalAction, LocalObservation, NavModel, PomdpState};
use crate::seed::mix_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("belief is empty")]
    EmptyBelief,
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub initial_particle: PomdpState,
    pub seed: u64,
}

impl Scenario {
    /// Generator for this scenario's step at `depth`.
    pub fn rng_at(&self, depth: usize) -> ChaCha8Rng {
        depth_rng(self.seed, depth)
    }
}

fn depth_rng(seed: u64, depth: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, depth as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DespotParams {
    pub k_scenarios: usize,
    /// Tree height `H`; nodes at this depth are leaves.
    pub max_depth: usize,
    /// Rollout and heuristic horizon measured from the root.
    pub rollout_depth: usize,
    pub time_budget_ms: u64,
    /// Hard cap on trials; when it binds before the clock, results do not
    /// depend on machine speed.
    pub max_trials: Option<u64>,
    pub regularization_lambda: f64,
    /// Target fraction of root uncertainty used by the excess-uncertainty
    /// test.
    pub xi: f64,
    pub gap_tolerance: f64,
    pub seed: u64,
    pub trace: bool,
}

impl Default for DespotParams {
    fn default() -> Self {
        Self {
            k_scenarios: 500,
            max_depth: 10,
            rollout_depth: 60,
            time_budget_ms: 100,
            max_trials: None,
            regularization_lambda: 0.01,
            xi: 0.95,
            gap_tolerance: 1e-6,
            seed: 0,
            trace: false,
        }
    }
}

impl DespotParams {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.k_scenarios == 0 {
            return Err(SolveError::InvalidParams("k_scenarios must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(SolveError::InvalidParams("max_depth must be at least 1".into()));
        }
        if !(self.regularization_lambda >= 0.0) {
            return Err(SolveError::InvalidParams("regularization_lambda must be nonnegative".into()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(SolveError::InvalidParams("xi must lie in (0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: u64,
    pub root_lower: f64,
    pub root_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub action: LocalAction,
    pub root_lower: f64,
    pub root_upper: f64,
    pub nodes_expanded: usize,
    pub trials: u64,
    /// Lower bound per action (Go, Wait, Avoid) once the root is expanded.
    pub action_lower: Option<[f64; 3]>,
    /// The default policy was returned instead of a searched action.
    pub fallback: bool,
    pub trace: Option<Vec<TrialTrace>>,
}

/// Draws `k` scenarios from the belief; scenario `i` gets seed `(seed, i)`.
pub fn sample_scenarios(b: &ParticleBelief, k: usize, seed: u64) -> Result<Vec<Scenario>, SolveError> {
    if b.particles.is_empty() {
        return Err(SolveError::EmptyBelief);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
    let total: f64 = b.weights.iter().sum();
    Ok((0..k)
        .map(|i| {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let pick = b
                .weights
                .iter()
                .position(|w| {
                    acc += w;
                    u < acc
                })
                .unwrap_or(b.particles.len() - 1);
            Scenario {
                index: i,
                initial_particle: b.particles[pick].clone(),
                seed: mix_seed(seed, i as u64),
            }
        })
        .collect())
}

/// Discounted return of the rollout policy from `s` at tree depth `depth`,
/// truncated after `depth_remaining` steps.
pub fn rollout_value(model: &NavModel, s: &PomdpState, seed: u64, depth: usize, depth_remaining: usize) -> f64 {
    let gamma = model.gamma();
    let mut state = s.clone();
    let mut value = 0.0;
    let mut discount = 1.0;
    for t in 0..depth_remaining {
        if model.is_terminal(&state) {
            break;
        }
        let a = model.default_action(&state);
        let mut rng = depth_rng(seed, depth + t);
        let (next, r) = model.transition_reward(&state, a, &mut rng);
        value += discount * r;
        discount *= gamma;
        state = next;
    }
    value
}

/// Mean rollout value over `(seed, state)` pairs.
pub fn default_policy_lower_bound(
    model: &NavModel,
    scenarios: &[(u64, &PomdpState)],
    depth: usize,
    depth_remaining: usize,
) -> f64 {
    if scenarios.is_empty() {
        return 0.0;
    }
    let sum: f64 = scenarios
        .iter()
        .map(|(seed, s)| rollout_value(model, s, *seed, depth, depth_remaining))
        .sum();
    sum / scenarios.len() as f64
}

/// Best-case return from `s` ignoring pedestrians: time penalties until the
/// earliest possible goal arrival, then the goal reward. When the goal is out
/// of reach the bound also admits stopping after one step, which covers
/// episodes ended early by a pedestrian.
pub fn scenario_upper(model: &NavModel, s: &PomdpState, depth_remaining: usize) -> f64 {
    let rp = &model.params().reward;
    let gamma = model.gamma();
    let d = model.last_index().saturating_sub(s.robot_path_index);
    if d == 0 {
        return rp.w_g * rp.r_goal;
    }
    let cap_left = model.episode_cap().saturating_sub(s.step) as usize;
    let h = depth_remaining.min(cap_left);
    let step = rp.w_t * rp.r_time;
    let time = |n: usize| (0..n).map(|t| gamma.powi(t as i32) * step).sum::<f64>();
    if h == 0 {
        0.0
    } else if d <= h {
        (time(d) + gamma.powi(d as i32 - 1) * rp.w_g * rp.r_goal).max(step)
    } else {
        time(h).max(step)
    }
}

/// Mean of [`scenario_upper`].
pub fn upper_bound(model: &NavModel, states: &[&PomdpState], depth_remaining: usize) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(|s| scenario_upper(model, s, depth_remaining)).sum::<f64>() / states.len() as f64
}

#[derive(Debug)]
struct BeliefNode {
    depth: usize,
    scenarios: Vec<usize>,
    states: Vec<PomdpState>,
    lower0: f64,
    lower: f64,
    upper: f64,
    terminal: bool,
    children: Option<[usize; 3]>,
    parent: Option<usize>,
}

#[derive(Debug)]
struct ActionNode {
    rho: f64,
    lower: f64,
    upper: f64,
    children: Vec<usize>,
}

struct Tree<'a> {
    model: &'a NavModel,
    params: &'a DespotParams,
    scenarios: &'a [Scenario],
    beliefs: Vec<BeliefNode>,
    actions: Vec<ActionNode>,
    expanded: usize,
}

struct StepOut {
    next: PomdpState,
    reward: f64,
    obs: LocalObservation,
}

impl<'a> Tree<'a> {
    fn k(&self) -> f64 {
        self.params.k_scenarios as f64
    }

    fn make_node(&mut self, depth: usize, scenarios: Vec<usize>, states: Vec<PomdpState>, parent: Option<usize>) -> usize {
        let model = self.model;
        let terminal = states.iter().all(|s| model.is_terminal(s));
        let (lower0, upper) = if terminal {
            (0.0, 0.0)
        } else {
            let remaining = self.params.rollout_depth.saturating_sub(depth);
            let scale = model.gamma().powi(depth as i32) / self.k();
            let seeds: Vec<u64> = scenarios.iter().map(|&i| self.scenarios[i].seed).collect();
            let per: Vec<(f64, f64)> = if states.len() >= 32 {
                states
                    .par_iter()
                    .zip(seeds.par_iter())
                    .map(|(s, &seed)| node_bounds(model, s, seed, depth, remaining))
                    .collect()
            } else {
                states
                    .iter()
                    .zip(&seeds)
                    .map(|(s, &seed)| node_bounds(model, s, seed, depth, remaining))
                    .collect()
            };
            let lo: f64 = per.iter().map(|p| p.0).sum::<f64>() * scale - self.params.regularization_lambda;
            let up: f64 = per.iter().map(|p| p.1).sum::<f64>() * scale;
            if depth >= self.params.max_depth {
                (lo, lo)
            } else {
                (lo, up.max(lo))
            }
        };
        self.beliefs.push(BeliefNode {
            depth,
            scenarios,
            states,
            lower0,
            lower: lower0,
            upper,
            terminal,
            children: None,
            parent,
        });
        self.beliefs.len() - 1
    }

    fn expandable(&self, b: usize) -> bool {
        let n = &self.beliefs[b];
        !n.terminal && n.depth < self.params.max_depth
    }

    fn expand(&mut self, b: usize) {
        self.expanded += 1;
        let depth = self.beliefs[b].depth;
        let scale = self.model.gamma().powi(depth as i32) / self.k();
        let mut ids = [0usize; 3];
        for a in LocalAction::ALL {
            let node = &self.beliefs[b];
            let model = self.model;
            let scenarios = self.scenarios;
            let run = |(&phi, s): (&usize, &PomdpState)| {
                let mut rng = scenarios[phi].rng_at(depth);
                let (next, reward, obs) = model.step(s, a, &mut rng);
                StepOut { next, reward, obs }
            };
            let outs: Vec<StepOut> = if node.states.len() >= 32 {
                node.scenarios.par_iter().zip(node.states.par_iter()).map(run).collect()
            } else {
                node.scenarios.iter().zip(node.states.iter()).map(run).collect()
            };
            let phis = node.scenarios.clone();
            let rho = outs.iter().map(|o| o.reward).sum::<f64>() * scale - self.params.regularization_lambda;
            let mut groups: BTreeMap<LocalObservation, (Vec<usize>, Vec<PomdpState>)> = BTreeMap::new();
            for (phi, out) in phis.into_iter().zip(outs) {
                let g = groups.entry(out.obs).or_default();
                g.0.push(phi);
                g.1.push(out.next);
            }
            let children: Vec<usize> = groups
                .into_values()
                .map(|(sc, st)| self.make_node(depth + 1, sc, st, Some(b)))
                .collect();
            let lower = rho + children.iter().map(|&c| self.beliefs[c].lower).sum::<f64>();
            let upper = rho + children.iter().map(|&c| self.beliefs[c].upper).sum::<f64>();
            self.actions.push(ActionNode {
                rho,
                lower,
                upper,
                children,
            });
            ids[a.index()] = self.actions.len() - 1;
        }
        self.beliefs[b].children = Some(ids);
    }

    fn backup(&mut self, b: usize) {
        let Some(ids) = self.beliefs[b].children else {
            return;
        };
        let mut best_lower = f64::NEG_INFINITY;
        let mut best_upper = f64::NEG_INFINITY;
        for id in ids {
            let an = &self.actions[id];
            let lower = an.rho + an.children.iter().map(|&c| self.beliefs[c].lower).sum::<f64>();
            let upper = an.rho + an.children.iter().map(|&c| self.beliefs[c].upper).sum::<f64>();
            let an = &mut self.actions[id];
            an.lower = lower;
            an.upper = upper;
            best_lower = best_lower.max(lower);
            best_upper = best_upper.max(upper);
        }
        let node = &mut self.beliefs[b];
        node.lower = node.lower.max(node.lower0.max(best_lower));
        node.upper = node.lower.max(node.upper.min(best_upper));
    }

    fn gap(&self, b: usize) -> f64 {
        self.beliefs[b].upper - self.beliefs[b].lower
    }

    fn excess(&self, b: usize) -> f64 {
        let frac = self.beliefs[b].scenarios.len() as f64 / self.k();
        self.gap(b) - frac * self.params.xi * self.gap(0)
    }

    fn best_upper_action(&self, b: usize) -> usize {
        let ids = self.beliefs[b].children.expect("expanded node");
        let mut best = ids[0];
        for &id in &ids[1..] {
            if self.actions[id].upper > self.actions[best].upper {
                best = id;
            }
        }
        best
    }

    /// One trial: descend, expanding leaves, then back up the visited path.
    fn trial(&mut self) {
        let mut b = 0;
        loop {
            if !self.expandable(b) {
                break;
            }
            if self.beliefs[b].children.is_none() {
                self.expand(b);
            }
            let a = self.best_upper_action(b);
            let next = self.actions[a]
                .children
                .iter()
                .copied()
                .map(|c| (c, self.excess(c)))
                .fold(None, |best: Option<(usize, f64)>, (c, e)| match best {
                    Some((_, be)) if be >= e => best,
                    _ => Some((c, e)),
                });
            match next {
                Some((c, e)) if e > 0.0 => b = c,
                _ => break,
            }
        }
        let mut cur = Some(b);
        while let Some(n) = cur {
            self.backup(n);
            cur = self.beliefs[n].parent;
        }
    }
}

#[cfg(test)]
impl Tree<'_> {
    fn audit(&self) {
        for (i, n) in self.beliefs.iter().enumerate() {
            assert!(n.lower <= n.upper + 1e-9, "node {i}: {} > {}", n.lower, n.upper);
        }
        for a in &self.actions {
            assert!(a.lower <= a.upper + 1e-9);
        }
    }
}

fn node_bounds(model: &NavModel, s: &PomdpState, seed: u64, depth: usize, remaining: usize) -> (f64, f64) {
    if model.is_terminal(s) {
        return (0.0, 0.0);
    }
    let lo = rollout_value(model, s, seed, depth, remaining);
    let up = scenario_upper(model, s, remaining);
    (lo, up.max(lo))
}

/// Action the rollout policy takes in most root scenarios (ties go to Go).
fn majority_default(model: &NavModel, scenarios: &[Scenario]) -> LocalAction {
    let go = scenarios
        .iter()
        .filter(|s| model.default_action(&s.initial_particle) == LocalAction::Go)
        .count();
    if 2 * go >= scenarios.len() {
        LocalAction::Go
    } else {
        LocalAction::Wait
    }
}

/// Searches from the belief and returns the best root action.
pub fn solve(b: &ParticleBelief, model: &NavModel, params: &DespotParams) -> Result<SolveResult, SolveError> {
    params.validate()?;
    let scenarios = sample_scenarios(b, params.k_scenarios, params.seed)?;
    solve_scenarios(&scenarios, model, params)
}

/// [`solve`] over an explicit scenario set.
pub fn solve_scenarios(scenarios: &[Scenario], model: &NavModel, params: &DespotParams) -> Result<SolveResult, SolveError> {
    params.validate()?;
    if scenarios.is_empty() {
        return Err(SolveError::EmptyBelief);
    }
    let start = Instant::now();
    let budget = Duration::from_millis(params.time_budget_ms);
    let mut params = *params;
    params.k_scenarios = scenarios.len();
    let mut tree = Tree {
        model,
        params: &params,
        scenarios,
        beliefs: Vec::new(),
        actions: Vec::new(),
        expanded: 0,
    };
    tree.make_node(
        0,
        (0..scenarios.len()).collect(),
        scenarios.iter().map(|s| s.initial_particle.clone()).collect(),
        None,
    );
    if params.time_budget_ms == 0 || params.max_trials == Some(0) {
        return Ok(SolveResult {
            action: LocalAction::Wait,
            root_lower: tree.beliefs[0].lower,
            root_upper: tree.beliefs[0].upper,
            nodes_expanded: 0,
            trials: 0,
            action_lower: None,
            fallback: true,
            trace: params.trace.then(Vec::new),
        });
    }
    let mut trace = params.trace.then(Vec::new);
    let mut trials = 0u64;
    loop {
        if tree.gap(0) <= params.gap_tolerance || !tree.expandable(0) && trials > 0 {
            break;
        }
        if params.max_trials.is_some_and(|m| trials >= m) {
            break;
        }
        if trials > 0 && start.elapsed() >= budget {
            break;
        }
        tree.trial();
        trials += 1;
        #[cfg(test)]
        tree.audit();
        if let Some(t) = trace.as_mut() {
            t.push(TrialTrace {
                trial: trials,
                root_lower: tree.beliefs[0].lower,
                root_upper: tree.beliefs[0].upper,
            });
        }
        if !tree.expandable(0) {
            break;
        }
    }
    let root = &tree.beliefs[0];
    let (action, action_lower, fallback) = match root.children {
        Some(ids) => {
            let lowers = ids.map(|id| tree.actions[id].lower);
            let mut best = 0;
            for k in 1..3 {
                if lowers[k] > lowers[best] {
                    best = k;
                }
            }
            if lowers[best] >= root.lower0 {
                (LocalAction::ALL[best], Some(lowers), false)
            } else {
                (majority_default(model, scenarios), Some(lowers), true)
            }
        }
        None => (majority_default(model, scenarios), None, true),
    };
    Ok(SolveResult {
        action,
        root_lower: root.lower,
        root_upper: root.upper,
        nodes_expanded: tree.expanded,
        trials,
        action_lower,
        fallback,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridIndex, OccupancyGrid};
    use crate::pomdp::{Awareness, ModelParams, ObservationParams, PedState};

    fn model(path_len: i32, stay: f64, gamma: f64) -> NavModel {
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let mut p = ModelParams::default();
        p.transition.ped_stay_prob = stay;
        p.gamma = gamma;
        let path = (0..path_len).map(|i| GridIndex::new(i, 0)).collect();
        NavModel::new(&grid, path, 0, p, 1000).unwrap()
    }

    fn point_belief(s: PomdpState, k: usize) -> ParticleBelief {
        ParticleBelief {
            particles: vec![s; k],
            weights: vec![1.0 / k as f64; k],
            k_particles: k,
            last_ess: k as f64,
        }
    }

    fn ped(i: i32, j: i32, g: Awareness) -> PedState {
        PedState {
            pos: GridIndex::new(i, j),
            g,
        }
    }

    fn capped(trials: u64) -> DespotParams {
        DespotParams {
            time_budget_ms: 60_000,
            max_trials: Some(trials),
            ..DespotParams::default()
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, path_len: i32) -> PomdpState {
        let n = rng.random_range(0..4);
        PomdpState {
            robot_path_index: rng.random_range(0..path_len as usize),
            peds: (0..n)
                .map(|_| {
                    let g = if rng.random::<bool>() { Awareness::Aware } else { Awareness::Unaware };
                    ped(rng.random_range(0..10), rng.random_range(0..10), g)
                })
                .collect(),
            step: rng.random_range(0..5),
        }
    }

    #[test]
    fn bounds_sandwich_over_random_solves() {
        let m = model(9, 0.5, 0.95);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for n in 0..1000 {
            let s = random_state(&mut rng, 9);
            let p = DespotParams {
                k_scenarios: 8,
                max_depth: 4,
                rollout_depth: 12,
                seed: n,
                ..capped(6)
            };
            let r = solve(&point_belief(s, 1), &m, &p).unwrap();
            assert!(r.root_lower <= r.root_upper + 1e-9);
        }
    }

    #[test]
    fn rollouts_match_resimulation() {
        let m = model(9, 0.5, 0.9);
        let rp = m.params().reward;
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for n in 0..50 {
            let s = random_state(&mut rng, 9);
            let seed = mix_seed(123, n);
            let depth = rng.random_range(0..5usize);
            let remaining = rng.random_range(0..15usize);
            // independent trajectory sum with the rule written out here
            let mut state = s.clone();
            let mut total = 0.0;
            for t in 0..remaining {
                if m.is_terminal(&state) {
                    break;
                }
                let next_cell = m.path()[(state.robot_path_index + 1).min(m.last_index())];
                let blocked = state.peds.iter().any(|p| {
                    let rho = if p.g == Awareness::Aware { rp.rho_aware } else { rp.rho_nonaware };
                    next_cell.cell_distance(p.pos) * 0.75 <= rho
                });
                let a = if blocked { LocalAction::Wait } else { LocalAction::Go };
                let mut g = ChaCha8Rng::seed_from_u64(mix_seed(seed, (depth + t) as u64));
                let next = m.transition(&state, a, &mut g);
                total += 0.9f64.powi(t as i32) * m.reward(&state, a, &next);
                state = next;
            }
            let v = default_policy_lower_bound(&m, &[(seed, &s)], depth, remaining);
            assert!((v - total).abs() < 1e-9);
        }
    }

    #[test]
    fn rollout_examples() {
        let m = model(3, 1.0, 1.0);
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![],
            step: 0,
        };
        let rp = m.params().reward;
        let v = default_policy_lower_bound(&m, &[(1, &s)], 0, 10);
        assert_eq!(v, rp.r_time * 2.0 * rp.w_t + rp.w_g * rp.r_goal);
        let goal = PomdpState {
            robot_path_index: 2,
            ..s.clone()
        };
        assert_eq!(default_policy_lower_bound(&m, &[(1, &goal), (2, &goal)], 0, 10), 0.0);
    }

    #[test]
    fn upper_bound_examples() {
        let m = model(6, 1.0, 1.0);
        let rp = m.params().reward;
        let at = |i| PomdpState {
            robot_path_index: i,
            peds: vec![],
            step: 0,
        };
        assert_eq!(upper_bound(&m, &[&at(5)], 10), rp.w_g * rp.r_goal);
        assert_eq!(upper_bound(&m, &[&at(2)], 10), rp.w_t * rp.r_time * 3.0 + rp.w_g * rp.r_goal);
    }

    #[test]
    fn point_mass_scenarios_share_particle() {
        let s = PomdpState {
            robot_path_index: 1,
            peds: vec![ped(4, 4, Awareness::Aware)],
            step: 3,
        };
        let sc = sample_scenarios(&point_belief(s.clone(), 10), 50, 7).unwrap();
        assert!(sc.iter().all(|x| x.initial_particle == s));
        assert_eq!(sc, sample_scenarios(&point_belief(s, 10), 50, 7).unwrap());
    }

    #[test]
    fn scenario_split_is_binomial() {
        let a = PomdpState {
            robot_path_index: 0,
            peds: vec![ped(4, 4, Awareness::Aware)],
            step: 0,
        };
        let b = PomdpState {
            peds: vec![ped(4, 4, Awareness::Unaware)],
            ..a.clone()
        };
        let belief = ParticleBelief {
            particles: vec![a.clone(), b],
            weights: vec![0.5, 0.5],
            k_particles: 2,
            last_ess: 2.0,
        };
        let sc = sample_scenarios(&belief, 1000, 11).unwrap();
        let n = sc.iter().filter(|s| s.initial_particle == a).count();
        assert!((450..=550).contains(&n), "{n}");
    }

    #[test]
    fn empty_belief_rejected() {
        let b = ParticleBelief {
            particles: vec![],
            weights: vec![],
            k_particles: 0,
            last_ess: 0.0,
        };
        assert_eq!(sample_scenarios(&b, 5, 0).unwrap_err(), SolveError::EmptyBelief);
    }

    #[test]
    fn clear_path_goes() {
        let m = model(6, 1.0, 0.95);
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![ped(8, 9, Awareness::Unaware)],
            step: 0,
        };
        let r = solve(&point_belief(s, 20), &m, &capped(50)).unwrap();
        assert_eq!(r.action, LocalAction::Go);
    }

    #[test]
    fn frozen_unaware_near_next_cell_waits() {
        let m = model(6, 1.0, 0.95);
        // within the unaware radius of the next cell (1,0) but not of (0,0)
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![ped(3, 1, Awareness::Unaware)],
            step: 0,
        };
        let r = solve(&point_belief(s, 20), &m, &capped(200)).unwrap();
        assert_eq!(r.action, LocalAction::Wait);
    }

    #[test]
    fn zero_budget_returns_wait() {
        let m = model(6, 1.0, 0.95);
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![],
            step: 0,
        };
        let p = DespotParams {
            time_budget_ms: 0,
            ..DespotParams::default()
        };
        let r = solve(&point_belief(s, 5), &m, &p).unwrap();
        assert_eq!(r.action, LocalAction::Wait);
        assert!(r.fallback);
        assert_eq!(r.trials, 0);
    }

    #[test]
    fn node_count_bound() {
        let mut p = ModelParams::default();
        p.observation = ObservationParams::default();
        let grid = OccupancyGrid::new(10, 10, 0.75).unwrap();
        let m = NavModel::new(&grid, (0..9).map(|i| GridIndex::new(i, 0)).collect(), 0, p, 1000).unwrap();
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![ped(3, 2, Awareness::Unaware), ped(5, 1, Awareness::Aware)],
            step: 0,
        };
        let params = DespotParams {
            k_scenarios: 10,
            max_depth: 3,
            max_trials: Some(10_000),
            time_budget_ms: 60_000,
            ..DespotParams::default()
        };
        let r = solve(&point_belief(s, 50), &m, &params).unwrap();
        assert!(r.nodes_expanded <= 270, "{}", r.nodes_expanded);
    }

    #[test]
    fn solve_is_deterministic_with_trace() {
        let m = model(9, 0.5, 0.95);
        let s = PomdpState {
            robot_path_index: 0,
            peds: vec![ped(3, 1, Awareness::Unaware), ped(4, 3, Awareness::Aware)],
            step: 0,
        };
        let p = DespotParams {
            trace: true,
            ..capped(40)
        };
        let a = solve(&point_belief(s.clone(), 100), &m, &p).unwrap();
        let b = solve(&point_belief(s, 100), &m, &p).unwrap();
        assert_eq!(a, b);
        let t = a.trace.unwrap();
        assert_eq!(t.len() as u64, a.trials);
        for w in t.windows(2) {
            assert!(w[1].root_lower >= w[0].root_lower - 1e-9);
            assert!(w[1].root_upper <= w[0].root_upper + 1e-9);
        }
        for e in &t {
            assert!(e.root_lower <= e.root_upper + 1e-9);
        }
    }
}
