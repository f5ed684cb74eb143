//! Particle belief over pedestrian cells and awareness.

use std::collections::BTreeMap;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridIndex, Occupancy};
use crate::pomdp::{Awareness, LocalAction, LocalObservation, NavModel, PedState, PomdpState};
use crate::seed::mix_seed;
use crate::tracker::Track;

pub const DEFAULT_K_PARTICLES: usize = 5000;
pub const DEFAULT_P_AWARE_PRIOR: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("particle count must be at least 1")]
    InvalidParticleCount,
    #[error("observation has zero likelihood under every particle")]
    DegenerateBelief,
    #[error("belief is empty")]
    EmptyBelief,
}

/// What the belief needs from one pedestrian track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPrior {
    pub mean: (f64, f64),
    pub cov: Matrix2<f64>,
    pub latched: bool,
}

impl From<&Track> for TrackPrior {
    fn from(t: &Track) -> Self {
        Self {
            mean: t.state.position(),
            cov: t.state.position_cov(),
            latched: t.gaze.latched,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefParams {
    pub k_particles: usize,
    pub p_aware_prior: f64,
}

impl Default for BeliefParams {
    fn default() -> Self {
        Self {
            k_particles: DEFAULT_K_PARTICLES,
            p_aware_prior: DEFAULT_P_AWARE_PRIOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief {
    pub particles: Vec<PomdpState>,
    pub weights: Vec<f64>,
    pub k_particles: usize,
    /// Effective sample size of the importance weights before the last
    /// resampling (equal to `k_particles` right after initialization).
    pub last_ess: f64,
}

/// Per-pedestrian marginal for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedMarginal {
    pub histogram: Vec<(GridIndex, f64)>,
    pub aware_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub peds: Vec<PedMarginal>,
}

/// Cell holding world point `(x, y)`, clamped into the model window, and
/// whether that cell is free.
fn window_cell(model: &NavModel, x: f64, y: f64) -> (GridIndex, bool) {
    let res = model.resolution();
    let raw = GridIndex::new((x / res).floor() as i32, (y / res).floor() as i32);
    let c = model.window().clamp(raw);
    (c, model.window().get(c) == Some(Occupancy::Free))
}

/// Nearest free window cell to `c` (ties broken by row-major order).
fn nearest_free(model: &NavModel, c: GridIndex) -> GridIndex {
    let w = model.window();
    let s = w.size as i32;
    let mut best: Option<(f64, GridIndex)> = None;
    for dj in 0..s {
        for di in 0..s {
            let cand = w.origin.offset(di, dj);
            if w.get(cand) != Some(Occupancy::Free) {
                continue;
            }
            let d = cand.cell_distance(c);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, cand));
            }
        }
    }
    best.map(|b| b.1).unwrap_or(c)
}

/// Lower Cholesky factor of a 2×2 covariance, tolerating semidefinite input.
fn chol2(cov: &Matrix2<f64>) -> [[f64; 2]; 2] {
    let a = cov[(0, 0)].max(0.0);
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 { cov[(1, 0)] / l11 } else { 0.0 };
    let l22 = (cov[(1, 1)] - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

/// Samples `k` particles from the tracker output; the robot index is copied.
pub fn init_belief<R: Rng + ?Sized>(
    tracks: &[TrackPrior],
    robot_path_index: usize,
    step: u32,
    model: &NavModel,
    params: &BeliefParams,
    rng: &mut R,
) -> Result<ParticleBelief, BeliefError> {
    let k = params.k_particles;
    if k == 0 {
        return Err(BeliefError::InvalidParticleCount);
    }
    let fallback: Vec<GridIndex> = tracks
        .iter()
        .map(|t| {
            let (c, free) = window_cell(model, t.mean.0, t.mean.1);
            if free {
                c
            } else {
                nearest_free(model, c)
            }
        })
        .collect();
    let factors: Vec<_> = tracks.iter().map(|t| chol2(&t.cov)).collect();
    let particles = (0..k)
        .map(|_| {
            let peds = tracks
                .iter()
                .enumerate()
                .map(|(n, t)| {
                    let z0: f64 = rng.sample(StandardNormal);
                    let z1: f64 = rng.sample(StandardNormal);
                    let u: f64 = rng.random();
                    let l = factors[n];
                    let x = t.mean.0 + l[0][0] * z0;
                    let y = t.mean.1 + l[1][0] * z0 + l[1][1] * z1;
                    let (c, free) = window_cell(model, x, y);
                    let g = if t.latched || u < params.p_aware_prior {
                        Awareness::Aware
                    } else {
                        Awareness::Unaware
                    };
                    PedState {
                        pos: if free { c } else { fallback[n] },
                        g,
                    }
                })
                .collect();
            PomdpState {
                robot_path_index,
                peds,
                step,
            }
        })
        .collect();
    Ok(ParticleBelief {
        particles,
        weights: vec![1.0 / k as f64; k],
        k_particles: k,
        last_ess: k as f64,
    })
}

/// `1 / Σ w²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// Systematic resampling: indices of `k` draws from normalized `weights`.
pub fn systematic_resample(weights: &[f64], k: usize, u0: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut cum = 0.0;
    let mut i = 0;
    let last = weights.len() - 1;
    for m in 0..k {
        let target = (u0 + m as f64) / k as f64;
        while i < last && cum + weights[i] <= target {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

impl ParticleBelief {
    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    pub fn n_peds(&self) -> usize {
        self.particles.first().map_or(0, |p| p.peds.len())
    }

    /// Sequential importance resampling step. Pure in `(self, a, o, seed)`:
    /// particle `i` propagates with a generator seeded from `(seed, i)`.
    pub fn update(
        &self,
        a: LocalAction,
        o: &LocalObservation,
        model: &NavModel,
        seed: u64,
    ) -> Result<ParticleBelief, BeliefError> {
        if self.particles.is_empty() {
            return Err(BeliefError::EmptyBelief);
        }
        let (moved, raw): (Vec<PomdpState>, Vec<f64>) = self
            .particles
            .par_iter()
            .zip(self.weights.par_iter())
            .enumerate()
            .map(|(i, (s, &w))| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
                let next = model.transition(s, a, &mut rng);
                let lik = model.obs_likelihood(&next, a, o);
                (next, w * lik)
            })
            .unzip();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(BeliefError::DegenerateBelief);
        }
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let last_ess = effective_sample_size(&weights);
        let k = self.k_particles;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
        let u0: f64 = rng.random();
        let particles = systematic_resample(&weights, k, u0)
            .into_iter()
            .map(|i| moved[i].clone())
            .collect();
        Ok(ParticleBelief {
            particles,
            weights: vec![1.0 / k as f64; k],
            k_particles: k,
            last_ess,
        })
    }

    /// Moves every pedestrian into a free cell of `model`'s window, e.g. after
    /// the robot advanced and the window slid.
    pub fn clamp_to_window(&mut self, model: &NavModel) {
        let w = model.window();
        for p in &mut self.particles {
            p.robot_path_index = p.robot_path_index.min(model.last_index());
            for ped in &mut p.peds {
                if w.get(ped.pos) != Some(Occupancy::Free) {
                    let c = w.clamp(ped.pos);
                    ped.pos = if w.get(c) == Some(Occupancy::Free) { c } else { nearest_free(model, c) };
                }
            }
        }
    }

    /// Probability that pedestrian `n` is aware.
    pub fn aware_fraction(&self, n: usize) -> f64 {
        self.particles
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| p.peds[n].g.is_aware())
            .map(|(_, w)| w)
            .sum()
    }

    pub fn summary(&self) -> BeliefSummary {
        let peds = (0..self.n_peds())
            .map(|n| {
                let mut hist: BTreeMap<GridIndex, f64> = BTreeMap::new();
                for (p, w) in self.particles.iter().zip(&self.weights) {
                    *hist.entry(p.peds[n].pos).or_default() += w;
                }
                PedMarginal {
                    histogram: hist.into_iter().collect(),
                    aware_fraction: self.aware_fraction(n),
                }
            })
            .collect();
        BeliefSummary { peds }
    }
}

/// Observation the belief consumes from the tracker: detected tracks report
/// the window cell of their Kalman mean; the gaze flag is the latch.
pub fn observation_from_tracks(model: &NavModel, robot_path_index: usize, tracks: &[Track]) -> LocalObservation {
    let robot_cell = model.path()[robot_path_index.min(model.last_index())];
    let ped_cells = tracks
        .iter()
        .map(|t| {
            t.detected.then(|| {
                let (x, y) = t.state.position();
                window_cell(model, x, y).0
            })
        })
        .collect();
    let gaze_flags = tracks.iter().map(|t| t.detected && t.gaze.latched).collect();
    LocalObservation {
        robot_cell,
        ped_cells,
        gaze_flags,
    }
}
