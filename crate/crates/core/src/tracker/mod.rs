//! People tracking from simulated detector outputs: vision-gated laser
//! fusion, one constant-velocity Kalman filter per pedestrian, gated
//! association and the gaze-driven awareness latch.

mod assign;
mod gaze;
mod kalman;
pub mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::gated_assignment;
pub use gaze::{gaze_step, CenterRegion, GazeAccumulator, DEFAULT_GAZE_THRESHOLD_S};
pub use kalman::{kf_predict, kf_update, KalmanParams, TrackState, TrackStateRepr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("gaze flags ({flags}) do not line up with vision detections ({vision})")]
    GazeMismatch { flags: usize, vision: usize },
    #[error("detection log line {line}: {msg}")]
    Log { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorSource {
    Vision,
    Laser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub source: SensorSource,
    pub pos: (f64, f64),
    pub timestamp: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn new(source: SensorSource, pos: (f64, f64), timestamp: f64) -> Self {
        Self {
            source,
            pos,
            timestamp,
            confidence: 1.0,
        }
    }

    fn distance(&self, other: (f64, f64)) -> f64 {
        (self.pos.0 - other.0).hypot(self.pos.1 - other.1)
    }
}

/// Keeps laser candidates only where vision confirms a person. The output
/// has one entry per vision detection, in vision order: the matched laser
/// position when a laser candidate lies within `gate_radius`, else the
/// vision detection itself.
pub fn fuse_detections(vision: &[Detection], laser: &[Detection], gate_radius: f64) -> Vec<Detection> {
    let pairs = gated_assignment(vision.len(), laser.len(), gate_radius, |v, l| {
        vision[v].distance(laser[l].pos)
    });
    let mut out: Vec<Detection> = vision.to_vec();
    for (v, l) in pairs {
        out[v] = Detection {
            source: SensorSource::Laser,
            pos: laser[l].pos,
            timestamp: vision[v].timestamp,
            confidence: vision[v].confidence,
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u32,
    pub state: TrackState,
    pub gaze: GazeAccumulator,
    pub last_update: f64,
    pub misses: u32,
    /// Whether a detection was associated on the latest tick.
    pub detected: bool,
}

impl Track {
    /// Awareness variable `G`: `+1` exactly when the gaze latch is set.
    pub fn awareness(&self) -> i8 {
        self.gaze.awareness()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// `(track index, detection index)` pairs.
    pub matches: Vec<(usize, usize)>,
    /// Detection indices that start new tracks.
    pub births: Vec<usize>,
    /// Track indices with no detection this tick.
    pub misses: Vec<usize>,
}

/// Nearest-neighbor association within `gate_radius` of each track's
/// current position estimate.
pub fn associate(tracks: &[Track], detections: &[Detection], gate_radius: f64) -> Association {
    let matches = gated_assignment(tracks.len(), detections.len(), gate_radius, |t, d| {
        detections[d].distance(tracks[t].state.position())
    });
    let mut det_used = vec![false; detections.len()];
    let mut trk_used = vec![false; tracks.len()];
    for &(t, d) in &matches {
        trk_used[t] = true;
        det_used[d] = true;
    }
    Association {
        births: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
        misses: (0..tracks.len()).filter(|&t| !trk_used[t]).collect(),
        matches,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub process_noise: [f64; 4],
    pub measurement_sigma_m: f64,
    pub fusion_gate_m: f64,
    pub gate_radius_m: f64,
    pub miss_limit: u32,
    pub birth_velocity_var: f64,
    pub gaze_threshold_s: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            process_noise: [0.01, 0.01, 0.1, 0.1],
            measurement_sigma_m: 0.1,
            fusion_gate_m: 0.5,
            gate_radius_m: 1.0,
            miss_limit: 5,
            birth_velocity_var: 10.0,
            gaze_threshold_s: DEFAULT_GAZE_THRESHOLD_S,
        }
    }
}

impl TrackerParams {
    pub fn kalman(&self) -> KalmanParams {
        KalmanParams::with_noise(self.process_noise, self.measurement_sigma_m)
    }
}

/// The set of live tracks owned by one simulation loop.
#[derive(Debug, Clone)]
pub struct TrackerBank {
    params: TrackerParams,
    kalman: KalmanParams,
    tracks: Vec<Track>,
    next_id: u32,
    time: f64,
}

impl TrackerBank {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            kalman: params.kalman(),
            params,
            tracks: Vec::new(),
            next_id: 0,
            time: 0.0,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn tracks_mut(&mut self) -> &mut [Track] {
        &mut self.tracks
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// One tracker tick: predict, fuse, associate, correct, birth and prune.
    /// `gaze` carries one eye-contact flag per vision detection.
    pub fn step(
        &mut self,
        vision: &[Detection],
        laser: &[Detection],
        gaze: &[bool],
        dt: f64,
    ) -> Result<(), TrackerError> {
        if gaze.len() != vision.len() {
            return Err(TrackerError::GazeMismatch {
                flags: gaze.len(),
                vision: vision.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(TrackerError::InvalidDt(dt));
        }
        self.time += dt;
        for t in &mut self.tracks {
            t.state = kf_predict(&t.state, dt, &self.kalman)?;
            t.detected = false;
        }
        let fused = fuse_detections(vision, laser, self.params.fusion_gate_m);
        let assoc = associate(&self.tracks, &fused, self.params.gate_radius_m);
        for &(t, d) in &assoc.matches {
            let track = &mut self.tracks[t];
            track.state = kf_update(&track.state, fused[d].pos, &self.kalman)?;
            track.gaze = gaze_step(track.gaze, gaze[d], dt);
            track.last_update = self.time;
            track.misses = 0;
            track.detected = true;
        }
        for &t in &assoc.misses {
            self.tracks[t].misses += 1;
        }
        for &d in &assoc.births {
            let gaze_acc = gaze_step(GazeAccumulator::new(self.params.gaze_threshold_s), gaze[d], dt);
            self.tracks.push(Track {
                id: self.next_id,
                state: TrackState::birth(fused[d].pos, &self.kalman, self.params.birth_velocity_var),
                gaze: gaze_acc,
                last_update: self.time,
                misses: 0,
                detected: true,
            });
            self.next_id += 1;
        }
        let limit = self.params.miss_limit;
        self.tracks.retain(|t| t.misses <= limit);
        Ok(())
    }
}
