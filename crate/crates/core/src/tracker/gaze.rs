//! Eye-contact accumulation and the awareness latch.

use serde::{Deserialize, Serialize};

/// Gaze time needed before a pedestrian counts as aware.
pub const DEFAULT_GAZE_THRESHOLD_S: f64 = 5.0;

/// Running integral of the per-tick gaze indicator. Gaze need not be
/// contiguous: every in-center tick adds its `dt`. Once the integral exceeds
/// the threshold the latch is set for good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeAccumulator {
    pub integral_s: f64,
    pub threshold_s: f64,
    pub latched: bool,
}

impl Default for GazeAccumulator {
    fn default() -> Self {
        Self::new(DEFAULT_GAZE_THRESHOLD_S)
    }
}

impl GazeAccumulator {
    pub fn new(threshold_s: f64) -> Self {
        Self {
            integral_s: 0.0,
            threshold_s,
            latched: false,
        }
    }

    /// Awareness variable: `+1` once latched, `-1` before.
    pub fn awareness(&self) -> i8 {
        if self.latched {
            1
        } else {
            -1
        }
    }
}

pub fn gaze_step(acc: GazeAccumulator, gaze_in_center: bool, dt: f64) -> GazeAccumulator {
    let mut next = acc;
    if gaze_in_center && dt > 0.0 {
        next.integral_s += dt;
    }
    next.latched = acc.latched || next.integral_s > next.threshold_s;
    next
}

/// Centered rectangle of the camera image that counts as eye contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterRegion {
    pub w: f64,
    pub h: f64,
}

impl Default for CenterRegion {
    fn default() -> Self {
        Self { w: 80.0, h: 60.0 }
    }
}

impl CenterRegion {
    /// Whether an eye-center pixel lies inside the region centered on the
    /// principal point `(cx, cy)`.
    pub fn contains(&self, px: f64, py: f64, cx: f64, cy: f64) -> bool {
        (px - cx).abs() <= self.w / 2.0 && (py - cy).abs() <= self.h / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(acc: GazeAccumulator, gaze: bool, dt: f64, ticks: usize) -> GazeAccumulator {
        (0..ticks).fold(acc, |a, _| gaze_step(a, gaze, dt))
    }

    #[test]
    fn below_threshold_stays_unaware() {
        let a = run(GazeAccumulator::default(), true, 0.1, 49);
        assert!(a.integral_s < 5.0);
        assert!(!a.latched);
        assert_eq!(a.awareness(), -1);
    }

    #[test]
    fn non_contiguous_gaze_latches() {
        let mut a = GazeAccumulator::default();
        a = run(a, true, 0.5, 6); // 3.0 s
        a = run(a, false, 0.5, 10);
        assert!(!a.latched);
        a = run(a, true, 0.5, 4); // 5.0 s: not strictly above
        assert!(!a.latched);
        a = gaze_step(a, true, 0.1); // 5.1 s
        assert!(a.latched);
        assert_eq!(a.awareness(), 1);
    }

    #[test]
    fn latch_survives_long_silence() {
        let a = run(GazeAccumulator::default(), true, 1.0, 6);
        assert!(a.latched);
        let a = run(a, false, 1.0, 100);
        assert!(a.latched);
    }

    #[test]
    fn center_region_membership() {
        let r = CenterRegion { w: 10.0, h: 4.0 };
        assert!(r.contains(320.0, 240.0, 320.0, 240.0));
        assert!(r.contains(325.0, 242.0, 320.0, 240.0));
        assert!(!r.contains(326.0, 240.0, 320.0, 240.0));
    }

    proptest! {
        #[test]
        fn awareness_is_monotone(steps in proptest::collection::vec((any::<bool>(), 0.01f64..2.0), 1..200)) {
            let mut a = GazeAccumulator::default();
            let mut sum = 0.0;
            for (g, dt) in steps {
                let prev = a;
                a = gaze_step(a, g, dt);
                if g { sum += dt; }
                prop_assert!(a.awareness() >= prev.awareness());
                prop_assert!(a.integral_s >= prev.integral_s);
                prop_assert_eq!(a.latched, sum > 5.0);
            }
        }
    }
}
