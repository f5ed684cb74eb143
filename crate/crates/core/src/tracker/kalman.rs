//! Constant-velocity Kalman filter over `(x, y, ẋ, ẏ)`.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::TrackerError;

/// Filter model. Pedestrians carry no control input, so the input term is
/// omitted. The transition matrix is built per call from `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub h: Matrix2x4<f64>,
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self::with_noise([0.01, 0.01, 0.1, 0.1], 0.1)
    }
}

impl KalmanParams {
    /// Diagonal process noise and isotropic measurement noise `sigma_m`.
    pub fn with_noise(q_diag: [f64; 4], sigma_m: f64) -> Self {
        Self {
            h: Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
            q: Matrix4::from_diagonal(&Vector4::from(q_diag)),
            r: Matrix2::from_diagonal_element(sigma_m * sigma_m),
        }
    }

    pub fn transition(dt: f64) -> Matrix4<f64> {
        let mut a = Matrix4::identity();
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

/// Plain-array mirror of [`TrackState`] for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackStateRepr {
    pub x: [f64; 4],
    pub p: [[f64; 4]; 4],
}

impl From<&TrackState> for TrackStateRepr {
    fn from(s: &TrackState) -> Self {
        let mut p = [[0.0; 4]; 4];
        for (r, row) in p.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = s.p[(r, c)];
            }
        }
        Self {
            x: [s.x[0], s.x[1], s.x[2], s.x[3]],
            p,
        }
    }
}

impl TrackState {
    pub fn new(x: Vector4<f64>, p: Matrix4<f64>) -> Self {
        Self { x, p }
    }

    /// Track born from a single position fix: zero velocity with inflated
    /// velocity variance.
    pub fn birth(pos: (f64, f64), params: &KalmanParams, velocity_var: f64) -> Self {
        let mut p = Matrix4::zeros();
        p[(0, 0)] = params.r[(0, 0)];
        p[(1, 1)] = params.r[(1, 1)];
        p[(0, 1)] = params.r[(0, 1)];
        p[(1, 0)] = params.r[(1, 0)];
        p[(2, 2)] = velocity_var;
        p[(3, 3)] = velocity_var;
        Self {
            x: Vector4::new(pos.0, pos.1, 0.0, 0.0),
            p,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        self.p.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub fn kf_predict(track: &TrackState, dt: f64, params: &KalmanParams) -> Result<TrackState, TrackerError> {
    if !(dt > 0.0) {
        return Err(TrackerError::InvalidDt(dt));
    }
    let a = KalmanParams::transition(dt);
    Ok(TrackState {
        x: a * track.x,
        p: symmetrize(a * track.p * a.transpose() + params.q),
    })
}

/// Joseph-form measurement update, symmetrized.
pub fn kf_update(track: &TrackState, z: (f64, f64), params: &KalmanParams) -> Result<TrackState, TrackerError> {
    let h = params.h;
    let s = h * track.p * h.transpose() + params.r;
    let s_inv = s.try_inverse().ok_or(TrackerError::SingularInnovation)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(TrackerError::SingularInnovation);
    }
    let k = track.p * h.transpose() * s_inv;
    let innovation = Vector2::new(z.0, z.1) - h * track.x;
    let i_kh = Matrix4::identity() - k * h;
    let p = i_kh * track.p * i_kh.transpose() + k * params.r * k.transpose();
    Ok(TrackState {
        x: track.x + k * innovation,
        p: symmetrize(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity_prediction() {
        let zero_q = KalmanParams {
            q: Matrix4::zeros(),
            ..KalmanParams::default()
        };
        let s = TrackState::new(Vector4::new(0.0, 0.0, 1.0, 0.0), Matrix4::zeros());
        let s2 = kf_predict(&s, 1.0, &zero_q).unwrap();
        assert_eq!(s2.x, Vector4::new(1.0, 0.0, 1.0, 0.0));
        assert_eq!(s2.p, Matrix4::zeros());
        assert!(matches!(kf_predict(&s, 0.0, &zero_q), Err(TrackerError::InvalidDt(_))));
    }

    #[test]
    fn prediction_grows_trace() {
        let params = KalmanParams::default();
        let s = TrackState::birth((1.0, 2.0), &params, 10.0);
        let s2 = kf_predict(&s, 0.5, &params).unwrap();
        assert!(s2.p.trace() >= s.p.trace());
    }

    #[test]
    fn perfect_measurement_snaps_to_z() {
        let params = KalmanParams {
            r: Matrix2::identity() * 1e-12,
            ..KalmanParams::default()
        };
        let s = TrackState::birth((0.0, 0.0), &KalmanParams::default(), 10.0);
        let s = kf_predict(&s, 1.0, &params).unwrap();
        let post = kf_update(&s, (3.0, -2.0), &params).unwrap();
        assert!((post.x[0] - 3.0).abs() < 1e-6 && (post.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let params = KalmanParams {
            r: Matrix2::identity() * 1e12,
            ..KalmanParams::default()
        };
        let prior = TrackState::new(
            Vector4::new(1.0, 2.0, 0.3, -0.1),
            Matrix4::from_diagonal(&Vector4::new(0.5, 0.5, 1.0, 1.0)),
        );
        let post = kf_update(&prior, (100.0, -50.0), &params).unwrap();
        for k in 0..4 {
            assert!((post.x[k] - prior.x[k]).abs() <= 1e-6 * prior.x[k].abs().max(1.0));
        }
        assert!((post.p - prior.p).abs().max() <= 1e-6);
    }

    #[test]
    fn scalar_gain_matches_gaussian_product() {
        // 1D slice: P = 1, R = 1, H selects x. Bayes product of N(0,1) and
        // N(z,1) has mean z/2 and variance 1/2.
        let params = KalmanParams {
            r: Matrix2::identity(),
            ..KalmanParams::default()
        };
        let prior = TrackState::new(Vector4::zeros(), Matrix4::identity());
        let post = kf_update(&prior, (2.0, 0.0), &params).unwrap();
        let (prod_mean, prod_var) = {
            let (m1, v1, m2, v2) = (0.0, 1.0, 2.0, 1.0);
            let v = 1.0 / (1.0 / v1 + 1.0 / v2);
            (v * (m1 / v1 + m2 / v2), v)
        };
        assert!((post.x[0] - prod_mean).abs() < 1e-12);
        assert!((post.p[(0, 0)] - prod_var).abs() < 1e-12);
        // gain 0.5
        assert!((post.x[0] / 2.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let params = KalmanParams {
            r: Matrix2::zeros(),
            ..KalmanParams::default()
        };
        let s = TrackState::new(Vector4::zeros(), Matrix4::zeros());
        assert_eq!(kf_update(&s, (1.0, 1.0), &params), Err(TrackerError::SingularInnovation));
    }

    #[test]
    fn update_shrinks_position_covariance() {
        let params = KalmanParams::default();
        let mut s = TrackState::birth((0.0, 0.0), &params, 10.0);
        for k in 0..20 {
            let prior = kf_predict(&s, 0.4, &params).unwrap();
            let post = kf_update(&prior, (0.1 * k as f64, 0.0), &params).unwrap();
            let diff = prior.position_cov() - post.position_cov();
            // Loewner order: prior - post is PSD
            let eig = diff.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-12));
            assert!((post.p - post.p.transpose()).abs().max() < 1e-9);
            s = post;
        }
    }
}
