use serde::{Deserialize, Serialize};

use super::GlobalPath;

/// Path resampled from a natural cubic spline through the waypoint centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothPath {
    pub samples: Vec<(f64, f64)>,
    pub sample_spacing: f64,
}

/// One-dimensional natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    /// `knots` must be strictly increasing and match `values` in length (≥ 2).
    pub fn new(knots: &[f64], values: &[f64]) -> Self {
        assert!(knots.len() >= 2 && knots.len() == values.len());
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let h0 = knots[k + 1] - knots[k];
                let h1 = knots[k + 2] - knots[k + 1];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0 * ((values[k + 2] - values[k + 1]) / h1 - (values[k + 1] - values[k]) / h0);
            }
            for k in 1..m {
                let lower = knots[k + 1] - knots[k];
                let f = lower / diag[k - 1];
                diag[k] -= f * upper[k - 1];
                rhs[k] -= f * rhs[k - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                second[k + 1] = (rhs[k] - upper[k] * second[k + 2]) / diag[k];
            }
        }
        Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let k = match self.knots.partition_point(|&x| x <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.knots[k], self.knots[k + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        a * self.values[k]
            + b * self.values[k + 1]
            + ((a * a * a - a) * self.second[k] + (b * b * b - b) * self.second[k + 1]) * h * h / 6.0
    }
}

/// Natural cubic spline through the waypoint cell centers, parameterized by
/// cumulative chord length. Each chord is split into equal pieces no longer
/// than `sample_spacing`, so every waypoint appears among the samples.
pub fn smooth_path(path: &GlobalPath, sample_spacing: f64) -> SmoothPath {
    let res = path.resolution;
    let pts: Vec<(f64, f64)> = path
        .waypoints
        .iter()
        .map(|w| ((f64::from(w.i) + 0.5) * res, (f64::from(w.j) + 0.5) * res))
        .collect();
    if pts.len() < 2 || !(sample_spacing > 0.0) {
        return SmoothPath {
            samples: pts,
            sample_spacing,
        };
    }
    let mut t = vec![0.0];
    for w in pts.windows(2) {
        let d = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        t.push(t.last().unwrap() + d);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let sx = NaturalCubicSpline::new(&t, &xs);
    let sy = NaturalCubicSpline::new(&t, &ys);
    let mut samples = vec![pts[0]];
    for k in 0..pts.len() - 1 {
        let len = t[k + 1] - t[k];
        let pieces = (len / sample_spacing).ceil().max(1.0) as usize;
        for p in 1..pieces {
            let tt = t[k] + len * p as f64 / pieces as f64;
            samples.push((sx.eval(tt), sy.eval(tt)));
        }
        samples.push(pts[k + 1]);
    }
    SmoothPath {
        samples,
        sample_spacing,
    }
}
