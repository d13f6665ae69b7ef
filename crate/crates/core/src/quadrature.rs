//! Grids and quadrature rules shared by the tomographic functionals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Uniform grid `[min, max]` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl UniformGrid {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        UniformGrid { min, max, step }
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![self.step; n];
        if n > 1 {
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
        } else {
            w[0] = 0.0;
        }
        w
    }

    pub fn is_valid(&self) -> bool {
        self.step > 0.0 && self.max > self.min && self.step.is_finite() && self.min.is_finite() && self.max.is_finite()
    }
}

/// Composite trapezoid of sampled values on a uniform grid.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoid weights for samples of a periodic function at sorted angles.
///
/// Each point gets half of the gap to each neighbour (wrapping around), so the
/// weights sum to `period`.
pub fn periodic_trapezoid_weights(sorted_angles: &[f64], period: f64) -> Vec<f64> {
    let n = sorted_angles.len();
    match n {
        0 => vec![],
        1 => vec![period],
        _ => (0..n)
            .map(|i| {
                let prev = if i == 0 { sorted_angles[n - 1] - period } else { sorted_angles[i - 1] };
                let next = if i == n - 1 { sorted_angles[0] + period } else { sorted_angles[i + 1] };
                0.5 * (next - prev)
            })
            .collect(),
    }
}

/// Largest gap between consecutive sorted angles on a circle of `period`.
pub fn max_periodic_gap(sorted_angles: &[f64], period: f64) -> f64 {
    match sorted_angles.len() {
        0 => period,
        n => {
            let wrap = sorted_angles[0] + period - sorted_angles[n - 1];
            sorted_angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
        }
    }
}

/// Reduce an angle to `[0, period)`.
pub fn wrap_angle(theta: f64, period: f64) -> f64 {
    let t = theta.rem_euclid(period);
    if t >= period {
        0.0
    } else {
        t
    }
}

/// Distance between two angles on the `2π` circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// `Σ_j weights_j e^{i r_k x_j}` for every `r_k` on a uniform grid.
///
/// Phases advance by repeated multiplication, re-anchored with an exact
/// `sin_cos` every 64 steps to bound rounding drift.
pub fn fourier_sums(xs: &[f64], weights: &[f64], r: &UniformGrid) -> Vec<Complex64> {
    const ANCHOR: usize = 64;
    let nr = r.len();
    let mut out = vec![Complex64::new(0.0, 0.0); nr];
    for (&x, &w) in xs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let step = Complex64::from_polar(1.0, r.step * x);
        let mut z = Complex64::from_polar(w, r.min * x);
        for (k, o) in out.iter_mut().enumerate() {
            if k % ANCHOR == 0 && k > 0 {
                z = Complex64::from_polar(w, r.point(k) * x);
            }
            *o += z;
            z *= step;
        }
    }
    out
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    // Split into panels first so narrow peaks are not missed by the first probe.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            recurse(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}
