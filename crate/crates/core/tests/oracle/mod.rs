//! Fock-space reference computations written independently of the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub const DIM: usize = 70;

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Amplitudes of `a†|α⟩ / √(1+|α|²)`.
pub fn spacs_amplitudes(abs_alpha: f64, phi: f64, dim: usize) -> Vec<Complex64> {
    let norm = (1.0 + abs_alpha * abs_alpha).sqrt();
    let mut c = vec![Complex64::new(0.0, 0.0); dim];
    for (n, slot) in c.iter_mut().enumerate().skip(1) {
        let k = n - 1;
        let mag = if abs_alpha == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (k as f64 * abs_alpha.ln() + 0.5 * (n as f64).ln() - 0.5 * ln_factorial(k) - 0.5 * abs_alpha * abs_alpha)
                .exp()
        };
        *slot = Complex64::from_polar(mag / norm, k as f64 * phi);
    }
    c
}

pub fn coherent_amplitudes(abs_alpha: f64, phi: f64, dim: usize) -> Vec<Complex64> {
    (0..dim)
        .map(|n| {
            let mag = if abs_alpha == 0.0 {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (n as f64 * abs_alpha.ln() - 0.5 * ln_factorial(n) - 0.5 * abs_alpha * abs_alpha).exp()
            };
            Complex64::from_polar(mag, n as f64 * phi)
        })
        .collect()
}

pub fn projector(c: &[Complex64]) -> DMatrix<Complex64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| c[i] * c[j].conj())
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

/// Beamsplitter loss by the binomial sum over lost photons.
pub fn lossy(rho: &DMatrix<Complex64>, eta: f64) -> DMatrix<Complex64> {
    let d = rho.nrows();
    DMatrix::from_fn(d, d, |m, n| {
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..d - m.max(n) {
            let w = (binomial(m + k, k) * binomial(n + k, k)).sqrt()
                * eta.powf(0.5 * (m + n) as f64)
                * (1.0 - eta).powi(k as i32);
            s += rho[(m + k, n + k)] * w;
        }
        s
    })
}

pub fn spacs(abs_alpha: f64, phi: f64, eta: f64) -> DMatrix<Complex64> {
    lossy(&projector(&spacs_amplitudes(abs_alpha, phi, DIM)), eta)
}

/// `ψ_n(x)` for `[Q, P] = i`.
pub fn hermite(x: f64, dim: usize) -> Vec<f64> {
    let mut psi = vec![0.0; dim];
    psi[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if dim > 1 {
        psi[1] = 2f64.sqrt() * x * psi[0];
    }
    for n in 1..dim - 1 {
        psi[n + 1] = (2.0 / (n + 1) as f64).sqrt() * x * psi[n] - (n as f64 / (n + 1) as f64).sqrt() * psi[n - 1];
    }
    psi
}

/// `⟨X_θ|ρ|X_θ⟩` with `⟨n|X_θ⟩ = e^{inθ} ψ_n(X)`.
pub fn tomogram(rho: &DMatrix<Complex64>, x: f64, theta: f64) -> f64 {
    let d = rho.nrows();
    let psi = hermite(x, d);
    let mut w = 0.0;
    for m in 0..d {
        for n in 0..d {
            let phase = Complex64::from_polar(1.0, (n as f64 - m as f64) * theta);
            w += (rho[(m, n)] * phase).re * psi[m] * psi[n];
        }
    }
    w
}

pub fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a * b).trace().re
}
