//! Truncated Fock-space oracle.
//!
//! Everything the tomographic pipeline computes from quadrature distributions
//! can be computed exactly here from density matrices: photon-added coherent
//! states, the beam-splitter loss channel in operator-sum form, tomograms
//! `w(X, θ) = <X_θ|ρ|X_θ>` and the trace products entering the fidelity bounds.
//!
//! Quadrature convention: `[Q, P] = i`, so the vacuum tomogram is
//! `exp(-X²)/√π`, and `<n|X_θ> = e^{inθ} ψ_n(X)` with `ψ_n` the normalized
//! Hermite functions. With this sign a coherent state `|α>` has its tomogram
//! peaked at `X = √2 |α| cos(θ - arg α)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Tomogram;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const TAIL_TOL: f64 = 1e-12;

/// Default truncation used for |α| ≤ 2.
pub const DEFAULT_TRUNCATION: usize = 30;

/// Normalized Hermite functions `ψ_0(x) ..= ψ_nmax(x)`.
///
/// Uses the three-term recurrence on the normalized functions, which stays
/// finite where the raw polynomials `H_n` would overflow.
pub fn hermite_functions(x: f64, nmax: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(nmax + 1);
    psi.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if nmax >= 1 {
        psi.push(std::f64::consts::SQRT_2 * x * psi[0]);
    }
    for n in 1..nmax {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
        psi.push(next);
    }
    psi
}

/// Density operator on the Fock space truncated to photon numbers `0..dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking hermiticity, unit trace and positivity.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch(entries.nrows(), entries.ncols()));
        }
        let rho = DensityMatrix { entries };
        rho.validate()?;
        Ok(rho)
    }

    /// `|ψ><ψ|` for a normalized amplitude vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        Self::from_matrix(&v * v.adjoint())
    }

    /// `|n><n|` on a space of dimension `dim`.
    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidInput(format!("Fock level {n} outside dimension {dim}")));
        }
        let mut entries = DMatrix::zeros(dim, dim);
        entries[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn purity(&self) -> f64 {
        trace_of_product(&self.entries, &self.entries)
    }

    /// Smallest eigenvalue from the Hermitian eigensolver.
    pub fn min_eigenvalue(&self) -> f64 {
        // Strongly graded matrices (tiny high-level tails) can drive the solver
        // to non-finite output. Dropping entries below 1e-20 moves each
        // eigenvalue by at most dim * 1e-20.
        let flushed = self
            .entries
            .map(|z| if z.norm() < 1e-20 { Complex64::new(0.0, 0.0) } else { z });
        nalgebra::linalg::SymmetricEigen::new(flushed)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for m in 0..dim {
            for n in m..dim {
                let d = self.entries[(m, n)] - self.entries[(n, m)].conj();
                if d.norm() > HERMITIAN_TOL {
                    return Err(Error::NotDensityMatrix(format!(
                        "not Hermitian at ({m}, {n}): deviation {:.3e}",
                        d.norm()
                    )));
                }
            }
        }
        let tr = self.entries.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NotDensityMatrix(format!("trace {tr} != 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NotDensityMatrix(format!("minimum eigenvalue {min_eig:.3e} < 0")));
        }
        Ok(())
    }

    /// Rows of `[re, im]` pairs.
    pub fn to_json_rows(&self) -> Vec<Vec<[f64; 2]>> {
        let dim = self.dim();
        (0..dim)
            .map(|m| (0..dim).map(|n| [self.entries[(m, n)].re, self.entries[(m, n)].im]).collect())
            .collect()
    }

    pub fn from_json_rows(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(dim, bad.len()));
        }
        let entries = DMatrix::from_fn(dim, dim, |m, n| Complex64::new(rows[m][n][0], rows[m][n][1]));
        Self::from_matrix(entries)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        DensityMatrix::from_json_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn trace_of_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    // Tr(AB) = Σ_mn A_mn B_nm
    let dim = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        for n in 0..dim {
            acc += a[(m, n)] * b[(n, m)];
        }
    }
    acc.re
}

/// Minimal truncation for which the SPACS tail mass is negligible.
pub fn minimal_truncation(abs_alpha: f64) -> usize {
    let n2 = abs_alpha * abs_alpha;
    (n2 + 10.0 * (n2 + 1.0).sqrt()).ceil() as usize
}

/// Fock amplitudes of `a†|α>/√(1+|α|²)` on levels `0..=truncation`, plus the
/// probability mass lost above the truncation.
fn spacs_amplitudes(alpha: Complex64, truncation: usize) -> (Vec<Complex64>, f64) {
    let n2 = alpha.norm_sqr();
    let prefactor = (-0.5 * n2).exp() / (1.0 + n2).sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); truncation + 1];
    // term = α^n / √(n!)
    let mut term = Complex64::new(1.0, 0.0);
    let mut kept = 0.0;
    for n in 0..truncation {
        if n > 0 {
            term = term * alpha / (n as f64).sqrt();
        }
        let c = term * ((n + 1) as f64).sqrt() * prefactor;
        kept += c.norm_sqr();
        amps[n + 1] = c;
    }
    (amps, (1.0 - kept).max(0.0))
}

/// Pure photon-added coherent state on levels `0..=truncation`.
pub fn spacs_state(alpha: Complex64, truncation: usize) -> Result<DensityMatrix> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidInput(format!("alpha {alpha} is not finite")));
    }
    let (amps, tail) = spacs_amplitudes(alpha, truncation);
    if tail > TAIL_TOL {
        return Err(Error::Truncation {
            abs_alpha: alpha.norm(),
            dim: truncation,
            tail,
        });
    }
    let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let amps: Vec<_> = amps.into_iter().map(|c| c / norm).collect();
    DensityMatrix::pure(&amps)
}

/// Coherent state `|α>` on levels `0..=truncation`.
pub fn coherent_state(alpha: Complex64, truncation: usize) -> Result<DensityMatrix> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidInput(format!("alpha {alpha} is not finite")));
    }
    let mut amps = Vec::with_capacity(truncation + 1);
    let mut term = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=truncation {
        if n > 0 {
            term = term * alpha / (n as f64).sqrt();
        }
        amps.push(term);
    }
    let kept: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
    if 1.0 - kept > TAIL_TOL {
        return Err(Error::Truncation {
            abs_alpha: alpha.norm(),
            dim: truncation,
            tail: 1.0 - kept,
        });
    }
    let amps: Vec<_> = amps.into_iter().map(|c| c / kept.sqrt()).collect();
    DensityMatrix::pure(&amps)
}

/// Truncation at which the SPACS amplitudes left out sum to a probability
/// below 1e-24, so tomograms built from the truncated state are accurate to
/// well below 1e-10. Never less than [`DEFAULT_TRUNCATION`].
///
/// Beyond `n > |α|²` the squared amplitudes fall off at least geometrically
/// with ratio `|α|²/n`, which bounds the tail by `|c_N|² / (1 − |α|²/(N+1))`.
pub fn auto_truncation(abs_alpha: f64) -> usize {
    let n2 = abs_alpha * abs_alpha;
    if n2 == 0.0 {
        return DEFAULT_TRUNCATION;
    }
    // ln |c_{n+1}|² = −|α|² − ln(1+|α|²) + n ln|α|² − ln n! + ln(n+1)
    let mut log_c = -n2 - (1.0 + n2).ln();
    let mut n = 0usize;
    loop {
        if n > 0 {
            log_c += n2.ln() - (n as f64).ln() + ((n + 1) as f64).ln() - (n as f64).ln();
        }
        let level = n + 1;
        let ratio = n2 / (level + 1) as f64;
        if level >= DEFAULT_TRUNCATION.max(minimal_truncation(abs_alpha))
            && ratio < 0.5
            && log_c - (1.0 - ratio).ln() < -24.0 * std::f64::consts::LN_10
        {
            return level;
        }
        n += 1;
    }
}

/// SPACS with [`auto_truncation`].
pub fn spacs_state_auto(alpha: Complex64) -> Result<DensityMatrix> {
    spacs_state(alpha, auto_truncation(alpha.norm()))
}

/// Beam-splitter loss with transmissivity `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    pub eta: f64,
    /// Number of Kraus operators retained; `None` keeps all of them.
    pub kraus_rank: Option<usize>,
}

impl LossChannel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidInput(format!("eta {eta} outside [0, 1]")));
        }
        Ok(LossChannel { eta, kraus_rank: None })
    }

    fn coefficient(&self, m: usize, k: usize) -> f64 {
        // √( C(m+k, k) η^m (1-η)^k )
        let mut binom = 1.0;
        for j in 1..=k {
            binom *= (m + j) as f64 / j as f64;
        }
        (binom * self.eta.powi(m as i32) * (1.0 - self.eta).powi(k as i32)).sqrt()
    }

    /// `A_k = Σ_m √(C(m+k,k) η^m (1-η)^k) |m><m+k|` on a space of dimension `dim`.
    pub fn kraus_operator(&self, k: usize, dim: usize) -> DMatrix<Complex64> {
        let mut a = DMatrix::zeros(dim, dim);
        for m in 0..dim.saturating_sub(k) {
            a[(m, m + k)] = Complex64::new(self.coefficient(m, k), 0.0);
        }
        a
    }

    fn rank(&self, dim: usize) -> usize {
        self.kraus_rank.unwrap_or(dim).min(dim)
    }

    /// `Σ_k A_k† A_k`, which is the identity for the full rank.
    pub fn completeness(&self, dim: usize) -> DMatrix<Complex64> {
        (0..self.rank(dim))
            .map(|k| {
                let a = self.kraus_operator(k, dim);
                a.adjoint() * a
            })
            .fold(DMatrix::zeros(dim, dim), |acc, x| acc + x)
    }

    /// `Σ_k A_k ρ A_k†`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let dim = rho.dim();
        let mut out = DMatrix::<Complex64>::zeros(dim, dim);
        for k in 0..self.rank(dim) {
            for m in 0..dim - k {
                let cm = self.coefficient(m, k);
                for n in 0..dim - k {
                    out[(m, n)] += rho.entries[(m + k, n + k)] * (cm * self.coefficient(n, k));
                }
            }
        }
        DensityMatrix::from_matrix(out)
    }
}

/// `ℰ_η[ρ]`.
pub fn apply_loss(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    LossChannel::new(eta)?.apply(rho)
}

/// `<X_θ|ρ|X_θ>`.
pub fn tomogram_of(rho: &DensityMatrix, x: f64, theta: f64) -> f64 {
    let dim = rho.dim();
    let psi = hermite_functions(x, dim - 1);
    let v: Vec<Complex64> = psi
        .iter()
        .enumerate()
        .map(|(n, &p)| Complex64::from_polar(p, n as f64 * theta))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        let mut row = Complex64::new(0.0, 0.0);
        for n in 0..dim {
            row += rho.entries[(m, n)] * v[n];
        }
        acc += v[m].conj() * row;
    }
    acc.re
}

/// Trace products between two states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceFunctionals {
    /// `Tr ρ₁ρ₂`
    pub overlap: f64,
    pub purity1: f64,
    pub purity2: f64,
    /// `Tr ρ₁ρ₂ρ₁ρ₂`
    pub four_product: f64,
}

pub fn trace_functionals(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<TraceFunctionals> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch(rho1.dim(), rho2.dim()));
    }
    let prod = &rho1.entries * &rho2.entries;
    Ok(TraceFunctionals {
        overlap: prod.trace().re,
        purity1: rho1.purity(),
        purity2: rho2.purity(),
        four_product: trace_of_product(&prod, &prod),
    })
}

/// Sub-fidelity `Tr ρ₁ρ₂ + √(2[(Tr ρ₁ρ₂)² − Tr ρ₁ρ₂ρ₁ρ₂])`, unclipped.
///
/// Only the oracle can evaluate the four-product; the radicand is floored at
/// zero against rounding.
pub fn sub_fidelity_exact(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let t = trace_functionals(rho1, rho2)?;
    let radicand = 2.0 * (t.overlap * t.overlap - t.four_product);
    Ok(t.overlap + radicand.max(0.0).sqrt())
}

/// Tomogram source backed by a density matrix.
#[derive(Debug, Clone)]
pub struct FockTomogram(pub DensityMatrix);

impl Tomogram for FockTomogram {
    fn density(&self, x: f64, theta: f64) -> f64 {
        tomogram_of(&self.0, x, theta)
    }
}
