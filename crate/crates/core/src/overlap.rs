//! Trace functionals of states computed directly from quadrature distributions.
//!
//! For two states with tomograms `w₁, w₂`,
//!
//! ```text
//! Tr ρ₁ρ₂ = (1/π) ∫₀^∞ r dr ∫₀^π dθ ∫∫ dX dY cos[(X+Y) r] w₁(X,θ) w₂(−Y,θ)
//! ```
//!
//! Integrating over `X` and `Y` first turns the oscillatory kernel into
//! characteristic functions `F(r, θ) = ∫ e^{irX} w(X, θ) dX`:
//!
//! ```text
//! Tr ρ₁ρ₂ = (1/π) ∫₀^∞ r dr ∫₀^π dθ Re[F₁(r,θ) F₂*(r,θ)]
//! ```
//!
//! which is what every functional here evaluates, with trapezoid rules in `r`
//! and `θ`. Model characteristic functions decay like `e^{−r²/4}`; empirical
//! ones do not, so the radial cutoff `r_max` doubles as a regularizer and the
//! resulting shot-noise bias is reported as `noise_floor`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dataset::{find_phase_pairs, histogram, BinRule, QuadratureDataset, PAIRING_TOLERANCE};
use crate::error::{Error, Result};
use crate::models::Tomogram;
use crate::quadrature::{fourier_sums, max_periodic_gap, periodic_trapezoid_weights, wrap_angle, UniformGrid};

/// Integration settings, recorded with every result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    pub r_max: f64,
    pub r_step: f64,
    /// Grid for numerical transforms of tomograms without a closed-form
    /// characteristic function.
    pub x_grid: UniformGrid,
    /// Number of equally spaced phases used when no dataset fixes the θ grid.
    pub model_phases: usize,
    pub pairing_tolerance: f64,
    /// Coverage warning threshold for the largest gap in `[0, π)`.
    pub max_theta_gap: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            r_max: 8.0,
            r_step: 0.01,
            x_grid: UniformGrid::new(-8.0, 8.0, 0.01),
            model_phases: 48,
            pairing_tolerance: PAIRING_TOLERANCE,
            max_theta_gap: PI / 6.0,
        }
    }
}

impl IntegrationConfig {
    pub fn r_grid(&self) -> UniformGrid {
        UniformGrid::new(0.0, self.r_max, self.r_step)
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.r_max > 0.0 && self.r_step > 0.0 && self.r_step < self.r_max) {
            return Err(Error::InvalidInput(format!(
                "r grid needs 0 < r_step < r_max (got r_max={}, r_step={})",
                self.r_max, self.r_step
            )));
        }
        if !self.x_grid.is_valid() {
            return Err(Error::InvalidInput(format!("invalid x grid {:?}", self.x_grid)));
        }
        if self.model_phases < 2 {
            return Err(Error::InvalidInput("model_phases must be at least 2".into()));
        }
        Ok(self)
    }

    /// Equally spaced phases on `[0, 2π)` for model-only functionals.
    pub fn model_phase_grid(&self) -> Vec<f64> {
        (0..self.model_phases)
            .map(|j| 2.0 * PI * j as f64 / self.model_phases as f64)
            .collect()
    }
}

/// Characteristic functions `F(r_k, θ_j)` of one tomogram source.
#[derive(Debug, Clone, PartialEq)]
pub struct CfTable {
    phases: Vec<f64>,
    r: UniformGrid,
    rows: Vec<Vec<Complex64>>,
    /// Samples per phase for empirical tables.
    counts: Option<Vec<usize>>,
    means: Vec<f64>,
}

impl CfTable {
    /// Empirical characteristic functions from raw samples.
    pub fn from_dataset(dataset: &QuadratureDataset, cfg: &IntegrationConfig) -> Self {
        Self::from_dataset_on(dataset, &cfg.r_grid())
    }

    pub(crate) fn from_dataset_on(dataset: &QuadratureDataset, r: &UniformGrid) -> Self {
        let rows = (0..dataset.n_phases())
            .map(|j| {
                let xs = dataset.samples(j);
                let weights = vec![1.0 / xs.len() as f64; xs.len()];
                fourier_sums(xs, &weights, r)
            })
            .collect();
        CfTable {
            phases: dataset.phases().to_vec(),
            r: *r,
            rows,
            counts: Some((0..dataset.n_phases()).map(|j| dataset.samples(j).len()).collect()),
            means: (0..dataset.n_phases())
                .map(|j| crate::stats::mean(dataset.samples(j)))
                .collect(),
        }
    }

    /// Characteristic functions of a tomogram evaluated on `phases`.
    pub fn from_tomogram<T: Tomogram + ?Sized>(tomogram: &T, phases: &[f64], cfg: &IntegrationConfig) -> Self {
        Self::from_tomogram_on(tomogram, phases, &cfg.r_grid(), &cfg.x_grid)
    }

    pub(crate) fn from_tomogram_on<T: Tomogram + ?Sized>(
        tomogram: &T,
        phases: &[f64],
        r: &UniformGrid,
        x: &UniformGrid,
    ) -> Self {
        CfTable {
            phases: phases.to_vec(),
            r: *r,
            rows: phases.iter().map(|&t| tomogram.characteristic_row(t, r, x)).collect(),
            counts: None,
            means: phases.iter().map(|&t| tomogram.mean(t, x)).collect(),
        }
    }

    /// Characteristic functions of the per-phase histograms.
    pub fn from_histograms(dataset: &QuadratureDataset, rule: BinRule, cfg: &IntegrationConfig) -> Result<Self> {
        let r = cfg.r_grid();
        let mut rows = Vec::with_capacity(dataset.n_phases());
        let mut means = Vec::with_capacity(dataset.n_phases());
        for j in 0..dataset.n_phases() {
            let h = histogram(dataset, j, rule)?;
            // Exact transform of a piecewise-constant density.
            let row = (0..r.len())
                .map(|k| {
                    let rk = r.point(k);
                    h.bin_edges
                        .windows(2)
                        .zip(&h.densities)
                        .map(|(e, &d)| {
                            if rk == 0.0 {
                                Complex64::new(d * (e[1] - e[0]), 0.0)
                            } else {
                                (Complex64::from_polar(1.0, rk * e[1]) - Complex64::from_polar(1.0, rk * e[0]))
                                    / Complex64::new(0.0, rk)
                                    * d
                            }
                        })
                        .sum()
                })
                .collect();
            rows.push(row);
            means.push(
                h.centers()
                    .iter()
                    .zip(&h.densities)
                    .map(|(c, d)| c * d * h.width())
                    .sum(),
            );
        }
        Ok(CfTable {
            phases: dataset.phases().to_vec(),
            r,
            rows,
            counts: Some((0..dataset.n_phases()).map(|j| dataset.samples(j).len()).collect()),
            means,
        })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn r_grid(&self) -> &UniformGrid {
        &self.r
    }

    pub fn row(&self, phase_index: usize) -> &[Complex64] {
        &self.rows[phase_index]
    }

    /// Mean quadrature per phase.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn is_empirical(&self) -> bool {
        self.counts.is_some()
    }

    fn check_compatible(&self, other: &CfTable) -> Result<()> {
        let same = self.phases.len() == other.phases.len()
            && self.phases.iter().zip(&other.phases).all(|(a, b)| (a - b).abs() < 1e-12)
            && self.r == other.r;
        if same {
            Ok(())
        } else {
            Err(Error::PhaseGridMismatch)
        }
    }
}

/// Extra information attached to every functional value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    /// Expected upward bias of a squared empirical characteristic function,
    /// `(1/π) Σ w (1 − |F|²)/n`, over the integration grid.
    pub noise_floor: f64,
    pub max_theta_gap: f64,
    pub paired_phases: usize,
    pub signed_value: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub value: f64,
    pub cfg: IntegrationConfig,
    pub diagnostics: Diagnostics,
}

/// Integration weights over the phases of a table, for integrands that are
/// `π`-periodic for fair tomograms.
///
/// The integral over `[0, π)` is taken as half the integral over the full
/// circle. A phase whose partner at `θ + π` is missing also stands in for it.
#[derive(Debug, Clone)]
struct ThetaRule {
    weights: Vec<f64>,
    max_gap: f64,
}

impl ThetaRule {
    fn new(phases: &[f64], tolerance: f64) -> Self {
        let pairs = find_phase_pairs(phases, tolerance);
        let mut has_partner = vec![false; phases.len()];
        for &(i, j) in &pairs {
            has_partner[i] = true;
            has_partner[j] = true;
        }
        let mut points: Vec<(f64, usize)> = phases.iter().cloned().zip(0..).collect();
        for (i, &t) in phases.iter().enumerate() {
            if !has_partner[i] {
                points.push((wrap_angle(t + PI, 2.0 * PI), i));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let angles: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut weights = vec![0.0; phases.len()];
        for (w, &(_, i)) in periodic_trapezoid_weights(&angles, 2.0 * PI).iter().zip(&points) {
            weights[i] += 0.5 * w;
        }
        ThetaRule {
            weights,
            max_gap: max_periodic_gap(&angles, 2.0 * PI),
        }
    }
}

fn radial_weights(r: &UniformGrid) -> Vec<f64> {
    r.trapezoid_weights()
        .iter()
        .enumerate()
        .map(|(k, w)| w * r.point(k))
        .collect()
}

/// Precomputed quadrature over one phase grid.
#[derive(Debug, Clone)]
pub struct PhaseIntegrator {
    cfg: IntegrationConfig,
    theta: ThetaRule,
    radial: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    pair_weights: Vec<f64>,
    pair_gap: f64,
}

impl PhaseIntegrator {
    pub fn new(phases: &[f64], cfg: &IntegrationConfig) -> Result<Self> {
        let cfg = cfg.validated()?;
        if phases.is_empty() {
            return Err(Error::NoSamples);
        }
        let pairs = find_phase_pairs(phases, cfg.pairing_tolerance);
        let lower: Vec<f64> = pairs.iter().map(|&(i, _)| phases[i]).collect();
        Ok(PhaseIntegrator {
            theta: ThetaRule::new(phases, cfg.pairing_tolerance),
            radial: radial_weights(&cfg.r_grid()),
            pair_weights: periodic_trapezoid_weights(&lower, PI),
            pair_gap: max_periodic_gap(&lower, PI),
            pairs,
            cfg,
        })
    }

    pub fn cfg(&self) -> &IntegrationConfig {
        &self.cfg
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn coverage_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.theta.max_gap > self.cfg.max_theta_gap + 1e-12 {
            w.push(format!(
                "phase coverage of [0, π) has a gap of {:.3} rad (> {:.3})",
                self.theta.max_gap, self.cfg.max_theta_gap
            ));
        }
        w
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            noise_floor: 0.0,
            max_theta_gap: self.theta.max_gap,
            paired_phases: self.pairs.len(),
            signed_value: None,
            warnings: self.coverage_warnings(),
        }
    }

    /// `(1/π) Σ_θ Σ_r w_θ w_r f(θ, r)`.
    fn integrate<F: Fn(usize, usize) -> f64>(&self, f: F) -> f64 {
        let total: f64 = self
            .theta
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, &wt)| wt * self.radial.iter().enumerate().map(|(k, &wr)| wr * f(j, k)).sum::<f64>())
            .sum();
        total / PI
    }

    fn noise_floor(&self, table: &CfTable) -> f64 {
        match &table.counts {
            Some(counts) => self.integrate(|j, k| (1.0 - table.rows[j][k].norm_sqr()) / counts[j] as f64),
            None => 0.0,
        }
    }

    fn check(&self, a: &CfTable) -> Result<()> {
        let ok = a.phases.len() == self.theta.weights.len() && a.r == self.cfg.r_grid();
        if ok {
            Ok(())
        } else {
            Err(Error::PhaseGridMismatch)
        }
    }

    /// `Tr ρ₁ρ₂`.
    pub fn overlap(&self, a: &CfTable, b: &CfTable) -> Result<FunctionalValue> {
        self.check(a)?;
        a.check_compatible(b)?;
        let value = self.integrate(|j, k| (a.rows[j][k] * b.rows[j][k].conj()).re);
        let mut diagnostics = self.diagnostics();
        if a == b {
            diagnostics.noise_floor = self.noise_floor(a);
        }
        Ok(FunctionalValue {
            value,
            cfg: self.cfg,
            diagnostics,
        })
    }

    /// `Tr ρ₁ρ₂` integrated over `θ ∈ [0, π)` twice: once from the lower phase
    /// of every `(θ, θ+π)` pair and once from the upper phase mirrored back
    /// (`X → −X`). For fair tomograms both equal the overlap.
    pub fn half_overlaps(&self, a: &CfTable, b: &CfTable) -> Result<(f64, f64)> {
        self.check(a)?;
        a.check_compatible(b)?;
        if self.pairs.is_empty() {
            return Err(Error::MissingPairs {
                tolerance: self.cfg.pairing_tolerance,
            });
        }
        let half = |pick: fn((usize, usize)) -> usize| {
            self.pairs
                .iter()
                .zip(&self.pair_weights)
                .map(|(&pair, &wt)| {
                    let j = pick(pair);
                    let radial: f64 = self
                        .radial
                        .iter()
                        .enumerate()
                        .map(|(k, &wr)| wr * (a.rows[j][k] * b.rows[j][k].conj()).re)
                        .sum();
                    wt * radial
                })
                .sum::<f64>()
                / PI
        };
        Ok((half(|p| p.0), half(|p| p.1)))
    }

    /// `Tr(ρ₁ − ρ₂)²` summed as `|F₁ − F₂|²`, never negative.
    pub fn distance_sq(&self, data: &CfTable, model: &CfTable) -> Result<FunctionalValue> {
        self.check(data)?;
        data.check_compatible(model)?;
        let value = self.integrate(|j, k| (data.rows[j][k] - model.rows[j][k]).norm_sqr());
        let mut diagnostics = self.diagnostics();
        diagnostics.noise_floor = self.noise_floor(data) + self.noise_floor(model);
        Ok(FunctionalValue {
            value,
            cfg: self.cfg,
            diagnostics,
        })
    }

    /// Symmetry-violation error `Δ(D²)`, returned as a magnitude with the signed
    /// value kept in the diagnostics.
    ///
    /// Per pair `(θ, θ+π)` and radius `r` the integrand is
    /// `|F_ex(θ)|² − |F_ex(θ+π)|² + 2 Re[F_th(θ)(F_ex(θ+π) − F_ex*(θ))]`,
    /// integrated with weight `r / 2π` over `θ ∈ [0, π)`.
    pub fn distance_error(&self, data: &CfTable, model: &CfTable) -> Result<FunctionalValue> {
        self.check(data)?;
        data.check_compatible(model)?;
        if data.phases.len() < 2 {
            return Err(Error::Degenerate("the symmetry error needs more than one phase".into()));
        }
        if self.pairs.is_empty() {
            return Err(Error::MissingPairs {
                tolerance: self.cfg.pairing_tolerance,
            });
        }
        let signed: f64 = self
            .pairs
            .iter()
            .zip(&self.pair_weights)
            .map(|(&(lo, hi), &wt)| {
                let (ex_lo, ex_hi, th) = (&data.rows[lo], &data.rows[hi], &model.rows[lo]);
                let radial: f64 = self
                    .radial
                    .iter()
                    .enumerate()
                    .map(|(k, &wr)| {
                        let g = ex_lo[k].norm_sqr() - ex_hi[k].norm_sqr()
                            + 2.0 * (th[k] * (ex_hi[k] - ex_lo[k].conj())).re;
                        wr * g
                    })
                    .sum();
                wt * radial
            })
            .sum::<f64>()
            / (2.0 * PI);
        let mut diagnostics = self.diagnostics();
        diagnostics.signed_value = Some(signed);
        if self.pair_gap > self.cfg.max_theta_gap + 1e-12 {
            diagnostics.warnings.push(format!(
                "paired phases leave a gap of {:.3} rad in [0, π)",
                self.pair_gap
            ));
        }
        Ok(FunctionalValue {
            value: signed.abs(),
            cfg: self.cfg,
            diagnostics,
        })
    }
}

/// Where a tomogram comes from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Data(&'a QuadratureDataset),
    Model(&'a dyn Tomogram),
}

fn phases_for(sources: &[Source<'_>], cfg: &IntegrationConfig) -> Result<Vec<f64>> {
    let mut phases: Option<&[f64]> = None;
    for s in sources {
        if let Source::Data(d) = s {
            match phases {
                None => phases = Some(d.phases()),
                Some(p) if p == d.phases() => {}
                Some(_) => return Err(Error::PhaseGridMismatch),
            }
        }
    }
    Ok(phases.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.model_phase_grid()))
}

fn table_for(source: &Source<'_>, phases: &[f64], cfg: &IntegrationConfig) -> CfTable {
    match source {
        Source::Data(d) => CfTable::from_dataset(d, cfg),
        Source::Model(m) => CfTable::from_tomogram(*m, phases, cfg),
    }
}

/// `Tr ρ₁ρ₂` from two tomogram sources. Models are evaluated on the dataset's
/// phases when one is involved, otherwise on the uniform model grid.
pub fn overlap_tomographic(a: Source<'_>, b: Source<'_>, cfg: &IntegrationConfig) -> Result<FunctionalValue> {
    let phases = phases_for(&[a, b], cfg)?;
    let integrator = PhaseIntegrator::new(&phases, cfg)?;
    let ta = table_for(&a, &phases, cfg);
    let tb = table_for(&b, &phases, cfg);
    integrator.overlap(&ta, &tb)
}

/// Squared Hilbert–Schmidt distance between data and a model.
pub fn hs_distance_sq<T: Tomogram + ?Sized>(
    data: &QuadratureDataset,
    model: &T,
    cfg: &IntegrationConfig,
) -> Result<FunctionalValue> {
    let integrator = PhaseIntegrator::new(data.phases(), cfg)?;
    let d = CfTable::from_dataset(data, cfg);
    let m = CfTable::from_tomogram(model, data.phases(), cfg);
    integrator.distance_sq(&d, &m)
}

/// `Δ(D²)` between data and a model.
pub fn hs_distance_error<T: Tomogram + ?Sized>(
    data: &QuadratureDataset,
    model: &T,
    cfg: &IntegrationConfig,
) -> Result<FunctionalValue> {
    let integrator = PhaseIntegrator::new(data.phases(), cfg)?;
    let d = CfTable::from_dataset(data, cfg);
    let m = CfTable::from_tomogram(model, data.phases(), cfg);
    integrator.distance_error(&d, &m)
}

/// `Tr ρ_ex²` from data, with the shot-noise bias in `diagnostics.noise_floor`.
pub fn purity_from_data(data: &QuadratureDataset, cfg: &IntegrationConfig) -> Result<FunctionalValue> {
    let integrator = PhaseIntegrator::new(data.phases(), cfg)?;
    let d = CfTable::from_dataset(data, cfg);
    integrator.overlap(&d, &d)
}
