//! Lower and upper bounds on the fidelity between the fitted state `ρ_th` and
//! the measured state `ρ_ex`.
//!
//! ```text
//! E″ = Tr ρ_th ρ_ex
//! E′ = Tr ρ_th ρ_ex + √(2[(Tr ρ_th ρ_ex)² − Tr ρ_th⁴ − |Tr ρ_ex² − Tr ρ_th²|])
//! G  = Tr ρ_th ρ_ex + √((1 − Tr ρ_th²)(1 − Tr ρ_ex²))
//! ```
//!
//! `E″ ≤ F² ≤ G` and, when its radicand is nonnegative, `E′ ≤ F²`. Every
//! quantity is tomographic except the traces of `ρ_th`, which come from the
//! model.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::QuadratureDataset;
use crate::error::{Error, Result};
use crate::fock::{apply_loss, auto_truncation, coherent_state, spacs_state, DensityMatrix};
use crate::models::TomogramModel;
use crate::overlap::{CfTable, IntegrationConfig, PhaseIntegrator};
use crate::stats;

/// `Tr ρ_th²` and `Tr ρ_th⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalTraces {
    pub purity_th: f64,
    pub four_th: f64,
}

/// Closed-form traces of the lossy photon-added coherent state.
///
/// The state has rank two with eigenvalues `1 − q` and `q`,
/// `q = η(1−η)/(1+|α|²)²`.
pub fn theoretical_traces(abs_alpha: f64, eta: f64) -> TheoreticalTraces {
    let q = eta * (1.0 - eta) / (1.0 + abs_alpha * abs_alpha).powi(2);
    TheoreticalTraces {
        purity_th: 1.0 - 2.0 * q,
        four_th: 1.0 - 4.0 * q + 2.0 * q * q,
    }
}

/// Density matrix of any model family, for the Fock oracle.
pub fn model_state(model: &TomogramModel) -> Result<DensityMatrix> {
    model_state_in(model, auto_truncation(model_abs_alpha(model)))
}

fn model_abs_alpha(model: &TomogramModel) -> f64 {
    match model {
        TomogramModel::Spacs(s) => s.abs_alpha,
        TomogramModel::DarkCount(d) => d.spacs.abs_alpha,
        TomogramModel::Coherent(c) => c.abs_alpha,
    }
}

/// [`model_state`] on levels `0..=truncation`, e.g. to compare two states in
/// the same space.
pub fn model_state_in(model: &TomogramModel, truncation: usize) -> Result<DensityMatrix> {
    match model {
        TomogramModel::Spacs(s) => apply_loss(&spacs_state(s.alpha(), truncation)?, s.eta),
        TomogramModel::Coherent(c) => {
            let alpha = Complex64::from_polar(c.abs_alpha, c.phi);
            apply_loss(&coherent_state(alpha, truncation)?, c.eta)
        }
        TomogramModel::DarkCount(d) => {
            let s = &d.spacs;
            let dim = truncation;
            let spacs = apply_loss(&spacs_state(s.alpha(), dim)?, s.eta)?;
            let coherent = apply_loss(&coherent_state(s.alpha(), dim)?, s.eta)?;
            let mixed = spacs.as_matrix() * Complex64::new(1.0 - d.p, 0.0)
                + coherent.as_matrix() * Complex64::new(d.p, 0.0);
            DensityMatrix::from_matrix(mixed)
        }
    }
}

/// Both states in a common space large enough for either.
pub fn model_state_pair(a: &TomogramModel, b: &TomogramModel) -> Result<(DensityMatrix, DensityMatrix)> {
    let n = auto_truncation(model_abs_alpha(a).max(model_abs_alpha(b)));
    Ok((model_state_in(a, n)?, model_state_in(b, n)?))
}

/// Traces of a model state: closed form for the photon-added family,
/// the Fock oracle otherwise.
pub fn model_traces(model: &TomogramModel) -> Result<(TheoreticalTraces, TraceSource)> {
    match model {
        TomogramModel::Spacs(s) => Ok((theoretical_traces(s.abs_alpha, s.eta), TraceSource::ClosedForm)),
        _ => {
            let rho = model_state(model)?;
            let sq = rho.as_matrix() * rho.as_matrix();
            let four = (&sq * &sq).trace().re;
            Ok((
                TheoreticalTraces {
                    purity_th: rho.purity(),
                    four_th: four,
                },
                TraceSource::FockOracle,
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    ClosedForm,
    FockOracle,
}

/// A value with an optional one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub uncertainty: Option<f64>,
}

impl Measured {
    pub fn exact(value: f64) -> Self {
        Measured {
            value,
            uncertainty: Some(0.0),
        }
    }

    pub fn new(value: f64, uncertainty: f64) -> Self {
        Measured {
            value,
            uncertainty: Some(uncertainty),
        }
    }

    fn sigma(&self) -> f64 {
        self.uncertainty.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperFidelity {
    pub g: Measured,
    /// A purity fell outside `[0, 1]` and was clamped.
    pub purity_clamped: bool,
    /// No overlap uncertainty was supplied, so `g` has none either.
    pub uncertainty_missing: bool,
}

fn clamp_unit(x: f64, clamped: &mut bool) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        *clamped = true;
    }
    x.clamp(0.0, 1.0)
}

/// `G = Tr ρ_th ρ_ex + √((1 − Tr ρ_th²)(1 − Tr ρ_ex²))` with first-order
/// uncertainty propagation.
pub fn super_fidelity(overlap: Measured, purity_th: f64, purity_ex: Measured) -> SuperFidelity {
    let mut clamped = false;
    let a = 1.0 - clamp_unit(purity_th, &mut clamped);
    let b = 1.0 - clamp_unit(purity_ex.value, &mut clamped);
    let root = |b: f64| (a * b).sqrt();
    let value = overlap.value + root(b);

    let sigma_p = purity_ex.sigma();
    let from_purity = if sigma_p == 0.0 || a == 0.0 {
        0.0
    } else if b > sigma_p {
        0.5 * a / root(b) * sigma_p
    } else {
        // the derivative blows up at b = 0; use half the range instead
        let lo = 1.0 - (purity_ex.value + sigma_p).clamp(0.0, 1.0);
        let hi = 1.0 - (purity_ex.value - sigma_p).clamp(0.0, 1.0);
        0.5 * (root(hi) - root(lo))
    };
    let uncertainty = overlap.uncertainty.map(|s| s.hypot(from_purity));
    SuperFidelity {
        g: Measured { value, uncertainty },
        purity_clamped: clamped,
        uncertainty_missing: overlap.uncertainty.is_none(),
    }
}

/// Outcome of the modified sub-fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ModifiedSubFidelity {
    Computed {
        value: f64,
        uncertainty: f64,
        radicand: f64,
        radicand_interval: [f64; 2],
    },
    /// The radicand interval reaches below zero.
    NotComputable { radicand: f64, radicand_interval: [f64; 2] },
}

impl ModifiedSubFidelity {
    pub fn value(&self) -> Option<f64> {
        match self {
            ModifiedSubFidelity::Computed { value, .. } => Some(*value),
            ModifiedSubFidelity::NotComputable { .. } => None,
        }
    }

    pub fn radicand_interval(&self) -> [f64; 2] {
        match self {
            ModifiedSubFidelity::Computed { radicand_interval, .. }
            | ModifiedSubFidelity::NotComputable { radicand_interval, .. } => *radicand_interval,
        }
    }
}

/// `E′`, or [`ModifiedSubFidelity::NotComputable`] when the one-sigma interval of
/// its radicand `R = 2[O² − Tr ρ_th⁴ − |P_ex − P_th|]` reaches below zero.
pub fn sub_fidelity_modified(
    overlap: Measured,
    purity_th: f64,
    four_th: f64,
    purity_ex: Measured,
) -> ModifiedSubFidelity {
    let o = overlap.value;
    let radicand = 2.0 * (o * o - four_th - (purity_ex.value - purity_th).abs());
    // |∂R/∂O| = 4|O|, |∂R/∂P_ex| = 2
    let sigma_r = (4.0 * o * overlap.sigma()).hypot(2.0 * purity_ex.sigma());
    let radicand_interval = [radicand - sigma_r, radicand + sigma_r];
    if radicand_interval[0] < 0.0 {
        return ModifiedSubFidelity::NotComputable {
            radicand,
            radicand_interval,
        };
    }
    let root = radicand.sqrt();
    let uncertainty = if root > 0.0 {
        ((1.0 + 2.0 * o / root) * overlap.sigma()).hypot(purity_ex.sigma() / root)
    } else {
        0.0
    };
    ModifiedSubFidelity::Computed {
        value: o + root,
        uncertainty,
        radicand,
        radicand_interval,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidelityOptions {
    pub bootstrap_resamples: usize,
    /// Radial step used inside the bootstrap loop.
    pub bootstrap_r_step: f64,
    pub seed: u64,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        FidelityOptions {
            bootstrap_resamples: 200,
            bootstrap_r_step: 0.1,
            seed: 0,
        }
    }
}

/// A data functional with its uncertainty budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub value: f64,
    /// Half the difference between the value from the lower phase of each
    /// `(θ, θ+π)` pair and from the mirrored upper phase.
    pub systematic: f64,
    /// Bootstrap standard deviation.
    pub statistical: f64,
    /// `systematic ⊕ statistical`.
    pub uncertainty: f64,
}

impl Functional {
    fn new(value: f64, halves: Option<(f64, f64)>, boot: &[f64]) -> Self {
        let systematic = halves.map_or(0.0, |(lo, hi)| 0.5 * (lo - hi).abs());
        let statistical = if boot.len() > 1 { stats::std_dev(boot) } else { 0.0 };
        Functional {
            value,
            systematic,
            statistical,
            uncertainty: systematic.hypot(statistical),
        }
    }

    pub fn measured(&self) -> Measured {
        Measured::new(self.value, self.uncertainty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBounds {
    pub params: TomogramModel,
    /// `E″ = Tr ρ_th ρ_ex`.
    pub e_double_prime: Measured,
    pub e_prime: ModifiedSubFidelity,
    pub g: Measured,
    pub traces: TheoreticalTraces,
    pub traces_source: TraceSource,
    pub overlap: Functional,
    pub purity_ex: Functional,
    /// Expected shot-noise excess of `purity_ex`; not subtracted.
    pub purity_noise_floor: f64,
    pub purity_clamped: bool,
    pub uncertainty_method: String,
    pub cfg: IntegrationConfig,
    pub options: FidelityOptions,
    pub fingerprint: String,
    pub warnings: Vec<String>,
}

/// Bounds from already known functionals, e.g. noise-free model inputs.
pub fn fidelity_bounds_from_functionals(
    overlap: Measured,
    traces: TheoreticalTraces,
    purity_ex: Measured,
) -> (Measured, ModifiedSubFidelity, SuperFidelity) {
    (
        overlap,
        sub_fidelity_modified(overlap, traces.purity_th, traces.four_th, purity_ex),
        super_fidelity(overlap, traces.purity_th, purity_ex),
    )
}

/// Per-resample generator: one ChaCha stream per resample index.
fn bootstrap_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Overlap and purity of a dataset against a model table.
fn functionals(data: &CfTable, integrator: &PhaseIntegrator, model: &CfTable) -> Result<(f64, f64)> {
    Ok((integrator.overlap(data, model)?.value, integrator.overlap(data, data)?.value))
}

/// `E″`, `E′` and `G` between `data` and the model `params`.
pub fn fidelity_report(
    data: &QuadratureDataset,
    params: &TomogramModel,
    cfg: &IntegrationConfig,
    opts: &FidelityOptions,
) -> Result<FidelityBounds> {
    let cfg = cfg.validated()?;
    let params = params.validated()?;
    let mut warnings = Vec::new();

    let integrator = PhaseIntegrator::new(data.phases(), &cfg)?;
    let model = CfTable::from_tomogram(&params, data.phases(), &cfg);
    let table = CfTable::from_dataset(data, &cfg);
    let o = integrator.overlap(&table, &model)?.value;
    let purity = integrator.overlap(&table, &table)?;
    let (p, floor) = (purity.value, purity.diagnostics.noise_floor);

    let (o_halves, p_halves) = if integrator.pairs().is_empty() {
        warnings.push("no phase pairs (θ, θ+π); the mirror term is zero".into());
        (None, None)
    } else {
        (
            Some(integrator.half_overlaps(&table, &model)?),
            Some(integrator.half_overlaps(&table, &table)?),
        )
    };

    let mut o_boot = Vec::with_capacity(opts.bootstrap_resamples);
    let mut p_boot = Vec::with_capacity(opts.bootstrap_resamples);
    if opts.bootstrap_resamples > 0 {
        let coarse = IntegrationConfig {
            r_step: opts.bootstrap_r_step.max(cfg.r_step),
            ..cfg
        }
        .validated()?;
        let coarse_integrator = PhaseIntegrator::new(data.phases(), &coarse)?;
        let coarse_model = CfTable::from_tomogram(&params, data.phases(), &coarse);
        for b in 0..opts.bootstrap_resamples {
            let resampled = data.resampled(&mut bootstrap_rng(opts.seed, b));
            let table = CfTable::from_dataset(&resampled, &coarse);
            let (ob, pb) = functionals(&table, &coarse_integrator, &coarse_model)?;
            o_boot.push(ob);
            p_boot.push(pb);
        }
    } else {
        warnings.push("no bootstrap resamples; statistical uncertainty set to zero".into());
    }

    let overlap = Functional::new(o, o_halves, &o_boot);
    let purity_ex = Functional::new(p, p_halves, &p_boot);
    let (traces, traces_source) = model_traces(&params)?;
    if traces.purity_th <= 0.0 || traces.purity_th > 1.0 + 1e-12 {
        return Err(Error::Degenerate(format!("model purity {} outside (0, 1]", traces.purity_th)));
    }
    let (e2, e1, g) = fidelity_bounds_from_functionals(overlap.measured(), traces, purity_ex.measured());
    if g.purity_clamped {
        warnings.push(format!("purity_ex = {:.4} clamped to [0, 1] in G", purity_ex.value));
    }

    Ok(FidelityBounds {
        params,
        e_double_prime: e2,
        e_prime: e1,
        g: g.g,
        traces,
        traces_source,
        overlap,
        purity_ex,
        purity_noise_floor: floor,
        purity_clamped: g.purity_clamped,
        uncertainty_method: format!(
            "half the difference between lower and mirrored upper (θ+π, X→−X) phases, combined in quadrature with a {}-resample bootstrap standard deviation",
            opts.bootstrap_resamples
        ),
        cfg,
        options: *opts,
        fingerprint: data.fingerprint(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::trace_functionals;

    #[test]
    fn traces_at_the_fitted_point() {
        let t = theoretical_traces(0.81, 0.58);
        assert!((t.purity_th - 0.8224).abs() < 5e-5, "{}", t.purity_th);
        assert!((t.four_th - 0.6605).abs() < 5e-5, "{}", t.four_th);
        let radicand = 2.0 * (t.purity_th.powi(2) - t.four_th);
        assert!((radicand - 0.032).abs() < 5e-4, "{radicand}");
    }

    #[test]
    fn pure_limits() {
        for a in [0.0, 0.7, 2.0] {
            for eta in [0.0, 1.0] {
                let t = theoretical_traces(a, eta);
                assert_eq!((t.purity_th, t.four_th), (1.0, 1.0));
            }
        }
    }

    #[test]
    fn traces_match_the_oracle() {
        for &(a, eta) in &[(0.0, 0.3), (0.81, 0.58), (2.0, 0.9)] {
            let rho = model_state(&TomogramModel::spacs(a, 1.0, eta).unwrap()).unwrap();
            let f = trace_functionals(&rho, &rho).unwrap();
            let t = theoretical_traces(a, eta);
            assert!((f.purity1 - t.purity_th).abs() < 1e-8);
            assert!((f.four_product - t.four_th).abs() < 1e-8);
        }
    }

    #[test]
    fn dark_count_state_is_a_mixture() {
        let m = TomogramModel::DarkCount(
            crate::models::DarkCountMixtureParams::new(crate::SpacsModelParams::new(0.8, 0.0, 0.7).unwrap(), 0.2)
                .unwrap(),
        );
        let (t, source) = model_traces(&m).unwrap();
        assert_eq!(source, TraceSource::FockOracle);
        assert!(t.purity_th < theoretical_traces(0.8, 0.7).purity_th);
        assert!(t.four_th <= t.purity_th.powi(2) + 1e-12);
        let rho = model_state(&m).unwrap();
        let w = crate::fock::tomogram_of(&rho, 0.4, 1.1);
        assert!((w - crate::models::Tomogram::density(&m, 0.4, 1.1)).abs() < 1e-9);
    }

    #[test]
    fn same_state_super_fidelity_is_one() {
        let g = super_fidelity(Measured::exact(0.8224), 0.8224, Measured::exact(0.8224));
        assert!((g.g.value - 1.0).abs() < 1e-12);
        assert!(!g.purity_clamped);
    }

    #[test]
    fn super_fidelity_flags() {
        let g = super_fidelity(
            Measured {
                value: 0.9,
                uncertainty: None,
            },
            0.8,
            Measured::new(1.05, 0.01),
        );
        assert!(g.purity_clamped && g.uncertainty_missing && g.g.uncertainty.is_none());
        assert!((g.g.value - 0.9).abs() < 1e-15);
    }

    #[test]
    fn super_fidelity_propagation_matches_finite_difference() {
        let (o, pt, pe, s) = (0.8, 0.82, 0.7, 1e-3);
        let g = super_fidelity(Measured::new(o, 0.0), pt, Measured::new(pe, s));
        let f = |pe: f64| o + ((1.0 - pt) * (1.0 - pe)).sqrt();
        let fd = (f(pe + 1e-6) - f(pe - 1e-6)).abs() / 2e-6 * s;
        assert!((g.g.uncertainty.unwrap() - fd).abs() < 1e-9);
    }

    #[test]
    fn analytic_same_state_sub_fidelity() {
        let t = theoretical_traces(0.81, 0.58);
        let p = Measured::exact(t.purity_th);
        let e = sub_fidelity_modified(p, t.purity_th, t.four_th, p);
        let v = e.value().unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn not_computable_exactly_when_interval_crosses_zero() {
        // O = 0.82, four = 0.6605, purities equal → R = 2(0.6724 − 0.6605) = 0.0238
        let (pt, four) = (0.82, 0.6605);
        let r = 2.0 * (0.82f64 * 0.82 - four);
        for sigma_p in [0.0, 0.005, 0.0118, 0.0120, 0.05] {
            let e = sub_fidelity_modified(Measured::exact(0.82), pt, four, Measured::new(pt, sigma_p));
            let lo = e.radicand_interval()[0];
            assert!((lo - (r - 2.0 * sigma_p)).abs() < 1e-12);
            assert_eq!(e.value().is_none(), lo < 0.0, "sigma {sigma_p}");
        }
    }

    #[test]
    fn orthogonal_pure_states_are_not_computable() {
        let e = sub_fidelity_modified(Measured::exact(0.0), 1.0, 1.0, Measured::exact(1.0));
        match e {
            ModifiedSubFidelity::NotComputable { radicand, .. } => assert!(radicand <= -1.0),
            _ => panic!("expected NotComputable"),
        }
    }

    #[test]
    fn reported_interval_serializes() {
        let e = ModifiedSubFidelity::NotComputable {
            radicand: -0.01,
            radicand_interval: [-0.07, 0.05],
        };
        let v = serde_json::to_value(e).unwrap();
        assert_eq!(v["status"], "not_computable");
        assert_eq!(v["radicand_interval"][0], -0.07);
    }
}
