//! Cross-checks of the closed forms and tomographic functionals against the
//! Fock-space oracle.

use serde::Serialize;
use spacs_core::dataset::{sample_phase, SAMPLING_GRID};
use spacs_core::fidelity::{model_state, model_state_pair, theoretical_traces};
use spacs_core::fock::{tomogram_of, trace_functionals};
use spacs_core::overlap::{overlap_tomographic, IntegrationConfig, Source};
use spacs_core::quadrature::{trapezoid, UniformGrid};
use spacs_core::stats::{ks_critical_value, ks_one_sample};
use spacs_core::{Result, Tomogram, TomogramModel};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

const ALPHAS: [f64; 4] = [0.0, 0.5, 0.81, 2.0];
const ETAS: [f64; 3] = [0.3, 0.58, 1.0];
const THETAS: [f64; 3] = [0.0, 1.0, 2.49];

fn tomogram_vs_oracle() -> Result<f64> {
    let xs = UniformGrid::new(-6.0, 6.0, 0.05).points();
    let mut worst: f64 = 0.0;
    for a in ALPHAS {
        for eta in ETAS {
            let model = TomogramModel::spacs(a, 0.4, eta)?;
            let rho = model_state(&model)?;
            for theta in THETAS {
                for &x in &xs {
                    worst = worst.max((model.density(x, theta) - tomogram_of(&rho, x, theta)).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn normalization() -> Result<f64> {
    let grid = UniformGrid::new(-10.0, 10.0, 0.01);
    let xs = grid.points();
    let mut worst: f64 = 0.0;
    for a in ALPHAS {
        for eta in ETAS {
            let model = TomogramModel::spacs(a, 0.4, eta)?;
            for theta in THETAS {
                let values: Vec<f64> = xs.iter().map(|&x| model.density(x, theta)).collect();
                worst = worst.max((trapezoid(&values, grid.step) - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn traces_vs_oracle() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for a in ALPHAS {
        for eta in ETAS {
            let rho = model_state(&TomogramModel::spacs(a, 0.0, eta)?)?;
            let f = trace_functionals(&rho, &rho)?;
            let t = theoretical_traces(a, eta);
            worst = worst
                .max((f.purity1 - t.purity_th).abs())
                .max((f.four_product - t.four_th).abs());
        }
    }
    Ok(worst)
}

pub const OVERLAP_PAIRS: [((f64, f64, f64), (f64, f64, f64)); 5] = [
    ((0.81, 3.14, 0.58), (0.81, 3.14, 0.58)),
    ((0.81, 3.14, 0.58), (0.5, 0.0, 0.9)),
    ((0.0, 0.0, 0.3), (2.0, 1.0, 1.0)),
    ((0.81, 1.0, 0.58), (0.81, 2.49, 0.3)),
    ((0.5, 0.0, 1.0), (2.0, 2.49, 0.58)),
];

fn overlap_vs_oracle() -> Result<f64> {
    let cfg = IntegrationConfig::default();
    let mut worst: f64 = 0.0;
    for ((a1, p1, e1), (a2, p2, e2)) in OVERLAP_PAIRS {
        let m1 = TomogramModel::spacs(a1, p1, e1)?;
        let m2 = TomogramModel::spacs(a2, p2, e2)?;
        let tomographic = overlap_tomographic(Source::Model(&m1), Source::Model(&m2), &cfg)?.value;
        let (r1, r2) = model_state_pair(&m1, &m2)?;
        let exact = trace_functionals(&r1, &r2)?.overlap;
        worst = worst.max((tomographic - exact).abs());
    }
    Ok(worst)
}

/// One-sample KS statistic of 2000 draws relative to the 1% critical value.
fn sampler_ks() -> Result<f64> {
    let model = TomogramModel::spacs(0.81, 3.14, 0.58)?;
    let samples = sample_phase(&model, 1.0, 2000, 11)?;
    let grid = SAMPLING_GRID;
    let pdf: Vec<f64> = grid.points().iter().map(|&x| model.density(x, 1.0)).collect();
    let mut cdf = vec![0.0; pdf.len()];
    for k in 1..pdf.len() {
        cdf[k] = cdf[k - 1] + 0.5 * grid.step * (pdf[k - 1] + pdf[k]);
    }
    let at = |x: f64| {
        let pos = ((x - grid.min) / grid.step).clamp(0.0, (pdf.len() - 1) as f64);
        let k = (pos.floor() as usize).min(pdf.len() - 2);
        cdf[k] + (pos - k as f64) * (cdf[k + 1] - cdf[k])
    };
    Ok(ks_one_sample(&samples, at) / ks_critical_value(samples.len(), 0.01))
}

pub fn run() -> Result<Vec<Check>> {
    Ok(vec![
        Check::below("closed-form tomogram vs Fock oracle (max abs diff)", tomogram_vs_oracle()?, 1e-8),
        Check::below("tomogram normalization (max |integral - 1|)", normalization()?, 1e-8),
        Check::below("closed-form traces vs Fock oracle (max abs diff)", traces_vs_oracle()?, 1e-8),
        Check::below("tomographic overlap vs Fock oracle (max abs diff)", overlap_vs_oracle()?, 1e-3),
        Check::below("sampler KS statistic / 1% critical value", sampler_ks()?, 1.0),
    ])
}
