//! Minimal-distance estimation of `(|α|, φ, η)` and, for the dark-count
//! family, the fraction `p`.
//!
//! The fit minimizes `D²` between the data and the model over a box with a
//! multi-start Nelder–Mead. Error bars come from 1-D cuts through the optimum:
//! `SNR = (max D² − min D²) / max Δ(D²)` over the cuts and the error of each
//! parameter is `Δq/SNR`, with `Δq` the full width of its cut at half height.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dataset::QuadratureDataset;
use crate::error::{Error, Result};
use crate::models::{DarkCountMixtureParams, SpacsModelParams, TomogramModel};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::overlap::{CfTable, IntegrationConfig, PhaseIntegrator};
use crate::quadrature::wrap_angle;

pub const MAX_ABS_ALPHA: f64 = 4.0;
pub const MIN_ETA: f64 = 0.01;
pub const DEFAULT_CUT_POINTS: usize = 31;

/// Model family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Spacs,
    DarkCount,
}

impl Family {
    pub fn axes(self) -> &'static [Axis] {
        match self {
            Family::Spacs => &[Axis::AbsAlpha, Axis::Phi, Axis::Eta],
            Family::DarkCount => &[Axis::AbsAlpha, Axis::Phi, Axis::Eta, Axis::P],
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spacs" => Ok(Family::Spacs),
            "dark_count" | "dark-count" => Ok(Family::DarkCount),
            _ => Err(Error::InvalidInput(format!("unknown model family {s:?}"))),
        }
    }
}

/// One fitted coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    AbsAlpha,
    Phi,
    Eta,
    P,
}

impl Axis {
    fn index(self) -> usize {
        self as usize
    }

    /// Scale that maps the coordinate onto roughly `[0, 1]` for the optimizer.
    fn scale(self) -> f64 {
        match self {
            Axis::AbsAlpha => MAX_ABS_ALPHA,
            Axis::Phi => 2.0 * PI,
            Axis::Eta | Axis::P => 1.0,
        }
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            Axis::AbsAlpha => (0.0, MAX_ABS_ALPHA),
            Axis::Phi => (f64::NEG_INFINITY, f64::INFINITY),
            Axis::Eta => (MIN_ETA, 1.0),
            Axis::P => (0.0, 1.0),
        }
    }

    /// Default cut range around `center`, clipped to the box.
    pub fn default_range(self, center: f64) -> (f64, f64) {
        let half = match self {
            Axis::AbsAlpha => 0.3,
            Axis::Phi => 1.5,
            Axis::Eta => 0.15,
            Axis::P => 0.2,
        };
        let (lo, hi) = self.bounds();
        ((center - half).max(lo), (center + half).min(hi))
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::AbsAlpha => "abs_alpha",
            Axis::Phi => "phi",
            Axis::Eta => "eta",
            Axis::P => "p",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs_alpha" | "alpha" => Ok(Axis::AbsAlpha),
            "phi" => Ok(Axis::Phi),
            "eta" => Ok(Axis::Eta),
            "p" => Ok(Axis::P),
            _ => Err(Error::InvalidInput(format!("unknown parameter {s:?}"))),
        }
    }
}

/// Parameters held fixed during the fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl FixedParams {
    pub fn get(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::AbsAlpha => self.abs_alpha,
            Axis::Phi => self.phi,
            Axis::Eta => self.eta,
            Axis::P => self.p,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        let slot = match axis {
            Axis::AbsAlpha => &mut self.abs_alpha,
            Axis::Phi => &mut self.phi,
            Axis::Eta => &mut self.eta,
            Axis::P => &mut self.p,
        };
        *slot = Some(value);
    }

    /// Parses `name=value`.
    pub fn parse_assignment(&mut self, text: &str) -> Result<()> {
        let (name, value) = text
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected name=value, got {text:?}")))?;
        let axis: Axis = name.trim().parse()?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("invalid value in {text:?}")))?;
        let (lo, hi) = axis.bounds();
        if !value.is_finite() || value < lo || value > hi {
            return Err(Error::InvalidInput(format!("{axis} = {value} outside the fit box")));
        }
        self.set(axis, value);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub optimizer: NelderMeadOptions,
    pub fixed: FixedParams,
    pub cut_points: usize,
    pub initial_eta: f64,
    pub initial_p: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            optimizer: NelderMeadOptions::default(),
            fixed: FixedParams::default(),
            cut_points: DEFAULT_CUT_POINTS,
            initial_eta: 0.7,
            initial_p: 0.1,
        }
    }
}

/// `[|α|, φ, η, p]`.
type Coords = [f64; 4];

fn coords_of(model: &TomogramModel) -> Result<(Family, Coords)> {
    match model {
        TomogramModel::Spacs(s) => Ok((Family::Spacs, [s.abs_alpha, s.phi, s.eta, 0.0])),
        TomogramModel::DarkCount(d) => Ok((Family::DarkCount, [d.spacs.abs_alpha, d.spacs.phi, d.spacs.eta, d.p])),
        TomogramModel::Coherent(_) => Err(Error::InvalidInput("coherent states are not a fit family".into())),
    }
}

fn model_of(family: Family, c: &Coords) -> Result<TomogramModel> {
    let spacs = SpacsModelParams::new(c[0], c[1], c[2])?;
    Ok(match family {
        Family::Spacs => TomogramModel::Spacs(spacs),
        Family::DarkCount => TomogramModel::DarkCount(DarkCountMixtureParams::new(spacs, c[3])?),
    })
}

/// `D²` and `Δ(D²)` against a fixed data table.
struct Objective<'a> {
    data: &'a CfTable,
    integrator: PhaseIntegrator,
    cfg: IntegrationConfig,
}

impl<'a> Objective<'a> {
    fn new(data: &'a CfTable, cfg: &IntegrationConfig) -> Result<Self> {
        let cfg = cfg.validated()?;
        if *data.r_grid() != cfg.r_grid() {
            return Err(Error::PhaseGridMismatch);
        }
        Ok(Objective {
            integrator: PhaseIntegrator::new(data.phases(), &cfg)?,
            data,
            cfg,
        })
    }

    fn table(&self, model: &TomogramModel) -> CfTable {
        CfTable::from_tomogram(model, self.data.phases(), &self.cfg)
    }

    fn d2(&self, model: &TomogramModel) -> Result<f64> {
        Ok(self.integrator.distance_sq(self.data, &self.table(model))?.value)
    }

    fn point(&self, model: &TomogramModel) -> Result<(f64, Option<f64>, Vec<String>)> {
        let table = self.table(model);
        let d2 = self.integrator.distance_sq(self.data, &table)?;
        match self.integrator.distance_error(self.data, &table) {
            Ok(e) => {
                let mut warnings = d2.diagnostics.warnings;
                warnings.extend(e.diagnostics.warnings);
                warnings.dedup();
                Ok((d2.value, Some(e.value), warnings))
            }
            Err(Error::MissingPairs { .. }) | Err(Error::Degenerate(_)) => Ok((d2.value, None, d2.diagnostics.warnings)),
            Err(e) => Err(e),
        }
    }
}

/// A 1-D slice of `D²` through a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    pub axis: Axis,
    pub q: Vec<f64>,
    pub d2: Vec<f64>,
    /// `Δ(D²)` at each point; absent when the data has no `θ+π` pairs.
    pub d2_error: Option<Vec<f64>>,
}

impl ScanCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("{},d2,d2_error\n", self.axis);
        for i in 0..self.q.len() {
            let err = self.d2_error.as_ref().map(|e| e[i].to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", self.q[i], self.d2[i], err));
        }
        out
    }

    fn argmin(&self) -> usize {
        (0..self.d2.len()).min_by(|&a, &b| self.d2[a].total_cmp(&self.d2[b])).unwrap_or(0)
    }

    fn extremes(&self) -> (f64, f64) {
        let min = self.d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.d2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    fn max_error(&self) -> Option<f64> {
        self.d2_error.as_ref().map(|e| e.iter().cloned().fold(0.0, f64::max))
    }
}

fn cut_on(objective: &Objective<'_>, family: Family, at: &Coords, axis: Axis, range: (f64, f64), n: usize) -> Result<(ScanCurve, Vec<String>)> {
    let (lo, hi) = range;
    if n < 2 || !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::Degenerate(format!("scan range [{lo}, {hi}] with {n} points")));
    }
    let (blo, bhi) = axis.bounds();
    if lo < blo - 1e-12 || hi > bhi + 1e-12 {
        return Err(Error::InvalidInput(format!("scan range [{lo}, {hi}] leaves the box for {axis}")));
    }
    if family == Family::Spacs && axis == Axis::P {
        return Err(Error::InvalidInput("the spacs family has no parameter p".into()));
    }
    let mut q = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let mut c = *at;
        c[axis.index()] = v;
        let (d, e, w) = objective.point(&model_of(family, &c)?)?;
        q.push(v);
        d2.push(d);
        errors.push(e);
        for item in w {
            if !warnings.contains(&item) {
                warnings.push(item);
            }
        }
    }
    let d2_error = errors.into_iter().collect::<Option<Vec<f64>>>();
    Ok((ScanCurve { axis, q, d2, d2_error }, warnings))
}

/// `D²` along one axis through `params`, with `n_points` evenly spaced over `range`.
pub fn scan_cut(
    data: &QuadratureDataset,
    params: &TomogramModel,
    axis: Axis,
    range: (f64, f64),
    n_points: usize,
    cfg: &IntegrationConfig,
) -> Result<ScanCurve> {
    let table = CfTable::from_dataset(data, cfg);
    scan_cut_table(&table, params, axis, range, n_points, cfg)
}

/// [`scan_cut`] on precomputed characteristic functions.
pub fn scan_cut_table(
    data: &CfTable,
    params: &TomogramModel,
    axis: Axis,
    range: (f64, f64),
    n_points: usize,
    cfg: &IntegrationConfig,
) -> Result<ScanCurve> {
    let (family, at) = coords_of(params)?;
    let objective = Objective::new(data, cfg)?;
    Ok(cut_on(&objective, family, &at, axis, range, n_points)?.0)
}

/// Error bar derived from one cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutError {
    pub axis: Axis,
    /// Full width of the cut at half height.
    pub delta_q: f64,
    /// The cut does not rise above half height on both sides, so `Δq` is the
    /// scan range and the error is a lower bound.
    pub truncated: bool,
    /// SNR used for `error`; `"inf"` when `Δ(D²)` vanishes.
    #[serde(with = "crate::nonfinite")]
    pub snr: f64,
    /// `Δq / snr`; `"inf"` when the cuts are flat.
    #[serde(with = "crate::nonfinite")]
    pub error: f64,
    /// This cut's own SNR.
    #[serde(with = "crate::nonfinite")]
    pub cut_snr: f64,
    /// `Δq / cut_snr`.
    #[serde(with = "crate::nonfinite")]
    pub cut_error: f64,
}

fn snr_ratio(rise: f64, max_error: f64) -> f64 {
    if rise <= 0.0 {
        0.0
    } else if max_error <= 0.0 {
        f64::INFINITY
    } else {
        rise / max_error
    }
}

fn divide_width(delta_q: f64, snr: f64) -> f64 {
    if snr.is_infinite() {
        0.0
    } else {
        delta_q / snr
    }
}

/// `(max D² − min D²) / max Δ(D²)` of one cut.
pub fn cut_snr(cut: &ScanCurve) -> Result<f64> {
    let max_error = cut
        .max_error()
        .ok_or_else(|| Error::Degenerate(format!("the {} cut has no symmetry error", cut.axis)))?;
    let (min, max) = cut.extremes();
    Ok(snr_ratio(max - min, max_error))
}

/// One SNR for a set of cuts through the same optimum,
/// `(max D² − min D²) / max Δ(D²)` over all their points.
pub fn global_snr(cuts: &[ScanCurve]) -> Result<f64> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut max_error: f64 = 0.0;
    for c in cuts {
        let (lo, hi) = c.extremes();
        min = min.min(lo);
        max = max.max(hi);
        max_error = max_error.max(
            c.max_error()
                .ok_or_else(|| Error::Degenerate(format!("the {} cut has no symmetry error", c.axis)))?,
        );
    }
    if cuts.is_empty() {
        return Err(Error::Degenerate("no cuts".into()));
    }
    Ok(snr_ratio(max - min, max_error))
}

/// Half-height width of a cut and whether the scan range truncated it.
pub fn half_height_width(cut: &ScanCurve) -> (f64, bool) {
    let n = cut.q.len();
    let full = cut.q[n - 1] - cut.q[0];
    let (min, max) = cut.extremes();
    if max <= min {
        return (full, true);
    }
    let level = min + 0.5 * (max - min);
    let i0 = cut.argmin();
    let crossing = |a: usize, b: usize| {
        let t = (level - cut.d2[a]) / (cut.d2[b] - cut.d2[a]);
        cut.q[a] + t * (cut.q[b] - cut.q[a])
    };
    let left = (0..i0).rev().find(|&i| cut.d2[i] >= level).map(|i| crossing(i + 1, i));
    let right = (i0 + 1..n).find(|&i| cut.d2[i] >= level).map(|i| crossing(i - 1, i));
    match (left, right) {
        (Some(l), Some(r)) => (r - l, false),
        _ => (full, true),
    }
}

/// `Δq / snr` for every cut, with each cut's own `Δq/SNR` alongside.
pub fn parameter_errors(cuts: &[ScanCurve], snr: f64) -> Result<Vec<CutError>> {
    cuts.iter()
        .map(|cut| {
            if cut.q.len() < 5 {
                return Err(Error::InvalidInput(format!(
                    "the {} cut has {} points, at least 5 are needed",
                    cut.axis,
                    cut.q.len()
                )));
            }
            let (delta_q, truncated) = half_height_width(cut);
            let own = cut_snr(cut)?;
            Ok(CutError {
                axis: cut.axis,
                delta_q,
                truncated,
                snr,
                error: divide_width(delta_q, snr),
                cut_snr: own,
                cut_error: divide_width(delta_q, own),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    #[serde(skip_serializing_if = "Option::is_none", default, with = "optional_nonfinite")]
    pub abs_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "optional_nonfinite")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "optional_nonfinite")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, with = "optional_nonfinite")]
    pub p: Option<f64>,
}

impl ParamErrors {
    fn from_cuts(errors: &[CutError]) -> Self {
        let find = |axis| errors.iter().find(|e| e.axis == axis).map(|e| e.error);
        ParamErrors {
            abs_alpha: find(Axis::AbsAlpha),
            phi: find(Axis::Phi),
            eta: find(Axis::Eta),
            p: find(Axis::P),
        }
    }

    pub fn get(&self, axis: Axis) -> Option<f64> {
        match axis {
            Axis::AbsAlpha => self.abs_alpha,
            Axis::Phi => self.phi,
            Axis::Eta => self.eta,
            Axis::P => self.p,
        }
    }
}

mod optional_nonfinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "crate::nonfinite")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// One optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: TomogramModel,
    pub end: TomogramModel,
    pub d2: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub starts: Vec<StartRecord>,
    /// Total iterations over all starts and the final refinement.
    pub iterations: usize,
    pub evaluations: usize,
    /// Whether the final refinement met the simplex-diameter tolerance.
    pub converged: bool,
}

/// Labels for the choices the error recipe leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorConventions {
    pub width: String,
    pub snr: String,
}

impl Default for ErrorConventions {
    fn default() -> Self {
        ErrorConventions {
            width: "full width at half height of the D2 cut".into(),
            snr: "one SNR over all cuts; per-cut values are reported alongside".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub family: Family,
    pub params: TomogramModel,
    pub d2_min: f64,
    /// `Δ(D²)` at the optimum.
    pub d2_error: Option<f64>,
    /// SNR over all cuts, used for `param_errors`.
    #[serde(default, with = "optional_nonfinite")]
    pub snr: Option<f64>,
    pub param_errors: Option<ParamErrors>,
    pub cut_errors: Vec<CutError>,
    pub cuts: Vec<ScanCurve>,
    pub optimizer: OptimizerTrace,
    /// Error bars were omitted because the data has no `θ+π` pairs.
    pub errors_omitted: bool,
    pub conventions: ErrorConventions,
    pub cfg: IntegrationConfig,
    pub options: EstimatorOptions,
    /// SHA-256 of the dataset's CSV form, when estimated from a dataset.
    pub fingerprint: Option<String>,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn converged(&self) -> bool {
        self.optimizer.converged
    }

    pub fn spacs_params(&self) -> SpacsModelParams {
        match self.params {
            TomogramModel::Spacs(s) => s,
            TomogramModel::DarkCount(d) => d.spacs,
            TomogramModel::Coherent(c) => SpacsModelParams {
                abs_alpha: c.abs_alpha,
                phi: c.phi,
                eta: c.eta,
            },
        }
    }
}

/// Amplitude and phase of the first harmonic of the per-phase means,
/// `m(θ) ≈ c + A cos(θ − φ_h)`, by linear least squares.
pub fn first_harmonic(phases: &[f64], means: &[f64]) -> (f64, f64) {
    // normal equations for [c, a, b] with m = c + a cosθ + b sinθ
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (&t, &m) in phases.iter().zip(means) {
        let row = nalgebra::Vector3::new(1.0, t.cos(), t.sin());
        ata += row * row.transpose();
        atb += row * m;
    }
    match ata.lu().solve(&atb) {
        Some(s) => (s[1].hypot(s[2]), wrap_angle(s[2].atan2(s[1]), 2.0 * PI)),
        None => (0.0, 0.0),
    }
}

fn start_points(data: &CfTable, family: Family, opts: &EstimatorOptions) -> Vec<Coords> {
    let (amp, phase) = first_harmonic(data.phases(), data.means());
    let fixed = &opts.fixed;
    let alpha0 = fixed.abs_alpha.unwrap_or((amp / 2f64.sqrt()).clamp(0.1, MAX_ABS_ALPHA));
    let eta0 = fixed.eta.unwrap_or(opts.initial_eta);
    let p0 = match family {
        Family::Spacs => 0.0,
        Family::DarkCount => fixed.p.unwrap_or(opts.initial_p),
    };
    let phis: Vec<f64> = match fixed.phi {
        Some(phi) => vec![phi],
        None => vec![0.0, 0.5 * PI, PI, 1.5 * PI, phase],
    };
    phis.into_iter().map(|phi| [alpha0, phi, eta0, p0]).collect()
}

/// Fit on precomputed data characteristic functions.
pub fn estimate_table(
    data: &CfTable,
    family: Family,
    cfg: &IntegrationConfig,
    opts: &EstimatorOptions,
    fingerprint: Option<String>,
) -> Result<EstimationResult> {
    let objective = Objective::new(data, cfg)?;
    let free: Vec<Axis> = family.axes().iter().cloned().filter(|a| opts.fixed.get(*a).is_none()).collect();
    for axis in [Axis::AbsAlpha, Axis::Phi, Axis::Eta, Axis::P] {
        if let Some(v) = opts.fixed.get(axis) {
            let (lo, hi) = axis.bounds();
            if !family.axes().contains(&axis) || !(lo..=hi).contains(&v) {
                return Err(Error::InvalidInput(format!("cannot fix {axis} = {v} for this family")));
            }
        }
    }

    let lower: Vec<f64> = free.iter().map(|a| a.bounds().0 / a.scale()).collect();
    let upper: Vec<f64> = free.iter().map(|a| a.bounds().1 / a.scale()).collect();
    let expand = |base: &Coords, x: &[f64]| {
        let mut c = *base;
        for (a, v) in free.iter().zip(x) {
            c[a.index()] = v * a.scale();
        }
        c
    };
    let cost = |c: &Coords| model_of(family, c).and_then(|m| objective.d2(&m)).unwrap_or(f64::INFINITY);

    let mut starts = Vec::new();
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut best: Option<(Coords, f64)> = None;
    for s in start_points(data, family, opts) {
        let x0: Vec<f64> = free.iter().map(|a| s[a.index()] / a.scale()).collect();
        let (end, value, iters, converged) = if free.is_empty() {
            (s, cost(&s), 0, true)
        } else {
            let r = nelder_mead(|x| cost(&expand(&s, x)), &x0, &lower, &upper, &opts.optimizer);
            evaluations += r.evaluations;
            (expand(&s, &r.x), r.value, r.iterations, r.converged)
        };
        iterations += iters;
        starts.push(StartRecord {
            start: model_of(family, &s)?,
            end: model_of(family, &end)?,
            d2: value,
            iterations: iters,
            converged,
        });
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((end, value));
        }
    }
    let (mut at, _) = best.expect("at least one start");

    // restart from the winner with a small simplex
    let converged = if free.is_empty() {
        true
    } else {
        let x0: Vec<f64> = free.iter().map(|a| at[a.index()] / a.scale()).collect();
        let refine = NelderMeadOptions {
            initial_step: (opts.optimizer.initial_step * 0.2).max(10.0 * opts.optimizer.tolerance),
            ..opts.optimizer
        };
        let r = nelder_mead(|x| cost(&expand(&at, x)), &x0, &lower, &upper, &refine);
        iterations += r.iterations;
        evaluations += r.evaluations;
        at = expand(&at, &r.x);
        r.converged
    };
    at[Axis::Phi.index()] = wrap_angle(at[Axis::Phi.index()], 2.0 * PI);
    let params = model_of(family, &at)?;
    let (d2_min, d2_error, mut warnings) = objective.point(&params)?;

    let mut cuts = Vec::new();
    for &axis in &free {
        let range = axis.default_range(at[axis.index()]);
        let (cut, w) = cut_on(&objective, family, &at, axis, range, opts.cut_points)?;
        for item in w {
            if !warnings.contains(&item) {
                warnings.push(item);
            }
        }
        cuts.push(cut);
    }
    let errors_omitted = d2_error.is_none();
    let (cut_errors, param_errors, snr) = if errors_omitted {
        warnings.push("no phase pairs (θ, θ+π) in the data; error bars omitted".into());
        (Vec::new(), None, None)
    } else {
        let snr = global_snr(&cuts)?;
        let ce = parameter_errors(&cuts, snr)?;
        for e in &ce {
            if e.truncated {
                warnings.push(format!("the {} cut is truncated by the scan range", e.axis));
            }
        }
        let pe = ParamErrors::from_cuts(&ce);
        (ce, Some(pe), Some(snr))
    };
    if !converged {
        warnings.push(format!("optimizer did not converge within {} iterations", opts.optimizer.max_iterations));
    }

    Ok(EstimationResult {
        family,
        params,
        d2_min,
        d2_error,
        snr,
        param_errors,
        cut_errors,
        cuts,
        optimizer: OptimizerTrace {
            starts,
            iterations,
            evaluations,
            converged,
        },
        errors_omitted,
        conventions: ErrorConventions::default(),
        cfg: objective.cfg,
        options: *opts,
        fingerprint,
        warnings,
    })
}

/// Minimal-distance fit of `family` to a dataset.
pub fn estimate(
    data: &QuadratureDataset,
    family: Family,
    cfg: &IntegrationConfig,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let cfg = cfg.validated()?;
    let table = CfTable::from_dataset(data, &cfg);
    estimate_table(&table, family, &cfg, opts, Some(data.fingerprint()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(q: Vec<f64>, d2: Vec<f64>, err: f64) -> ScanCurve {
        let n = q.len();
        ScanCurve {
            axis: Axis::Eta,
            q,
            d2,
            d2_error: Some(vec![err; n]),
        }
    }

    fn parabola(err: f64) -> ScanCurve {
        let q: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let d2 = q.iter().map(|x| x * x).collect();
        curve(q, d2, err)
    }

    #[test]
    fn half_height_of_parabola() {
        // x² reaches 0.5 at ±√0.5; linear interpolation between grid points
        let (w, truncated) = half_height_width(&parabola(0.1));
        assert!(!truncated);
        assert!((w - 2.0 * 0.5f64.sqrt()).abs() < 0.02, "{w}");
    }

    #[test]
    fn snr_and_error_follow_the_formula() {
        let c = parabola(0.1);
        let snr = cut_snr(&c).unwrap();
        assert!((snr - 10.0).abs() < 1e-12);
        let e = parameter_errors(std::slice::from_ref(&c), 4.0).unwrap()[0];
        assert!((e.error - e.delta_q / 4.0).abs() < 1e-15);
        assert!((e.cut_error - e.delta_q / 10.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_the_symmetry_error_doubles_the_error_bar() {
        let errors = |err| {
            let cuts = [parabola(err)];
            parameter_errors(&cuts, global_snr(&cuts).unwrap()).unwrap()[0]
        };
        let (a, b) = (errors(0.1), errors(0.2));
        assert!((b.snr - a.snr / 2.0).abs() < 1e-12);
        assert!((b.error - 2.0 * a.error).abs() < 1e-12);
    }

    #[test]
    fn vanishing_symmetry_error_gives_zero_error_bar() {
        let cuts = [parabola(0.0)];
        let e = parameter_errors(&cuts, global_snr(&cuts).unwrap()).unwrap()[0];
        assert!(e.snr.is_infinite());
        assert_eq!(e.error, 0.0);
    }

    #[test]
    fn truncated_and_flat_cuts() {
        let q: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let rising = curve(q.clone(), q.iter().map(|x| x * x).collect(), 0.01);
        let e = parameter_errors(&[rising], 1.0).unwrap()[0];
        assert!(e.truncated);
        assert!((e.delta_q - 1.0).abs() < 1e-12);

        let flat = curve(q, vec![0.3; 11], 0.01);
        let cuts = [flat];
        let e = parameter_errors(&cuts, global_snr(&cuts).unwrap()).unwrap()[0];
        assert!(e.truncated && e.snr == 0.0 && e.error.is_infinite());
    }

    #[test]
    fn short_cut_is_rejected() {
        let c = curve(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], 0.1);
        assert!(parameter_errors(&[c], 1.0).is_err());
    }

    #[test]
    fn fixed_assignment_parsing() {
        let mut f = FixedParams::default();
        f.parse_assignment("eta=0.58").unwrap();
        assert_eq!(f.eta, Some(0.58));
        assert!(f.parse_assignment("eta").is_err());
        assert!(f.parse_assignment("eta=1.5").is_err());
        assert!(f.parse_assignment("gamma=1").is_err());
    }

    #[test]
    fn harmonic_fit_recovers_amplitude_and_phase() {
        let phases: Vec<f64> = (0..12).map(|j| j as f64 * PI / 6.0).collect();
        let means: Vec<f64> = phases.iter().map(|t| 0.2 + 1.3 * (t - 2.0).cos()).collect();
        let (amp, phase) = first_harmonic(&phases, &means);
        assert!((amp - 1.3).abs() < 1e-12 && (phase - 2.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_data_is_recovered() {
        let cfg = IntegrationConfig::default();
        let truth = TomogramModel::spacs(0.81, 3.14, 0.58).unwrap();
        let phases = crate::dataset::default_phase_grid(20);
        let table = CfTable::from_tomogram(&truth, &phases, &cfg);
        let r = estimate_table(&table, Family::Spacs, &cfg, &EstimatorOptions::default(), None).unwrap();
        let p = r.spacs_params();
        assert!(r.d2_min < 1e-6, "{}", r.d2_min);
        assert!((p.abs_alpha - 0.81).abs() < 1e-3, "{p:?}");
        assert!((p.phi - 3.14).abs() < 1e-3, "{p:?}");
        assert!((p.eta - 0.58).abs() < 1e-3, "{p:?}");
        assert!(r.d2_error.unwrap() < 1e-9);
    }

    #[test]
    fn cut_through_the_optimum_is_minimal_there() {
        let cfg = IntegrationConfig::default();
        let truth = TomogramModel::spacs(0.81, 3.14, 0.58).unwrap();
        let phases = crate::dataset::default_phase_grid(20);
        let table = CfTable::from_tomogram(&truth, &phases, &cfg);
        let c = scan_cut_table(&table, &truth, Axis::Eta, Axis::Eta.default_range(0.58), 31, &cfg).unwrap();
        let i = c.argmin();
        assert_eq!(i, 15);
        assert!(c.d2[i] < 1e-9);
        assert!(c.d2.iter().enumerate().all(|(k, &d)| k == i || d > 1e-6));
        assert!(scan_cut_table(&table, &truth, Axis::Eta, (0.5, 0.5), 31, &cfg).is_err());
        assert!(scan_cut_table(&table, &truth, Axis::P, (0.0, 0.5), 31, &cfg).is_err());
    }

    #[test]
    fn result_json_round_trips() {
        let cfg = IntegrationConfig::default();
        let truth = TomogramModel::spacs(0.5, 1.0, 0.9).unwrap();
        let phases = crate::dataset::default_phase_grid(8);
        let table = CfTable::from_tomogram(&truth, &phases, &cfg);
        let mut opts = EstimatorOptions::default();
        opts.fixed.eta = Some(0.9);
        opts.cut_points = 7;
        let r = estimate_table(&table, Family::Spacs, &cfg, &opts, Some("abc".into())).unwrap();
        assert_eq!(r.cuts.len(), 2);
        let text = serde_json::to_string(&r).unwrap();
        let back: EstimationResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.params, r.params);
        assert_eq!(back.fingerprint.as_deref(), Some("abc"));
        assert_eq!(back.param_errors.unwrap().eta, None);
    }
}
