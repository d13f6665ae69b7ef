//! Closed-form quadrature distributions used as the theoretical side of a fit.
//!
//! The photon-added coherent state after a loss channel of efficiency `η` has
//! the tomogram
//!
//! ```text
//! w(X, θ) = [ (1-η)(1 + 4η|α|² sin²δ)
//!           + 2η((X cosδ − (2η−1)|α|/√(2η))² + X² sin²δ) ]
//!           · exp(−(X − √(2η)|α| cosδ)²) / (√π (1+|α|²)),   δ = θ − φ
//! ```
//!
//! which is a quadratic polynomial times a unit Gaussian, so its
//! characteristic function in `X` is also available in closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, fourier_sums, wrap_angle, UniformGrid};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// A quadrature distribution `w(X, θ)`.
pub trait Tomogram {
    fn density(&self, x: f64, theta: f64) -> f64;

    /// `F(r, θ) = ∫ e^{irX} w(X, θ) dX` on the grid `r`.
    ///
    /// The default integrates `density` by the trapezoid rule over `x`.
    fn characteristic_row(&self, theta: f64, r: &UniformGrid, x: &UniformGrid) -> Vec<Complex64> {
        let xs = x.points();
        let weights: Vec<f64> = x
            .trapezoid_weights()
            .iter()
            .zip(&xs)
            .map(|(w, &xi)| w * self.density(xi, theta))
            .collect();
        fourier_sums(&xs, &weights, r)
    }

    /// Mean quadrature at phase `theta`.
    fn mean(&self, theta: f64, x: &UniformGrid) -> f64 {
        x.points()
            .iter()
            .zip(x.trapezoid_weights())
            .map(|(&xi, w)| w * xi * self.density(xi, theta))
            .sum()
    }
}

impl<T: Tomogram + ?Sized> Tomogram for &T {
    fn density(&self, x: f64, theta: f64) -> f64 {
        (**self).density(x, theta)
    }
    fn characteristic_row(&self, theta: f64, r: &UniformGrid, x: &UniformGrid) -> Vec<Complex64> {
        (**self).characteristic_row(theta, r, x)
    }
    fn mean(&self, theta: f64, x: &UniformGrid) -> f64 {
        (**self).mean(theta, x)
    }
}

/// Parameters of the lossy photon-added coherent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacsModelParams {
    pub abs_alpha: f64,
    /// State phase in radians, kept in `[0, 2π)`.
    pub phi: f64,
    pub eta: f64,
}

impl SpacsModelParams {
    pub fn new(abs_alpha: f64, phi: f64, eta: f64) -> Result<Self> {
        SpacsModelParams { abs_alpha, phi, eta }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.abs_alpha.is_finite() && self.abs_alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("|alpha| = {} must be >= 0", self.abs_alpha)));
        }
        if !self.phi.is_finite() {
            return Err(Error::InvalidInput(format!("phi = {} is not finite", self.phi)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidInput(format!("eta = {} outside (0, 1]", self.eta)));
        }
        Ok(SpacsModelParams {
            phi: wrap_angle(self.phi, 2.0 * PI),
            ..self
        })
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.abs_alpha, self.phi)
    }
}

/// Dark-count mixture `(1−p) w_SPACS + p w_coherent` sharing `α` and `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkCountMixtureParams {
    #[serde(flatten)]
    pub spacs: SpacsModelParams,
    pub p: f64,
}

impl DarkCountMixtureParams {
    pub fn new(spacs: SpacsModelParams, p: f64) -> Result<Self> {
        DarkCountMixtureParams { spacs, p }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidInput(format!("dark-count fraction p = {} outside [0, 1]", self.p)));
        }
        Ok(DarkCountMixtureParams {
            spacs: self.spacs.validated()?,
            p: self.p,
        })
    }
}

/// Coherent state `|α>` after loss; the vacuum at `abs_alpha = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    pub abs_alpha: f64,
    pub phi: f64,
    pub eta: f64,
}

impl CoherentParams {
    pub fn vacuum() -> Self {
        CoherentParams {
            abs_alpha: 0.0,
            phi: 0.0,
            eta: 1.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.abs_alpha.is_finite() && self.abs_alpha >= 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidInput(format!("invalid coherent amplitude {:?}", self)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidInput(format!("eta = {} outside [0, 1]", self.eta)));
        }
        Ok(CoherentParams {
            phi: wrap_angle(self.phi, 2.0 * PI),
            ..self
        })
    }
}

/// Coefficients of `w = (p0 + p1 u + p2 u²) e^{−u²} / (√π (1+|α|²))`, `u = X − μ`.
struct GaussianPolynomial {
    mu: f64,
    p0: f64,
    p1: f64,
    p2: f64,
    norm: f64,
}

impl GaussianPolynomial {
    fn spacs(abs_alpha: f64, phi: f64, eta: f64, theta: f64) -> Self {
        let a = abs_alpha;
        let (s, c) = (theta - phi).sin_cos();
        let root = (2.0 * eta).sqrt();
        let mu = root * a * c;
        let constant = (1.0 - eta) * (1.0 + 4.0 * eta * a * a * s * s);
        let b = -2.0 * root * (2.0 * eta - 1.0) * a * c;
        let k = (2.0 * eta - 1.0).powi(2) * a * a;
        GaussianPolynomial {
            mu,
            p0: constant + 2.0 * eta * mu * mu + b * mu + k,
            p1: 4.0 * eta * mu + b,
            p2: 2.0 * eta,
            norm: 1.0 + a * a,
        }
    }

    fn density(&self, x: f64) -> f64 {
        let u = x - self.mu;
        (self.p0 + u * (self.p1 + u * self.p2)) * (-u * u).exp() / (SQRT_PI * self.norm)
    }

    fn characteristic(&self, r: f64) -> Complex64 {
        let envelope = (-0.25 * r * r).exp() / self.norm;
        let poly = Complex64::new(self.p0 + self.p2 * (0.5 - 0.25 * r * r), 0.5 * self.p1 * r);
        Complex64::from_polar(envelope, r * self.mu) * poly
    }

    fn mean(&self) -> f64 {
        self.mu + 0.5 * self.p1 / self.norm
    }
}

/// Lossy SPACS tomogram in closed form.
pub fn spacs_tomogram(params: &SpacsModelParams, x: f64, theta: f64) -> f64 {
    GaussianPolynomial::spacs(params.abs_alpha, params.phi, params.eta, theta).density(x)
}

/// `exp[−(X − √(2η)|α| cos(θ−φ))²] / √π`.
pub fn coherent_tomogram(abs_alpha: f64, phi: f64, eta: f64, x: f64, theta: f64) -> f64 {
    let mu = (2.0 * eta).sqrt() * abs_alpha * (theta - phi).cos();
    (-(x - mu).powi(2)).exp() / SQRT_PI
}

fn coherent_characteristic(abs_alpha: f64, phi: f64, eta: f64, r: f64, theta: f64) -> Complex64 {
    let mu = (2.0 * eta).sqrt() * abs_alpha * (theta - phi).cos();
    Complex64::from_polar((-0.25 * r * r).exp(), r * mu)
}

pub fn dark_count_tomogram(params: &DarkCountMixtureParams, x: f64, theta: f64) -> f64 {
    let s = &params.spacs;
    (1.0 - params.p) * spacs_tomogram(s, x, theta) + params.p * coherent_tomogram(s.abs_alpha, s.phi, s.eta, x, theta)
}

/// A parametric tomogram family member, tagged by `"model"` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TomogramModel {
    Spacs(SpacsModelParams),
    DarkCount(DarkCountMixtureParams),
    Coherent(CoherentParams),
}

impl TomogramModel {
    pub fn vacuum() -> Self {
        TomogramModel::Coherent(CoherentParams::vacuum())
    }

    pub fn spacs(abs_alpha: f64, phi: f64, eta: f64) -> Result<Self> {
        Ok(TomogramModel::Spacs(SpacsModelParams::new(abs_alpha, phi, eta)?))
    }

    pub fn validated(self) -> Result<Self> {
        Ok(match self {
            TomogramModel::Spacs(p) => TomogramModel::Spacs(p.validated()?),
            TomogramModel::DarkCount(p) => TomogramModel::DarkCount(p.validated()?),
            TomogramModel::Coherent(p) => TomogramModel::Coherent(p.validated()?),
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            TomogramModel::Spacs(_) => "spacs",
            TomogramModel::DarkCount(_) => "dark_count",
            TomogramModel::Coherent(_) => "coherent",
        }
    }

    /// Closed-form characteristic function `F(r, θ)`.
    pub fn characteristic(&self, r: f64, theta: f64) -> Complex64 {
        match self {
            TomogramModel::Spacs(p) => GaussianPolynomial::spacs(p.abs_alpha, p.phi, p.eta, theta).characteristic(r),
            TomogramModel::DarkCount(d) => {
                let s = &d.spacs;
                GaussianPolynomial::spacs(s.abs_alpha, s.phi, s.eta, theta).characteristic(r) * (1.0 - d.p)
                    + coherent_characteristic(s.abs_alpha, s.phi, s.eta, r, theta) * d.p
            }
            TomogramModel::Coherent(c) => coherent_characteristic(c.abs_alpha, c.phi, c.eta, r, theta),
        }
    }
}

impl Tomogram for TomogramModel {
    fn density(&self, x: f64, theta: f64) -> f64 {
        match self {
            TomogramModel::Spacs(p) => spacs_tomogram(p, x, theta),
            TomogramModel::DarkCount(p) => dark_count_tomogram(p, x, theta),
            TomogramModel::Coherent(c) => coherent_tomogram(c.abs_alpha, c.phi, c.eta, x, theta),
        }
    }

    fn characteristic_row(&self, theta: f64, r: &UniformGrid, _x: &UniformGrid) -> Vec<Complex64> {
        (0..r.len()).map(|k| self.characteristic(r.point(k), theta)).collect()
    }

    fn mean(&self, theta: f64, _x: &UniformGrid) -> f64 {
        match self {
            TomogramModel::Spacs(p) => GaussianPolynomial::spacs(p.abs_alpha, p.phi, p.eta, theta).mean(),
            TomogramModel::DarkCount(d) => {
                let s = &d.spacs;
                let spacs = GaussianPolynomial::spacs(s.abs_alpha, s.phi, s.eta, theta).mean();
                let coherent = (2.0 * s.eta).sqrt() * s.abs_alpha * (theta - s.phi).cos();
                (1.0 - d.p) * spacs + d.p * coherent
            }
            TomogramModel::Coherent(c) => (2.0 * c.eta).sqrt() * c.abs_alpha * (theta - c.phi).cos(),
        }
    }
}

/// Absolute accuracy targeted by [`lossy_convolution_numeric`].
pub const CONVOLUTION_TOLERANCE: f64 = 1e-8;

/// Applies loss to an ideal tomogram by direct integration,
/// `w(X) = ∫ w̃(Y) exp[−(X − √η Y)²/(1−η)] / √(π(1−η)) dY`.
pub fn lossy_convolution_numeric<T: Tomogram + ?Sized>(ideal: &T, eta: f64, x: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("eta = {eta} outside [0, 1]")));
    }
    if eta == 1.0 {
        return Ok(ideal.density(x, theta));
    }
    if eta == 0.0 {
        return Ok((-x * x).exp() / SQRT_PI);
    }
    let loss = 1.0 - eta;
    let root = eta.sqrt();
    let prefactor = 1.0 / (PI * loss).sqrt();
    let integrand = |y: f64| {
        let d = x - root * y;
        ideal.density(y, theta) * prefactor * (-d * d / loss).exp()
    };
    // The kernel is a Gaussian in Y centred at X/√η with variance (1−η)/(2η).
    let centre = x / root;
    let width = 12.0 * (loss / (2.0 * eta)).sqrt();
    let lo = (centre - width).max(-12.0);
    let hi = (centre + width).min(12.0);
    if hi <= lo {
        return Ok(0.0);
    }
    Ok(adaptive_simpson(&integrand, lo, hi, 0.01 * CONVOLUTION_TOLERANCE))
}

/// Tomogram obtained by numerically convolving an ideal one with the loss kernel.
#[derive(Debug, Clone)]
pub struct LossyConvolution<T> {
    pub ideal: T,
    pub eta: f64,
}

impl<T: Tomogram> Tomogram for LossyConvolution<T> {
    fn density(&self, x: f64, theta: f64) -> f64 {
        lossy_convolution_numeric(&self.ideal, self.eta, x, theta).unwrap_or(f64::NAN)
    }
}

/// Plain closure tomogram, handy for ad-hoc sources.
pub struct FnTomogram<F>(pub F);

impl<F: Fn(f64, f64) -> f64> Tomogram for FnTomogram<F> {
    fn density(&self, x: f64, theta: f64) -> f64 {
        (self.0)(x, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::trapezoid;

    fn grid() -> UniformGrid {
        UniformGrid::new(-10.0, 10.0, 0.005)
    }

    fn integrate<F: Fn(f64) -> f64>(f: F) -> f64 {
        let g = grid();
        let vals: Vec<f64> = g.points().into_iter().map(f).collect();
        trapezoid(&vals, g.step)
    }

    #[test]
    fn single_photon_limit() {
        let p = SpacsModelParams::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(spacs_tomogram(&p, 0.0, 0.3), 0.0);
        for &x in &[-1.5f64, 0.4, 2.0] {
            let expected = 2.0 * x * x * (-x * x).exp() / SQRT_PI;
            assert!((spacs_tomogram(&p, x, 1.1) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn half_lossy_single_photon_at_origin() {
        let p = SpacsModelParams::new(0.0, 0.0, 0.5).unwrap();
        let v = spacs_tomogram(&p, 0.0, 0.0);
        assert!((v - 0.5 / SQRT_PI).abs() < 1e-15);
        assert!((v - 0.28209).abs() < 1e-5);
    }

    #[test]
    fn vacuum_and_coherent_moments() {
        assert!((coherent_tomogram(0.0, 0.0, 1.0, 0.3, 2.0) - (-0.09f64).exp() / SQRT_PI).abs() < 1e-15);
        let mean = integrate(|x| x * coherent_tomogram(1.0, 0.0, 1.0, x, 0.0));
        assert!((mean - 2f64.sqrt()).abs() < 1e-10);
        // the peak sits at √(2η)|α|cos(θ−φ)
        let peak = (2.0 * 0.6f64).sqrt() * 0.9 * (0.4f64 - 1.3).cos();
        let at = coherent_tomogram(0.9, 1.3, 0.6, peak, 0.4);
        assert!(at > coherent_tomogram(0.9, 1.3, 0.6, peak + 1e-3, 0.4));
        assert!(at > coherent_tomogram(0.9, 1.3, 0.6, peak - 1e-3, 0.4));
    }

    #[test]
    fn dark_count_endpoints_and_mixture() {
        let s = SpacsModelParams::new(0.81, 3.14, 0.58).unwrap();
        for &(x, th) in &[(0.3, 0.0), (-1.2, 2.49), (2.0, 5.0)] {
            let w_s = spacs_tomogram(&s, x, th);
            let w_c = coherent_tomogram(0.81, 3.14, 0.58, x, th);
            let at = |p| dark_count_tomogram(&DarkCountMixtureParams::new(s, p).unwrap(), x, th);
            assert_eq!(at(0.0), w_s);
            assert_eq!(at(1.0), w_c);
            assert!((at(0.3) - (0.7 * w_s + 0.3 * w_c)).abs() < 1e-15);
        }
    }

    #[test]
    fn models_are_normalized() {
        let models = [
            TomogramModel::spacs(0.81, 3.14, 0.58).unwrap(),
            TomogramModel::spacs(2.0, 1.0, 0.3).unwrap(),
            TomogramModel::DarkCount(DarkCountMixtureParams::new(SpacsModelParams::new(1.2, 0.5, 0.9).unwrap(), 0.3).unwrap()),
            TomogramModel::vacuum(),
        ];
        for m in &models {
            for &th in &[0.0, 1.0, 2.49, 4.0] {
                let total = integrate(|x| m.density(x, th));
                assert!((total - 1.0).abs() < 1e-8, "{m:?} θ={th}: {total}");
            }
        }
    }

    #[test]
    fn second_moment_of_lossy_single_photon() {
        for &eta in &[0.1, 0.5, 0.58, 1.0] {
            let p = SpacsModelParams::new(0.0, 0.0, eta).unwrap();
            let m2 = integrate(|x| x * x * spacs_tomogram(&p, x, 0.7));
            assert!((m2 - (0.5 + eta)).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_characteristic_matches_numeric() {
        let r = UniformGrid::new(0.0, 8.0, 0.25);
        let x = UniformGrid::new(-10.0, 10.0, 0.01);
        let model = TomogramModel::DarkCount(
            DarkCountMixtureParams::new(SpacsModelParams::new(0.81, 3.14, 0.58).unwrap(), 0.2).unwrap(),
        );
        let numeric = FnTomogram(|xx, th| model.density(xx, th));
        for &th in &[0.0, 1.36, 2.49] {
            let a = model.characteristic_row(th, &r, &x);
            let n = numeric.characteristic_row(th, &r, &x);
            for (fa, fn_) in a.iter().zip(&n) {
                assert!((fa - fn_).norm() < 1e-12);
            }
            assert!((model.mean(th, &x) - numeric.mean(th, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn lossy_convolution_reproduces_closed_form() {
        let fock1 = TomogramModel::spacs(0.0, 0.0, 1.0).unwrap();
        let lossy = SpacsModelParams::new(0.0, 0.0, 0.58).unwrap();
        let pure = TomogramModel::spacs(0.81, 3.14, 1.0).unwrap();
        let lossy_spacs = SpacsModelParams::new(0.81, 3.14, 0.58).unwrap();
        let vacuum = TomogramModel::vacuum();
        for &x in &[-3.0, -1.1, 0.0, 0.45, 2.2] {
            for &th in &[0.0, 1.36, 2.49] {
                let a = lossy_convolution_numeric(&fock1, 0.58, x, th).unwrap();
                assert!((a - spacs_tomogram(&lossy, x, th)).abs() < 1e-7);
                let b = lossy_convolution_numeric(&pure, 0.58, x, th).unwrap();
                assert!((b - spacs_tomogram(&lossy_spacs, x, th)).abs() < 1e-7);
                let v = lossy_convolution_numeric(&vacuum, 0.3, x, th).unwrap();
                assert!((v - vacuum.density(x, th)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn lossy_convolution_edge_efficiencies() {
        let pure = TomogramModel::spacs(0.5, 0.2, 1.0).unwrap();
        assert_eq!(lossy_convolution_numeric(&pure, 1.0, 0.3, 0.1).unwrap(), pure.density(0.3, 0.1));
        let v = lossy_convolution_numeric(&pure, 0.0, 0.3, 0.1).unwrap();
        assert!((v - (-0.09f64).exp() / SQRT_PI).abs() < 1e-15);
        assert!(lossy_convolution_numeric(&pure, 1.5, 0.3, 0.1).is_err());
    }

    #[test]
    fn json_schema() {
        let m = TomogramModel::DarkCount(DarkCountMixtureParams::new(SpacsModelParams::new(0.81, 3.14, 0.58).unwrap(), 0.1).unwrap());
        let v = serde_json::to_value(m).unwrap();
        assert_eq!(v["model"], "dark_count");
        assert_eq!(v["abs_alpha"], 0.81);
        assert_eq!(v["p"], 0.1);
        let back: TomogramModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let s: TomogramModel = serde_json::from_str(r#"{"model":"spacs","abs_alpha":0.5,"phi":1.0,"eta":0.9}"#).unwrap();
        assert_eq!(s, TomogramModel::spacs(0.5, 1.0, 0.9).unwrap());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(SpacsModelParams::new(-0.1, 0.0, 0.5).is_err());
        assert!(SpacsModelParams::new(0.1, 0.0, 0.0).is_err());
        assert!(SpacsModelParams::new(0.1, 0.0, 1.01).is_err());
        let s = SpacsModelParams::new(0.1, 0.0, 0.5).unwrap();
        assert!(DarkCountMixtureParams::new(s, 1.2).is_err());
        assert!((SpacsModelParams::new(0.1, -0.5, 0.5).unwrap().phi - (2.0 * PI - 0.5)).abs() < 1e-15);
    }
}
