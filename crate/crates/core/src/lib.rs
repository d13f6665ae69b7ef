//! Minimal-distance estimation for single-photon-added coherent states.
//!
//! Given phase-tagged homodyne quadrature samples, this crate estimates the
//! coherent amplitude `α = |α|e^{iφ}` and the overall detection efficiency `η`
//! by minimizing the Hilbert–Schmidt distance between the measured and the
//! modelled state, computed directly from quadrature distributions. It also
//! produces error bars from the symmetry violation `w(X, θ+π) ≠ w(−X, θ)` of
//! the data, and lower/upper bounds on the detection fidelity.
//!
//! Modules:
//!
//! - [`fock`]: exact truncated Fock-space oracle (states, loss channel, tomograms, traces).
//! - [`models`]: closed-form tomogram families.
//! - [`dataset`]: synthetic data, CSV I/O, histograms, empirical characteristic functions.
//! - [`overlap`]: tomographic overlaps, `D²` and its symmetry error `Δ(D²)`.
//! - [`estimator`]: Nelder–Mead fit, 1-D cuts and `Δq/SNR` error bars.
//! - [`fidelity`]: sub-/super-fidelity bounds.

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod fidelity;
pub mod fock;
pub mod models;
mod nonfinite;
pub mod optimize;
pub mod overlap;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
pub use models::{DarkCountMixtureParams, SpacsModelParams, Tomogram, TomogramModel};
