//! Stability analysis for consensus networks under local pinning control
//! with a transmission delay `tau_r` and a pinning delay `tau_p`:
//!
//! ```text
//! y'(t) = -K y(t) + A y(t - tau_r) - c D y(t - tau_p)
//! ```
//!
//! The crate bundles admissible-delay bounds, perturbation estimates of the
//! dominant characteristic root, a fixed-step delay integrator, a
//! segment-norm Lyapunov-exponent estimator, and a direct characteristic
//! root finder that serves as the reference for all of them.

pub mod bounds;
pub mod charroots;
pub mod dde;
pub mod error;
pub mod graph;
pub mod lyapunov;
pub mod perturbation;
pub mod spectral;
pub mod verdict;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, LaplacianSystem, PinSet, PinningProblem};
pub use spectral::SpectralDecomp;
pub use bounds::{BoundKind, BoundResult, WeightMode};
pub use dde::{HistoryFunction, Trajectory};
pub use lyapunov::ExponentEstimate;
pub use perturbation::PerturbationEstimate;
pub use charroots::{ComplexRoot, QuasiPoly, SearchSpec};
pub use verdict::{Method, Stability, StabilityVerdict};
