use num_complex::Complex64;
use thiserror::Error;

use crate::surface::PetalId;

/// Errors produced by the numerical engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("boundary membership undetermined at {zeta}: Newton inversion of phi did not converge")]
    IndeterminateBoundary { zeta: Complex64 },

    #[error("petal {petal} does not meet the domain")]
    EmptyLine { petal: PetalId },

    #[error("petal {petal} has no central line (only zero and infty petals do)")]
    NotIntersectionPetal { petal: PetalId },

    #[error("Newton inversion failed; last iterate {last}, residual {residual:e}")]
    InversionFailure { last: Complex64, residual: f64 },

    #[error("point {zeta} lies outside the domain")]
    OutOfDomain { zeta: Complex64 },

    #[error("point {zeta} is within {distance:e} of the integration line (deformation required)")]
    TooClose { zeta: Complex64, distance: f64 },

    #[error("shifted line at height {height} leaves the petal")]
    InvalidShift { height: f64 },

    #[error("evaluation at singular endpoint {endpoint} (distance {distance:e})")]
    SingularPoint { endpoint: Complex64, distance: f64 },

    #[error("series is not tangent to the identity (c1 = {c1})")]
    NonTangent { c1: Complex64 },

    #[error("iteration does not contract: delta ratios {ratios:?} at step {step}")]
    Divergence { step: usize, ratios: Vec<f64> },

    #[error("cocycle argument |tau| = {tau:e} exceeds the radius {sigma:e} for {petal}")]
    DomainTooLarge { petal: PetalId, tau: f64, sigma: f64 },

    #[error("no convergence after {steps} steps (last delta {delta:e})")]
    NoConvergence { steps: usize, delta: f64 },

    #[error("orbit escaped {petal} after {length} iterations at {zeta}")]
    Escape { petal: PetalId, length: usize, zeta: Complex64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
