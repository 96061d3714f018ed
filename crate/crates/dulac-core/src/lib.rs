//! Numerical realization and extraction of horn maps for parabolic
//! generalized Dulac germs in the logarithmic chart.

pub mod asymptotics;
pub mod cauchy_heine;
pub mod error;
pub mod extract;
pub mod moduli;
pub mod normal_form;
pub mod quadrature;
pub mod realize;
pub mod series;
pub mod surface;

pub use num_complex::Complex64 as C64;

pub use asymptotics::{GevreyConfig, GevreyReport};
pub use cauchy_heine::{CHConfig, CocycleField, PetalFunctionAtlas};
pub use error::{Error, Result};
pub use extract::{HornConfig, OrbitConfig, RoundtripConfig};
pub use moduli::{GermSeries, HornMapSequence, Which};
pub use normal_form::{FormalClass, Germ};
pub use realize::{FatouAtlas, IterationConfig, RealizedGerm};
pub use surface::{DomainSpec, HalfLine, PetalId, PetalKind};
