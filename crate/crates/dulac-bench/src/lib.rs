//! Fixtures shared by the benchmarks.

use dulac_core::{GermSeries, HornMapSequence, Which, C64};

/// Window-2 moduli with the single mode `g∞⁰(t) = 0.05 t`.
pub fn single_mode() -> HornMapSequence {
    let mut seq = HornMapSequence::identity(2, 4);
    let mut g = GermSeries::zero(4, 0.5);
    g.coeffs[1] = C64::new(0.05, 0.0);
    seq.set_from_g(0, Which::Infty, &g);
    seq
}
