//! Shared fixtures for the benchmarks.

use povmdt_core::{random_povm, CouplingConfig, Povm, Result, Scenario};

/// Random POVM with `d + 1` outcomes, fixed seed.
pub fn random_fixture(d: usize) -> Result<Povm> {
    random_povm(d, d + 1, 17)
}

/// SIC outcome 2, entry (V, H), g = π/4.
pub fn sic_scenario() -> Result<Scenario> {
    Scenario::new(
        povmdt_core::make_sic_povm(),
        1,
        1,
        0,
        CouplingConfig::symmetric(std::f64::consts::FRAC_PI_4)?,
    )
}
