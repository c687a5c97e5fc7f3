//! Direct characterization of individual POVM matrix entries.
//!
//! A system prepared in `|a_j⟩` is coupled in sequence to two qubit meters
//! through the non-commuting reflections `O_B = I − 2|b_0⟩⟨b_0|` and
//! `O_A^(k) = I − 2|a_k⟩⟨a_k|`. After the detector under test post-selects
//! outcome `l`, the joint meter statistics yield `⟨a_j|Π_l|a_k⟩` exactly, at
//! any non-zero coupling strength.
//!
//! Modules:
//! - [`linalg`], [`povm`]: dense operators, bases, POVM construction and the entry oracle
//! - [`protocol`]: coupling unitaries, joint state, post-selection, meter tables
//! - [`estimator`]: Pauli assembly, entry reconstruction, variances, completeness refinement
//! - [`noise`]: dephasing, phase rotation, environment coupling, calibration
//! - [`montecarlo`]: shot-noise sampling, repeated trials, parameter sweeps

pub mod error;
pub mod estimator;
pub mod linalg;
pub mod montecarlo;
pub mod noise;
pub mod povm;
pub mod protocol;

pub use error::{Error, Result};
pub use estimator::{
    analytic_variance, completeness_refine, error_transfer_variance, estimate_diagonal, estimate_offdiagonal,
    observable_variance, pauli_table_from_distributions, rt_coefficients, EntryEstimate, EntryEstimator, EntryRecord,
    EstimateMethod, MarginalPolicy, Pauli, PauliTable, RtCoefficients,
};
pub use linalg::{tensor, Basis, Ket, Operator};
pub use montecarlo::{
    run_refinement_trials, run_trials, sample_counts, variance_sweep, RefinementSummary, SampleStats, Scenario,
    ShotModel, Statistics, SweepAxis, SweepBase, SweepRow, SweepSpec, TrialSummary,
};
pub use noise::{
    apply_dephasing, apply_phase_rotation, calibrate_phase, calibrate_xi, dephase_via_environment, wavepacket_overlap,
    DephasingParams, Environment, PhaseLookup, RotationParams,
};
pub use num_complex::Complex64;
pub use povm::{
    make_parametric_element, make_sic_povm, matrix_entry_oracle, parametric_povm, povm_from_walk, random_povm, Povm,
    PovmDocument,
};
pub use protocol::{
    evolve_joint, meter_distribution, meter_tables, postselect_meters, prepare_entry, CouplingConfig, JointState,
    MeterBasis, MeterBasisSetting, MeterTable, MeterTables, TableOrigin,
};

/// Crate version, embedded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
