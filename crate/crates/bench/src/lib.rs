//! Benchmarks live in `benches/`; this crate only hosts shared fixtures.

use cqed_core::experiments::{FieldSpec, RunSettings};
use cqed_core::{khz, DetuningSchedule, SystemParams};

/// A six-photon source at the Raman detuning, the workhorse of the
/// preparation.
pub fn raman_fixture() -> (FieldSpec, FieldSpec, DetuningSchedule, SystemParams, RunSettings) {
    let p = SystemParams::nominal();
    (
        FieldSpec::vacuum(),
        FieldSpec::fock(6),
        DetuningSchedule::flat(khz(65.0), &p),
        p,
        RunSettings::default(),
    )
}
