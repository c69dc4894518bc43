//! Scripted protocols: detuning scans, the two-photon preparation, the
//! Ramsey probe, imperfection mixtures and the extension scenarios.

mod features;
mod imperfections;
mod output;
mod prep;
mod ramsey;
mod scan;
mod scenarios;

pub use features::{feature_in, features, local_maxima, parabolic_peak, prominence, Feature};
pub use imperfections::{ApplyImperfections, ImperfectionModel};
pub use output::{
    fringe_csv, fringe_report, metadata_lines, prep_report, scan_csv, DISTRIBUTION_HEADER,
    FRINGE_CSV_HEADER, SCAN_CSV_HEADER,
};
pub use prep::{prepare_two_photon, PrepSpec, RamanPrepResult};
pub use ramsey::{
    fit_fringe, ramsey_probe, FringeFit, FringeResult, RamseyScenario, RamseySpec, PHASE_CONVENTION,
};
pub use scan::{scan_pg_vs_delta, ScanResult, ScanSpec};
pub use scenarios::{
    peak_search, scenario_fifth_order, scenario_reverse_raman, FifthOrderResult, ReverseRamanResult,
};

use crate::error::{Error, Result};
use crate::evolve::{evolve_density, StepperSettings, TRACE_TOL};
use crate::fockspace::{
    compose_initial_state, make_field_state, AtomLevel, DensityOperator, FieldKind, FockSpace,
};
use crate::model::{CouplingProfile, DetuningSchedule, LindbladModel, SystemParams};

/// Initial state of one cavity mode together with its truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    /// Overrides the default truncation.
    pub n_max: Option<usize>,
}

impl FieldSpec {
    pub fn new(kind: FieldKind) -> Self {
        FieldSpec { kind, n_max: None }
    }

    pub fn vacuum() -> Self {
        Self::new(FieldKind::vacuum())
    }

    pub fn fock(n: usize) -> Self {
        Self::new(FieldKind::Fock(n))
    }

    pub fn coherent(mean: f64) -> Self {
        Self::new(FieldKind::coherent_mean(mean))
    }

    pub fn thermal(nbar: f64) -> Self {
        Self::new(FieldKind::Thermal(nbar))
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = Some(n_max);
        self
    }

    /// Tail rule of the field, but never fewer than two levels above a
    /// Fock state and never below 4: the atom can add one photon and a
    /// Raman event up to three.
    pub fn n_max(&self) -> usize {
        if let Some(n) = self.n_max {
            return n;
        }
        let reach = match self.kind {
            FieldKind::Fock(n) => n + 2,
            _ => 0,
        };
        self.kind.required_n_max().max(reach).max(4)
    }
}

/// Numerical options shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub stepper: StepperSettings,
    /// Cavity damping on (nominal rates) or off.
    pub relaxation: bool,
    pub coupling: CouplingProfile,
    /// Propagate coherences between excitation sectors. They never feed
    /// populations or photon distributions, so by default coherent fields
    /// are replaced by their Poisson mixture.
    pub keep_coherences: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            stepper: StepperSettings::default(),
            relaxation: true,
            coupling: CouplingProfile::Transit,
            keep_coherences: false,
        }
    }
}

impl RunSettings {
    pub fn closed() -> Self {
        RunSettings {
            relaxation: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransitOutcome {
    pub state: DensityOperator,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
}

impl TransitOutcome {
    pub fn p_g(&self) -> f64 {
        clamp_probability(self.state.level_probability(AtomLevel::Ground))
    }
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Builds the initial product state for one transit.
pub fn initial_state(atom: AtomLevel, field_a: &FieldSpec, field_b: &FieldSpec) -> Result<DensityOperator> {
    let (na, nb) = (field_a.n_max(), field_b.n_max());
    let space = FockSpace::new(na, nb);
    let fa = make_field_state(field_a.kind, na)?;
    let fb = make_field_state(field_b.kind, nb)?;
    compose_initial_state(atom, &fa, &fb, space)
}

/// One atom crossing the cavity from `−3w/v` to `+3w/v`.
pub fn run_transit(
    atom: AtomLevel,
    field_a: &FieldSpec,
    field_b: &FieldSpec,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    settings: &RunSettings,
) -> Result<TransitOutcome> {
    run_transit_from(initial_state(atom, field_a, field_b)?, schedule, params, settings)
}

/// As [`run_transit`] from an arbitrary initial joint state.
pub fn run_transit_from(
    rho0: DensityOperator,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    settings: &RunSettings,
) -> Result<TransitOutcome> {
    let (t0, t1) = params.transit_window();
    if !schedule.covers(t0, t1) {
        return Err(Error::range(
            "schedule",
            format!("[{}, {}]", schedule.start(), schedule.end()),
            format!("must cover [{t0}, {t1}]"),
        ));
    }
    let mut model = LindbladModel::new(*params, schedule.clone(), rho0.space())?.with_profile(settings.coupling);
    if !settings.relaxation {
        model = model.without_dissipation();
    }
    let rho0 = if settings.keep_coherences {
        rho0
    } else {
        rho0.excitation_diagonal()
    };
    let out = evolve_density(&rho0, &model, t0, t1, &settings.stepper)?;
    if out.trace_drift > TRACE_TOL {
        return Err(Error::Accuracy(format!("trace drift {:.3e}", out.trace_drift)));
    }
    Ok(TransitOutcome {
        state: out.state,
        trace_drift: out.trace_drift,
        min_eigenvalue: out.min_eigenvalue,
        steps: out.steps,
    })
}
