use rayon::prelude::*;

use super::imperfections::{ApplyImperfections, ImperfectionModel};
use super::{initial_state, run_transit_from, FieldSpec, RunSettings};
use crate::error::{Error, Result};
use crate::fockspace::{compose_with_field, reduced_field_state, AtomLevel};
use crate::model::{khz, DetuningSchedule, SystemParams};

/// P_g versus a constant detuning held across the whole transit.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    /// First detuning (rad/s).
    pub start: f64,
    /// Last detuning, included when it falls on the grid (rad/s).
    pub end: f64,
    pub step: f64,
    /// Includes the velocity and the bath occupations.
    pub params: SystemParams,
    pub atom: AtomLevel,
    pub field_a: FieldSpec,
    pub field_b: FieldSpec,
    pub settings: RunSettings,
    pub imperfections: Option<ImperfectionModel>,
}

impl ScanSpec {
    /// Both modes and their baths at thermal equilibrium (one photon),
    /// Δ/2π from −300 to 150 kHz.
    pub fn thermal(params: SystemParams) -> Self {
        ScanSpec {
            start: khz(-300.0),
            end: khz(150.0),
            step: khz(2.0),
            params: params.with_thermal(1.0, 1.0),
            atom: AtomLevel::Excited,
            field_a: FieldSpec::thermal(1.0),
            field_b: FieldSpec::thermal(1.0),
            settings: RunSettings::default(),
            imperfections: None,
        }
    }

    /// As [`ScanSpec::thermal`] with both modes initially erased.
    pub fn empty(params: SystemParams) -> Self {
        ScanSpec {
            field_a: FieldSpec::vacuum(),
            field_b: FieldSpec::vacuum(),
            ..Self::thermal(params)
        }
    }

    /// M_a empty, M_b holding a coherent field of the given mean.
    pub fn coherent_source(params: SystemParams, mean: f64) -> Self {
        ScanSpec {
            field_a: FieldSpec::vacuum(),
            field_b: FieldSpec::coherent(mean),
            ..Self::thermal(params)
        }
    }

    pub fn with_range_khz(mut self, start: f64, end: f64, step: f64) -> Self {
        self.start = khz(start);
        self.end = khz(end);
        self.step = khz(step);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step", "must be > 0"));
        }
        if !(self.start.is_finite() && self.end.is_finite() && self.end >= self.start) {
            return Err(Error::invalid("range", "requires start ≤ end"));
        }
        if let Some(m) = &self.imperfections {
            m.validate()?;
        }
        self.settings.stepper.validate()?;
        self.params.validate()
    }

    pub fn detunings(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }

    pub fn truncations(&self) -> (usize, usize) {
        (self.field_a.n_max(), self.field_b.n_max())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub spec: ScanSpec,
    /// `(Δ, P_g)` with Δ in rad/s, in grid order.
    pub points: Vec<(f64, f64)>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

impl ScanResult {
    /// Points with Δ/2π in kHz.
    pub fn points_khz(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|&(d, p)| (crate::model::to_khz(d), p))
            .collect()
    }
}

struct PointOutcome {
    p_g: f64,
    drift: f64,
    min_eig: f64,
}

impl PointOutcome {
    fn merge(&mut self, other: &PointOutcome) {
        self.drift = self.drift.max(other.drift);
        self.min_eig = self.min_eig.min(other.min_eig);
    }
}

/// Mean P_g over the atoms of a sequence entering with `first`. A second
/// atom (entering in e) crosses the field left by the first.
fn sequence_pg(
    first: AtomLevel,
    spec: &ScanSpec,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    weights: (f64, f64),
) -> Result<PointOutcome> {
    let rho0 = initial_state(first, &spec.field_a, &spec.field_b)?;
    let one = run_transit_from(rho0, schedule, params, &spec.settings)?;
    let p1 = one.p_g();
    let mut out = PointOutcome {
        p_g: p1,
        drift: one.trace_drift,
        min_eig: one.min_eigenvalue,
    };
    let (w1, w2) = weights;
    if w2 > 0.0 {
        let field = reduced_field_state(&one.state);
        let two = run_transit_from(compose_with_field(AtomLevel::Excited, &field), schedule, params, &spec.settings)?;
        // two-atom sequences contribute two detections
        out.p_g = (w1 * p1 + w2 * (p1 + two.p_g())) / (w1 + 2.0 * w2);
        out.merge(&PointOutcome {
            p_g: 0.0,
            drift: two.trace_drift,
            min_eig: two.min_eigenvalue,
        });
    }
    Ok(out)
}

fn scan_point(spec: &ScanSpec, detuning: f64) -> Result<PointOutcome> {
    let schedule = DetuningSchedule::flat(detuning, &spec.params);
    let Some(m) = spec.imperfections.filter(|m| !m.is_identity()) else {
        return sequence_pg(spec.atom, spec, &schedule, &spec.params, (1.0, 0.0));
    };
    let params = m.grown(&spec.params);
    let weights = m.atom_count_weights();
    let mut out = sequence_pg(spec.atom, spec, &schedule, &params, weights)?;
    if m.p_enter_g > 0.0 {
        let g = sequence_pg(AtomLevel::Ground, spec, &schedule, &params, weights)?;
        out.p_g = (1.0 - m.p_enter_g) * out.p_g + m.p_enter_g * g.p_g;
        out.merge(&g);
    }
    out.p_g = m.floor(out.p_g);
    Ok(out)
}

/// Runs every grid point (in parallel on the current rayon pool); the
/// output order is the grid order whatever the thread count.
pub fn scan_pg_vs_delta(spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let dets = spec.detunings();
    let outcomes: Vec<PointOutcome> = dets
        .par_iter()
        .map(|&d| scan_point(spec, d))
        .collect::<Result<_>>()?;
    Ok(ScanResult {
        spec: spec.clone(),
        points: dets.iter().zip(&outcomes).map(|(&d, o)| (d, o.p_g)).collect(),
        max_trace_drift: outcomes.iter().map(|o| o.drift).fold(0.0, f64::max),
        min_eigenvalue: outcomes.iter().map(|o| o.min_eig).fold(f64::INFINITY, f64::min),
    })
}

impl ApplyImperfections for ScanResult {
    fn apply_imperfections(&self, model: &ImperfectionModel) -> Result<Self> {
        model.validate()?;
        if model.is_identity() {
            return Ok(self.clone());
        }
        let spec = ScanSpec {
            imperfections: Some(*model),
            ..self.spec.clone()
        };
        scan_pg_vs_delta(&spec)
    }
}
