//! Two-photon Fock state preparation: a Raman transit at a low detuning,
//! frozen by a sudden jump of Δ, post-selected on the atom leaving in g.

use super::imperfections::{ApplyImperfections, ImperfectionModel};
use super::{initial_state, run_transit_from, FieldSpec, RunSettings};
use crate::error::{Error, Result};
use crate::fockspace::{
    compose_with_field, conditional_field_state, reduced_field_state, AtomLevel, DensityOperator, JointDistribution, Mode,
};
use crate::model::{khz, DetuningSchedule, SystemParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSpec {
    pub params: SystemParams,
    /// Mean photon number of the coherent source injected in M_b.
    pub source_mean: f64,
    /// Time of the detuning jump, relative to the waist crossing (s).
    pub t_switch: f64,
    pub detuning_before: f64,
    pub detuning_after: f64,
    pub settings: RunSettings,
    pub imperfections: Option<ImperfectionModel>,
}

impl Default for PrepSpec {
    fn default() -> Self {
        PrepSpec {
            params: SystemParams::nominal().with_velocity(170.0),
            source_mean: 6.0,
            t_switch: 5e-6,
            detuning_before: khz(65.0),
            detuning_after: khz(135.0),
            settings: RunSettings::default(),
            imperfections: None,
        }
    }
}

impl PrepSpec {
    pub fn schedule(&self) -> Result<DetuningSchedule> {
        let (t0, t1) = self.params.transit_window();
        if !(self.t_switch > t0 && self.t_switch < t1) {
            return Err(Error::range("t_switch", self.t_switch, format!("({t0}, {t1})")));
        }
        DetuningSchedule::switched(self.detuning_before, self.detuning_after, self.t_switch, t0, t1)
    }

    pub fn field_a(&self) -> FieldSpec {
        FieldSpec::vacuum()
    }

    pub fn field_b(&self) -> FieldSpec {
        FieldSpec::coherent(self.source_mean)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.source_mean >= 0.0 && self.source_mean.is_finite()) {
            return Err(Error::invalid("source_mean", "must be ≥ 0"));
        }
        if let Some(m) = &self.imperfections {
            m.validate()?;
        }
        self.schedule().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanPrepResult {
    pub spec: PrepSpec,
    /// Joint atom-field state after the transit of an atom entering in e.
    pub state: DensityOperator,
    /// Probability of detecting the atom in g.
    pub success_probability: f64,
    /// Field photon statistics of the recorded (g) events.
    pub joint: JointDistribution,
    pub dist_a: Vec<f64>,
    pub dist_b: Vec<f64>,
    /// P(n_a = 2 | g)
    pub p_two: f64,
    pub source_mean_initial: f64,
    pub source_mean_conditioned: f64,
}

fn weighted(parts: &[(f64, &JointDistribution)]) -> JointDistribution {
    let first = parts[0].1;
    let mut p = vec![0.0; first.p.len()];
    let tot: f64 = parts.iter().map(|(w, _)| w).sum();
    for (w, j) in parts {
        for (acc, x) in p.iter_mut().zip(&j.p) {
            *acc += w / tot * x;
        }
    }
    JointDistribution {
        n_max_a: first.n_max_a,
        n_max_b: first.n_max_b,
        p,
    }
}

struct Branch {
    /// Probability that the sequence is recorded (some atom found in g).
    recorded: f64,
    joint: JointDistribution,
    first_state: DensityOperator,
}

/// Sequences of one or two atoms, the first entering in `first`, the second
/// in e through the field left by the first. Recorded when any atom is
/// found in g.
fn branch(
    first: AtomLevel,
    spec: &PrepSpec,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    weights: (f64, f64),
) -> Result<Branch> {
    let rho0 = initial_state(first, &spec.field_a(), &spec.field_b())?;
    let one = run_transit_from(rho0, schedule, params, &spec.settings)?;
    let (pg, fg) = conditional_field_state(&one.state, AtomLevel::Ground)?;
    let jg = fg.joint_distribution();
    let (w1, w2) = weights;
    if w2 == 0.0 {
        return Ok(Branch {
            recorded: pg,
            joint: jg.normalized(),
            first_state: one.state,
        });
    }
    let second = |field| -> Result<DensityOperator> {
        Ok(run_transit_from(compose_with_field(AtomLevel::Excited, field), schedule, params, &spec.settings)?.state)
    };
    // first in g: recorded whatever the second does
    let after_g = reduced_field_state(&second(&fg)?).joint_distribution();
    // first in e: recorded only if the second ends in g
    let mut parts = vec![(w1 * pg, &jg), (w2 * pg, &after_g)];
    let pe = 1.0 - pg;
    let eg;
    if pe > 1e-12 {
        let (_, fe) = conditional_field_state(&one.state, AtomLevel::Excited)?;
        let rho2 = second(&fe)?;
        let (p2g, f2g) = conditional_field_state(&rho2, AtomLevel::Ground)?;
        eg = f2g.joint_distribution();
        parts.push((w2 * pe * p2g, &eg));
    }
    let recorded: f64 = parts.iter().map(|(w, _)| w).sum();
    Ok(Branch {
        recorded,
        joint: weighted(&parts).normalized(),
        first_state: one.state,
    })
}

fn summarize(
    spec: &PrepSpec,
    state: DensityOperator,
    success: f64,
    joint: JointDistribution,
) -> RamanPrepResult {
    let dist_a = joint.marginal(Mode::A);
    let dist_b = joint.marginal(Mode::B);
    RamanPrepResult {
        spec: spec.clone(),
        state,
        success_probability: success,
        p_two: dist_a.get(2).copied().unwrap_or(0.0),
        source_mean_initial: spec.field_b().kind.mean_photons(),
        source_mean_conditioned: joint.mean(Mode::B),
        joint,
        dist_a,
        dist_b,
    }
}

pub fn prepare_two_photon(spec: &PrepSpec) -> Result<RamanPrepResult> {
    spec.validate()?;
    let schedule = spec.schedule()?;
    let Some(m) = spec.imperfections.filter(|m| !m.is_identity()) else {
        let b = branch(AtomLevel::Excited, spec, &schedule, &spec.params, (1.0, 0.0))?;
        return Ok(summarize(spec, b.first_state, b.recorded, b.joint));
    };
    let params = m.grown(&spec.params);
    let weights = m.atom_count_weights();
    let e = branch(AtomLevel::Excited, spec, &schedule, &params, weights)?;
    if m.p_enter_g == 0.0 {
        return Ok(summarize(spec, e.first_state, m.floor(e.recorded), e.joint));
    }
    let g = branch(AtomLevel::Ground, spec, &schedule, &params, weights)?;
    // g-entry atoms make up a fraction p of the recorded events
    let p = m.p_enter_g;
    let joint = weighted(&[(1.0 - p, &e.joint), (p, &g.joint)]);
    // fraction f of atoms entering in g that produces that share
    let f = p * e.recorded / (g.recorded * (1.0 - p) + p * e.recorded);
    let success = f * g.recorded + (1.0 - f) * e.recorded;
    Ok(summarize(spec, e.first_state, m.floor(success), joint))
}

impl ApplyImperfections for RamanPrepResult {
    fn apply_imperfections(&self, model: &ImperfectionModel) -> Result<Self> {
        model.validate()?;
        if model.is_identity() {
            return Ok(self.clone());
        }
        prepare_two_photon(&PrepSpec {
            imperfections: Some(*model),
            ..self.spec.clone()
        })
    }
}
