//! Ramsey probe of the prepared field.
//!
//! The first π/2 pulse acts at the freeze time, the second at the cavity
//! exit. Each photon-number component (n_a, n_b) contributes a fringe
//! shifted by the light shift of g accumulated in between; the probe level
//! is taken as unshifted.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::imperfections::{ApplyImperfections, ImperfectionModel};
use super::prep::{prepare_two_photon, PrepSpec};
use super::FieldSpec;
use crate::analytic::ramsey_phase;
use crate::error::{Error, Result};
use crate::fockspace::{make_field_state, FieldKind, JointDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RamseyScenario {
    /// M_a empty, M_b holding the source field.
    VacuumRef,
    /// One photon in M_a (resonant π pulse), M_b holding the source field.
    OnePhotonRef,
    /// The field recorded after the Raman preparation.
    Raman,
}

impl RamseyScenario {
    pub fn name(&self) -> &'static str {
        match self {
            RamseyScenario::VacuumRef => "vacuum_ref",
            RamseyScenario::OnePhotonRef => "one_photon_ref",
            RamseyScenario::Raman => "raman",
        }
    }
}

impl std::str::FromStr for RamseyScenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacuum_ref" | "vacuum-ref" => Ok(RamseyScenario::VacuumRef),
            "one_photon_ref" | "one-photon-ref" => Ok(RamseyScenario::OnePhotonRef),
            "raman" => Ok(RamseyScenario::Raman),
            _ => Err(Error::invalid("scenario", format!("unknown Ramsey scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseySpec {
    /// Supplies the schedule, freeze time, source and imperfections.
    pub prep: PrepSpec,
    /// Probe frequency offsets (Hz).
    pub offsets_hz: Vec<f64>,
}

impl Default for RamseySpec {
    fn default() -> Self {
        RamseySpec {
            prep: PrepSpec::default(),
            offsets_hz: (0..=100).map(|k| -10_000.0 + 200.0 * k as f64).collect(),
        }
    }
}

impl RamseySpec {
    pub fn t_freeze(&self) -> f64 {
        self.prep.t_switch
    }

    /// Time between the two π/2 pulses.
    pub fn t_ramsey(&self) -> f64 {
        self.prep.params.cutoff_time() - self.t_freeze()
    }
}

/// `A cos(2πν T_R + φ) + B` fitted to `(ν, P_g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// In (−π, π].
    pub phase: f64,
    pub amplitude: f64,
    pub baseline: f64,
    /// `A / B`
    pub contrast: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeResult {
    pub scenario: RamseyScenario,
    pub spec: RamseySpec,
    /// `(offset Hz, P_g)`
    pub points: Vec<(f64, f64)>,
    pub t_ramsey: f64,
    pub fit: FringeFit,
    pub reference_fit: FringeFit,
    /// Fitted phase minus the vacuum-reference fitted phase, in (−π, π].
    pub phase: f64,
    pub contrast: f64,
}

pub const PHASE_CONVENTION: &str = "relative to vacuum_ref fit";

pub(crate) fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Linear least squares on `[cos x, sin x, 1]`, `x = 2πν T_R`.
pub fn fit_fringe(points: &[(f64, f64)], t_ramsey: f64) -> Result<FringeFit> {
    if points.len() < 5 {
        return Err(Error::IllConditionedFit(format!("{} points, need ≥ 5", points.len())));
    }
    if !(t_ramsey > 0.0) {
        return Err(Error::IllConditionedFit("Ramsey time must be > 0".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(nu, _)| 2.0 * PI * nu * t_ramsey).collect();
    let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 2.0 * PI * (1.0 - 1e-9) {
        return Err(Error::IllConditionedFit("offsets span less than one fringe period".into()));
    }
    let n = points.len();
    let a = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => xs[r].cos(),
        1 => xs[r].sin(),
        _ => 1.0,
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::IllConditionedFit("design matrix is singular".into()));
    }
    let coef = svd
        .solve(&y, 1e-14 * smax)
        .map_err(|e| Error::IllConditionedFit(e.to_string()))?;
    let (c, s, baseline) = (coef[0], coef[1], coef[2]);
    let amplitude = c.hypot(s);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if amplitude <= 1e-9 * scale {
        return Err(Error::IllConditionedFit("no fringe modulation".into()));
    }
    let resid = &a * &coef - &y;
    Ok(FringeFit {
        // c cos x + s sin x = A cos(x + φ) with φ = atan2(−s, c)
        phase: wrap_phase((-s).atan2(c)),
        amplitude,
        baseline,
        contrast: amplitude / baseline,
        rms_residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

fn source_law(spec: &RamseySpec) -> Result<Vec<f64>> {
    let f = FieldSpec::coherent(spec.prep.source_mean);
    let kind: FieldKind = f.kind;
    Ok(make_field_state(kind, f.n_max())?.distribution())
}

fn distribution(scenario: RamseyScenario, spec: &RamseySpec) -> Result<JointDistribution> {
    let fock = |n: usize| {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        v
    };
    Ok(match scenario {
        RamseyScenario::VacuumRef => JointDistribution::product(&fock(0), &source_law(spec)?),
        RamseyScenario::OnePhotonRef => JointDistribution::product(&fock(1), &source_law(spec)?),
        RamseyScenario::Raman => prepare_two_photon(&spec.prep)?.joint,
    })
}

fn fringe(dist: &JointDistribution, spec: &RamseySpec, contrast: f64, floor: &dyn Fn(f64) -> f64) -> Result<Vec<(f64, f64)>> {
    let schedule = spec.prep.schedule()?;
    let params = &spec.prep.params;
    let t_freeze = spec.t_freeze();
    let t_r = spec.t_ramsey();
    let terms: Vec<(f64, f64)> = dist
        .iter()
        .filter(|&(_, _, p)| p > 0.0)
        .map(|(a, b, p)| Ok((p, ramsey_phase(a, b, &schedule, params, t_freeze)?)))
        .collect::<Result<_>>()?;
    let tot: f64 = terms.iter().map(|t| t.0).sum();
    Ok(spec
        .offsets_hz
        .iter()
        .map(|&nu| {
            let x = 2.0 * PI * nu * t_r;
            let s: f64 = terms.iter().map(|&(p, ph)| p * (x + ph).cos()).sum::<f64>() / tot;
            (nu, floor(0.5 * (1.0 - contrast * s)))
        })
        .collect())
}

pub fn ramsey_probe(scenario: RamseyScenario, spec: &RamseySpec) -> Result<FringeResult> {
    spec.prep.validate()?;
    let model = spec.prep.imperfections.unwrap_or_default();
    let contrast = model.ramsey_contrast;
    let floor = |p: f64| model.floor(p);
    let t_r = spec.t_ramsey();
    if t_r <= 0.0 {
        return Err(Error::Precondition("freeze time after cavity exit".into()));
    }
    let points = fringe(&distribution(scenario, spec)?, spec, contrast, &floor)?;
    let fit = fit_fringe(&points, t_r)?;
    let reference_fit = if scenario == RamseyScenario::VacuumRef {
        fit
    } else {
        let r = fringe(&distribution(RamseyScenario::VacuumRef, spec)?, spec, contrast, &floor)?;
        fit_fringe(&r, t_r)?
    };
    Ok(FringeResult {
        scenario,
        spec: spec.clone(),
        points,
        t_ramsey: t_r,
        phase: wrap_phase(fit.phase - reference_fit.phase),
        contrast: fit.contrast,
        fit,
        reference_fit,
    })
}

impl ApplyImperfections for FringeResult {
    fn apply_imperfections(&self, model: &ImperfectionModel) -> Result<Self> {
        model.validate()?;
        if model.is_identity() {
            return Ok(self.clone());
        }
        let mut spec = self.spec.clone();
        spec.prep.imperfections = Some(*model);
        ramsey_probe(self.scenario, &spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn synth(phase: f64, amp: f64, base: f64, t_r: f64) -> Vec<(f64, f64)> {
        (0..40)
            .map(|k| {
                let nu = -12_000.0 + 600.0 * k as f64;
                (nu, base + amp * (2.0 * PI * nu * t_r + phase).cos())
            })
            .collect()
    }

    #[test]
    fn exact_sinusoid_is_recovered() {
        let t_r = 100e-6;
        let f = fit_fringe(&synth(0.7, 0.3, 0.5, t_r), t_r).unwrap();
        assert_abs_diff_eq!(f.phase, 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(f.amplitude, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(f.baseline, 0.5, epsilon = 1e-10);
        assert!(f.rms_residual < 1e-10);
    }

    #[test]
    fn shifted_copy_gives_the_applied_shift() {
        let t_r = 90e-6;
        let a = fit_fringe(&synth(-2.9, 0.2, 0.5, t_r), t_r).unwrap();
        let b = fit_fringe(&synth(-2.9 + 0.52, 0.2, 0.5, t_r), t_r).unwrap();
        assert_abs_diff_eq!(wrap_phase(b.phase - a.phase), 0.52, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let t_r = 100e-6;
        let flat: Vec<(f64, f64)> = (0..20).map(|k| (k as f64 * 1000.0, 0.5)).collect();
        assert!(matches!(fit_fringe(&flat, t_r), Err(Error::IllConditionedFit(_))));
        assert!(fit_fringe(&synth(0.1, 0.2, 0.5, t_r)[..4], t_r).is_err());
        let narrow: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.5 + 0.1 * k as f64)).collect();
        assert!(fit_fringe(&narrow, t_r).is_err());
    }

    #[test]
    fn vacuum_reference_has_zero_phase() {
        let r = ramsey_probe(RamseyScenario::VacuumRef, &RamseySpec::default()).unwrap();
        assert_eq!(r.phase, 0.0);
        // the Poisson spread of the M_b light shift washes the fringe out a little
        assert!(r.contrast > 0.6 && r.contrast <= 1.0, "{}", r.contrast);
        assert!(r.points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
    }

    #[test]
    fn one_photon_reference_shifts_by_the_one_photon_phase() {
        let spec = RamseySpec::default();
        let r = ramsey_probe(RamseyScenario::OnePhotonRef, &spec).unwrap();
        let sched = spec.prep.schedule().unwrap();
        let p = &spec.prep.params;
        // M_b factor is common to both fringes
        let expect = ramsey_phase(1, 0, &sched, p, spec.t_freeze()).unwrap();
        assert_abs_diff_eq!(r.phase, expect, epsilon = 1e-6);
    }

    #[test]
    fn contrast_scales() {
        let mut spec = RamseySpec::default();
        let ideal = ramsey_probe(RamseyScenario::OnePhotonRef, &spec).unwrap();
        spec.prep.imperfections = Some(ImperfectionModel {
            ramsey_contrast: 0.5,
            ..Default::default()
        });
        let half = ramsey_probe(RamseyScenario::OnePhotonRef, &spec).unwrap();
        assert_abs_diff_eq!(half.contrast, 0.5 * ideal.contrast, epsilon = 1e-9);
        assert_abs_diff_eq!(half.phase, ideal.phase, epsilon = 1e-9);
    }
}
