//! Processes beyond the basic Raman transfer: the reverse Raman process
//! and the fifth-order three-photon process.

use rayon::prelude::*;

use super::{run_transit, FieldSpec, RunSettings};
use crate::analytic::{fifth_order_resonance, reverse_raman_resonance};
use crate::error::{Error, Result};
use crate::fockspace::{conditional_field_state, AtomLevel, BasisLabel, Mode};
use crate::model::{khz, DetuningSchedule, SystemParams};

/// Maximizes `f` on a grid over `[lo, hi]` (evaluated in parallel), then
/// refines by golden section within one grid step of the best sample.
pub fn peak_search(f: &(dyn Fn(f64) -> Result<f64> + Sync), lo: f64, hi: f64, step: f64) -> Result<(f64, f64)> {
    if !(hi >= lo && step > 0.0) {
        return Err(Error::invalid("peak window", "requires lo ≤ hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let xs: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    let ys: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let (k, _) = ys
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &y)| if y > acc.1 { (k, y) } else { acc });
    let (mut a, mut b) = ((xs[k] - step).max(lo), (xs[k] + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..24 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let best = [(xs[k], ys[k]), (c, fc), (d, fd)]
        .into_iter()
        .fold((xs[k], ys[k]), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseRamanResult {
    pub n: usize,
    /// Detuning of maximal transfer (rad/s).
    pub detuning: f64,
    /// Shift-corrected perturbative estimate, when one exists.
    pub estimate: Option<f64>,
    /// P(|e,1,n−2⟩) starting from |g,0,n⟩.
    pub transfer: f64,
    /// P(|g,0,n⟩) starting from |e,1,n−2⟩ at the same detuning.
    pub reverse_check: f64,
    /// M_b distribution conditioned on the atom leaving in e.
    pub conditioned_b: Vec<f64>,
}

/// |g,0,n⟩ → |e,1,n−2⟩: the atom absorbs two M_b photons and emits one
/// into M_a. Energy conservation puts the bare resonance at Δ = −2δ; the
/// search covers 30 kHz below it up to 50 kHz short of the Δ = −δ line.
pub fn scenario_reverse_raman(n: usize, params: &SystemParams, settings: &RunSettings) -> Result<ReverseRamanResult> {
    if n < 2 {
        return Err(Error::Precondition(format!("reverse Raman needs n ≥ 2 source photons, got {n}")));
    }
    let (fa, fb) = (FieldSpec::vacuum(), FieldSpec::fock(n));
    let run = |atom: AtomLevel, a: FieldSpec, b: FieldSpec, d: f64| {
        run_transit(atom, &a, &b, &DetuningSchedule::flat(d, params), params, settings)
    };
    let target = BasisLabel::new(AtomLevel::Excited, 1, n - 2);
    let transfer_at = |d: f64| -> Result<f64> { run(AtomLevel::Ground, fa, fb, d)?.state.population(target) };
    let lo = -2.0 * params.delta - khz(30.0);
    let hi = -params.delta - khz(50.0);
    let (detuning, transfer) = peak_search(&transfer_at, lo, hi, khz(2.0))?;

    let out = run(AtomLevel::Ground, fa, fb, detuning)?;
    let (_, field_e) = conditional_field_state(&out.state, AtomLevel::Excited)?;
    let conditioned_b = field_e.joint_distribution().marginal(Mode::B);
    let back = run(AtomLevel::Excited, FieldSpec::fock(1).with_n_max(fa.n_max()), FieldSpec::fock(n - 2).with_n_max(fb.n_max()), detuning)?;
    let reverse_check = back.state.population(BasisLabel::new(AtomLevel::Ground, 0, n))?;
    Ok(ReverseRamanResult {
        n,
        detuning,
        estimate: reverse_raman_resonance(n, params.omega0, params.delta).ok(),
        transfer,
        reverse_check,
        conditioned_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FifthOrderResult {
    pub n: usize,
    pub detuning: f64,
    /// Centre of the ±10 kHz search window (rad/s).
    pub center: f64,
    /// Peak P(atom g, n_a = 3).
    pub transfer: f64,
}

/// |e,0,n⟩ → |g,3,n−2⟩ near Δ = 2δ, searched ±10 kHz around the
/// shift-corrected estimate (bare 2δ when no estimate exists).
pub fn scenario_fifth_order(n: usize, params: &SystemParams, settings: &RunSettings) -> Result<FifthOrderResult> {
    let center = fifth_order_resonance(n, params.omega0, params.delta).unwrap_or(2.0 * params.delta);
    let (fa, fb) = (FieldSpec::vacuum(), FieldSpec::fock(n));
    let transfer_at = |d: f64| -> Result<f64> {
        let out = run_transit(AtomLevel::Excited, &fa, &fb, &DetuningSchedule::flat(d, params), params, settings)?;
        let space = out.state.space();
        let mut p = 0.0;
        for nb in 0..=space.n_max_b() {
            p += out.state.population(BasisLabel::new(AtomLevel::Ground, 3, nb))?;
        }
        Ok(p)
    };
    let (detuning, transfer) = peak_search(&transfer_at, center - khz(10.0), center + khz(10.0), khz(1.0))?;
    Ok(FifthOrderResult {
        n,
        detuning,
        center,
        transfer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn peak_search_finds_smooth_maximum() {
        let f = |x: f64| -> Result<f64> { Ok(-(x - 0.337).powi(2)) };
        let (x, y) = peak_search(&f, -1.0, 1.0, 0.1).unwrap();
        assert_abs_diff_eq!(x, 0.337, epsilon = 1e-4);
        assert!(y <= 0.0);
        assert!(peak_search(&f, 1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn reverse_needs_two_photons() {
        let p = SystemParams::nominal();
        assert!(matches!(
            scenario_reverse_raman(1, &p, &RunSettings::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn fifth_order_without_source_is_zero() {
        let p = SystemParams::nominal().with_velocity(400.0);
        for n in [0, 1] {
            let r = scenario_fifth_order(n, &p, &RunSettings::closed()).unwrap();
            assert!(r.transfer < 1e-12, "{}", r.transfer);
        }
    }
}
