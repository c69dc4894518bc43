//! Perturbative estimates: Raman coupling, second-order light shifts, the
//! shifted resonance conditions and the Ramsey phase they imprint.
//!
//! All frequencies are angular (rad/s) in the frame of [`crate::model`]:
//! level e sits at Δ, each photon in M_b at −δ.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fockspace::{AtomLevel, BasisLabel, FockSpace};
use crate::model::{coupling_at, hamiltonian_with, DetuningSchedule, SystemParams};

/// Second-order shift of one bare level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelShift {
    pub level: AtomLevel,
    pub n_a: usize,
    pub n_b: usize,
    /// rad/s
    pub shift: f64,
}

fn check_singular(detuning: f64, delta: f64) -> Result<()> {
    let tiny = 1e-12 * delta.abs().max(1.0);
    if detuning.abs() <= tiny {
        return Err(Error::Singular("Δ = 0".into()));
    }
    if (detuning + delta).abs() <= tiny {
        return Err(Error::Singular("Δ + δ = 0".into()));
    }
    Ok(())
}

/// Third-order coupling between |e,0,n⟩ and |g,2,n−1⟩:
/// `Ω³ √(2n) / [8 Δ (Δ+δ)]`.
pub fn raman_coupling(n: usize, detuning: f64, delta: f64, omega: f64) -> Result<f64> {
    check_singular(detuning, delta)?;
    if detuning < 0.0 || detuning + delta < 0.0 {
        return Err(Error::range("Δ", detuning, "Δ > 0 and Δ + δ > 0"));
    }
    Ok(omega.powi(3) * (2.0 * n as f64).sqrt() / (8.0 * detuning * (detuning + delta)))
}

/// Dressed-level shift from the one-photon couplings to the neighbouring
/// levels. e couples to |g,n_a+1,n_b⟩ (gap Δ) and |g,n_a,n_b+1⟩ (gap Δ+δ);
/// g couples to |e,n_a−1,n_b⟩ and |e,n_a,n_b−1⟩ with the opposite gaps.
pub fn light_shift(
    level: AtomLevel,
    n_a: usize,
    n_b: usize,
    detuning: f64,
    delta: f64,
    omega: f64,
) -> Result<LevelShift> {
    check_singular(detuning, delta)?;
    let q = omega * omega / 4.0;
    let (a, b) = (n_a as f64, n_b as f64);
    let shift = match level {
        AtomLevel::Excited => q * ((a + 1.0) / detuning + (b + 1.0) / (detuning + delta)),
        AtomLevel::Ground => -q * (a / detuning + b / (detuning + delta)),
    };
    Ok(LevelShift {
        level,
        n_a,
        n_b,
        shift,
    })
}

fn shift(level: AtomLevel, n_a: usize, n_b: usize, detuning: f64, delta: f64, omega: f64) -> Result<f64> {
    light_shift(level, n_a, n_b, detuning, delta, omega).map(|s| s.shift)
}

/// Walks from `from` towards `to` on a fine grid and bisects the first sign
/// change of `f`. Grid points where `f` is singular are skipped.
fn first_root(
    f: &dyn Fn(f64) -> Result<f64>,
    from: f64,
    to: f64,
    tol: f64,
    what: &str,
) -> Result<f64> {
    const GRID: usize = 4000;
    let h = (to - from) / GRID as f64;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=GRID {
        let x = from + k as f64 * h;
        let Ok(fx) = f(x) else {
            prev = None;
            continue;
        };
        if fx == 0.0 {
            return Ok(x);
        }
        if let Some((xp, fp)) = prev {
            if fp.signum() != fx.signum() {
                let (mut lo, mut hi, mut flo) = (xp, x, fp);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = f(mid)?;
                    if fm.abs() <= tol {
                        return Ok(mid);
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let mid = 0.5 * (lo + hi);
                if f(mid)?.abs() <= tol {
                    return Ok(mid);
                }
                return Err(Error::NoResonance(format!("{what}: bisection stalled")));
            }
        }
        prev = Some((x, fx));
    }
    Err(Error::NoResonance(what.to_string()))
}

/// Detuning at which |e,0,n⟩ and |g,2,n−1⟩ are degenerate once both carry
/// their light shifts.
///
/// The mismatch `Δ − δ + (Ω²/4)[3/Δ + 2n/(Δ+δ)]` is positive at Δ = δ and
/// can cross zero twice below it. The root returned is the one reached
/// first walking down from δ, which is the one that tends to δ as Ω → 0.
pub fn shifted_raman_resonance(n: usize, omega: f64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("a source photon is required (n ≥ 1)".into()));
    }
    let f = |d: f64| -> Result<f64> {
        Ok(d - delta + shift(AtomLevel::Excited, 0, n, d, delta, omega)?
            - shift(AtomLevel::Ground, 2, n - 1, d, delta, omega)?)
    };
    first_root(&f, delta, 0.0, 1e-6 * delta, &format!("no shifted Raman resonance in (0, δ] for n = {n}"))
}

/// Shift-corrected resonance of |e,0,n⟩ ↔ |g,3,n−2⟩ (bare value 2δ).
pub fn fifth_order_resonance(n: usize, omega: f64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Precondition("two source photons are required (n ≥ 2)".into()));
    }
    let f = |d: f64| -> Result<f64> {
        Ok(d - 2.0 * delta + shift(AtomLevel::Excited, 0, n, d, delta, omega)?
            - shift(AtomLevel::Ground, 3, n - 2, d, delta, omega)?)
    };
    first_root(&f, 2.0 * delta, 0.0, 1e-6 * delta, "no fifth-order resonance below 2δ")
}

/// Shift-corrected resonance of |g,0,n⟩ ↔ |e,1,n−2⟩ (bare value −2δ).
pub fn reverse_raman_resonance(n: usize, omega: f64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Precondition("two source photons are required (n ≥ 2)".into()));
    }
    let f = |d: f64| -> Result<f64> {
        Ok(d + 2.0 * delta + shift(AtomLevel::Excited, 1, n - 2, d, delta, omega)?
            - shift(AtomLevel::Ground, 0, n, d, delta, omega)?)
    };
    first_root(&f, -2.0 * delta, -delta, 1e-6 * delta, "no reverse Raman resonance in [−2δ, −δ)")
}

/// Phase accumulated by |g,n_a,n_b⟩ relative to the unshifted probe level
/// from `t_freeze` to the cavity exit: `−∫ shift_g dt`.
pub fn ramsey_phase(
    n_a: usize,
    n_b: usize,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    t_freeze: f64,
) -> Result<f64> {
    let t_exit = params.cutoff_time();
    if !(t_exit > t_freeze) {
        return Err(Error::Precondition(format!(
            "freeze time {t_freeze:e} s must precede the exit {t_exit:e} s"
        )));
    }
    if !schedule.covers(t_freeze, t_exit) {
        return Err(Error::range(
            "Ramsey window",
            format!("[{t_freeze}, {t_exit}]"),
            format!("[{}, {}]", schedule.start(), schedule.end()),
        ));
    }
    if n_a == 0 && n_b == 0 {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = schedule
        .switch_times()
        .into_iter()
        .filter(|&t| t > t_freeze && t < t_exit)
        .collect();
    cuts.insert(0, t_freeze);
    cuts.push(t_exit);

    // shift_g ∝ Ω(t)², so each constant-detuning piece is a Gaussian
    // integral done by composite Simpson.
    let mut phase = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = schedule.detuning_at(0.5 * (a + b))?;
        let per_omega2 = shift(AtomLevel::Ground, n_a, n_b, d, params.delta, 1.0)?;
        let m = 2000;
        let h = (b - a) / m as f64;
        let mut s = 0.0;
        for k in 0..=m {
            let t = a + k as f64 * h;
            let wgt = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += wgt * coupling_at(t, params).powi(2);
        }
        phase -= per_omega2 * s * h / 3.0;
    }
    Ok(phase)
}

/// `∫ (Ω(t)/Ω0)³ dt = w √(π/3) / v`.
pub fn effective_envelope_time(params: &SystemParams) -> f64 {
    params.waist * (std::f64::consts::PI / 3.0).sqrt() / params.velocity
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeTransfer {
    pub probability: f64,
    /// Rotation angle of the effective two-level system.
    pub area: f64,
    /// Set when Δ < 2Ω, where the adiabatic elimination is unreliable.
    pub regime_warning: bool,
}

/// Effective two-level estimate of the Raman transfer across one transit.
///
/// With coupling V(t) between the two states the populations rotate by
/// `θ = 2 ∫ V dt` and `P = sin²(θ/2)`.
pub fn perturbative_transfer(n: usize, params: &SystemParams, detuning: f64) -> Result<PerturbativeTransfer> {
    params.validate()?;
    if !(detuning > 0.0 && detuning <= params.delta) {
        return Err(Error::range("Δ", detuning, "(0, δ]"));
    }
    let v = raman_coupling(n, detuning, params.delta, params.omega0)?;
    let area = 2.0 * v * effective_envelope_time(params);
    Ok(PerturbativeTransfer {
        probability: (area / 2.0).sin().powi(2),
        area,
        regime_warning: detuning < 2.0 * params.omega0,
    })
}

/// Gap between the two dressed levels built on |e,0,n⟩ and |g,2,n−1⟩ at
/// constant coupling Ω0 and fixed Δ, from exact diagonalization of the
/// excitation sector N = n + 1.
pub fn dressed_splitting(n: usize, detuning: f64, params: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("n ≥ 1 required".into()));
    }
    let space = FockSpace::new(n + 1, n + 1);
    let sector = &space.excitation_sectors()[n + 1];
    let h = hamiltonian_with(detuning, params.omega0, params.delta, space);
    let k = sector.len();
    let sub = DMatrix::from_fn(k, k, |i, j| h.matrix()[(sector[i], sector[j])].re);
    let eig = SymmetricEigen::new(sub);
    let pos = |l: BasisLabel| -> usize {
        let g = space.index_unchecked(l.level, l.n_a, l.n_b);
        sector.iter().position(|&s| s == g).expect("label in sector")
    };
    let pe = pos(BasisLabel::new(AtomLevel::Excited, 0, n));
    let pg = pos(BasisLabel::new(AtomLevel::Ground, 2, n - 1));
    let mut weight: Vec<(f64, f64)> = (0..k)
        .map(|c| {
            let v = eig.eigenvectors.column(c);
            (v[pe].powi(2) + v[pg].powi(2), eig.eigenvalues[c])
        })
        .collect();
    weight.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((weight[0].1 - weight[1].1).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvoidedCrossing {
    /// Detuning of the smallest gap (rad/s).
    pub detuning: f64,
    /// Smallest gap (rad/s).
    pub splitting: f64,
}

/// Locates the minimum of [`dressed_splitting`] over `(lo, hi)`.
pub fn avoided_crossing(n: usize, params: &SystemParams, lo: f64, hi: f64) -> Result<AvoidedCrossing> {
    if !(hi > lo) {
        return Err(Error::range("detuning window", format!("[{lo}, {hi}]"), "lo < hi"));
    }
    let grid = 400;
    let step = (hi - lo) / grid as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=grid {
        let d = lo + k as f64 * step;
        let s = dressed_splitting(n, d, params)?;
        if s < best.0 {
            best = (s, d);
        }
    }
    // golden-section refinement around the grid minimum
    let (mut a, mut b) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = dressed_splitting(n, c, params)?;
    let mut fd = dressed_splitting(n, d, params)?;
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dressed_splitting(n, c, params)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dressed_splitting(n, d, params)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok(AvoidedCrossing {
        detuning: x,
        splitting: dressed_splitting(n, x, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{khz, to_khz};
    use approx::assert_abs_diff_eq;

    fn p() -> SystemParams {
        SystemParams::nominal()
    }

    #[test]
    fn raman_coupling_examples() {
        let p = p();
        assert_eq!(raman_coupling(0, p.delta, p.delta, p.omega0).unwrap(), 0.0);
        let v6 = raman_coupling(6, p.delta, p.delta, p.omega0).unwrap();
        // 49³ √12 / (8 · 128 · 256) kHz
        let oracle = 49f64.powi(3) * 12f64.sqrt() / (8.0 * 128.0 * 256.0);
        assert_abs_diff_eq!(to_khz(v6), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(to_khz(v6), 1.55, epsilon = 0.01);
        let d = khz(70.0);
        let r = raman_coupling(12, d, p.delta, p.omega0).unwrap() / raman_coupling(3, d, p.delta, p.omega0).unwrap();
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-14);
        assert!(matches!(raman_coupling(6, 0.0, p.delta, p.omega0), Err(Error::Singular(_))));
        assert!(matches!(raman_coupling(6, -p.delta, p.delta, p.omega0), Err(Error::Singular(_))));
        assert!(raman_coupling(6, -khz(10.0), p.delta, p.omega0).is_err());
    }

    #[test]
    fn light_shift_examples() {
        let p = p();
        let d = khz(135.0);
        assert_eq!(light_shift(AtomLevel::Ground, 0, 0, d, p.delta, p.omega0).unwrap().shift, 0.0);
        let s = light_shift(AtomLevel::Ground, 1, 0, d, p.delta, p.omega0).unwrap().shift;
        assert_abs_diff_eq!(to_khz(s), -49.0 * 49.0 / (4.0 * 135.0), epsilon = 1e-10);
        assert_abs_diff_eq!(to_khz(s), -4.45, epsilon = 0.01);
        // linear in both photon numbers
        let f = |a, b| light_shift(AtomLevel::Ground, a, b, d, p.delta, p.omega0).unwrap().shift;
        assert_abs_diff_eq!(f(3, 2), 3.0 * f(1, 0) + 2.0 * f(0, 1), epsilon = 1e-6);
        assert!(light_shift(AtomLevel::Excited, 0, 0, 0.0, p.delta, p.omega0).is_err());
    }

    #[test]
    fn shifts_of_a_virtual_transition_are_opposite() {
        // |e,2,0⟩ ↔ |g,3,0⟩: e gains 3Ω²/(4Δ), g loses it; e also has its
        // M_b vacuum term Ω²/(4(Δ+δ)) which g at n_b = 0 lacks
        let p = p();
        let d = khz(90.0);
        let e = light_shift(AtomLevel::Excited, 2, 0, d, p.delta, p.omega0).unwrap().shift;
        let g = light_shift(AtomLevel::Ground, 3, 0, d, p.delta, p.omega0).unwrap().shift;
        let mb = p.omega0.powi(2) / (4.0 * (d + p.delta));
        assert!(e > 0.0 && g < 0.0);
        assert_abs_diff_eq!(e - mb, -g, epsilon = 1e-9 * e);
    }

    #[test]
    fn resonance_tends_to_delta_for_weak_coupling() {
        let p = p();
        let r = shifted_raman_resonance(6, p.omega0 * 1e-3, p.delta).unwrap();
        assert_abs_diff_eq!(r / p.delta, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn resonance_for_six_photons() {
        let p = p();
        let r = shifted_raman_resonance(6, p.omega0, p.delta).unwrap();
        let f = r - p.delta + 0.25 * p.omega0.powi(2) * (3.0 / r + 12.0 / (r + p.delta));
        assert!(f.abs() <= 1e-6 * p.delta);
        assert!(to_khz(r) > 0.0 && to_khz(r) < 128.0);
    }

    #[test]
    fn resonance_decreases_with_photon_number() {
        let p = p();
        let rs: Vec<f64> = (1..=6).map(|n| shifted_raman_resonance(n, p.omega0, p.delta).unwrap()).collect();
        assert!(rs.windows(2).all(|w| w[1] < w[0]), "{rs:?}");
        assert!(matches!(shifted_raman_resonance(0, p.omega0, p.delta), Err(Error::Precondition(_))));
        assert!(matches!(shifted_raman_resonance(40, p.omega0, p.delta), Err(Error::NoResonance(_))));
    }

    #[test]
    fn higher_order_resonances_sit_near_bare_values() {
        let p = p();
        let f = fifth_order_resonance(6, p.omega0, p.delta).unwrap();
        assert!(f < 2.0 * p.delta && f > p.delta);
        let r = reverse_raman_resonance(2, p.omega0, p.delta).unwrap();
        assert!(r > -2.0 * p.delta && r < -p.delta);
        // for larger n the shifts outgrow the bare gap before it closes
        assert!(matches!(reverse_raman_resonance(6, p.omega0, p.delta), Err(Error::NoResonance(_))));
        assert!(fifth_order_resonance(1, p.omega0, p.delta).is_err());
        assert!(reverse_raman_resonance(1, p.omega0, p.delta).is_err());
    }

    #[test]
    fn ramsey_phase_properties() {
        let p = p().with_velocity(170.0);
        let (t0, t1) = p.transit_window();
        let sched = DetuningSchedule::switched(khz(65.0), khz(135.0), 5e-6, t0, t1).unwrap();
        assert_eq!(ramsey_phase(0, 0, &sched, &p, 5e-6).unwrap(), 0.0);
        let ph = |a, b| ramsey_phase(a, b, &sched, &p, 5e-6).unwrap();
        assert_abs_diff_eq!(ph(3, 0), 3.0 * ph(1, 0), epsilon = 1e-12);
        assert!(ph(1, 0) > 0.0);
        let d = khz(135.0);
        let ratio = (ph(2, 5) - ph(0, 6)) / (ph(1, 6) - ph(0, 6));
        assert_abs_diff_eq!(ratio, 2.0 - d / (d + p.delta), epsilon = 1e-9);
        assert!(ratio > 1.45 && ratio < 1.55);
        assert!(ramsey_phase(1, 0, &sched, &p, t1 + 1e-6).is_err());
    }

    #[test]
    fn ramsey_phase_matches_gaussian_integral() {
        // ∫ exp(−2(vt/w)²) dt over the whole axis = w √(π/2) / v
        let p = p();
        let (t0, t1) = p.transit_window();
        let d = khz(100.0);
        let sched = DetuningSchedule::constant(d, t0, t1).unwrap();
        let phase = ramsey_phase(1, 0, &sched, &p, t0).unwrap();
        let oracle = p.omega0.powi(2) / (4.0 * d) * p.waist * (std::f64::consts::PI / 2.0).sqrt() / p.velocity;
        assert_abs_diff_eq!(phase, oracle, epsilon = 1e-6 * oracle);
    }

    #[test]
    fn envelope_time_and_transfer() {
        let p = p();
        assert_abs_diff_eq!(effective_envelope_time(&p), 30.7e-6, epsilon = 0.05e-6);
        let d = khz(100.0);
        assert_eq!(perturbative_transfer(0, &p, d).unwrap().probability, 0.0);
        let ps: Vec<f64> = (0..8).map(|n| perturbative_transfer(n, &p, d).unwrap().probability).collect();
        assert!(ps.windows(2).all(|w| w[1] >= w[0]));
        assert!(perturbative_transfer(6, &p, khz(60.0)).unwrap().regime_warning);
        assert!(!perturbative_transfer(6, &p, khz(110.0)).unwrap().regime_warning);
        assert!(perturbative_transfer(6, &p, khz(200.0)).is_err());
    }

    #[test]
    fn weak_coupling_splitting_is_twice_the_exact_coupling() {
        // Oracle: for Ω ≪ Δ, δ the gap at the crossing is 2·Ω³√(2n)/(8Δδ)
        // (the two virtual paths have energy denominators Δ and δ at Δ ≈ δ).
        let p = SystemParams {
            omega0: khz(2.0),
            ..SystemParams::nominal()
        };
        let n = 3;
        let x = avoided_crossing(n, &p, 0.9 * p.delta, 1.1 * p.delta).unwrap();
        let oracle = 2.0 * p.omega0.powi(3) * (2.0 * n as f64).sqrt() / (8.0 * x.detuning * p.delta);
        assert_abs_diff_eq!(x.splitting / oracle, 1.0, epsilon = 0.01);
    }
}
