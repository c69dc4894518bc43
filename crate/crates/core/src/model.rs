//! Atom-cavity Hamiltonian, transit coupling, Stark detuning schedule and
//! cavity damping.
//!
//! Everything is expressed in the frame rotating at the mode-a frequency:
//! `Δ = ω_atom − ω_a` and `ω_b = ω_a − δ`. Times are in seconds and all
//! frequencies are angular (rad/s); conversion from kHz happens at the edges.
//!
//! ```text
//! H(t)/ħ = Δ(t) P_e − δ n_b + Ω(t)/2 (a σ₊ + a† σ₋ + b σ₊ + b† σ₋)
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{AtomLevel, FockSpace, LinearOperator, Mode, ModeOp};

pub const TWO_PI: f64 = 2.0 * PI;

/// Coupling is set to zero beyond this many waists from the cavity axis.
pub const CUTOFF_WAISTS: f64 = 3.0;

/// `2π · f` for a frequency given in kHz.
pub fn khz(f_khz: f64) -> f64 {
    TWO_PI * 1e3 * f_khz
}

/// Inverse of [`khz`].
pub fn to_khz(omega: f64) -> f64 {
    omega / (TWO_PI * 1e3)
}

pub fn us(t_us: f64) -> f64 {
    t_us * 1e-6
}

/// Physical constants of the atom-cavity system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Peak vacuum Rabi frequency (rad/s).
    pub omega0: f64,
    /// Splitting `ω_a − ω_b` (rad/s).
    pub delta: f64,
    /// Gaussian mode waist (m).
    pub waist: f64,
    /// Atomic velocity (m/s).
    pub velocity: f64,
    /// Energy decay rates (1/s).
    pub kappa_a: f64,
    pub kappa_b: f64,
    /// Mean thermal occupation of the baths.
    pub n_th_a: f64,
    pub n_th_b: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams::nominal()
    }
}

impl SystemParams {
    /// Ω/2π = 49 kHz, δ/2π = 128 kHz, w = 6 mm, damping times 1.2 ms and
    /// 0.9 ms, v = 200 m/s, fields erased (`n_th = 0`).
    pub fn nominal() -> Self {
        SystemParams {
            omega0: khz(49.0),
            delta: khz(128.0),
            waist: 6e-3,
            velocity: 200.0,
            kappa_a: 1.0 / 1.2e-3,
            kappa_b: 1.0 / 0.9e-3,
            n_th_a: 0.0,
            n_th_b: 0.0,
        }
    }

    pub fn with_velocity(mut self, velocity: f64) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_thermal(mut self, n_th_a: f64, n_th_b: f64) -> Self {
        self.n_th_a = n_th_a;
        self.n_th_b = n_th_b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega0", self.omega0),
            ("delta", self.delta),
            ("waist", self.waist),
            ("velocity", self.velocity),
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} must be strictly positive")));
            }
        }
        for (name, v) in [("n_th_a", self.n_th_a), ("n_th_b", self.n_th_b)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Time after which the coupling is cut off, `3w/v`.
    pub fn cutoff_time(&self) -> f64 {
        CUTOFF_WAISTS * self.waist / self.velocity
    }

    /// `[−3w/v, +3w/v]`.
    pub fn transit_window(&self) -> (f64, f64) {
        let t = self.cutoff_time();
        (-t, t)
    }

    /// `w / v`.
    pub fn transit_time(&self) -> f64 {
        self.waist / self.velocity
    }
}

/// Gaussian transit coupling `Ω(t) = Ω₀ exp(−(vt/w)²)`, zero beyond `|vt| > 3w`.
pub fn coupling_at(t: f64, params: &SystemParams) -> f64 {
    let x = params.velocity * t / params.waist;
    if x.abs() > CUTOFF_WAISTS {
        0.0
    } else {
        params.omega0 * (-x * x).exp()
    }
}

/// Shape of the atom-field coupling in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingProfile {
    /// Gaussian transit through the mode, see [`coupling_at`].
    #[default]
    Transit,
    /// Ω₀ at all times.
    Constant,
    /// No coupling at all.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Δ in rad/s.
    pub detuning: f64,
}

/// Piecewise-constant detuning Δ(t), `t = 0` at the cavity axis.
///
/// Segments are closed-open, except that the last one also contains its end.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningSchedule {
    segments: Vec<Segment>,
}

impl DetuningSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("schedule", "no segments"));
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.end > s.start) {
                return Err(Error::invalid("schedule", format!("segment {k} is empty")));
            }
            if !s.detuning.is_finite() {
                return Err(Error::invalid("schedule", format!("segment {k} detuning not finite")));
            }
        }
        for w in segments.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::invalid(
                    "schedule",
                    format!("gap or overlap between {} and {}", w[0].end, w[1].start),
                ));
            }
        }
        Ok(DetuningSchedule { segments })
    }

    pub fn constant(detuning: f64, start: f64, end: f64) -> Result<Self> {
        DetuningSchedule::new(vec![Segment { start, end, detuning }])
    }

    /// Constant Δ over the transit window of `params`.
    pub fn flat(detuning: f64, params: &SystemParams) -> Self {
        let (t0, t1) = params.transit_window();
        DetuningSchedule::constant(detuning, t0, t1).expect("transit window is non-empty")
    }

    /// Δ jumps from `before` to `after` at `t_switch`.
    pub fn switched(before: f64, after: f64, t_switch: f64, start: f64, end: f64) -> Result<Self> {
        if !(t_switch > start && t_switch < end) {
            return Err(Error::invalid(
                "t_switch",
                format!("{t_switch} outside ({start}, {end})"),
            ));
        }
        DetuningSchedule::new(vec![
            Segment {
                start,
                end: t_switch,
                detuning: before,
            },
            Segment {
                start: t_switch,
                end,
                detuning: after,
            },
        ])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        t0 >= self.start() && t1 <= self.end()
    }

    pub fn detuning_at(&self, t: f64) -> Result<f64> {
        if t < self.start() || t > self.end() || t.is_nan() {
            return Err(Error::range(
                "t",
                t,
                format!("[{}, {}]", self.start(), self.end()),
            ));
        }
        let last = self.segments.len() - 1;
        for (k, s) in self.segments.iter().enumerate() {
            if t < s.end || k == last {
                return Ok(s.detuning);
            }
        }
        unreachable!()
    }

    /// Interior switching times.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments[1..].iter().map(|s| s.start).collect()
    }
}

/// `H(t)/ħ` as a dense operator.
pub fn hamiltonian_at(
    t: f64,
    schedule: &DetuningSchedule,
    params: &SystemParams,
    space: FockSpace,
) -> Result<LinearOperator> {
    let detuning = schedule.detuning_at(t)?;
    Ok(hamiltonian_with(detuning, coupling_at(t, params), params.delta, space))
}

/// Hamiltonian for explicit Δ and Ω.
pub fn hamiltonian_with(detuning: f64, omega: f64, delta: f64, space: FockSpace) -> LinearOperator {
    let g = Generator::hamiltonian_only(space);
    let mut mat = DMatrix::zeros(space.dim(), space.dim());
    for i in 0..space.dim() {
        mat[(i, i)] = C64::new(detuning * g.pe[i] - delta * g.nb[i], 0.0);
    }
    for &(i, j, c) in &g.couplings {
        let v = C64::new(omega * c, 0.0);
        mat[(i, j)] = v;
        mat[(j, i)] = v;
    }
    LinearOperator::from_matrix(space, mat).expect("dimension matches space")
}

/// One Lindblad collapse channel `√rate · L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipator {
    pub mode: Mode,
    /// [`ModeOp::Annihilate`] for emission into the bath, [`ModeOp::Create`]
    /// for thermal absorption.
    pub kind: ModeOp,
    pub rate: f64,
}

impl Dissipator {
    /// `√rate · L` as a dense operator.
    pub fn operator(&self, space: FockSpace) -> LinearOperator {
        crate::fockspace::mode_operator(self.mode, self.kind, space).scaled(C64::new(self.rate.sqrt(), 0.0))
    }
}

/// `κ(1 + n_th) D[a]`, `κ n_th D[a†]` and the same for mode b.
pub fn lindblad_dissipators(params: &SystemParams) -> Vec<Dissipator> {
    vec![
        Dissipator {
            mode: Mode::A,
            kind: ModeOp::Annihilate,
            rate: params.kappa_a * (1.0 + params.n_th_a),
        },
        Dissipator {
            mode: Mode::A,
            kind: ModeOp::Create,
            rate: params.kappa_a * params.n_th_a,
        },
        Dissipator {
            mode: Mode::B,
            kind: ModeOp::Annihilate,
            rate: params.kappa_b * (1.0 + params.n_th_b),
        },
        Dissipator {
            mode: Mode::B,
            kind: ModeOp::Create,
            rate: params.kappa_b * params.n_th_b,
        },
    ]
}

/// Time-dependent generator of the open atom-cavity dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    space: FockSpace,
    params: SystemParams,
    schedule: DetuningSchedule,
    profile: CouplingProfile,
    dissipators: Vec<Dissipator>,
}

impl LindbladModel {
    pub fn new(params: SystemParams, schedule: DetuningSchedule, space: FockSpace) -> Result<Self> {
        params.validate()?;
        Ok(LindbladModel {
            space,
            params,
            schedule,
            profile: CouplingProfile::Transit,
            dissipators: lindblad_dissipators(&params),
        })
    }

    pub fn with_profile(mut self, profile: CouplingProfile) -> Self {
        self.profile = profile;
        self
    }

    /// Drops cavity relaxation.
    pub fn without_dissipation(mut self) -> Self {
        self.dissipators.clear();
        self
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn schedule(&self) -> &DetuningSchedule {
        &self.schedule
    }

    pub fn profile(&self) -> CouplingProfile {
        self.profile
    }

    pub fn dissipators(&self) -> &[Dissipator] {
        &self.dissipators
    }

    pub fn is_closed(&self) -> bool {
        self.dissipators.iter().all(|d| d.rate == 0.0)
    }

    pub fn coupling(&self, t: f64) -> f64 {
        match self.profile {
            CouplingProfile::Transit => coupling_at(t, &self.params),
            CouplingProfile::Constant => self.params.omega0,
            CouplingProfile::Off => 0.0,
        }
    }

    /// Times at which Ω(t) is discontinuous.
    pub(crate) fn coupling_edges(&self) -> Vec<f64> {
        match self.profile {
            CouplingProfile::Transit => {
                let (a, b) = self.params.transit_window();
                vec![a, b]
            }
            _ => Vec::new(),
        }
    }

    pub(crate) fn coupling_active(&self, t0: f64, t1: f64) -> bool {
        match self.profile {
            CouplingProfile::Transit => {
                let (a, b) = self.params.transit_window();
                t1 > a && t0 < b
            }
            CouplingProfile::Constant => true,
            CouplingProfile::Off => false,
        }
    }

    pub fn detuning(&self, t: f64) -> Result<f64> {
        self.schedule.detuning_at(t)
    }

    pub fn hamiltonian_at(&self, t: f64) -> Result<LinearOperator> {
        Ok(hamiltonian_with(
            self.detuning(t)?,
            self.coupling(t),
            self.params.delta,
            self.space,
        ))
    }

    pub(crate) fn generator(&self) -> Generator {
        let mut g = Generator::hamiltonian_only(self.space);
        for d in self.dissipators.iter().filter(|d| d.rate > 0.0) {
            g.jumps.push(Jump::new(d, self.space));
        }
        g
    }
}

/// Sparse structure of the generator shared by the integrators.
#[derive(Debug, Clone)]
pub(crate) struct Generator {
    pub pe: Vec<f64>,
    pub nb: Vec<f64>,
    /// Upper-triangle couplings `(i, j, c)`: `H_ij = H_ji = Ω(t) · c`.
    pub couplings: Vec<(usize, usize, f64)>,
    pub jumps: Vec<Jump>,
}

#[derive(Debug, Clone)]
pub(crate) struct Jump {
    pub rate: f64,
    /// `L |i⟩ = coeff |target⟩`.
    pub map: Vec<Option<(usize, f64)>>,
    /// Diagonal of `L† L`.
    pub ltl: Vec<f64>,
}

impl Jump {
    fn new(d: &Dissipator, space: FockSpace) -> Self {
        let mut map = Vec::with_capacity(space.dim());
        let mut ltl = Vec::with_capacity(space.dim());
        for label in space.labels() {
            let n = label.photons(d.mode);
            let target = match d.kind {
                ModeOp::Annihilate if n > 0 => Some((n - 1, (n as f64).sqrt())),
                ModeOp::Create if n < space.n_max(d.mode) => Some((n + 1, ((n + 1) as f64).sqrt())),
                _ => None,
            };
            let mapped = target.map(|(m, c)| {
                let (na, nb) = match d.mode {
                    Mode::A => (m, label.n_b),
                    Mode::B => (label.n_a, m),
                };
                (space.index_unchecked(label.level, na, nb), c)
            });
            ltl.push(mapped.map_or(0.0, |(_, c)| c * c));
            map.push(mapped);
        }
        Jump {
            rate: d.rate,
            map,
            ltl,
        }
    }
}

impl Generator {
    pub fn hamiltonian_only(space: FockSpace) -> Self {
        let mut pe = Vec::with_capacity(space.dim());
        let mut nb = Vec::with_capacity(space.dim());
        let mut couplings = Vec::new();
        for (i, l) in space.labels().enumerate() {
            pe.push(if l.level == AtomLevel::Excited { 1.0 } else { 0.0 });
            nb.push(l.n_b as f64);
            if l.level == AtomLevel::Excited {
                // |e,n_a,n_b⟩ ↔ |g,n_a+1,n_b⟩ and |g,n_a,n_b+1⟩
                if l.n_a < space.n_max_a() {
                    let j = space.index_unchecked(AtomLevel::Ground, l.n_a + 1, l.n_b);
                    couplings.push((j.min(i), j.max(i), 0.5 * ((l.n_a + 1) as f64).sqrt()));
                }
                if l.n_b < space.n_max_b() {
                    let j = space.index_unchecked(AtomLevel::Ground, l.n_a, l.n_b + 1);
                    couplings.push((j.min(i), j.max(i), 0.5 * ((l.n_b + 1) as f64).sqrt()));
                }
            }
        }
        Generator {
            pe,
            nb,
            couplings,
            jumps: Vec::new(),
        }
    }

    /// Diagonal energies `Δ P_e − δ n_b`.
    pub fn energies(&self, detuning: f64, delta: f64) -> Vec<f64> {
        self.pe
            .iter()
            .zip(&self.nb)
            .map(|(p, n)| detuning * p - delta * n)
            .collect()
    }

    /// `Σ_k rate_k (L_k† L_k)_ii`.
    pub fn decay_diagonal(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.pe.len()];
        for j in &self.jumps {
            for (x, l) in g.iter_mut().zip(&j.ltl) {
                *x += j.rate * l;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{atomic_operator, excitation_operator, mode_operator, AtomOp, BasisLabel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn coupling_profile_examples() {
        let p = SystemParams::nominal();
        assert_eq!(coupling_at(0.0, &p), p.omega0);
        assert_abs_diff_eq!(
            coupling_at(p.waist / p.velocity, &p),
            p.omega0 / std::f64::consts::E,
            epsilon = 1e-9
        );
        assert_eq!(coupling_at(3.0001 * p.waist / p.velocity, &p), 0.0);
        assert!(coupling_at(2.9999 * p.waist / p.velocity, &p) > 0.0);
    }

    #[test]
    fn coupling_area_matches_gaussian_integral() {
        // Oracle: ∫ exp(−(vt/w)²) dt = w√π / v, by composite Simpson on the
        // truncated support.
        let p = SystemParams::nominal();
        let (a, b) = p.transit_window();
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = coupling_at(a, &p) + coupling_at(b, &p);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * coupling_at(a + k as f64 * h, &p);
        }
        let area = s * h / 3.0 / p.omega0;
        let exact = p.waist * PI.sqrt() / p.velocity;
        assert_abs_diff_eq!(exact, 53.17e-6, epsilon = 0.01e-6);
        assert!((area - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn detuning_schedule_lookup() {
        let flat = DetuningSchedule::constant(khz(80.0), -1e-4, 1e-4).unwrap();
        assert_eq!(flat.detuning_at(3e-5).unwrap(), khz(80.0));

        let s = DetuningSchedule::switched(khz(65.0), khz(135.0), us(5.0), -1e-4, 1e-4).unwrap();
        assert_eq!(s.detuning_at(us(4.9)).unwrap(), khz(65.0));
        assert_eq!(s.detuning_at(us(5.1)).unwrap(), khz(135.0));
        assert_eq!(s.detuning_at(us(5.0)).unwrap(), khz(135.0));
        assert_eq!(s.detuning_at(1e-4).unwrap(), khz(135.0));
        assert!(matches!(s.detuning_at(2e-4), Err(Error::Range { .. })));
        assert!(s.detuning_at(-2e-4).is_err());
    }

    #[test]
    fn schedule_validation() {
        let gap = vec![
            Segment { start: 0.0, end: 1.0, detuning: 1.0 },
            Segment { start: 1.5, end: 2.0, detuning: 1.0 },
        ];
        assert!(DetuningSchedule::new(gap).is_err());
        assert!(DetuningSchedule::constant(1.0, 1.0, 1.0).is_err());
        assert!(DetuningSchedule::switched(1.0, 2.0, 5.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn nominal_damping_rate() {
        let p = SystemParams::nominal();
        assert_abs_diff_eq!(p.kappa_a, 833.333, epsilon = 1e-3);
        let d = lindblad_dissipators(&p);
        assert_eq!(d.len(), 4);
        assert_eq!(d.iter().filter(|d| d.rate > 0.0).count(), 2);
        assert!(d.iter().filter(|d| d.rate > 0.0).all(|d| d.kind == ModeOp::Annihilate));
    }

    #[test]
    fn level_scheme_energies() {
        let p = SystemParams::nominal();
        let space = FockSpace::new(3, 6);
        let det = khz(80.0);
        let sched = DetuningSchedule::constant(det, -1.0, 1.0).unwrap();
        // Ω(t) = 0 far outside the mode
        let h = hamiltonian_at(0.9, &sched, &p, space).unwrap();
        let e = |l, na, nb| {
            h.element(BasisLabel::new(l, na, nb), BasisLabel::new(l, na, nb))
                .unwrap()
                .re
        };
        let n = 5;
        let e0 = e(AtomLevel::Excited, 0, n);
        assert_abs_diff_eq!(e(AtomLevel::Ground, 1, n) - e0, -det, epsilon = 1e-6);
        assert_abs_diff_eq!(e(AtomLevel::Excited, 1, n - 1) - e0, p.delta, epsilon = 1e-6);
        assert_abs_diff_eq!(e(AtomLevel::Ground, 2, n - 1) - e0, p.delta - det, epsilon = 1e-6);
    }

    #[test]
    fn one_photon_coupling_element() {
        let p = SystemParams::nominal();
        let space = FockSpace::new(2, 4);
        let sched = DetuningSchedule::constant(khz(50.0), -1e-4, 1e-4).unwrap();
        let t = 7e-6;
        let h = hamiltonian_at(t, &sched, &p, space).unwrap();
        for n in 0..=3 {
            let el = h
                .element(BasisLabel::new(AtomLevel::Ground, 1, n), BasisLabel::new(AtomLevel::Excited, 0, n))
                .unwrap();
            assert_abs_diff_eq!(el.re, coupling_at(t, &p) / 2.0, epsilon = 1e-9);
        }
        assert!(h.is_hermitian());
    }

    #[test]
    fn matches_operator_algebra() {
        // Same Hamiltonian assembled from the operator constructors.
        let space = FockSpace::new(3, 3);
        let (det, om, delta) = (1.3, 0.7, 2.1);
        let h = hamiltonian_with(det, om, delta, space);
        let c = |x: f64| C64::new(x, 0.0);
        let pe = atomic_operator(AtomOp::ProjectExcited, space);
        let nb = mode_operator(Mode::B, ModeOp::Number, space);
        let sp = atomic_operator(AtomOp::Raise, space);
        let sm = atomic_operator(AtomOp::Lower, space);
        let a = mode_operator(Mode::A, ModeOp::Annihilate, space);
        let b = mode_operator(Mode::B, ModeOp::Annihilate, space);
        let couple = a
            .compose(&sp)
            .unwrap()
            .add(&a.adjoint().compose(&sm).unwrap())
            .unwrap()
            .add(&b.compose(&sp).unwrap())
            .unwrap()
            .add(&b.adjoint().compose(&sm).unwrap())
            .unwrap();
        let expect = pe
            .scaled(c(det))
            .add(&nb.scaled(c(-delta)))
            .unwrap()
            .add(&couple.scaled(c(om / 2.0)))
            .unwrap();
        assert!((h.matrix() - expect.matrix()).norm() < 1e-14);
    }

    #[test]
    fn excitation_conserved_by_hamiltonian() {
        let space = FockSpace::new(3, 4);
        let h = hamiltonian_with(0.4, 1.1, 2.0, space);
        let comm = h.commutator(&excitation_operator(space)).unwrap();
        assert!(comm.norm() < 1e-12 * h.norm());
    }
}
