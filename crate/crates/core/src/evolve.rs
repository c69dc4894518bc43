//! Time integration of the Schrödinger and Lindblad equations.
//!
//! Both use a Lawson (integrating-factor) explicit Runge-Kutta scheme: the
//! diagonal part of the generator (bare energies `Δ P_e − δ n_b` and the
//! anticommutator damping) is integrated exactly and only the atom-field
//! coupling and the quantum-jump terms go through the RK stages. The
//! default tableau is sixth order. With fourth order the truncation error
//! leaks into the null space of pure or low-rank states and pushes their
//! zero eigenvalues below −10⁻⁸ unless dt is cut well under 0.05 µs; the
//! sixth-order error is smaller by about (hω)².
//!
//! Within a step the detuning is constant: step boundaries are aligned with
//! every switch of the schedule and with the coupling cutoff.
//!
//! Density matrices are stored block-wise by excitation number. The
//! Hamiltonian preserves `N = P_e + n_a + n_b` and each damping channel
//! moves both sides of ρ by one excitation, so a block `(N, M)` only ever
//! couples to blocks with the same difference `N − M`. Only the differences
//! present in the initial state are propagated; all the others stay exactly
//! zero.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{AtomLevel, DensityOperator, FockSpace, StateVector};
use crate::model::{Generator, LindbladModel};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Tolerances enforced on every density-matrix run.
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Fixed steps of `dt` (coupling on) or `dt_free` (coupling off).
    Fixed,
    /// Step doubling with a relative local error target.
    Adaptive { tol_rel: f64 },
}

/// Runge-Kutta tableau used inside the Lawson scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    /// Classical four-stage RK4.
    Four,
    /// Butcher's seven-stage sixth-order method.
    #[default]
    Six,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperSettings {
    /// Step while the atom is coupled to the cavity (s).
    pub dt: f64,
    /// Step while the coupling is zero (s).
    pub dt_free: f64,
    pub method: Method,
    pub order: Order,
}

impl Default for StepperSettings {
    fn default() -> Self {
        StepperSettings {
            dt: 0.1e-6,
            dt_free: 5e-6,
            method: Method::Fixed,
            order: Order::Six,
        }
    }
}

impl StepperSettings {
    pub fn fixed(dt: f64) -> Self {
        StepperSettings {
            dt,
            ..Default::default()
        }
    }

    pub fn adaptive(tol_rel: f64) -> Self {
        StepperSettings {
            method: Method::Adaptive { tol_rel },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dt_free > 0.0) {
            return Err(Error::invalid("dt", "time steps must be > 0"));
        }
        if let Method::Adaptive { tol_rel } = self.method {
            if !(tol_rel > 0.0) {
                return Err(Error::invalid("tol_rel", "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UnitaryOutcome {
    pub state: StateVector,
    /// `| ‖ψ(t1)‖ − ‖ψ(t0)‖ |`; the state is not renormalized.
    pub norm_drift: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct DensityOutcome {
    pub state: DensityOperator,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
}

/// One row of the optional observable trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub p_e: f64,
    pub p_g: f64,
    pub n_a: f64,
    pub n_b: f64,
    pub trace: f64,
    pub min_eigenvalue: Option<f64>,
}

pub const TRACE_CSV_HEADER: &str = "t_us,p_e,p_g,n_a,n_b,trace,min_eigenvalue";

pub fn trace_csv_row(p: &TracePoint) -> String {
    let eig = p.min_eigenvalue.map_or(String::new(), |m| format!("{m:.6e}"));
    format!(
        "{:.6},{:.10},{:.10},{:.10},{:.10},{:.12},{}",
        p.t * 1e6,
        p.p_e,
        p.p_g,
        p.n_a,
        p.n_b,
        p.trace,
        eig
    )
}

/// Which trace rows to record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Record every `stride`-th step (and always the first and last state).
    pub stride: usize,
    /// Also diagonalize the state at each recorded step.
    pub min_eigenvalue: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            stride: 1,
            min_eigenvalue: false,
        }
    }
}

/// Flattened linear system `dx/dt = Λ∘x + Ω(t)·(A_L x + A_R x) + J x`.
///
/// For a density matrix `A_L` and `A_R` are the two sides of the
/// commutator: `A_L` acts on the row index only, `A_R` on the column index
/// only. For a state vector `A_R` is empty.
struct FlatSystem {
    /// `(row, col)` global basis indices of each stored entry; for vectors
    /// `col` is unused.
    entries: Vec<(u32, u32)>,
    is_density: bool,
    /// `out[dst] += Ω · coef · x[src]`
    left_ops: Vec<(u32, u32, C64)>,
    right_ops: Vec<(u32, u32, C64)>,
    /// `out[dst] += w · x[src]`
    jump_ops: Vec<(u32, u32, f64)>,
    decay: Vec<f64>,
    /// Flat position of each diagonal element `ρ_ii`, if stored.
    diag_pos: Vec<Option<usize>>,
    /// Transpose partner of each entry (density only).
    partner: Vec<usize>,
}

impl FlatSystem {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn lambda(&self, energies: &[f64]) -> Vec<C64> {
        self.entries
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as usize, j as usize);
                if self.is_density {
                    C64::new(-0.5 * (self.decay[i] + self.decay[j]), -(energies[i] - energies[j]))
                } else {
                    C64::new(0.0, -energies[i])
                }
            })
            .collect()
    }

    fn rhs(&self, omega: f64, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        if omega != 0.0 {
            for ops in [&self.left_ops, &self.right_ops] {
                for &(dst, src, c) in ops.iter() {
                    out[dst as usize] += c * x[src as usize] * omega;
                }
            }
        }
        for &(dst, src, w) in &self.jump_ops {
            out[dst as usize] += x[src as usize] * w;
        }
    }

    fn symmetrize(&self, x: &mut [C64]) {
        for p in 0..x.len() {
            let q = self.partner[p];
            if q == p {
                x[p].im = 0.0;
            } else if q > p {
                let avg = (x[p] + x[q].conj()) * 0.5;
                x[p] = avg;
                x[q] = avg.conj();
            }
        }
    }

    fn vector(gen: &Generator) -> FlatSystem {
        let dim = gen.pe.len();
        let mut left_ops = Vec::new();
        for &(i, j, c) in &gen.couplings {
            left_ops.push((i as u32, j as u32, C64::new(0.0, -c)));
            left_ops.push((j as u32, i as u32, C64::new(0.0, -c)));
        }
        left_ops.sort_by_key(|op| (op.0, op.1));
        FlatSystem {
            entries: (0..dim as u32).map(|i| (i, i)).collect(),
            is_density: false,
            left_ops,
            right_ops: Vec::new(),
            jump_ops: Vec::new(),
            decay: vec![0.0; dim],
            diag_pos: (0..dim).map(Some).collect(),
            partner: (0..dim).collect(),
        }
    }

    /// Block layout holding every `(N, M)` block whose difference `N − M`
    /// appears in `bands`.
    fn density(gen: &Generator, space: FockSpace, bands: &[i64]) -> FlatSystem {
        let dim = space.dim();
        let sectors = space.excitation_sectors();
        let mut local = vec![0usize; dim];
        let mut sector_of = vec![0usize; dim];
        for (n, sec) in sectors.iter().enumerate() {
            for (k, &g) in sec.iter().enumerate() {
                local[g] = k;
                sector_of[g] = n;
            }
        }

        // Flat offsets of each stored block.
        let ns = sectors.len();
        let mut block_off = vec![None; ns * ns];
        let mut entries = Vec::new();
        for n in 0..ns {
            for m in 0..ns {
                if !bands.contains(&(n as i64 - m as i64)) {
                    continue;
                }
                if sectors[n].is_empty() || sectors[m].is_empty() {
                    continue;
                }
                block_off[n * ns + m] = Some(entries.len());
                for &gi in &sectors[n] {
                    for &gj in &sectors[m] {
                        entries.push((gi as u32, gj as u32));
                    }
                }
            }
        }
        let pos = |gi: usize, gj: usize| -> Option<usize> {
            let (n, m) = (sector_of[gi], sector_of[gj]);
            block_off[n * ns + m].map(|off| off + local[gi] * sectors[m].len() + local[gj])
        };

        // Per-row coupling lists in global indices.
        let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(i, j, c) in &gen.couplings {
            neighbours[i].push((j, c));
            neighbours[j].push((i, c));
        }

        let mut left_ops = Vec::new();
        let mut right_ops = Vec::new();
        let mut jump_ops = Vec::new();
        for (p, &(gi, gj)) in entries.iter().enumerate() {
            let (gi, gj) = (gi as usize, gj as usize);
            // −i (H ρ − ρ H): (Hρ)_ij = Σ_k H_ik ρ_kj, (ρH)_ij = Σ_k ρ_ik H_kj
            for &(k, c) in &neighbours[gi] {
                let src = pos(k, gj).expect("coupling stays inside the sector");
                left_ops.push((p as u32, src as u32, C64::new(0.0, -c)));
            }
            for &(k, c) in &neighbours[gj] {
                let src = pos(gi, k).expect("coupling stays inside the sector");
                right_ops.push((p as u32, src as u32, C64::new(0.0, c)));
            }
        }
        // L ρ L†: ρ_kl feeds (Lρ L†)_{map(k), map(l)}
        for jump in &gen.jumps {
            for (src, &(gk, gl)) in entries.iter().enumerate() {
                let (Some((ti, ci)), Some((tj, cj))) = (jump.map[gk as usize], jump.map[gl as usize]) else {
                    continue;
                };
                if let Some(dst) = pos(ti, tj) {
                    jump_ops.push((dst as u32, src as u32, jump.rate * ci * cj));
                }
            }
        }
        left_ops.sort_by_key(|op| (op.0, op.1));
        right_ops.sort_by_key(|op| (op.0, op.1));
        jump_ops.sort_by_key(|op| (op.0, op.1));

        let diag_pos = (0..dim).map(|i| pos(i, i)).collect();
        let partner = entries
            .iter()
            .map(|&(i, j)| pos(j as usize, i as usize).expect("band set is symmetric"))
            .collect();
        FlatSystem {
            entries,
            is_density: true,
            left_ops,
            right_ops,
            jump_ops,
            decay: gen.decay_diagonal(),
            diag_pos,
            partner,
        }
    }
}

/// Explicit tableau whose nodes are multiples of 1/6, so every Lawson
/// factor `e^{λ (c_i − c_j) h}` comes from a small table.
struct Tableau {
    /// Nodes in sixths.
    c: &'static [i32],
    a: &'static [&'static [f64]],
    b: &'static [f64],
}

const RK4: Tableau = Tableau {
    c: &[0, 3, 3, 6],
    a: &[&[], &[0.5], &[0.0, 0.5], &[0.0, 0.0, 1.0]],
    b: &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
};

const RK6: Tableau = Tableau {
    c: &[0, 2, 4, 2, 3, 3, 6],
    a: &[
        &[],
        &[1.0 / 3.0],
        &[0.0, 2.0 / 3.0],
        &[1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0],
        &[-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0],
        &[0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 0.5],
        &[9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0],
    ],
    b: &[11.0 / 120.0, 0.0, 27.0 / 40.0, 27.0 / 40.0, -4.0 / 15.0, -4.0 / 15.0, 11.0 / 120.0],
};

impl Order {
    fn tableau(self) -> &'static Tableau {
        match self {
            Order::Four => &RK4,
            Order::Six => &RK6,
        }
    }
}

/// `e^{λ m h/6}` for `m = −6..=6`, built for one step size.
struct Phases {
    table: Vec<Option<Vec<C64>>>,
}

impl Phases {
    fn new(lambda: &[C64], h: f64, tab: &Tableau) -> Phases {
        let mut table: Vec<Option<Vec<C64>>> = vec![None; 13];
        let mut need = |m: i32| {
            let slot = &mut table[(m + 6) as usize];
            if m != 0 && slot.is_none() {
                *slot = Some(lambda.iter().map(|l| (l * (m as f64 * h / 6.0)).exp()).collect());
            }
        };
        for (i, &ci) in tab.c.iter().enumerate() {
            need(ci);
            need(6 - ci);
            for (j, &cj) in tab.c.iter().enumerate().take(i) {
                if tab.a[i][j] != 0.0 {
                    need(ci - cj);
                }
            }
        }
        Phases { table }
    }

    /// `None` means the identity.
    fn get(&self, m: i32) -> Option<&[C64]> {
        self.table[(m + 6) as usize].as_deref()
    }
}

struct Scratch {
    k: Vec<Vec<C64>>,
    u: Vec<C64>,
}

impl Scratch {
    fn new(n: usize, stages: usize) -> Self {
        Scratch {
            k: vec![vec![ZERO; n]; stages],
            u: vec![ZERO; n],
        }
    }
}

fn mul_phase(phi: Option<&[C64]>, p: usize, z: C64) -> C64 {
    match phi {
        Some(f) => f[p] * z,
        None => z,
    }
}

/// One Lawson step: stage `i` is
/// `U_i = φ(c_i h) x + h Σ_j a_ij φ((c_i − c_j) h) k_j`, `k_i = N(t + c_i h, U_i)`.
#[allow(clippy::too_many_arguments)]
fn lawson_step(
    sys: &FlatSystem,
    model: &LindbladModel,
    tab: &Tableau,
    t: f64,
    h: f64,
    x: &mut [C64],
    ph: &Phases,
    w: &mut Scratch,
) {
    let n = x.len();
    for i in 0..tab.c.len() {
        let ci = tab.c[i];
        let phi = ph.get(ci);
        for p in 0..n {
            w.u[p] = mul_phase(phi, p, x[p]);
        }
        for (j, &aij) in tab.a[i].iter().enumerate() {
            if aij == 0.0 {
                continue;
            }
            let f = ph.get(ci - tab.c[j]);
            let kj = &w.k[j];
            for p in 0..n {
                w.u[p] += mul_phase(f, p, kj[p]) * (h * aij);
            }
        }
        let omega = model.coupling(t + ci as f64 * h / 6.0);
        sys.rhs(omega, &w.u, &mut w.k[i]);
    }
    let full = ph.get(6);
    for p in 0..n {
        let mut acc = mul_phase(full, p, x[p]);
        for (j, &bj) in tab.b.iter().enumerate() {
            if bj != 0.0 {
                acc += mul_phase(ph.get(6 - tab.c[j]), p, w.k[j][p]) * (h * bj);
            }
        }
        x[p] = acc;
    }
}

fn advance(sys: &FlatSystem, model: &LindbladModel, tab: &Tableau, t: f64, h: f64, x: &mut [C64], ph: &Phases, w: &mut Scratch) {
    lawson_step(sys, model, tab, t, h, x, ph, w);
    if sys.is_density {
        sys.symmetrize(x);
    }
}

/// Sub-intervals of `[t0, t1]` with constant detuning and a fixed coupling
/// regime.
fn intervals(model: &LindbladModel, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = model
        .schedule()
        .switch_times()
        .into_iter()
        .chain(model.coupling_edges())
        .filter(|&c| c > t0 && c < t1)
        .collect();
    cuts.push(t0);
    cuts.push(t1);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn check_window(model: &LindbladModel, t0: f64, t1: f64) -> Result<()> {
    if !(t1 > t0) {
        return Err(Error::Precondition(format!("t1 = {t1} must exceed t0 = {t0}")));
    }
    if !model.schedule().covers(t0, t1) {
        return Err(Error::range(
            "integration window",
            format!("[{t0}, {t1}]"),
            format!("[{}, {}]", model.schedule().start(), model.schedule().end()),
        ));
    }
    Ok(())
}

/// Drives the flat system across `[t0, t1]`. `on_step` sees `(t, x)` after
/// every accepted step.
fn integrate(
    sys: &FlatSystem,
    model: &LindbladModel,
    t0: f64,
    t1: f64,
    settings: &StepperSettings,
    x: &mut [C64],
    on_step: &mut dyn FnMut(f64, &[C64]),
) -> Result<usize> {
    let gen_energies = Generator::hamiltonian_only(model.space());
    let delta = model.params().delta;
    let tab = settings.order.tableau();
    let mut w = Scratch::new(sys.len(), tab.c.len());
    let mut steps = 0;
    for (a, b) in intervals(model, t0, t1) {
        let detuning = model.detuning(0.5 * (a + b))?;
        let lambda = sys.lambda(&gen_energies.energies(detuning, delta));
        let dt = if model.coupling_active(a, b) {
            settings.dt
        } else {
            settings.dt_free
        };
        match settings.method {
            Method::Fixed => {
                let n = ((b - a) / dt - 1e-9).ceil().max(1.0) as usize;
                let h = (b - a) / n as f64;
                let ph = Phases::new(&lambda, h, tab);
                for k in 0..n {
                    advance(sys, model, tab, a + k as f64 * h, h, x, &ph, &mut w);
                    steps += 1;
                    on_step(a + (k + 1) as f64 * h, x);
                }
            }
            Method::Adaptive { tol_rel } => {
                let order = match settings.order {
                    Order::Four => 4.0,
                    Order::Six => 6.0,
                };
                let mut t = a;
                let mut h = dt.min(b - a);
                let mut full = vec![ZERO; x.len()];
                let mut halves = vec![ZERO; x.len()];
                while t < b {
                    let last = t + h >= b;
                    let hh = if last { b - t } else { h };
                    full.copy_from_slice(x);
                    advance(sys, model, tab, t, hh, &mut full, &Phases::new(&lambda, hh, tab), &mut w);
                    halves.copy_from_slice(x);
                    let q = Phases::new(&lambda, 0.5 * hh, tab);
                    advance(sys, model, tab, t, 0.5 * hh, &mut halves, &q, &mut w);
                    advance(sys, model, tab, t + 0.5 * hh, 0.5 * hh, &mut halves, &q, &mut w);
                    let scale = halves.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
                    let err = full
                        .iter()
                        .zip(&halves)
                        .map(|(p, q)| (p - q).norm())
                        .fold(0.0, f64::max)
                        / (scale * tol_rel);
                    if err <= 1.0 {
                        x.copy_from_slice(&halves);
                        t = if last { b } else { t + hh };
                        steps += 1;
                        on_step(t, x);
                    }
                    let factor = if err == 0.0 {
                        2.0
                    } else {
                        (0.9 * err.powf(-1.0 / (order + 1.0))).clamp(0.2, 2.0)
                    };
                    h = hh * factor;
                    if h < 1e-14 * (t1 - t0).abs().max(1e-300) {
                        return Err(Error::StepUnderflow { t, h });
                    }
                }
            }
        }
    }
    Ok(steps)
}

/// Solves `dψ/dt = −i H(t) ψ` from `t0` to `t1`, ignoring dissipators.
pub fn evolve_unitary(
    psi0: &StateVector,
    model: &LindbladModel,
    t0: f64,
    t1: f64,
    settings: &StepperSettings,
) -> Result<UnitaryOutcome> {
    settings.validate()?;
    check_window(model, t0, t1)?;
    if psi0.space() != model.space() {
        return Err(Error::DimensionMismatch {
            expected: model.space().dim(),
            got: psi0.space().dim(),
        });
    }
    let gen = Generator::hamiltonian_only(model.space());
    let sys = FlatSystem::vector(&gen);
    let mut x: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let steps = integrate(&sys, model, t0, t1, settings, &mut x, &mut |_, _| {})?;
    let mut out = psi0.clone();
    out.amplitudes_mut().iter_mut().zip(&x).for_each(|(d, s)| *d = *s);
    let norm_drift = (out.norm() - psi0.norm()).abs();
    Ok(UnitaryOutcome {
        state: out,
        norm_drift,
        steps,
    })
}

/// Solves the Lindblad master equation from `t0` to `t1`.
pub fn evolve_density(
    rho0: &DensityOperator,
    model: &LindbladModel,
    t0: f64,
    t1: f64,
    settings: &StepperSettings,
) -> Result<DensityOutcome> {
    run_density(rho0, model, t0, t1, settings, None)
}

/// As [`evolve_density`], reporting observables along the way.
pub fn evolve_density_traced(
    rho0: &DensityOperator,
    model: &LindbladModel,
    t0: f64,
    t1: f64,
    settings: &StepperSettings,
    options: TraceOptions,
    observer: &mut dyn FnMut(&TracePoint),
) -> Result<DensityOutcome> {
    run_density(rho0, model, t0, t1, settings, Some((options, observer)))
}

fn excitation_bands(rho: &DensityOperator) -> Vec<i64> {
    let space = rho.space();
    let exc: Vec<i64> = space.labels().map(|l| l.excitation() as i64).collect();
    let mut bands = Vec::new();
    let m = rho.matrix();
    for i in 0..space.dim() {
        for j in 0..space.dim() {
            if m[(i, j)] != ZERO {
                let k = exc[i] - exc[j];
                if !bands.contains(&k) {
                    bands.push(k);
                    bands.push(-k);
                }
            }
        }
    }
    if bands.is_empty() {
        bands.push(0);
    }
    bands.sort_unstable();
    bands.dedup();
    bands
}

fn observe(sys: &FlatSystem, space: FockSpace, t: f64, x: &[C64], eig: Option<f64>) -> TracePoint {
    let mut p = TracePoint {
        t,
        p_e: 0.0,
        p_g: 0.0,
        n_a: 0.0,
        n_b: 0.0,
        trace: 0.0,
        min_eigenvalue: eig,
    };
    for (i, label) in space.labels().enumerate() {
        let Some(pos) = sys.diag_pos[i] else { continue };
        let w = x[pos].re;
        p.trace += w;
        match label.level {
            AtomLevel::Excited => p.p_e += w,
            AtomLevel::Ground => p.p_g += w,
        }
        p.n_a += w * label.n_a as f64;
        p.n_b += w * label.n_b as f64;
    }
    p
}

fn assemble(sys: &FlatSystem, space: FockSpace, x: &[C64]) -> DensityOperator {
    let mut mat = nalgebra::DMatrix::zeros(space.dim(), space.dim());
    for (&(i, j), z) in sys.entries.iter().zip(x) {
        mat[(i as usize, j as usize)] = *z;
    }
    DensityOperator::from_matrix(space, mat).expect("layout matches space")
}

type Observer<'a> = (TraceOptions, &'a mut dyn FnMut(&TracePoint));

fn run_density(
    rho0: &DensityOperator,
    model: &LindbladModel,
    t0: f64,
    t1: f64,
    settings: &StepperSettings,
    mut observer: Option<Observer<'_>>,
) -> Result<DensityOutcome> {
    settings.validate()?;
    check_window(model, t0, t1)?;
    let space = model.space();
    if rho0.space() != space {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: rho0.space().dim(),
        });
    }
    let bands = excitation_bands(rho0);
    let sys = FlatSystem::density(&model.generator(), space, &bands);
    let m0 = rho0.matrix();
    let mut x: Vec<C64> = sys
        .entries
        .iter()
        .map(|&(i, j)| m0[(i as usize, j as usize)])
        .collect();
    let trace0 = rho0.trace().re;

    if let Some((opts, obs)) = observer.as_mut() {
        let eig = opts.min_eigenvalue.then(|| rho0.min_eigenvalue());
        obs(&observe(&sys, space, t0, &x, eig));
    }
    let steps = {
        let mut count = 0usize;
        let mut on_step = |t: f64, x: &[C64]| {
            count += 1;
            if let Some((opts, obs)) = observer.as_mut() {
                if count % opts.stride.max(1) == 0 {
                    let eig = opts
                        .min_eigenvalue
                        .then(|| assemble(&sys, space, x).min_eigenvalue());
                    obs(&observe(&sys, space, t, x, eig));
                }
            }
        };
        integrate(&sys, model, t0, t1, settings, &mut x, &mut on_step)?
    };

    let state = assemble(&sys, space, &x);
    let trace_drift = (state.trace().re - trace0).abs();
    let min_eigenvalue = state.min_eigenvalue();
    if let Some((opts, obs)) = observer.as_mut() {
        if steps % opts.stride.max(1) != 0 {
            let eig = opts.min_eigenvalue.then_some(min_eigenvalue);
            obs(&observe(&sys, space, t1, &x, eig));
        }
    }
    if min_eigenvalue < -POSITIVITY_TOL {
        return Err(Error::Accuracy(format!(
            "smallest eigenvalue {min_eigenvalue:.3e} after {steps} steps"
        )));
    }
    Ok(DensityOutcome {
        state,
        trace_drift,
        min_eigenvalue,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{
        compose_initial_state, expectation, make_field_state, mode_operator, BasisLabel, FieldKind,
        Mode, ModeOp,
    };
    use crate::model::{khz, CouplingProfile, DetuningSchedule, SystemParams};
    use approx::assert_abs_diff_eq;

    fn constant_model(detuning: f64, space: FockSpace, t1: f64) -> LindbladModel {
        let p = SystemParams::nominal();
        LindbladModel::new(p, DetuningSchedule::constant(detuning, 0.0, t1).unwrap(), space)
            .unwrap()
            .with_profile(CouplingProfile::Constant)
            .without_dissipation()
    }

    #[test]
    fn resonant_rabi_oscillation() {
        // P_g(t) = sin²(Ωt/2)
        let space = FockSpace::new(1, 0);
        let om = SystemParams::nominal().omega0;
        let t_pi = std::f64::consts::PI / om;
        assert_abs_diff_eq!(t_pi, 10.2e-6, epsilon = 0.01e-6);
        let model = constant_model(0.0, space, 2.0 * t_pi);
        let psi0 = StateVector::basis(space, BasisLabel::new(AtomLevel::Excited, 0, 0)).unwrap();
        for frac in [0.25, 0.5, 1.0, 1.7] {
            let t = frac * t_pi;
            let out = evolve_unitary(&psi0, &model, 0.0, t, &StepperSettings::default()).unwrap();
            let pg = out.state.level_probability(AtomLevel::Ground);
            assert_abs_diff_eq!(pg, (om * t / 2.0).sin().powi(2), epsilon = 1e-9);
            assert!(out.norm_drift < 1e-10);
        }
    }

    #[test]
    fn detuned_rabi_oscillation() {
        // P_g(t) = Ω²/(Ω²+Δ²) sin²(√(Ω²+Δ²) t / 2)
        let space = FockSpace::new(1, 0);
        let om = SystemParams::nominal().omega0;
        let det = khz(70.0);
        let gen = (om * om + det * det).sqrt();
        let model = constant_model(det, space, 40e-6);
        let psi0 = StateVector::basis(space, BasisLabel::new(AtomLevel::Excited, 0, 0)).unwrap();
        for t in [3e-6, 11e-6, 27e-6, 40e-6] {
            let out = evolve_unitary(&psi0, &model, 0.0, t, &StepperSettings::fixed(0.025e-6)).unwrap();
            let pg = out.state.level_probability(AtomLevel::Ground);
            let expect = om * om / (gen * gen) * (gen * t / 2.0).sin().powi(2);
            assert_abs_diff_eq!(pg, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let space = FockSpace::new(2, 2);
        let model = constant_model(0.0, space, 1e-4).with_profile(CouplingProfile::Off);
        // δ n_b phases vanish on n_b = 0 and Δ = 0
        let psi0 = StateVector::superposition(
            space,
            &[
                (C64::new(1.0, 0.0), BasisLabel::new(AtomLevel::Excited, 1, 0)),
                (C64::new(0.0, 1.0), BasisLabel::new(AtomLevel::Ground, 2, 0)),
            ],
        )
        .unwrap();
        let out = evolve_unitary(&psi0, &model, 0.0, 1e-4, &StepperSettings::default()).unwrap();
        for (a, b) in out.state.amplitudes().iter().zip(psi0.amplitudes().iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_windows() {
        let space = FockSpace::new(1, 0);
        let model = constant_model(0.0, space, 1e-5);
        let psi0 = StateVector::basis(space, BasisLabel::new(AtomLevel::Excited, 0, 0)).unwrap();
        let s = StepperSettings::default();
        assert!(evolve_unitary(&psi0, &model, 1e-5, 0.0, &s).is_err());
        assert!(evolve_unitary(&psi0, &model, 0.0, 2e-5, &s).is_err());
        assert!(evolve_unitary(&psi0, &model, 0.0, 1e-5, &StepperSettings::fixed(0.0)).is_err());
    }

    #[test]
    fn damped_mode_decays_exponentially() {
        let p = SystemParams::nominal();
        let space = FockSpace::new(5, 0);
        let t1 = 2e-3;
        let model = LindbladModel::new(p, DetuningSchedule::constant(0.0, 0.0, t1).unwrap(), space)
            .unwrap()
            .with_profile(CouplingProfile::Off);
        let fa = make_field_state(FieldKind::Fock(4), 5).unwrap();
        let fb = make_field_state(FieldKind::vacuum(), 0).unwrap();
        let rho0 = compose_initial_state(AtomLevel::Ground, &fa, &fb, space).unwrap();
        let na = mode_operator(Mode::A, ModeOp::Number, space);
        for t in [0.3e-3, 1.0e-3, 2e-3] {
            let out = evolve_density(&rho0, &model, 0.0, t, &StepperSettings::default()).unwrap();
            let n = expectation(&na, &out.state).unwrap().re;
            assert_abs_diff_eq!(n, 4.0 * (-p.kappa_a * t).exp(), epsilon = 1e-8);
            assert!(out.trace_drift < 1e-10);
        }
    }

    #[test]
    fn coherent_band_matches_diagonal_band_populations() {
        // Coherences between excitation sectors never feed the populations.
        let p = SystemParams::nominal().with_velocity(600.0);
        let space = FockSpace::new(3, 9);
        let model = LindbladModel::new(p, DetuningSchedule::flat(khz(40.0), &p), space).unwrap();
        let fa = make_field_state(FieldKind::vacuum(), 3).unwrap();
        let fb = make_field_state(FieldKind::coherent_mean(1.5), 9).unwrap();
        let rho0 = compose_initial_state(AtomLevel::Excited, &fa, &fb, space).unwrap();
        let (t0, t1) = p.transit_window();
        let s = StepperSettings::default();
        let full = evolve_density(&rho0, &model, t0, t1, &s).unwrap();
        let diag = evolve_density(&rho0.excitation_diagonal(), &model, t0, t1, &s).unwrap();
        for i in 0..space.dim() {
            assert_abs_diff_eq!(
                full.state.matrix()[(i, i)].re,
                diag.state.matrix()[(i, i)].re,
                epsilon = 1e-12
            );
        }
        assert!(!full.state.is_excitation_diagonal());
        assert!(diag.state.is_excitation_diagonal());
    }

    #[test]
    fn adaptive_agrees_with_fixed() {
        let p = SystemParams::nominal().with_velocity(500.0);
        let space = FockSpace::new(3, 4);
        let model = LindbladModel::new(p, DetuningSchedule::flat(khz(10.0), &p), space).unwrap();
        let rho0 = StateVector::basis(space, BasisLabel::new(AtomLevel::Excited, 0, 2))
            .unwrap()
            .to_density();
        let (t0, t1) = p.transit_window();
        let fixed = evolve_density(&rho0, &model, t0, t1, &StepperSettings::fixed(0.02e-6)).unwrap();
        let adaptive = evolve_density(&rho0, &model, t0, t1, &StepperSettings::adaptive(1e-9)).unwrap();
        assert!((fixed.state.matrix() - adaptive.state.matrix()).norm() < 1e-7);
        assert!(adaptive.steps < fixed.steps);
    }

    #[test]
    fn trace_rows_are_recorded() {
        let p = SystemParams::nominal();
        let space = FockSpace::new(1, 0);
        let model = LindbladModel::new(p, DetuningSchedule::constant(0.0, 0.0, 5e-6).unwrap(), space)
            .unwrap()
            .with_profile(CouplingProfile::Constant);
        let rho0 = StateVector::basis(space, BasisLabel::new(AtomLevel::Excited, 0, 0))
            .unwrap()
            .to_density();
        let mut rows = Vec::new();
        let opts = TraceOptions {
            stride: 10,
            min_eigenvalue: true,
        };
        let out = evolve_density_traced(&rho0, &model, 0.0, 5e-6, &StepperSettings::default(), opts, &mut |r| {
            rows.push(*r)
        })
        .unwrap();
        assert_eq!(rows.first().unwrap().t, 0.0);
        assert_abs_diff_eq!(rows.last().unwrap().t, 5e-6, epsilon = 1e-18);
        assert_eq!(rows.len(), out.steps / 10 + 1);
        for r in &rows {
            assert_abs_diff_eq!(r.p_e + r.p_g, r.trace, epsilon = 1e-14);
            assert!(r.min_eigenvalue.unwrap() > -1e-10);
        }
        assert!(trace_csv_row(&rows[1]).starts_with("1.000000,"));
    }
}
