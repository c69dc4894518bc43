//! Argument parsing, dispatch and output files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use sha2::{Digest, Sha256};

use cqed_core::analytic::{
    avoided_crossing, fifth_order_resonance, light_shift, perturbative_transfer, raman_coupling, ramsey_phase,
    reverse_raman_resonance, shifted_raman_resonance,
};
use cqed_core::experiments::{
    fringe_csv, fringe_report, metadata_lines, prep_report, prepare_two_photon, ramsey_probe, scan_csv,
    scan_pg_vs_delta, scenario_fifth_order, scenario_reverse_raman, FieldSpec, RamseyScenario, RamseySpec, ScanSpec,
};
use cqed_core::{khz, to_khz, AtomLevel};

use crate::config::{parse_config, ConfigError, Resolved, RunConfig, ScanFields, ScenarioKind};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICS: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cqed", version, about = "Two-mode cavity QED Raman simulator")]
pub struct Cli {
    /// TOML configuration; omitted keys take the default parameter set.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for independent scan points (0 = all cores).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub threads: usize,
    /// Seed for finite-shot sampling.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// P_g as a function of the detuning Δ.
    Scan,
    /// Raman preparation of the two-photon state.
    Prepare,
    /// Ramsey probe of the prepared field.
    Ramsey {
        #[arg(long, value_enum, default_value_t = RamseyChoice::Raman)]
        scenario: RamseyChoice,
    },
    /// Closed-form perturbative estimates.
    Analytic {
        #[command(subcommand)]
        quantity: Analytic,
    },
    /// Reverse Raman or fifth-order process.
    Scenario {
        /// Overrides scenario.kind.
        #[arg(long)]
        kind: Option<String>,
        /// Overrides scenario.n.
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RamseyChoice {
    VacuumRef,
    OnePhotonRef,
    Raman,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Raman,
    FifthOrder,
    Reverse,
}

#[derive(Debug, Subcommand)]
pub enum Analytic {
    /// Raman matrix element; Δ defaults to δ.
    RamanCoupling {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        detuning_khz: Option<f64>,
    },
    /// Second-order shift of |level, n_a, n_b⟩.
    LightShift {
        #[arg(long, default_value = "g")]
        level: String,
        #[arg(long)]
        n_a: usize,
        #[arg(long)]
        n_b: usize,
        #[arg(long, allow_hyphen_values = true)]
        detuning_khz: f64,
    },
    /// Shift-corrected resonance.
    Resonance {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Process::Raman)]
        process: Process,
    },
    /// Two-level estimate of the transfer; Δ defaults to the shifted resonance.
    Transfer {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        detuning_khz: Option<f64>,
    },
    /// Minimum dressed-level splitting near the resonance.
    Splitting {
        #[arg(long)]
        n: usize,
    },
    /// Phase of |g, n_a, n_b⟩ after the freeze of the preparation schedule.
    RamseyPhase {
        #[arg(long)]
        n_a: usize,
        #[arg(long)]
        n_b: usize,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerics(cqed_core::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerics(_) => EXIT_NUMERICS,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerics(e) => write!(f, "numerical error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<cqed_core::Error> for CliError {
    fn from(e: cqed_core::Error) -> Self {
        CliError::Numerics(e)
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cqed: {e}");
            e.exit_code()
        }
    }
}

/// Loaded configuration plus the pieces every output header needs.
struct Context {
    cfg: RunConfig,
    resolved: Resolved,
    hash: String,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn header(&self, command: &str, n_max: (usize, usize), extra: &[(&str, String)]) -> String {
        let mut pairs = vec![
            ("generator", format!("cqed {}", env!("CARGO_PKG_VERSION"))),
            ("command", command.to_string()),
            ("config_sha256", self.hash.clone()),
            ("seed", self.seed.to_string()),
            ("n_max_a", n_max.0.to_string()),
            ("n_max_b", n_max.1.to_string()),
            ("dt_s", format!("{:e}", self.resolved.settings.stepper.dt)),
            ("order", format!("{:?}", self.resolved.settings.stepper.order)),
        ];
        pairs.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
        metadata_lines(&pairs)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), CliError> {
        write_file(&self.out.join(name), body)
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(cli: &Cli) -> Result<Context, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let cfg = parse_config(&text)?;
    let resolved = cfg.resolve()?;
    let canonical = cfg.canonical();
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    Ok(Context {
        cfg,
        resolved,
        hash,
        seed: cli.seed,
        out: cli.out.clone(),
    })
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = load(cli)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    pool.install(|| dispatch(&ctx, &cli.command))?;
    let echo = format!("# config_sha256 = {}\n{}", ctx.hash, ctx.cfg.canonical());
    ctx.write("config.echo.toml", &echo)
}

fn dispatch(ctx: &Context, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Scan => cmd_scan(ctx),
        Command::Prepare => cmd_prepare(ctx),
        Command::Ramsey { scenario } => cmd_ramsey(ctx, *scenario),
        Command::Analytic { quantity } => cmd_analytic(ctx, quantity),
        Command::Scenario { kind, n } => {
            let kind = match kind {
                Some(k) => ScenarioKind::parse(k)?,
                None => ctx.resolved.scenario_kind,
            };
            cmd_scenario(ctx, kind, n.unwrap_or(ctx.resolved.scenario_n))
        }
    }
}

fn scan_spec(r: &Resolved) -> ScanSpec {
    let base = match r.scan_fields {
        ScanFields::Thermal => ScanSpec::thermal(r.params),
        ScanFields::Empty => ScanSpec::empty(r.params),
        ScanFields::Coherent(mean) => ScanSpec::coherent_source(r.params, mean),
    };
    let (start, end, step) = r.scan_range;
    ScanSpec {
        start,
        end,
        step,
        // the presets pick the fields; the baths follow the configuration
        params: r.params,
        atom: r.scan_atom,
        field_a: r.field(base.field_a, true),
        field_b: r.field(base.field_b, false),
        settings: r.settings,
        imperfections: (!r.imperfections.is_identity()).then_some(r.imperfections),
    }
}

fn cmd_scan(ctx: &Context) -> Result<(), CliError> {
    let spec = scan_spec(&ctx.resolved);
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let result = scan_pg_vs_delta(&spec)?;
    let extra = [
        ("velocity_mps", format!("{}", spec.params.velocity)),
        ("max_trace_drift", format!("{:.3e}", result.max_trace_drift)),
        ("min_eigenvalue", format!("{:.3e}", result.min_eigenvalue)),
    ];
    let header = ctx.header("scan", spec.truncations(), &extra);
    ctx.write("scan.csv", &scan_csv(&result, &header))?;

    let shots = ctx.resolved.shots;
    if shots > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut body = ctx.header("scan", spec.truncations(), &[("shots", shots.to_string())]);
        body.push_str("delta_khz,p_g,stderr\n");
        for &(d, p) in &result.points {
            let k = Binomial::new(shots, p.clamp(0.0, 1.0))
                .map_err(|e| CliError::Config(format!("sampling.shots: {e}")))?
                .sample(&mut rng);
            let ph = k as f64 / shots as f64;
            let se = (ph * (1.0 - ph) / shots as f64).sqrt();
            let _ = writeln!(body, "{:.6},{:.12},{:.12}", to_khz(d), ph, se);
        }
        ctx.write("scan_shots.csv", &body)?;
    }
    Ok(())
}

fn prep_truncations(r: &Resolved) -> (usize, usize) {
    (r.field(r.prep.field_a(), true).n_max(), r.field(r.prep.field_b(), false).n_max())
}

fn cmd_prepare(ctx: &Context) -> Result<(), CliError> {
    let r = &ctx.resolved;
    if r.n_max_a.is_some() || r.n_max_b.is_some() {
        return Err(CliError::Config(
            "numerics.n_max_a/n_max_b: the preparation uses its own truncations".into(),
        ));
    }
    let result = prepare_two_photon(&r.prep)?;
    let header = ctx.header(
        "prepare",
        prep_truncations(r),
        &[("velocity_mps", format!("{}", r.prep.params.velocity))],
    );
    ctx.write("prepare.txt", &prep_report(&result, &header))
}

fn cmd_ramsey(ctx: &Context, choice: RamseyChoice) -> Result<(), CliError> {
    let r = &ctx.resolved;
    let spec = RamseySpec {
        prep: r.prep.clone(),
        offsets_hz: r.ramsey_offsets_hz.clone(),
    };
    let scenarios: Vec<RamseyScenario> = match choice {
        RamseyChoice::VacuumRef => vec![RamseyScenario::VacuumRef],
        RamseyChoice::OnePhotonRef => vec![RamseyScenario::OnePhotonRef],
        RamseyChoice::Raman => vec![RamseyScenario::Raman],
        RamseyChoice::All => vec![RamseyScenario::VacuumRef, RamseyScenario::OnePhotonRef, RamseyScenario::Raman],
    };
    let mut phases = Vec::new();
    for s in scenarios {
        let result = ramsey_probe(s, &spec)?;
        let header = ctx.header("ramsey", prep_truncations(r), &[("scenario", s.name().to_string())]);
        ctx.write(&format!("fringe_{}.csv", s.name()), &fringe_csv(&result, &header))?;
        ctx.write(&format!("ramsey_{}.txt", s.name()), &fringe_report(&result, &header))?;
        phases.push((s, result.phase));
    }
    if choice == RamseyChoice::All {
        let phi1 = phases[1].1;
        let phi2 = phases[2].1;
        let mut body = ctx.header("ramsey", prep_truncations(r), &[]);
        let _ = writeln!(body, "phi1_rad = {phi1:.9}");
        let _ = writeln!(body, "phi2_rad = {phi2:.9}");
        let _ = writeln!(body, "ratio = {:.9}", phi2 / phi1);
        ctx.write("ramsey_summary.txt", &body)?;
    }
    Ok(())
}

fn cmd_analytic(ctx: &Context, q: &Analytic) -> Result<(), CliError> {
    let p = &ctx.resolved.params;
    let (name, line) = match q {
        Analytic::RamanCoupling { n, detuning_khz } => {
            let d = detuning_khz.map(khz).unwrap_or(p.delta);
            let v = raman_coupling(*n, d, p.delta, p.omega0)?;
            ("raman_coupling", format!("raman_coupling = {:.4} kHz", to_khz(v)))
        }
        Analytic::LightShift {
            level,
            n_a,
            n_b,
            detuning_khz,
        } => {
            let level = match level.as_str() {
                "e" => AtomLevel::Excited,
                "g" => AtomLevel::Ground,
                other => return Err(CliError::Config(format!("--level: '{other}' is not 'e' or 'g'"))),
            };
            let s = light_shift(level, *n_a, *n_b, khz(*detuning_khz), p.delta, p.omega0)?;
            ("light_shift", format!("light_shift = {:.4} kHz", to_khz(s.shift)))
        }
        Analytic::Resonance { n, process } => {
            let (name, d) = match process {
                Process::Raman => ("resonance", shifted_raman_resonance(*n, p.omega0, p.delta)?),
                Process::FifthOrder => ("resonance_fifth_order", fifth_order_resonance(*n, p.omega0, p.delta)?),
                Process::Reverse => ("resonance_reverse", reverse_raman_resonance(*n, p.omega0, p.delta)?),
            };
            (name, format!("{name} = {:.4} kHz", to_khz(d)))
        }
        Analytic::Transfer { n, detuning_khz } => {
            let d = match detuning_khz {
                Some(x) => khz(*x),
                None => shifted_raman_resonance(*n, p.omega0, p.delta)?,
            };
            let t = perturbative_transfer(*n, p, d)?;
            let warn = if t.regime_warning { " (outside the perturbative regime)" } else { "" };
            (
                "transfer",
                format!("transfer = {:.6} at {:.4} kHz, area {:.6} rad{warn}", t.probability, to_khz(d), t.area),
            )
        }
        Analytic::Splitting { n } => {
            let centre = shifted_raman_resonance(*n, p.omega0, p.delta)?;
            let c = avoided_crossing(*n, p, (centre - khz(40.0)).max(khz(1.0)), (centre + khz(40.0)).min(p.delta))?;
            (
                "splitting",
                format!("splitting = {:.4} kHz at {:.4} kHz", to_khz(c.splitting), to_khz(c.detuning)),
            )
        }
        Analytic::RamseyPhase { n_a, n_b } => {
            let prep = &ctx.resolved.prep;
            let phi = ramsey_phase(*n_a, *n_b, &prep.schedule()?, &prep.params, prep.t_switch)?;
            ("ramsey_phase", format!("ramsey_phase = {phi:.6} rad"))
        }
    };
    println!("{line}");
    let header = ctx.header("analytic", (0, 0), &[("quantity", name.to_string())]);
    ctx.write(&format!("analytic_{name}.txt"), &format!("{header}{line}\n"))
}

fn cmd_scenario(ctx: &Context, kind: ScenarioKind, n: usize) -> Result<(), CliError> {
    let r = &ctx.resolved;
    let p = &r.scenario_params;
    let mut body = String::new();
    let truncations = (FieldSpec::vacuum().n_max(), FieldSpec::fock(n).n_max());
    match kind {
        ScenarioKind::FifthOrder => {
            let res = scenario_fifth_order(n, p, &r.settings)?;
            let _ = writeln!(body, "n = {n}");
            let _ = writeln!(body, "search_centre_khz = {:.6}", to_khz(res.center));
            let _ = writeln!(body, "detuning_khz = {:.6}", to_khz(res.detuning));
            let _ = writeln!(body, "transfer = {:.12e}", res.transfer);
        }
        ScenarioKind::ReverseRaman => {
            let res = scenario_reverse_raman(n, p, &r.settings)?;
            let _ = writeln!(body, "n = {n}");
            let _ = writeln!(body, "detuning_khz = {:.6}", to_khz(res.detuning));
            match res.estimate {
                Some(e) => {
                    let _ = writeln!(body, "estimate_khz = {:.6}", to_khz(e));
                }
                None => {
                    let _ = writeln!(body, "estimate_khz = none");
                }
            }
            let _ = writeln!(body, "transfer = {:.12}", res.transfer);
            let _ = writeln!(body, "reverse_check = {:.12}", res.reverse_check);
            let _ = writeln!(body, "mode,n,probability");
            for (k, q) in res.conditioned_b.iter().enumerate() {
                let _ = writeln!(body, "b,{k},{q:.12}");
            }
        }
    }
    let header = ctx.header(
        "scenario",
        truncations,
        &[("scenario", kind.name().to_string()), ("velocity_mps", format!("{}", p.velocity))],
    );
    ctx.write(&format!("scenario_{}.txt", kind.name()), &format!("{header}{body}"))
}
