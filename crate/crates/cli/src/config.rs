//! Run configuration: TOML in laboratory units (kHz, ms, mm, µs, m/s),
//! converted to SI and rad/s exactly once in [`RunConfig::resolve`].

use serde::{Deserialize, Serialize};

use cqed_core::experiments::{FieldSpec, ImperfectionModel, PrepSpec, RunSettings};
use cqed_core::{khz, us, AtomLevel, CouplingProfile, Method, Order, StepperSettings, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Ω/2π at the waist.
    pub omega0_khz: f64,
    /// δ/2π, mode splitting.
    pub delta_khz: f64,
    pub waist_mm: f64,
    pub velocity_mps: f64,
    /// Energy damping times of M_a and M_b.
    pub damping_a_ms: f64,
    pub damping_b_ms: f64,
    /// Bath occupations.
    pub n_th_a: f64,
    pub n_th_b: f64,
    pub numerics: NumericsConfig,
    pub scan: ScanConfig,
    pub prepare: PrepareConfig,
    pub ramsey: RamseyConfig,
    pub scenario: ScenarioConfig,
    pub imperfections: ImperfectionConfig,
    pub sampling: SamplingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            omega0_khz: 49.0,
            delta_khz: 128.0,
            waist_mm: 6.0,
            velocity_mps: 200.0,
            damping_a_ms: 1.2,
            damping_b_ms: 0.9,
            n_th_a: 1.0,
            n_th_b: 1.0,
            numerics: NumericsConfig::default(),
            scan: ScanConfig::default(),
            prepare: PrepareConfig::default(),
            ramsey: RamseyConfig::default(),
            scenario: ScenarioConfig::default(),
            imperfections: ImperfectionConfig::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub dt_us: f64,
    pub dt_free_us: f64,
    /// 4 or 6.
    pub order: u32,
    /// Switches to adaptive step doubling when set.
    pub adaptive_tol: Option<f64>,
    pub relaxation: bool,
    pub keep_coherences: bool,
    pub n_max_a: Option<usize>,
    pub n_max_b: Option<usize>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            dt_us: 0.1,
            dt_free_us: 5.0,
            order: 6,
            adaptive_tol: None,
            relaxation: true,
            keep_coherences: false,
            n_max_a: None,
            n_max_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// "thermal", "empty" or "coherent" (M_a empty, M_b coherent).
    pub fields: String,
    pub source_mean: f64,
    /// "e" or "g".
    pub atom: String,
    pub start_khz: f64,
    pub end_khz: f64,
    pub step_khz: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            fields: "thermal".into(),
            source_mean: 11.2,
            atom: "e".into(),
            start_khz: -300.0,
            end_khz: 150.0,
            step_khz: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub velocity_mps: f64,
    pub source_mean: f64,
    /// Detuning jump, relative to the waist crossing.
    pub t_switch_us: f64,
    pub detuning_before_khz: f64,
    pub detuning_after_khz: f64,
    /// Bath occupation during the sequence; the cavity is erased beforehand.
    pub bath_n_th: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            velocity_mps: 170.0,
            source_mean: 6.0,
            t_switch_us: 5.0,
            detuning_before_khz: 65.0,
            detuning_after_khz: 135.0,
            bath_n_th: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfig {
    pub offset_start_hz: f64,
    pub offset_end_hz: f64,
    pub offset_step_hz: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        RamseyConfig {
            offset_start_hz: -10_000.0,
            offset_end_hz: 10_000.0,
            offset_step_hz: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// "fifth-order" or "reverse-raman".
    pub kind: String,
    pub n: usize,
    pub bath_n_th: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: "fifth-order".into(),
            n: 6,
            bath_n_th: 0.0,
        }
    }
}

/// All zeros (contrast 1) is the ideal experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImperfectionConfig {
    pub p_enter_g: f64,
    pub background_floor: f64,
    pub ramsey_contrast: f64,
    pub mean_atoms: f64,
    pub thermal_growth: f64,
}

impl Default for ImperfectionConfig {
    fn default() -> Self {
        let m = ImperfectionModel::identity();
        ImperfectionConfig {
            p_enter_g: m.p_enter_g,
            background_floor: m.background_floor,
            ramsey_contrast: m.ramsey_contrast,
            mean_atoms: m.mean_atoms,
            thermal_growth: m.thermal_growth,
        }
    }
}

/// Finite-shot emulation of scan data; zero shots disables it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub shots: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { shots: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, why: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {why}"))
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("{v} must be > 0")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("{v} must be >= 0")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("{v} must be finite")))
    }
}

fn unit_interval(key: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(bad(key, format!("{v} must lie in [0, 1]")))
    }
}

/// Which initial fields a scan uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanFields {
    Thermal,
    Empty,
    Coherent(f64),
}

/// Everything in simulation units, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    /// Scan and scenario parameters (bath occupations as configured).
    pub params: SystemParams,
    pub settings: RunSettings,
    pub n_max_a: Option<usize>,
    pub n_max_b: Option<usize>,
    pub scan_fields: ScanFields,
    pub scan_atom: AtomLevel,
    /// (start, end, step) in rad/s.
    pub scan_range: (f64, f64, f64),
    pub prep: PrepSpec,
    pub ramsey_offsets_hz: Vec<f64>,
    pub scenario_kind: ScenarioKind,
    pub scenario_n: usize,
    pub scenario_params: SystemParams,
    pub imperfections: ImperfectionModel,
    pub shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    FifthOrder,
    ReverseRaman,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "fifth-order" | "fifth_order" => Ok(ScenarioKind::FifthOrder),
            "reverse-raman" | "reverse_raman" => Ok(ScenarioKind::ReverseRaman),
            other => Err(bad("scenario.kind", format!("unknown scenario '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FifthOrder => "fifth_order",
            ScenarioKind::ReverseRaman => "reverse_raman",
        }
    }
}

/// Parses TOML; missing keys take the default values, unknown keys are
/// rejected.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.message().to_string()))?;
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    /// Canonical TOML rendering, used for the echo and the hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let base = SystemParams {
            omega0: khz(positive("omega0_khz", self.omega0_khz)?),
            delta: khz(positive("delta_khz", self.delta_khz)?),
            waist: 1e-3 * positive("waist_mm", self.waist_mm)?,
            velocity: positive("velocity_mps", self.velocity_mps)?,
            kappa_a: 1.0 / (1e-3 * positive("damping_a_ms", self.damping_a_ms)?),
            kappa_b: 1.0 / (1e-3 * positive("damping_b_ms", self.damping_b_ms)?),
            n_th_a: non_negative("n_th_a", self.n_th_a)?,
            n_th_b: non_negative("n_th_b", self.n_th_b)?,
        };

        let num = &self.numerics;
        let order = match num.order {
            4 => Order::Four,
            6 => Order::Six,
            o => return Err(bad("numerics.order", format!("{o} is not 4 or 6"))),
        };
        let method = match num.adaptive_tol {
            None => Method::Fixed,
            Some(tol) => Method::Adaptive {
                tol_rel: positive("numerics.adaptive_tol", tol)?,
            },
        };
        let stepper = StepperSettings {
            dt: us(positive("numerics.dt_us", num.dt_us)?),
            dt_free: us(positive("numerics.dt_free_us", num.dt_free_us)?),
            method,
            order,
        };
        let settings = RunSettings {
            stepper,
            relaxation: num.relaxation,
            coupling: CouplingProfile::Transit,
            keep_coherences: num.keep_coherences,
        };
        for (key, n) in [("numerics.n_max_a", num.n_max_a), ("numerics.n_max_b", num.n_max_b)] {
            if n == Some(0) {
                return Err(bad(key, "must be >= 1"));
            }
        }

        let sc = &self.scan;
        let scan_fields = match sc.fields.as_str() {
            "thermal" => ScanFields::Thermal,
            "empty" => ScanFields::Empty,
            "coherent" => ScanFields::Coherent(non_negative("scan.source_mean", sc.source_mean)?),
            other => return Err(bad("scan.fields", format!("unknown field preset '{other}'"))),
        };
        let scan_atom = parse_atom("scan.atom", &sc.atom)?;
        let start = finite("scan.start_khz", sc.start_khz)?;
        let end = finite("scan.end_khz", sc.end_khz)?;
        let step = positive("scan.step_khz", sc.step_khz)?;
        if end < start {
            return Err(bad("scan.end_khz", format!("{end} is below scan.start_khz = {start}")));
        }

        let imp = &self.imperfections;
        let imperfections = ImperfectionModel {
            p_enter_g: unit_interval("imperfections.p_enter_g", imp.p_enter_g)?,
            background_floor: unit_interval("imperfections.background_floor", imp.background_floor)?,
            ramsey_contrast: positive(
                "imperfections.ramsey_contrast",
                unit_interval("imperfections.ramsey_contrast", imp.ramsey_contrast)?,
            )?,
            mean_atoms: non_negative("imperfections.mean_atoms", imp.mean_atoms)?,
            thermal_growth: non_negative("imperfections.thermal_growth", imp.thermal_growth)?,
        };

        let pr = &self.prepare;
        let bath = non_negative("prepare.bath_n_th", pr.bath_n_th)?;
        let prep = PrepSpec {
            params: SystemParams {
                velocity: positive("prepare.velocity_mps", pr.velocity_mps)?,
                ..base
            }
            .with_thermal(bath, bath),
            source_mean: non_negative("prepare.source_mean", pr.source_mean)?,
            t_switch: us(finite("prepare.t_switch_us", pr.t_switch_us)?),
            detuning_before: khz(finite("prepare.detuning_before_khz", pr.detuning_before_khz)?),
            detuning_after: khz(finite("prepare.detuning_after_khz", pr.detuning_after_khz)?),
            settings,
            imperfections: (!imperfections.is_identity()).then_some(imperfections),
        };
        prep.validate().map_err(|e| bad("prepare", e))?;

        let rc = &self.ramsey;
        let r0 = finite("ramsey.offset_start_hz", rc.offset_start_hz)?;
        let r1 = finite("ramsey.offset_end_hz", rc.offset_end_hz)?;
        let rs = positive("ramsey.offset_step_hz", rc.offset_step_hz)?;
        if r1 < r0 {
            return Err(bad("ramsey.offset_end_hz", "is below ramsey.offset_start_hz"));
        }
        let count = ((r1 - r0) / rs + 1e-9).floor() as usize;
        let ramsey_offsets_hz = (0..=count).map(|k| r0 + k as f64 * rs).collect();

        let scen = &self.scenario;
        let scenario_bath = non_negative("scenario.bath_n_th", scen.bath_n_th)?;

        Ok(Resolved {
            params: base,
            settings,
            n_max_a: num.n_max_a,
            n_max_b: num.n_max_b,
            scan_fields,
            scan_atom,
            scan_range: (khz(start), khz(end), khz(step)),
            prep,
            ramsey_offsets_hz,
            scenario_kind: ScenarioKind::parse(&scen.kind)?,
            scenario_n: scen.n,
            scenario_params: base.with_thermal(scenario_bath, scenario_bath),
            imperfections,
            shots: self.sampling.shots,
        })
    }
}

fn parse_atom(key: &str, s: &str) -> Result<AtomLevel, ConfigError> {
    match s {
        "e" => Ok(AtomLevel::Excited),
        "g" => Ok(AtomLevel::Ground),
        other => Err(bad(key, format!("'{other}' is not 'e' or 'g'"))),
    }
}

impl Resolved {
    /// Applies the truncation overrides to a field.
    pub fn field(&self, spec: FieldSpec, mode_a: bool) -> FieldSpec {
        match if mode_a { self.n_max_a } else { self.n_max_b } {
            Some(n) => spec.with_n_max(n),
            None => spec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_file_gives_nominal_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let r = cfg.resolve().unwrap();
        assert_abs_diff_eq!(r.params.omega0, 2.0 * std::f64::consts::PI * 49e3, epsilon = 1e-6);
        assert_abs_diff_eq!(r.params.delta, 2.0 * std::f64::consts::PI * 128e3, epsilon = 1e-6);
        assert_abs_diff_eq!(r.params.waist, 6e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 / r.params.kappa_a, 1.2e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 / r.params.kappa_b, 0.9e-3, epsilon = 1e-15);
        assert_eq!(r.params.n_th_a, 1.0);
        assert_eq!(r.params.velocity, 200.0);
        assert_eq!(r.prep.params.velocity, 170.0);
    }

    #[test]
    fn velocity_override() {
        let r = parse_config("velocity_mps = 170").unwrap().resolve().unwrap();
        assert_eq!(r.params.velocity, 170.0);
    }

    #[test]
    fn negative_splitting_names_the_key() {
        let e = parse_config("delta_khz = -5").unwrap_err();
        assert!(e.0.contains("delta_khz"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("omega_khz = 49").is_err());
        assert!(parse_config("[scan]\nwidth = 3").is_err());
    }

    #[test]
    fn unit_parse_failure() {
        assert!(parse_config("delta_khz = \"128 kHz\"").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = parse_config("velocity_mps = 350\n[scan]\nfields = \"empty\"").unwrap();
        assert_eq!(parse_config(&cfg.canonical()).unwrap(), cfg);
    }
}
