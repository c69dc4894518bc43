//! Plain-text result files. Every file starts with `# key = value`
//! metadata lines supplied by the caller.

use std::fmt::Write as _;

use super::prep::RamanPrepResult;
use super::ramsey::{FringeResult, PHASE_CONVENTION};
use super::scan::ScanResult;
use crate::model::to_khz;

pub const SCAN_CSV_HEADER: &str = "delta_khz,p_g";
pub const FRINGE_CSV_HEADER: &str = "offset_hz,p_g";
pub const DISTRIBUTION_HEADER: &str = "mode,n,probability";

pub fn metadata_lines(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

pub fn scan_csv(result: &ScanResult, metadata: &str) -> String {
    let mut out = format!("{metadata}{SCAN_CSV_HEADER}\n");
    for &(d, p) in &result.points {
        let _ = writeln!(out, "{:.6},{:.12}", to_khz(d), p);
    }
    out
}

pub fn fringe_csv(result: &FringeResult, metadata: &str) -> String {
    let mut out = format!("{metadata}{FRINGE_CSV_HEADER}\n");
    for &(nu, p) in &result.points {
        let _ = writeln!(out, "{nu:.3},{p:.12}");
    }
    out
}

pub fn fringe_report(result: &FringeResult, metadata: &str) -> String {
    let mut out = metadata.to_string();
    let _ = writeln!(out, "scenario = {}", result.scenario.name());
    let _ = writeln!(out, "phase_rad = {:.9}", result.phase);
    let _ = writeln!(out, "phase_convention = {PHASE_CONVENTION}");
    let _ = writeln!(out, "contrast = {:.9}", result.contrast);
    let _ = writeln!(out, "baseline = {:.9}", result.fit.baseline);
    let _ = writeln!(out, "absolute_phase_rad = {:.9}", result.fit.phase);
    let _ = writeln!(out, "ramsey_time_us = {:.6}", result.t_ramsey * 1e6);
    let _ = writeln!(out, "fit_rms_residual = {:.3e}", result.fit.rms_residual);
    out
}

pub fn prep_report(result: &RamanPrepResult, metadata: &str) -> String {
    let mut out = metadata.to_string();
    let _ = writeln!(out, "success_probability = {:.12}", result.success_probability);
    let _ = writeln!(out, "p_two_given_g = {:.12}", result.p_two);
    let _ = writeln!(out, "mean_a_given_g = {:.12}", result.joint.mean(crate::fockspace::Mode::A));
    let _ = writeln!(out, "mean_b_initial = {:.12}", result.source_mean_initial);
    let _ = writeln!(out, "mean_b_given_g = {:.12}", result.source_mean_conditioned);
    let _ = writeln!(out, "{DISTRIBUTION_HEADER}");
    for (mode, dist) in [("a", &result.dist_a), ("b", &result.dist_b)] {
        for (n, p) in dist.iter().enumerate() {
            let _ = writeln!(out, "{mode},{n},{p:.12}");
        }
    }
    out
}
