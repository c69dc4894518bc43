//! Plain-text dumps of states and operators.
//!
//! ```text
//! state <dim> <n_max_a> <n_max_b>
//! <index> <re> <im>                 one row per basis index
//!
//! operator <dim> <n_max_a> <n_max_b> <nnz>
//! <row> <col> <re> <im>             nonzero elements only, row-major
//! ```
//!
//! Numbers are written with 17 significant digits so a dump round-trips
//! exactly.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{DensityOperator, FockSpace, LinearOperator, StateVector};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_state(state: &StateVector) -> String {
    let space = state.space();
    let mut out = format!("state {} {} {}\n", space.dim(), space.n_max_a(), space.n_max_b());
    for (i, z) in state.amplitudes().iter().enumerate() {
        let _ = writeln!(out, "{i} {} {}", num(z.re), num(z.im));
    }
    out
}

pub fn write_matrix(space: FockSpace, mat: &DMatrix<C64>) -> String {
    let nnz: Vec<(usize, usize, C64)> = (0..mat.nrows())
        .flat_map(|r| (0..mat.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| (r, c, mat[(r, c)]))
        .filter(|(_, _, z)| *z != C64::new(0.0, 0.0))
        .collect();
    let mut out = format!(
        "operator {} {} {} {}\n",
        space.dim(),
        space.n_max_a(),
        space.n_max_b(),
        nnz.len()
    );
    for (r, c, z) in nnz {
        let _ = writeln!(out, "{r} {c} {} {}", num(z.re), num(z.im));
    }
    out
}

pub fn write_operator(op: &LinearOperator) -> String {
    write_matrix(op.space(), op.matrix())
}

pub fn write_density(rho: &DensityOperator) -> String {
    write_matrix(rho.space(), rho.matrix())
}

fn parse_header(line: &str, kind: &str, fields: usize) -> Result<Vec<usize>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(kind) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header starting with '{kind}'"),
        });
    }
    let vals: Vec<usize> = it
        .map(|s| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: 1,
                reason: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != fields {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected {fields} header fields, got {}", vals.len()),
        });
    }
    Ok(vals)
}

fn parse_row<const K: usize>(line: &str, lineno: usize) -> Result<([usize; K], C64)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != K + 2 {
        return Err(Error::Parse {
            line: lineno,
            reason: format!("expected {} columns", K + 2),
        });
    }
    let bad = |e: String| Error::Parse { line: lineno, reason: e };
    let mut idx = [0usize; K];
    for (k, slot) in idx.iter_mut().enumerate() {
        *slot = parts[k].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
    }
    let re: f64 = parts[K].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
    let im: f64 = parts[K + 1]
        .parse()
        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
    Ok((idx, C64::new(re, im)))
}

fn space_from(vals: &[usize]) -> Result<FockSpace> {
    let space = FockSpace::new(vals[1], vals[2]);
    if space.dim() != vals[0] {
        return Err(Error::Parse {
            line: 1,
            reason: format!("dimension {} inconsistent with truncations", vals[0]),
        });
    }
    Ok(space)
}

pub fn parse_state(text: &str) -> Result<StateVector> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty input".into(),
    })?;
    let space = space_from(&parse_header(header, "state", 3)?)?;
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ([i], z) = parse_row::<1>(line, k + 2)?;
        if i >= space.dim() {
            return Err(Error::Parse {
                line: k + 2,
                reason: format!("index {i} out of range"),
            });
        }
        amps[i] = z;
    }
    StateVector::from_amplitudes(space, amps)
}

pub fn parse_matrix(text: &str) -> Result<(FockSpace, DMatrix<C64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty input".into(),
    })?;
    let vals = parse_header(header, "operator", 4)?;
    let space = space_from(&vals)?;
    let mut mat = DMatrix::zeros(space.dim(), space.dim());
    let mut count = 0;
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ([r, c], z) = parse_row::<2>(line, k + 2)?;
        if r >= space.dim() || c >= space.dim() {
            return Err(Error::Parse {
                line: k + 2,
                reason: format!("element ({r}, {c}) out of range"),
            });
        }
        mat[(r, c)] = z;
        count += 1;
    }
    if count != vals[3] {
        return Err(Error::Parse {
            line: 1,
            reason: format!("header announces {} nonzeros, found {count}", vals[3]),
        });
    }
    Ok((space, mat))
}

pub fn parse_operator(text: &str) -> Result<LinearOperator> {
    let (space, mat) = parse_matrix(text)?;
    LinearOperator::from_matrix(space, mat)
}

pub fn parse_density(text: &str) -> Result<DensityOperator> {
    let (space, mat) = parse_matrix(text)?;
    DensityOperator::from_matrix(space, mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{mode_operator, AtomLevel, BasisLabel, Mode, ModeOp};

    #[test]
    fn golden_annihilator_dump() {
        let op = mode_operator(Mode::A, ModeOp::Annihilate, FockSpace::new(1, 0));
        let expected = "operator 4 1 0 2\n\
                        0 1 1.0000000000000000e0 0.0000000000000000e0\n\
                        2 3 1.0000000000000000e0 0.0000000000000000e0\n";
        assert_eq!(write_operator(&op), expected);
    }

    #[test]
    fn golden_state_dump() {
        let s = FockSpace::new(0, 1);
        let psi = StateVector::basis(s, BasisLabel::new(AtomLevel::Excited, 0, 1)).unwrap();
        let text = write_state(&psi);
        assert!(text.starts_with("state 4 0 1\n"));
        assert!(text.contains("\n3 1.0000000000000000e0 0.0000000000000000e0\n"));
        assert_eq!(parse_state(&text).unwrap(), psi);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_state("state 5 0 1\n").is_err());
        assert!(parse_operator("operator 4 1 0 3\n0 1 1 0\n").is_err());
        assert!(parse_operator("operator 4 1 0 1\n0 9 1 0\n").is_err());
        assert!(parse_state("").is_err());
    }
}
