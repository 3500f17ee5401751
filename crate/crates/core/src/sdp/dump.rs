//! Plain-text sparse triplet dump of an [`SdpProblem`].
//!
//! ```text
//! blocks <nb> <s_1> … <s_nb> free <n_free> rows <m>
//! rhs <b_1> … <b_m>
//! <row> <block> <i> <j> <value>
//! ```
//!
//! Row `0` is the objective and rows `1..=m` the constraints. Blocks and
//! matrix indices are 1-based with `i <= j`; block `0` addresses the free
//! variable `i` (with `j = 0`). Values use 17 significant digits.

use std::fmt::Write as _;

use super::{LinearFunctional, SdpProblem};
use crate::error::{Error, Result};

pub fn write_dump(problem: &SdpProblem) -> String {
    let mut out = String::new();
    write!(out, "blocks {}", problem.block_sizes.len()).unwrap();
    for s in &problem.block_sizes {
        write!(out, " {s}").unwrap();
    }
    writeln!(
        out,
        " free {} rows {}",
        problem.n_free,
        problem.constraints.len()
    )
    .unwrap();
    out.push_str("rhs");
    for c in &problem.constraints {
        write!(out, " {:.16e}", c.rhs).unwrap();
    }
    out.push('\n');
    let mut emit = |row: usize, f: &LinearFunctional| {
        for e in &f.entries {
            writeln!(
                out,
                "{row} {} {} {} {:.16e}",
                e.block + 1,
                e.i + 1,
                e.j + 1,
                e.value
            )
            .unwrap();
        }
        for &(v, c) in &f.free {
            writeln!(out, "{row} 0 {} 0 {c:.16e}", v + 1).unwrap();
        }
    };
    emit(0, &problem.objective);
    for (r, c) in problem.constraints.iter().enumerate() {
        emit(r + 1, &c.functional);
    }
    out
}

pub fn parse_dump(text: &str) -> Result<SdpProblem> {
    let bad = |line: usize, msg: &str| Error::Parse(format!("dump line {line}: {msg}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (ln, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.first() != Some(&"blocks") {
        return Err(bad(ln + 1, "header must start with 'blocks'"));
    }
    let num = |s: Option<&&str>| -> Result<usize> {
        s.and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(ln + 1, "expected integer"))
    };
    let nb = num(tok.get(1))?;
    let sizes = (0..nb)
        .map(|k| num(tok.get(2 + k)))
        .collect::<Result<Vec<_>>>()?;
    if tok.get(2 + nb) != Some(&"free") || tok.get(4 + nb) != Some(&"rows") {
        return Err(bad(ln + 1, "expected 'free <n> rows <m>'"));
    }
    let n_free = num(tok.get(3 + nb))?;
    let m = num(tok.get(5 + nb))?;

    let (ln, rhs_line) = lines.next().ok_or_else(|| bad(2, "missing rhs line"))?;
    let mut rtok = rhs_line.split_whitespace();
    if rtok.next() != Some("rhs") {
        return Err(bad(ln + 1, "expected 'rhs'"));
    }
    let rhs = rtok
        .map(|t| t.parse::<f64>().map_err(|_| bad(ln + 1, "bad rhs value")))
        .collect::<Result<Vec<_>>>()?;
    if rhs.len() != m {
        return Err(bad(ln + 1, "rhs length does not match row count"));
    }

    let mut problem = SdpProblem::new(sizes, n_free);
    let mut rows = vec![LinearFunctional::new(); m];
    for (ln, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 5 {
            return Err(bad(ln + 1, "expected 'row block i j value'"));
        }
        let ints = t[..4]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| bad(ln + 1, "bad index")))
            .collect::<Result<Vec<_>>>()?;
        let value: f64 = t[4].parse().map_err(|_| bad(ln + 1, "bad value"))?;
        let target = match ints[0] {
            0 => &mut problem.objective,
            r if r <= m => &mut rows[r - 1],
            _ => return Err(bad(ln + 1, "row out of range")),
        };
        if ints[1] == 0 {
            if ints[2] == 0 {
                return Err(bad(ln + 1, "free variable index is 1-based"));
            }
            target.push_free(ints[2] - 1, value);
        } else {
            if ints[2] == 0 || ints[3] == 0 {
                return Err(bad(ln + 1, "matrix indices are 1-based"));
            }
            target.push_entry(ints[1] - 1, ints[2] - 1, ints[3] - 1, value);
        }
    }
    for (f, b) in rows.into_iter().zip(rhs) {
        problem.add_constraint(f, b);
    }
    problem.validate()?;
    Ok(problem)
}
