//! Dense block semidefinite programs with free variables.
//!
//! Primal form solved here:
//!
//! ```text
//! minimize    Σ_b <C_b, X_b> + dᵀc
//! subject to  Σ_b <A_{i,b}, X_b> + (B c)_i = b_i,   i = 1..m
//!             X_b ⪰ 0,  c free
//! ```
//!
//! Matrix coefficients are given by upper-triangle entries `(i, j, v)`
//! with `i <= j`. An off-diagonal entry stands for the symmetric pair
//! `A[i,j] = A[j,i] = v`, so it contributes `2·v·X_ij` to an inner
//! product. Diagonal entries contribute `v·X_ii`.

mod dump;
mod solver;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dump::{parse_dump, write_dump};
pub use solver::{solve, SolverOptions};

use crate::error::{Error, Result};

/// One upper-triangle coefficient of a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Linear functional over block entries and free variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearFunctional {
    pub entries: Vec<BlockEntry>,
    pub free: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` at `(i, j)` of `block`; the pair is normalized to `i <= j`.
    pub fn push_entry(&mut self, block: usize, i: usize, j: usize, value: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push(BlockEntry { block, i, j, value });
    }

    pub fn push_free(&mut self, var: usize, value: f64) {
        self.free.push((var, value));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.free.is_empty()
    }

    /// Value of the functional at `(blocks, free)`.
    pub fn apply(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            let x = blocks[e.block][(e.i, e.j)];
            acc += if e.i == e.j { e.value * x } else { 2.0 * e.value * x };
        }
        for &(v, c) in &self.free {
            acc += c * free[v];
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

/// A minimization SDP in the primal form described at module level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub n_free: usize,
    pub objective: LinearFunctional,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(block_sizes: Vec<usize>, n_free: usize) -> Self {
        SdpProblem {
            block_sizes,
            n_free,
            ..Default::default()
        }
    }

    pub fn add_block(&mut self, size: usize) -> usize {
        self.block_sizes.push(size);
        self.block_sizes.len() - 1
    }

    pub fn add_constraint(&mut self, functional: LinearFunctional, rhs: f64) -> usize {
        self.constraints.push(Constraint { functional, rhs });
        self.constraints.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Checks that every referenced block, entry and free variable exists.
    pub fn validate(&self) -> Result<()> {
        let check = |f: &LinearFunctional, what: &str| -> Result<()> {
            for e in &f.entries {
                let size = *self.block_sizes.get(e.block).ok_or_else(|| {
                    Error::MalformedSdp(format!("{what}: block {} does not exist", e.block))
                })?;
                if e.i > e.j || e.j >= size {
                    return Err(Error::MalformedSdp(format!(
                        "{what}: entry ({}, {}) invalid for block {} of size {size}",
                        e.i, e.j, e.block
                    )));
                }
                if !e.value.is_finite() {
                    return Err(Error::MalformedSdp(format!("{what}: non-finite coefficient")));
                }
            }
            for &(v, c) in &f.free {
                if v >= self.n_free {
                    return Err(Error::MalformedSdp(format!(
                        "{what}: free variable {v} of {}",
                        self.n_free
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::MalformedSdp(format!("{what}: non-finite coefficient")));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (r, c) in self.constraints.iter().enumerate() {
            check(&c.functional, &format!("row {r}"))?;
            if !c.rhs.is_finite() {
                return Err(Error::MalformedSdp(format!("row {r}: non-finite rhs")));
            }
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::MalformedSdp("empty block".into()));
        }
        Ok(())
    }

    /// Primal objective at `(blocks, free)`.
    pub fn primal_objective(&self, blocks: &[DMatrix<f64>], free: &[f64]) -> f64 {
        self.objective.apply(blocks, free)
    }

    /// Returns a copy with the objective multiplied by `factor`.
    pub fn scaled_objective(&self, factor: f64) -> SdpProblem {
        let mut p = self.clone();
        for e in &mut p.objective.entries {
            e.value *= factor;
        }
        for f in &mut p.objective.free {
            f.1 *= factor;
        }
        p
    }

    /// Dense objective matrix of each block, `C_b`.
    pub(crate) fn objective_matrices(&self) -> Vec<DMatrix<f64>> {
        let mut c: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&s| DMatrix::zeros(s, s))
            .collect();
        for e in &self.objective.entries {
            c[e.block][(e.i, e.j)] += e.value;
            if e.i != e.j {
                c[e.block][(e.j, e.i)] += e.value;
            }
        }
        c
    }

    pub(crate) fn objective_free(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_free];
        for &(v, c) in &self.objective.free {
            d[v] += c;
        }
        d
    }

    /// `Σ_i y_i A_i` for every block.
    pub fn adjoint(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&s| DMatrix::zeros(s, s))
            .collect();
        for (row, c) in self.constraints.iter().enumerate() {
            let yi = y[row];
            if yi == 0.0 {
                continue;
            }
            for e in &c.functional.entries {
                out[e.block][(e.i, e.j)] += yi * e.value;
                if e.i != e.j {
                    out[e.block][(e.j, e.i)] += yi * e.value;
                }
            }
        }
        out
    }

    /// `Bᵀy`, the free-variable part of the adjoint.
    pub fn adjoint_free(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (row, c) in self.constraints.iter().enumerate() {
            for &(v, a) in &c.functional.free {
                out[v] += y[row] * a;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖A(X) + Bc − b‖ / (1 + ‖b‖)`, plus any negative eigenvalue mass of `X`.
    pub primal_feas: f64,
    /// `(‖C − A*(y) − S‖ + ‖d − Bᵀy‖) / (1 + ‖C‖ + ‖d‖)`, plus negative eigenvalue mass of `S`.
    pub dual_feas: f64,
    /// `|primal − dual| / (1 + |primal|)`.
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal_feas.max(self.dual_feas).max(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub block_values: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub dual_values: Vec<f64>,
    pub dual_slack: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Smallest eigenvalue over all primal blocks.
    pub fn min_block_eigenvalue(&self) -> f64 {
        self.block_values
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Recomputes feasibility and gap measures of `solution` from scratch.
pub fn residuals(problem: &SdpProblem, solution: &SdpSolution) -> Result<Residuals> {
    let nb = problem.block_sizes.len();
    let m = problem.n_rows();
    if solution.block_values.len() != nb
        || solution.dual_slack.len() != nb
        || solution.free_values.len() != problem.n_free
        || solution.dual_values.len() != m
    {
        return Err(Error::DimensionMismatch {
            expected: nb,
            found: solution.block_values.len(),
        });
    }
    for (b, &s) in problem.block_sizes.iter().enumerate() {
        let x = &solution.block_values[b];
        let z = &solution.dual_slack[b];
        if x.nrows() != s || x.ncols() != s || z.nrows() != s || z.ncols() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: x.nrows(),
            });
        }
    }
    let x = &solution.block_values;
    let c = &solution.free_values;
    let y = &solution.dual_values;

    let b_norm = problem
        .constraints
        .iter()
        .map(|r| r.rhs * r.rhs)
        .sum::<f64>()
        .sqrt();
    let rp = problem
        .constraints
        .iter()
        .map(|r| {
            let v = r.functional.apply(x, c) - r.rhs;
            v * v
        })
        .sum::<f64>()
        .sqrt();
    let neg_x: f64 = x.iter().map(|m| (-min_eigenvalue(m)).max(0.0)).sum();
    let primal_feas = rp / (1.0 + b_norm) + neg_x;

    let cmat = problem.objective_matrices();
    let d = problem.objective_free();
    let aty = problem.adjoint(y);
    let mut rd = 0.0;
    let mut c_norm = 0.0;
    for b in 0..nb {
        let r = &cmat[b] - &aty[b] - &solution.dual_slack[b];
        rd += r.norm_squared();
        c_norm += cmat[b].norm_squared();
    }
    let bty = problem.adjoint_free(y);
    let rf: f64 = d
        .iter()
        .zip(&bty)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let neg_s: f64 = solution
        .dual_slack
        .iter()
        .map(|m| (-min_eigenvalue(m)).max(0.0))
        .sum();
    let dual_feas = (rd.sqrt() + rf) / (1.0 + c_norm.sqrt() + d_norm) + neg_s;

    let pobj = problem.primal_objective(x, c);
    let dobj: f64 = problem
        .constraints
        .iter()
        .zip(y)
        .map(|(r, yi)| r.rhs * yi)
        .sum();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
    Ok(Residuals {
        primal_feas,
        dual_feas,
        gap,
    })
}

