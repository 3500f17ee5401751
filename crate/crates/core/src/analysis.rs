//! Using `ψ_k`: region membership, image sampling, containment against the
//! oracle, and polynomial minimization over the computable set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::achievement::near_optimal;
use crate::error::{Error, Result};
use crate::oracle::{Grid, Oracle};
use crate::poly::Exponent;
use crate::problem::{AffineMap, FEAS_TOL};
use crate::sdp::{solve, Residuals, SolveStatus, SolverOptions};
use crate::sos::{assemble_membership, solver_error, GeneratorSet, ParamPoly};
use crate::{Polynomial, ProblemSpec};

/// Slack for the certified inclusion `A(δ,k) ⊆ S_δ` checked on grids; covers
/// SDP round-off only.
pub const CONTAINMENT_SLACK: f64 = 1e-5;

/// Candidates with every constraint at least this value count as feasible.
pub const CANDIDATE_FEAS_TOL: f64 = 1e-6;

/// `x ∈ A(δ,k)` tests for a problem in original coordinates and a `ψ_k`
/// computed in the rescaled ones.
#[derive(Debug, Clone)]
pub struct RegionQuery<'a> {
    pub problem: &'a ProblemSpec,
    pub psi: &'a Polynomial,
    pub map: AffineMap<f64>,
    pub delta: f64,
}

impl<'a> RegionQuery<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        psi: &'a Polynomial,
        map: AffineMap<f64>,
        delta: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive and finite, got {delta}"
            )));
        }
        for d in [psi.dim(), map.center.len()] {
            if d != problem.n {
                return Err(Error::DimensionMismatch {
                    expected: problem.n,
                    found: d,
                });
            }
        }
        Ok(RegionQuery {
            problem,
            psi,
            map,
            delta,
        })
    }

    /// `ψ_k` at a point given in original coordinates.
    pub fn psi_at(&self, x: &[f64]) -> f64 {
        self.psi.eval_unchecked(&self.map.to_scaled(x))
    }

    pub fn in_omega(&self, x: &[f64]) -> bool {
        self.problem.is_feasible(x, FEAS_TOL) && self.problem.in_box(x)
    }

    pub fn in_region(&self, x: &[f64]) -> bool {
        self.in_omega(x) && self.psi_at(x) <= self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub in_omega: bool,
    pub in_region: bool,
}

/// Objective values on every grid point of the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub n: usize,
    pub m: usize,
    pub records: Vec<ImageRecord>,
}

impl ImageSample {
    /// Header `x1..xn,f1..fm,in_omega,in_A`; floats with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut head: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        head.extend((1..=self.m).map(|i| format!("f{i}")));
        head.push("in_omega".into());
        head.push("in_A".into());
        out.push_str(&head.join(","));
        out.push('\n');
        for r in &self.records {
            for v in r.x.iter().chain(&r.f) {
                let _ = write!(out, "{v:.16e},");
            }
            let _ = writeln!(out, "{},{}", u8::from(r.in_omega), u8::from(r.in_region));
        }
        out
    }

    pub fn region_count(&self) -> usize {
        self.records.iter().filter(|r| r.in_region).count()
    }
}

/// Evaluates the objectives at every point of `grid`, flagging `Ω` and
/// `A(δ,k)` membership. Denominators may vanish off `Ω`; such values are
/// reported as computed (possibly non-finite).
pub fn sample_image(query: &RegionQuery<'_>, grid: &Grid<f64>) -> Result<ImageSample> {
    if grid.dim() != query.problem.n {
        return Err(Error::DimensionMismatch {
            expected: query.problem.n,
            found: grid.dim(),
        });
    }
    let mut records = Vec::with_capacity(grid.len());
    grid.for_each_point(|x| {
        let in_omega = query.in_omega(x);
        records.push(ImageRecord {
            x: x.to_vec(),
            f: query.problem.objective_values(x),
            in_omega,
            in_region: in_omega && query.psi_at(x) <= query.delta,
        });
    });
    Ok(ImageSample {
        n: query.problem.n,
        m: query.problem.m(),
        records,
    })
}

/// Grid comparison of `A(δ,k)` with the oracle's `S_δ = {ψ ≤ δ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub delta: f64,
    pub resolution: usize,
    /// Grid slack `L·h`.
    pub g_err: f64,
    pub count_region: usize,
    pub count_oracle: usize,
    /// Points of `A(δ,k)` whose oracle value exceeds `δ + g_err`.
    pub violations: usize,
    /// Points of `A(δ,k)` whose oracle value exceeds `δ + CONTAINMENT_SLACK`.
    pub strict_violations: usize,
    pub vol_region: f64,
    pub vol_oracle: f64,
    /// `vol_region / vol_oracle`; `None` when the oracle set is empty.
    pub ratio: Option<f64>,
}

/// Compares `A(δ,k)` against the oracle on the oracle's feasible grid points.
pub fn containment_report(query: &RegionQuery<'_>, oracle: &Oracle<'_, f64>) -> ContainmentReport {
    let grid = oracle.grid();
    let g_err = oracle.grid_error();
    let delta = query.delta;
    let mut report = ContainmentReport {
        delta,
        resolution: grid.resolution(),
        g_err,
        count_region: 0,
        count_oracle: 0,
        violations: 0,
        strict_violations: 0,
        vol_region: 0.0,
        vol_oracle: 0.0,
        ratio: None,
    };
    for (x, &psi) in grid.feasible().iter().zip(oracle.field()) {
        if psi <= delta {
            report.count_oracle += 1;
        }
        if query.in_region(x) {
            report.count_region += 1;
            if psi > delta + g_err {
                report.violations += 1;
            }
            if psi > delta + CONTAINMENT_SLACK {
                report.strict_violations += 1;
            }
        }
    }
    let cell = grid.cell_volume();
    report.vol_region = report.count_region as f64 * cell;
    report.vol_oracle = report.count_oracle as f64 * cell;
    if report.count_oracle > 0 {
        report.ratio = Some(report.vol_region / report.vol_oracle);
    }
    report
}

/// `δ − ψ_k`, the generator describing `A(δ,k)` inside `Ω`.
pub fn region_generator(psi: &Polynomial, delta: f64) -> Polynomial {
    &Polynomial::constant(psi.dim(), delta) - psi
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub order: u32,
    pub status: SolveStatus,
    /// Certified lower bound on the minimum.
    pub value: f64,
    /// First-order moments of the optimal moment sequence.
    pub candidate: Vec<f64>,
    pub objective_at_candidate: f64,
    pub constraint_values: Vec<f64>,
    pub min_constraint: f64,
    /// Every constraint at the candidate is at least `−CANDIDATE_FEAS_TOL`.
    pub feasible: bool,
    /// `objective_at_candidate − value`; small and feasible means the bound
    /// is attained up to this amount.
    pub gap: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Lower bound on `min f` over the set described by `gens` (box generators
/// are appended here), with a candidate minimizer read from the moments.
pub fn minimize_over(
    objective: &Polynomial,
    gens: &GeneratorSet,
    order: u32,
    options: &SolverOptions,
) -> Result<MinimizationResult> {
    let dim = gens.dim();
    if objective.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: objective.dim(),
        });
    }
    let gens = gens.clone().with_box();
    let degree = objective.degree().max(gens.max_degree());
    if degree > 2 * order {
        return Err(Error::OrderTooSmall {
            order,
            degree,
            required: degree.div_ceil(2),
        });
    }
    let target = ParamPoly {
        constant: objective.clone(),
        params: vec![Polynomial::constant(dim, -1.0)],
    };
    let mut membership = assemble_membership(&target, &gens, order)?;
    membership.problem.objective.push_free(0, -1.0);
    let sol = solve(&membership.problem, options)?;
    match sol.status {
        SolveStatus::Unbounded => {
            return Err(Error::Solver {
                status: sol.status,
                hint: ": the constraint set appears to be empty".into(),
            })
        }
        _ if sol.is_optimal() || near_optimal(&sol) => {}
        s => return Err(solver_error(s, order)),
    }
    let value = sol.free_values[0];
    let candidate: Vec<f64> = (0..dim)
        .map(|i| {
            let e = Exponent::unit(dim, i);
            membership
                .rows
                .iter()
                .position(|r| *r == e)
                .map_or(0.0, |r| -sol.dual_values[r])
        })
        .collect();
    let objective_at_candidate = objective.eval_unchecked(&candidate);
    let constraint_values: Vec<f64> = gens
        .generators()
        .iter()
        .map(|(_, g)| g.eval_unchecked(&candidate))
        .collect();
    let min_constraint = constraint_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinimizationResult {
        order,
        status: sol.status,
        value,
        objective_at_candidate,
        feasible: min_constraint >= -CANDIDATE_FEAS_TOL,
        min_constraint,
        constraint_values,
        gap: objective_at_candidate - value,
        candidate,
        residuals: sol.residuals,
        iterations: sol.iterations,
    })
}
