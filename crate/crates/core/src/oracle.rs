//! Brute-force ground truth on uniform grids.
//!
//! The achievement function `ψ(x) = sup_{y∈Ω} min_i [f_i(x) − f_i(y)]` is
//! evaluated with the supremum restricted to the feasible grid points (and
//! `x` itself), which makes every oracle value a lower bound of the true one.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::problem::{for_each_grid_point, grid_coords, Problem, FEAS_TOL};
use crate::scalar::{lit, Scalar};

/// Uniform grid over a box, with the points lying in `Ω` cached.
#[derive(Debug, Clone)]
pub struct Grid<T: Scalar> {
    bounds: Vec<[T; 2]>,
    resolution: usize,
    feasible: Vec<Vec<T>>,
}

impl<T: Scalar> Grid<T> {
    /// Grid over the problem's box with `resolution` points per dimension.
    pub fn new(problem: &Problem<T>, resolution: usize) -> Self {
        Self::over_box(problem, problem.bounds_box.clone(), resolution)
    }

    pub fn over_box(problem: &Problem<T>, bounds: Vec<[T; 2]>, resolution: usize) -> Self {
        let tol = lit(FEAS_TOL);
        let mut feasible = Vec::new();
        for_each_grid_point(&bounds, resolution, |x| {
            if problem.is_feasible(x, tol) {
                feasible.push(x.to_vec());
            }
        });
        Grid {
            bounds,
            resolution,
            feasible,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> &[[T; 2]] {
        &self.bounds
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feasible(&self) -> &[Vec<T>] {
        &self.feasible
    }

    pub fn spacing(&self, dim: usize) -> T {
        let [lo, hi] = self.bounds[dim];
        if self.resolution < 2 {
            return hi - lo;
        }
        (hi - lo) / T::from_usize(self.resolution - 1).unwrap()
    }

    pub fn max_spacing(&self) -> T {
        (0..self.dim())
            .map(|d| self.spacing(d))
            .fold(T::zero(), T::max)
    }

    /// Volume attributed to each grid point.
    pub fn cell_volume(&self) -> T {
        (0..self.dim()).fold(T::one(), |acc, d| acc * self.spacing(d))
    }

    pub fn coords(&self, dim: usize) -> Vec<T> {
        let [lo, hi] = self.bounds[dim];
        grid_coords(lo, hi, self.resolution)
    }

    pub fn for_each_point(&self, f: impl FnMut(&[T])) {
        for_each_grid_point(&self.bounds, self.resolution, f);
    }
}

/// Count of grid points satisfying `predicate`, times the cell volume.
pub fn grid_volume<T: Scalar>(grid: &Grid<T>, mut predicate: impl FnMut(&[T]) -> bool) -> T {
    let mut count = 0usize;
    grid.for_each_point(|x| {
        if predicate(x) {
            count += 1;
        }
    });
    T::from_usize(count).unwrap() * grid.cell_volume()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue<T> {
    pub value: T,
    /// Candidate `y` attaining the value; `None` when no candidate is admissible.
    pub argmax: Option<Vec<T>>,
}

/// Achievement-function oracle backed by the feasible points of a grid.
#[derive(Debug)]
pub struct Oracle<'a, T: Scalar> {
    problem: &'a Problem<T>,
    grid: &'a Grid<T>,
    /// Row-major `p_i(y)`, `q_i(y)`, `f_i(y)` for every feasible grid `y`.
    py: Vec<T>,
    qy: Vec<T>,
    fy: Vec<T>,
    z_bound: Option<T>,
    field: OnceLock<Vec<T>>,
}

impl<'a, T: Scalar> Oracle<'a, T> {
    pub fn new(problem: &'a Problem<T>, grid: &'a Grid<T>) -> Result<Self> {
        if grid.dim() != problem.n {
            return Err(Error::DimensionMismatch {
                expected: problem.n,
                found: grid.dim(),
            });
        }
        if grid.feasible().is_empty() {
            return Err(Error::InvalidArgument(
                "no grid point lies in the feasible set; refine the grid".into(),
            ));
        }
        let m = problem.m();
        let cap = grid.feasible().len() * m;
        let (mut py, mut qy, mut fy) = (
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
        );
        for y in grid.feasible() {
            for o in &problem.objectives {
                let p = o.p.eval_unchecked(y);
                let q = o.q.eval_unchecked(y);
                py.push(p);
                qy.push(q);
                fy.push(p / q);
            }
        }
        Ok(Oracle {
            problem,
            grid,
            py,
            qy,
            fy,
            z_bound: None,
            field: OnceLock::new(),
        })
    }

    /// Evaluates the slice `max{z : (y, z) ∈ K_x}` of the joint set with
    /// `|z| ≤ bound` instead of the plain max-min. The two agree on `Ω`; off
    /// `Ω` this is the quantity `ψ_k` over-estimates.
    pub fn with_z_bound(mut self, bound: T) -> Self {
        self.z_bound = Some(bound);
        self.field = OnceLock::new();
        self
    }

    pub fn problem(&self) -> &Problem<T> {
        self.problem
    }

    pub fn grid(&self) -> &Grid<T> {
        self.grid
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.problem.n {
            return Err(Error::DimensionMismatch {
                expected: self.problem.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Max over feasible grid `y` (and `x` when feasible) of
    /// `min_i [f_i(x) − f_i(y)]`.
    pub fn psi(&self, x: &[T]) -> Result<OracleValue<T>> {
        self.check_dim(x)?;
        let m = self.problem.m();
        let tol = lit(FEAS_TOL);
        let x_feasible = self.problem.is_feasible(x, tol) && self.problem.in_box(x);
        let px: Vec<T> = self.problem.objectives.iter().map(|o| o.p.eval_unchecked(x)).collect();
        let qx: Vec<T> = self.problem.objectives.iter().map(|o| o.q.eval_unchecked(x)).collect();

        let mut best = T::neg_infinity();
        let mut arg: Option<usize> = None;
        for (k, _) in self.grid.feasible().iter().enumerate() {
            let row = k * m..(k + 1) * m;
            let v = match self.z_bound {
                None => {
                    let mut v = T::infinity();
                    for (i, fy) in self.fy[row].iter().enumerate() {
                        v = v.min(px[i] / qx[i] - *fy);
                    }
                    Some(v)
                }
                Some(d) => slice_max(&px, &qx, &self.py[row.clone()], &self.qy[row], d),
            };
            if let Some(v) = v {
                if v > best {
                    best = v;
                    arg = Some(k);
                }
            }
        }
        let mut argmax = arg.map(|k| self.grid.feasible()[k].clone());
        // y = x contributes exactly zero
        if x_feasible && best < T::zero() {
            best = T::zero();
            argmax = Some(x.to_vec());
        }
        Ok(OracleValue {
            value: best,
            argmax,
        })
    }

    /// Definition-based membership in the weakly `ε`-efficient set: `x ∈ Ω`
    /// and no feasible grid `y` has `f_i(y) − f_i(x) + ε_i < 0` for all `i`.
    pub fn weakly_eps_member(&self, x: &[T], eps: &[T]) -> Result<bool> {
        self.check_dim(x)?;
        let m = self.problem.m();
        if eps.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: eps.len(),
            });
        }
        if !(self.problem.is_feasible(x, lit(FEAS_TOL)) && self.problem.in_box(x)) {
            return Ok(false);
        }
        let fx = self.problem.objective_values(x);
        let dominated = self
            .fy
            .chunks_exact(m)
            .any(|fy| (0..m).all(|i| fy[i] - fx[i] + eps[i] < T::zero()));
        Ok(!dominated)
    }

    /// Oracle values at every feasible grid point, computed once.
    pub fn field(&self) -> &[T] {
        self.field.get_or_init(|| {
            self.grid
                .feasible()
                .iter()
                .map(|x| self.psi(x).expect("grid points have the grid dimension").value)
                .collect()
        })
    }

    /// Crude Lipschitz constant of the objectives: the largest gradient norm
    /// over the feasible grid points.
    pub fn lipschitz_estimate(&self) -> T {
        let n = self.problem.n;
        let grads: Vec<_> = self
            .problem
            .objectives
            .iter()
            .map(|o| {
                let dp: Vec<_> = (0..n).map(|j| o.p.derivative(j)).collect();
                let dq: Vec<_> = (0..n).map(|j| o.q.derivative(j)).collect();
                (dp, dq)
            })
            .collect();
        let mut lip = T::zero();
        for x in self.grid.feasible() {
            for (o, (dp, dq)) in self.problem.objectives.iter().zip(&grads) {
                let p = o.p.eval_unchecked(x);
                let q = o.q.eval_unchecked(x);
                let mut norm2 = T::zero();
                for j in 0..n {
                    let g = (dp[j].eval_unchecked(x) * q - p * dq[j].eval_unchecked(x)) / (q * q);
                    norm2 += g * g;
                }
                lip = lip.max(norm2.sqrt());
            }
        }
        lip
    }

    /// Documented grid slack `g_err = L·h`.
    pub fn grid_error(&self) -> T {
        self.lipschitz_estimate() * self.grid.max_spacing()
    }
}

/// Largest `z ∈ [−d, d]` with `p_i(x)q_i(y) − p_i(y)q_i(x) − z·q_i(x)q_i(y) ≥ 0`
/// for all `i`, if any.
fn slice_max<T: Scalar>(px: &[T], qx: &[T], py: &[T], qy: &[T], d: T) -> Option<T> {
    let mut lo = -d;
    let mut hi = d;
    for i in 0..px.len() {
        let a = px[i] * qy[i] - py[i] * qx[i];
        let b = qx[i] * qy[i];
        if b > T::zero() {
            hi = hi.min(a / b);
        } else if b < T::zero() {
            lo = lo.max(a / b);
        } else if a < T::zero() {
            return None;
        }
    }
    (lo <= hi).then_some(hi)
}
