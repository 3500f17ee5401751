//! Problem instances: rational objectives `p_i/q_i` minimized over
//! `Ω = {x : g_j(x) ≥ 0}` inside a user-supplied box.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Poly, TermList};
use crate::scalar::{lit, Scalar};
use crate::sos::GeneratorSet;

/// Points per dimension of the coarse grid used to sanity-check a problem.
pub const CHECK_GRID: usize = 51;
/// Upper limit on the number of check-grid points in high dimension.
const CHECK_GRID_BUDGET: usize = CHECK_GRID * CHECK_GRID * CHECK_GRID * CHECK_GRID;
/// Feasibility slack for `g_j(x) ≥ 0` on grids.
pub const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Objective<T: Scalar> {
    pub p: Poly<T>,
    pub q: Poly<T>,
}

impl<T: Scalar> Objective<T> {
    pub fn eval(&self, x: &[T]) -> T {
        self.p.eval_unchecked(x) / self.q.eval_unchecked(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T: Scalar> {
    pub n: usize,
    pub objectives: Vec<Objective<T>>,
    pub constraints: Vec<Poly<T>>,
    /// Per-dimension `[lo, hi]`, assumed to contain `Ω`.
    pub bounds_box: Vec<[T; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    p: TermList,
    q: Option<TermList>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    n: usize,
    objectives: Vec<RawObjective>,
    #[serde(default)]
    constraints: Vec<TermList>,
    #[serde(rename = "box")]
    bounds_box: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct RawObjectiveOut<'a, T: Scalar + Serialize> {
    p: &'a Poly<T>,
    q: &'a Poly<T>,
}

impl<T: Scalar + Serialize> Serialize for Problem<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(4))?;
        map.serialize_entry("n", &self.n)?;
        let objs: Vec<_> = self
            .objectives
            .iter()
            .map(|o| RawObjectiveOut { p: &o.p, q: &o.q })
            .collect();
        map.serialize_entry("objectives", &objs)?;
        map.serialize_entry("constraints", &self.constraints)?;
        map.serialize_entry("box", &self.bounds_box)?;
        map.end()
    }
}

impl<T: Scalar> Problem<T> {
    /// Parses the JSON problem format without running the assumption checks.
    pub fn from_json_unchecked(text: &str) -> Result<Self> {
        let raw: RawProblem =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = raw.n;
        if n == 0 {
            return Err(Error::Parse("field `n` must be positive".into()));
        }
        if raw.objectives.is_empty() {
            return Err(Error::Parse("field `objectives` is empty".into()));
        }
        let poly = |t: TermList, what: String| -> Result<Poly<T>> {
            t.into_poly(n).map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        let mut objectives = Vec::new();
        for (i, o) in raw.objectives.into_iter().enumerate() {
            let p = poly(o.p, format!("objectives[{i}].p"))?;
            let q = match o.q {
                Some(q) => poly(q, format!("objectives[{i}].q"))?,
                None => Poly::constant(n, T::one()),
            };
            if q.is_zero() {
                return Err(Error::Parse(format!("objectives[{i}].q is the zero polynomial")));
            }
            objectives.push(Objective { p, q });
        }
        let constraints = raw
            .constraints
            .into_iter()
            .enumerate()
            .map(|(j, g)| poly(g, format!("constraints[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let bounds_box = match raw.bounds_box {
            Some(b) => {
                if b.len() != n {
                    return Err(Error::Parse(format!(
                        "field `box` has {} intervals, expected {n}",
                        b.len()
                    )));
                }
                b.into_iter().map(|[lo, hi]| [lit(lo), lit(hi)]).collect()
            }
            None => vec![[-T::one(), T::one()]; n],
        };
        Ok(Problem {
            n,
            objectives,
            constraints,
            bounds_box,
        })
    }

    /// Parses and validates a problem document.
    pub fn from_json(text: &str) -> Result<Self> {
        let p = Self::from_json_unchecked(text)?;
        p.check_assumptions()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn r(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_values(&self, x: &[T]) -> Vec<T> {
        self.objectives.iter().map(|o| o.eval(x)).collect()
    }

    /// `g_j(x) ≥ −tol` for all constraints (the box is not checked).
    pub fn is_feasible(&self, x: &[T], tol: T) -> bool {
        self.constraints.iter().all(|g| g.eval_unchecked(x) >= -tol)
    }

    pub fn in_box(&self, x: &[T]) -> bool {
        x.iter()
            .zip(&self.bounds_box)
            .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    /// Replaces each `p/q` by `(p·q)/q²`, which only needs `q ≠ 0` on `Ω`.
    pub fn square_denominators(&self) -> Self {
        let mut out = self.clone();
        for o in &mut out.objectives {
            let p = &o.p * &o.q;
            let q = &o.q * &o.q;
            o.p = p;
            o.q = q;
        }
        out
    }

    /// Coarse-grid check that `Ω` is nonempty and every `q_i > 0` on it.
    pub fn check_assumptions(&self) -> Result<()> {
        for (j, [lo, hi]) in self.bounds_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Assumption(format!(
                    "box interval {} is degenerate or not finite",
                    j + 1
                )));
            }
        }
        let mut res = CHECK_GRID;
        while res > 3 && res.checked_pow(self.n as u32).is_none_or(|t| t > CHECK_GRID_BUDGET) {
            res -= 2;
        }
        let tol: T = lit(FEAS_TOL);
        let mut any = false;
        let mut failure = None;
        for_each_grid_point(&self.bounds_box, res, |x| {
            if failure.is_some() || !self.is_feasible(x, tol) {
                return;
            }
            any = true;
            for (i, o) in self.objectives.iter().enumerate() {
                if o.q.eval_unchecked(x) <= T::zero() {
                    failure = Some((i, x.to_vec()));
                    return;
                }
            }
        });
        if let Some((i, x)) = failure {
            let pt: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            return Err(Error::Assumption(format!(
                "denominator q{} is not positive at feasible point ({})",
                i + 1,
                pt.join(", ")
            )));
        }
        if !any {
            return Err(Error::Assumption(format!(
                "no feasible point on the {res}^{} check grid; the feasible set looks empty",
                self.n
            )));
        }
        Ok(())
    }

    /// Maps the box onto `[−1,1]ⁿ`: returns the problem in the new variables
    /// together with the map back to the original coordinates.
    pub fn rescale(&self) -> Result<(Self, AffineMap<T>)> {
        let two: T = lit(2.0);
        let mut center = Vec::with_capacity(self.n);
        let mut half = Vec::with_capacity(self.n);
        for (j, [lo, hi]) in self.bounds_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "box interval {} is degenerate",
                    j + 1
                )));
            }
            center.push((*lo + *hi) / two);
            half.push((*hi - *lo) / two);
        }
        let map = AffineMap { center, half };
        let sub = |p: &Poly<T>| p.compose_affine(&map.center, &map.half);
        let objectives = self
            .objectives
            .iter()
            .map(|o| {
                Ok(Objective {
                    p: sub(&o.p)?,
                    q: sub(&o.q)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = self.constraints.iter().map(sub).collect::<Result<Vec<_>>>()?;
        Ok((
            Problem {
                n: self.n,
                objectives,
                constraints,
                bounds_box: vec![[-T::one(), T::one()]; self.n],
            },
            map,
        ))
    }

    /// True when the box is `[−1,1]ⁿ`.
    pub fn is_unit_box(&self) -> bool {
        self.bounds_box
            .iter()
            .all(|[lo, hi]| *lo == -T::one() && *hi == T::one())
    }
}

impl Problem<f64> {
    /// Objective pairs `(p_i, q_i)`.
    pub fn objective_pairs(&self) -> Vec<(Poly<f64>, Poly<f64>)> {
        self.objectives
            .iter()
            .map(|o| (o.p.clone(), o.q.clone()))
            .collect()
    }

    /// The constraints `g_j` as a generator set (box not included).
    pub fn generators(&self) -> GeneratorSet {
        GeneratorSet::from_polys(self.n, &self.constraints)
            .expect("constraints share the problem dimension")
    }
}

/// `x = center + half ∘ x̃`, taking `[−1,1]ⁿ` onto the original box.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T: Scalar> {
    pub center: Vec<T>,
    pub half: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            center: vec![T::zero(); n],
            half: vec![T::one(); n],
        }
    }

    pub fn to_original(&self, scaled: &[T]) -> Vec<T> {
        scaled
            .iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(&x, (&c, &h))| c + h * x)
            .collect()
    }

    pub fn to_scaled(&self, original: &[T]) -> Vec<T> {
        original
            .iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(&x, (&c, &h))| (x - c) / h)
            .collect()
    }
}

/// Visits the uniform grid with `res` points per dimension over `bounds`,
/// last coordinate varying slowest.
pub fn for_each_grid_point<T: Scalar>(bounds: &[[T; 2]], res: usize, mut f: impl FnMut(&[T])) {
    let n = bounds.len();
    if n == 0 || res == 0 {
        return;
    }
    let coords: Vec<Vec<T>> = bounds
        .iter()
        .map(|&[lo, hi]| grid_coords(lo, hi, res))
        .collect();
    let mut idx = vec![0usize; n];
    let mut x: Vec<T> = coords.iter().map(|c| c[0]).collect();
    loop {
        f(&x);
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < res {
                x[d] = coords[d][idx[d]];
                break;
            }
            idx[d] = 0;
            x[d] = coords[d][0];
            d += 1;
            if d == n {
                return;
            }
        }
    }
}

/// `res` equally spaced values from `lo` to `hi` inclusive.
pub fn grid_coords<T: Scalar>(lo: T, hi: T, res: usize) -> Vec<T> {
    if res == 1 {
        return vec![(lo + hi) / lit(2.0)];
    }
    let steps = T::from_usize(res - 1).unwrap();
    (0..res)
        .map(|i| {
            let t = T::from_usize(i).unwrap() / steps;
            lo + (hi - lo) * t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISK: &str = r#"{"n": 2,
        "objectives": [{"p": [[1, [1, 0]]]}, {"p": [[1, [0, 1]]]}],
        "constraints": [[[1, [0, 0]], [-1, [2, 0]], [-1, [0, 2]]]],
        "box": [[-1, 1], [-1, 1]]}"#;

    #[test]
    fn loads_and_defaults_denominator() {
        let p: Problem<f64> = Problem::from_json(DISK).unwrap();
        assert_eq!((p.m(), p.r()), (2, 1));
        assert_eq!(p.objectives[0].q, Poly::constant(2, 1.0));
        assert!(p.is_unit_box());
    }

    #[test]
    fn grid_visits_every_point() {
        let mut count = 0;
        let mut last = vec![];
        for_each_grid_point(&[[0.0, 1.0], [-1.0, 1.0]], 3, |x| {
            count += 1;
            last = x.to_vec();
        });
        assert_eq!(count, 9);
        assert_eq!(last, vec![1.0, 1.0]);
    }

    #[test]
    fn grid_endpoints_exact() {
        let c = grid_coords(-1.0f64, 1.0, 201);
        assert_eq!(c[0], -1.0);
        assert_eq!(c[100], 0.0);
        assert_eq!(c[200], 1.0);
    }
}
