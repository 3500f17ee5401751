//! Quadratic-module membership as SDP coefficient matching.
//!
//! A target `t` lies in the order-`k` quadratic module of `h_1..h_r` when
//!
//! ```text
//! t = σ_0 + Σ_j σ_j h_j,   σ_j = m_jᵀ G_j m_j,   G_j ⪰ 0,   deg(σ_j h_j) ≤ 2k
//! ```
//!
//! With clique metadata every clique gets its own `σ_{i,0}` and multipliers
//! restricted to the clique's variables.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Exponent, MonomialBasis};
use crate::sdp::{
    min_eigenvalue, solve, LinearFunctional, Residuals, SdpProblem, SdpSolution, SolveStatus,
    SolverOptions,
};
use crate::Polynomial;

/// Variable group `I_i` with the generators `J_i` attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clique {
    pub variables: Vec<usize>,
    pub generators: Vec<usize>,
}

/// Labelled generators `h_j ≥ 0` describing a semialgebraic set.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    dim: usize,
    generators: Vec<(String, Polynomial)>,
    cliques: Option<Vec<Clique>>,
}

impl GeneratorSet {
    pub fn new(dim: usize) -> Self {
        GeneratorSet {
            dim,
            generators: Vec::new(),
            cliques: None,
        }
    }

    pub fn from_polys(dim: usize, polys: &[Polynomial]) -> Result<Self> {
        let mut g = Self::new(dim);
        for (j, p) in polys.iter().enumerate() {
            g.push(format!("g{}", j + 1), p.clone())?;
        }
        Ok(g)
    }

    pub fn push(&mut self, label: impl Into<String>, poly: Polynomial) -> Result<usize> {
        if poly.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: poly.dim(),
            });
        }
        self.generators.push((label.into(), poly));
        Ok(self.generators.len() - 1)
    }

    /// Appends `1 − x_j²` for every variable.
    pub fn with_box(mut self) -> Self {
        for j in 0..self.dim {
            let mut h = Polynomial::constant(self.dim, 1.0);
            h.add_term(Exponent::unit(self.dim, j).add(&Exponent::unit(self.dim, j)), -1.0);
            self.generators.push((format!("box{}", j + 1), h));
        }
        self
    }

    /// Attaches clique metadata after checking it against the generators.
    pub fn with_cliques(mut self, cliques: Vec<Clique>) -> Result<Self> {
        check_cliques(self.dim, &self.generators, &cliques)?;
        self.cliques = Some(cliques);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[(String, Polynomial)] {
        &self.generators
    }

    pub fn poly(&self, j: usize) -> &Polynomial {
        &self.generators[j].1
    }

    pub fn cliques(&self) -> Option<&[Clique]> {
        self.cliques.as_deref()
    }

    pub fn max_degree(&self) -> u32 {
        self.generators.iter().map(|(_, h)| h.degree()).max().unwrap_or(0)
    }

    /// True when every generator is nonnegative at `x` (up to `tol`).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.generators
            .iter()
            .all(|(_, h)| h.eval_unchecked(x) >= -tol)
    }
}

fn check_cliques(dim: usize, gens: &[(String, Polynomial)], cliques: &[Clique]) -> Result<()> {
    let bad = |m: String| Err(Error::CliqueStructure(m));
    let mut owner = vec![None; gens.len()];
    for (i, c) in cliques.iter().enumerate() {
        if c.variables.is_empty() {
            return bad(format!("clique {i} has no variables"));
        }
        crate::poly::check_indices(&c.variables, dim)?;
        for &j in &c.generators {
            let Some((label, h)) = gens.get(j) else {
                return bad(format!("clique {i} references generator {j}"));
            };
            if let Some(prev) = owner[j] {
                return bad(format!("generator {label} in cliques {prev} and {i}"));
            }
            owner[j] = Some(i);
            if let Some(v) = h.variables().into_iter().find(|v| !c.variables.contains(v)) {
                return bad(format!(
                    "generator {label} uses x{} outside clique {i}",
                    v + 1
                ));
            }
        }
    }
    if let Some(j) = owner.iter().position(Option::is_none) {
        return bad(format!("generator {} belongs to no clique", gens[j].0));
    }
    // running intersection: I_i ∩ (I_1 ∪ … ∪ I_{i−1}) ⊆ I_s for some s < i
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for (i, c) in cliques.iter().enumerate() {
        if i > 0 {
            let inter: Vec<usize> = c
                .variables
                .iter()
                .copied()
                .filter(|v| seen.contains(v))
                .collect();
            let ok = cliques[..i]
                .iter()
                .any(|prev| inter.iter().all(|v| prev.variables.contains(v)));
            if !ok {
                return bad(format!("clique {i} violates the running intersection property"));
            }
        }
        seen.extend(c.variables.iter().copied());
    }
    Ok(())
}

/// Gram basis for a multiplier of `generator` at order `k`.
pub fn gram_basis(
    generator: &Polynomial,
    k: u32,
    dim: usize,
    variables: Option<&[usize]>,
) -> Result<MonomialBasis> {
    let deg = generator.degree();
    if deg > 2 * k {
        return Err(Error::OrderTooSmall {
            order: k,
            degree: deg,
            required: deg.div_ceil(2),
        });
    }
    let d = (2 * k - deg) / 2;
    match variables {
        Some(vars) => MonomialBasis::over_variables(dim, vars, d),
        None => Ok(MonomialBasis::new(dim, d)),
    }
}

/// `constant + Σ_t λ_t · params[t]`, a polynomial affine in free scalars λ.
#[derive(Debug, Clone)]
pub struct ParamPoly {
    pub constant: Polynomial,
    pub params: Vec<Polynomial>,
}

impl ParamPoly {
    pub fn fixed(p: Polynomial) -> Self {
        ParamPoly {
            constant: p,
            params: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn degree(&self) -> u32 {
        self.params
            .iter()
            .map(Polynomial::degree)
            .chain([self.constant.degree()])
            .max()
            .unwrap_or(0)
    }

    /// The polynomial at parameter values `lambda`.
    pub fn at(&self, lambda: &[f64]) -> Polynomial {
        let mut p = self.constant.clone();
        for (q, &l) in self.params.iter().zip(lambda) {
            p = &p + &q.scale(l);
        }
        p
    }
}

/// Placement of one SOS multiplier inside the assembled SDP.
#[derive(Debug, Clone)]
pub struct GramLayout {
    pub label: String,
    /// `None` for the pure SOS term `σ_0`.
    pub generator: Option<usize>,
    pub clique: Option<usize>,
    pub basis: MonomialBasis,
}

/// Coefficient-matching SDP for one membership statement.
///
/// Row `r` reads `Σ_b <A_{r,b}, G_b> − Σ_t params[t]_β λ_t = constant_β`
/// for the monomial `β = rows[r]`; the objective is left empty.
#[derive(Debug, Clone)]
pub struct Membership {
    pub problem: SdpProblem,
    pub blocks: Vec<GramLayout>,
    pub rows: Vec<Exponent>,
    pub order: u32,
}

pub fn assemble_membership(target: &ParamPoly, gens: &GeneratorSet, k: u32) -> Result<Membership> {
    let dim = gens.dim();
    for p in target.params.iter().chain([&target.constant]) {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    if target.degree() > 2 * k {
        return Err(Error::DegreeOverflow {
            degree: target.degree(),
            max: 2 * k,
        });
    }

    let mut blocks = Vec::new();
    match gens.cliques() {
        None => {
            blocks.push(GramLayout {
                label: "sigma0".into(),
                generator: None,
                clique: None,
                basis: MonomialBasis::new(dim, k),
            });
            for (j, (label, h)) in gens.generators().iter().enumerate() {
                blocks.push(GramLayout {
                    label: format!("sigma[{label}]"),
                    generator: Some(j),
                    clique: None,
                    basis: gram_basis(h, k, dim, None)?,
                });
            }
        }
        Some(cliques) => {
            for (i, c) in cliques.iter().enumerate() {
                blocks.push(GramLayout {
                    label: format!("clique{}/sigma0", i + 1),
                    generator: None,
                    clique: Some(i),
                    basis: MonomialBasis::over_variables(dim, &c.variables, k)?,
                });
                for &j in &c.generators {
                    let (label, h) = &gens.generators()[j];
                    blocks.push(GramLayout {
                        label: format!("clique{}/sigma[{label}]", i + 1),
                        generator: Some(j),
                        clique: Some(i),
                        basis: gram_basis(h, k, dim, Some(&c.variables))?,
                    });
                }
            }
        }
    }

    let full = MonomialBasis::new(dim, 2 * k);
    let mut funcs = vec![LinearFunctional::new(); full.len()];
    let mut rhs = vec![0.0; full.len()];
    let one = Polynomial::constant(dim, 1.0);
    for (b, layout) in blocks.iter().enumerate() {
        let h = layout.generator.map_or(&one, |j| gens.poly(j));
        let mons = layout.basis.monomials();
        for a in 0..mons.len() {
            for c in a..mons.len() {
                let e = mons[a].add(&mons[c]);
                for (g, v) in h.terms() {
                    let r = full
                        .position(&e.add(g))
                        .expect("Gram products stay within degree 2k");
                    funcs[r].push_entry(b, a, c, v);
                }
            }
        }
    }
    for (t, q) in target.params.iter().enumerate() {
        for (e, v) in q.terms() {
            funcs[full.position(e).expect("degree checked")].push_free(t, -v);
        }
    }
    for (e, v) in target.constant.terms() {
        rhs[full.position(e).expect("degree checked")] = v;
    }

    let mut problem = SdpProblem::new(
        blocks.iter().map(|l| l.basis.len()).collect(),
        target.params.len(),
    );
    let mut rows = Vec::new();
    for ((f, b), e) in funcs.into_iter().zip(rhs).zip(full.monomials()) {
        if f.is_empty() {
            if b != 0.0 {
                return Err(Error::Solver {
                    status: SolveStatus::Infeasible,
                    hint: format!(": target term {e} cannot be matched by any multiplier"),
                });
            }
            continue;
        }
        problem.add_constraint(f, b);
        rows.push(e.clone());
    }
    Ok(Membership {
        problem,
        blocks,
        rows,
        order: k,
    })
}

impl Membership {
    /// Gram matrices of `solution` packaged as a certificate.
    pub fn certificate(&self, solution: &SdpSolution) -> GramCertificate {
        let blocks = self
            .blocks
            .iter()
            .zip(&solution.block_values)
            .map(|(l, g)| GramBlock {
                label: l.label.clone(),
                generator: l.generator,
                clique: l.clique,
                basis: l.basis.monomials().to_vec(),
                gram: (0..g.nrows())
                    .map(|i| g.row(i).iter().copied().collect())
                    .collect(),
            })
            .collect();
        GramCertificate {
            order: self.order,
            blocks,
        }
    }
}

/// One multiplier `σ = mᵀ G m` of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramBlock {
    pub label: String,
    pub generator: Option<usize>,
    pub clique: Option<usize>,
    pub basis: Vec<Exponent>,
    /// Row-major symmetric matrix.
    pub gram: Vec<Vec<f64>>,
}

/// SOS multipliers witnessing `target = σ_0 + Σ σ_j h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramCertificate {
    pub order: u32,
    pub blocks: Vec<GramBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest coefficient of `target − σ_0 − Σ σ_j h_j`.
    pub mismatch: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

pub const MISMATCH_TOL: f64 = 1e-6;
pub const EIGENVALUE_TOL: f64 = -1e-8;

impl GramCertificate {
    /// `σ_0 + Σ σ_j h_j` rebuilt from the Gram matrices.
    pub fn reconstruct(&self, gens: &GeneratorSet) -> Result<Polynomial> {
        let dim = gens.dim();
        let mut acc = Polynomial::zero(dim);
        for blk in &self.blocks {
            let n = blk.basis.len();
            if blk.gram.len() != n || blk.gram.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: blk.gram.len(),
                });
            }
            if let Some(e) = blk.basis.iter().find(|e| e.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            let mut sigma = Polynomial::zero(dim);
            for a in 0..n {
                for c in 0..n {
                    sigma.add_term(blk.basis[a].add(&blk.basis[c]), blk.gram[a][c]);
                }
            }
            let term = match blk.generator {
                None => sigma,
                Some(j) if j < gens.len() => &sigma * gens.poly(j),
                Some(j) => {
                    return Err(Error::IndexOutOfRange {
                        index: j,
                        dim: gens.len(),
                    })
                }
            };
            acc = &acc + &term;
        }
        Ok(acc)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let n = b.basis.len();
                min_eigenvalue(&DMatrix::from_fn(n, n, |i, j| b.gram[i][j]))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks a certificate against `target`; errors only on shape problems.
pub fn verify_certificate(
    target: &Polynomial,
    gens: &GeneratorSet,
    cert: &GramCertificate,
) -> Result<VerificationReport> {
    if target.dim() != gens.dim() {
        return Err(Error::DimensionMismatch {
            expected: gens.dim(),
            found: target.dim(),
        });
    }
    let diff = target - &cert.reconstruct(gens)?;
    let mismatch = diff.max_abs_coeff();
    let min_eig = cert.min_eigenvalue();
    let passed =
        mismatch <= MISMATCH_TOL * (1.0 + target.max_abs_coeff()) && min_eig >= EIGENVALUE_TOL;
    Ok(VerificationReport {
        mismatch,
        min_eigenvalue: min_eig,
        passed,
    })
}

/// Maps a non-optimal solve to the error the callers report.
pub(crate) fn solver_error(status: SolveStatus, order: u32) -> Error {
    match status {
        SolveStatus::Infeasible => Error::RaiseOrder { order },
        s => Error::Solver {
            status: s,
            hint: String::new(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

/// A certified bound on `p/q` over the set described by the generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveBound {
    pub side: Side,
    pub value: f64,
    pub order: u32,
    pub residuals: Residuals,
    pub verification: VerificationReport,
    pub certificate: GramCertificate,
}

/// Best `λ` with `p − λq` (lower) or `λq − p` (upper) in the order-`k`
/// quadratic module, found with `λ` as a free SDP variable.
pub fn objective_bound(
    p: &Polynomial,
    q: &Polynomial,
    gens: &GeneratorSet,
    k: u32,
    side: Side,
    options: &SolverOptions,
) -> Result<ObjectiveBound> {
    let target = match side {
        Side::Lower => ParamPoly {
            constant: p.clone(),
            params: vec![-q],
        },
        Side::Upper => ParamPoly {
            constant: -p,
            params: vec![q.clone()],
        },
    };
    let mut m = assemble_membership(&target, gens, k)?;
    // lower: maximize λ; upper: minimize λ
    let sign = match side {
        Side::Lower => -1.0,
        Side::Upper => 1.0,
    };
    m.problem.objective.push_free(0, sign);
    let sol = solve(&m.problem, options)?;
    if !sol.is_optimal() {
        return Err(solver_error(sol.status, k));
    }
    let value = sol.free_values[0];
    let cert = m.certificate(&sol);
    let verification = verify_certificate(&target.at(&[value]), gens, &cert)?;
    if !verification.passed {
        return Err(Error::Verification(format!(
            "bound certificate mismatch {:.3e}, min eigenvalue {:.3e}",
            verification.mismatch, verification.min_eigenvalue
        )));
    }
    Ok(ObjectiveBound {
        side,
        value,
        order: k,
        residuals: sol.residuals,
        verification,
        certificate: cert,
    })
}

/// Smallest useful order for bounding `p/q` over `gens`, plus one.
pub fn default_bound_order(p: &Polynomial, q: &Polynomial, gens: &GeneratorSet) -> u32 {
    let d = p.degree().max(q.degree()).div_ceil(2);
    d.max(gens.max_degree().div_ceil(2)).max(1) + 1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveBounds {
    pub lower: ObjectiveBound,
    pub upper: ObjectiveBound,
}

/// Per-objective bounds and their aggregates `f^lower`, `f^upper`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bounds {
    pub f_lower: f64,
    pub f_upper: f64,
    pub objectives: Vec<ObjectiveBounds>,
}

impl Bounds {
    pub fn spread(&self) -> f64 {
        self.f_upper - self.f_lower
    }
}

/// Bounds for every objective `p_i/q_i`; box generators are appended to
/// `gens` here. `order` overrides the per-objective default.
pub fn compute_bounds(
    objectives: &[(Polynomial, Polynomial)],
    gens: &GeneratorSet,
    order: Option<u32>,
    options: &SolverOptions,
) -> Result<Bounds> {
    let gens = gens.clone().with_box();
    let mut out = Vec::with_capacity(objectives.len());
    for (p, q) in objectives {
        let k = order.unwrap_or_else(|| default_bound_order(p, q, &gens));
        out.push(ObjectiveBounds {
            lower: objective_bound(p, q, &gens, k, Side::Lower, options)?,
            upper: objective_bound(p, q, &gens, k, Side::Upper, options)?,
        });
    }
    let f_lower = out.iter().map(|b| b.lower.value).fold(f64::INFINITY, f64::min);
    let f_upper = out
        .iter()
        .map(|b| b.upper.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Bounds {
        f_lower,
        f_upper,
        objectives: out,
    })
}
