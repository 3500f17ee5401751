//! Polynomial over-estimators `ψ_k` of the achievement function.
//!
//! Joint variables are ordered `(x_1..x_n, y_1..y_n, z)`. The set `K` is cut
//! out by the groups
//!
//! ```text
//! h1_i = p_i(x) q_i(y) − p_i(y) q_i(x) − z q_i(x) q_i(y)
//! h2   = g_j(y),  1 − y_j²
//! h3   = 1 − x_j²
//! h4   = (f^upper − f^lower)² − z²
//! ```
//!
//! and `ψ_k` is the `φ ∈ ℝ[x]_{2k}` of least box integral with
//! `φ(x) − z` in the order-`k` quadratic module of `K`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Exponent, MonomialBasis, Poly};
use crate::scalar::Scalar;
use crate::sdp::{solve, Residuals, SdpSolution, SolveStatus, SolverOptions};
use crate::sos::{
    assemble_membership, compute_bounds, solver_error, verify_certificate, Bounds, Clique,
    GeneratorSet, GramCertificate, Membership, ParamPoly, VerificationReport,
};
use crate::{Polynomial, ProblemSpec};

/// Coefficients below this magnitude are dropped from `ψ_k`.
pub const PSI_CLEANUP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dense,
    Sparse,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dense => "dense",
            Mode::Sparse => "sparse",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Mode::Dense),
            "sparse" => Ok(Mode::Sparse),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// The constraint system of `K` in the joint ring.
#[derive(Debug, Clone)]
pub struct JointSystem {
    pub n: usize,
    pub mode: Mode,
    /// `f^upper − f^lower`; `z` ranges over `[−spread, spread]`.
    pub spread: f64,
    pub h1: Vec<Polynomial>,
    /// Redundant ball constraint, present in sparse mode only.
    pub ball: Option<Polynomial>,
    pub h2: Vec<Polynomial>,
    pub h3: Vec<Polynomial>,
    pub h4: Polynomial,
    pub generators: GeneratorSet,
}

impl JointSystem {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Number of constraint polynomials, ball included.
    pub fn group_count(&self) -> usize {
        self.generators.len()
    }

    pub fn z_interval(&self) -> [f64; 2] {
        [-self.spread, self.spread]
    }
}

fn box_poly(dim: usize, var: usize) -> Polynomial {
    let mut h = Polynomial::constant(dim, 1.0);
    h.add_term(Exponent::unit(dim, var).add(&Exponent::unit(dim, var)), -1.0);
    h
}

/// Builds `K` for a problem already scaled to `[−1,1]ⁿ`.
pub fn build_joint(spec: &ProblemSpec, bounds: &Bounds, mode: Mode) -> Result<JointSystem> {
    if !spec.is_unit_box() {
        return Err(Error::InvalidArgument(
            "problem must be rescaled to the box [-1,1]^n first".into(),
        ));
    }
    if !(bounds.f_lower.is_finite() && bounds.f_upper.is_finite())
        || bounds.f_lower > bounds.f_upper
    {
        return Err(Error::InvalidArgument(format!(
            "invalid objective bounds [{}, {}]",
            bounds.f_lower, bounds.f_upper
        )));
    }
    let n = spec.n;
    let dim = 2 * n + 1;
    let xs: Vec<usize> = (0..n).collect();
    let ys: Vec<usize> = (n..2 * n).collect();
    let z = Polynomial::var(dim, 2 * n);
    let spread = bounds.f_upper - bounds.f_lower;

    let mut h1 = Vec::with_capacity(spec.m());
    for o in &spec.objectives {
        let px = o.p.embed(&xs, dim)?;
        let qx = o.q.embed(&xs, dim)?;
        let py = o.p.embed(&ys, dim)?;
        let qy = o.q.embed(&ys, dim)?;
        let qq = &qx * &qy;
        h1.push(&(&(&px * &qy) - &(&py * &qx)) - &(&z * &qq));
    }
    let mut h2 = spec
        .constraints
        .iter()
        .map(|g| g.embed(&ys, dim))
        .collect::<Result<Vec<_>>>()?;
    h2.extend(ys.iter().map(|&v| box_poly(dim, v)));
    let h3: Vec<Polynomial> = xs.iter().map(|&v| box_poly(dim, v)).collect();
    let mut h4 = Polynomial::constant(dim, spread * spread);
    h4.add_term(Exponent::unit(dim, 2 * n).add(&Exponent::unit(dim, 2 * n)), -1.0);

    let ball = (mode == Mode::Sparse).then(|| {
        let mut b = Polynomial::constant(dim, 2.0 * n as f64 + spread * spread);
        for v in 0..dim {
            b.add_term(Exponent::unit(dim, v).add(&Exponent::unit(dim, v)), -1.0);
        }
        b
    });

    let mut gens = GeneratorSet::new(dim);
    let mut j1 = Vec::new();
    for (i, h) in h1.iter().enumerate() {
        j1.push(gens.push(format!("h1_{}", i + 1), h.clone())?);
    }
    if let Some(b) = &ball {
        j1.push(gens.push("h1_ball", b.clone())?);
    }
    let mut j2 = Vec::new();
    for (j, h) in h2.iter().enumerate() {
        let label = if j < spec.r() {
            format!("h2_g{}", j + 1)
        } else {
            format!("h2_box{}", j - spec.r() + 1)
        };
        j2.push(gens.push(label, h.clone())?);
    }
    let mut j3 = Vec::new();
    for (j, h) in h3.iter().enumerate() {
        j3.push(gens.push(format!("h3_box{}", j + 1), h.clone())?);
    }
    let j4 = vec![gens.push("h4", h4.clone())?];

    if mode == Mode::Sparse {
        gens = gens.with_cliques(vec![
            Clique {
                variables: (0..dim).collect(),
                generators: j1,
            },
            Clique {
                variables: ys,
                generators: j2,
            },
            Clique {
                variables: xs,
                generators: j3,
            },
            Clique {
                variables: vec![2 * n],
                generators: j4,
            },
        ])?;
    }
    Ok(JointSystem {
        n,
        mode,
        spread,
        h1,
        ball,
        h2,
        h3,
        h4,
        generators: gens,
    })
}

/// Moment of the normalized Lebesgue measure on `[−1,1]ⁿ` for `x^α`.
pub fn gamma<T: Scalar>(alpha: &Exponent) -> T {
    if !alpha.is_even() {
        return T::zero();
    }
    alpha
        .as_slice()
        .iter()
        .fold(T::one(), |acc, &a| acc / T::from_u32(a + 1).unwrap())
}

/// Moments `γ_α` for every `|α| ≤ degree`.
#[derive(Debug, Clone)]
pub struct MomentTable<T: Scalar> {
    basis: MonomialBasis,
    values: Vec<T>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn new(n: usize, degree: u32) -> Self {
        let basis = MonomialBasis::new(n, degree);
        let values = basis.iter().map(gamma).collect();
        MomentTable { basis, values }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> u32 {
        self.basis.degree()
    }

    pub fn get(&self, alpha: &Exponent) -> Option<T> {
        self.basis.position(alpha).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Exponent, T)> + '_ {
        self.basis.iter().zip(self.values.iter().copied())
    }

    /// `∫ p dλ` for `deg p ≤ degree`.
    pub fn integrate(&self, p: &Poly<T>) -> Result<T> {
        let mut acc = T::zero();
        for (e, c) in p.terms() {
            let g = self.get(e).ok_or(Error::DegreeOverflow {
                degree: p.degree(),
                max: self.degree(),
            })?;
            acc += c * g;
        }
        Ok(acc)
    }
}

pub fn moments<T: Scalar>(n: usize, degree: u32) -> MomentTable<T> {
    MomentTable::new(n, degree)
}

/// The SDP whose optimal free variables are the coefficients of `ψ_k`.
#[derive(Debug, Clone)]
pub struct PkProgram {
    pub membership: Membership,
    /// Monomials of `φ` over `x`, in the order of the free variables.
    pub coeff_basis: MonomialBasis,
    pub target: ParamPoly,
    pub order: u32,
}

/// Smallest admissible order: every generator must fit into degree `2k`.
pub fn order_floor(joint: &JointSystem) -> u32 {
    joint.generators.max_degree().div_ceil(2).max(1)
}

pub fn assemble(joint: &JointSystem, k: u32, moments: &MomentTable<f64>) -> Result<PkProgram> {
    let floor = order_floor(joint);
    if k < floor {
        return Err(Error::OrderTooSmall {
            order: k,
            degree: joint.generators.max_degree(),
            required: floor,
        });
    }
    if moments.dim() != joint.n || moments.degree() < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "moment table over {} variables to degree {} cannot serve order {k} in {} variables",
            moments.dim(),
            moments.degree(),
            joint.n
        )));
    }
    let dim = joint.dim();
    let coeff_basis = MonomialBasis::new(joint.n, 2 * k);
    let params = coeff_basis
        .iter()
        .map(|a| Polynomial::monomial(lift_x(a, dim), 1.0))
        .collect();
    let target = ParamPoly {
        constant: -&Polynomial::var(dim, 2 * joint.n),
        params,
    };
    let mut membership = assemble_membership(&target, &joint.generators, k)?;
    for (t, a) in coeff_basis.iter().enumerate() {
        let g = moments.get(a).expect("moment degree checked");
        if g != 0.0 {
            membership.problem.objective.push_free(t, g);
        }
    }
    Ok(PkProgram {
        membership,
        coeff_basis,
        target,
        order: k,
    })
}

fn lift_x(alpha: &Exponent, dim: usize) -> Exponent {
    let mut e = alpha.as_slice().to_vec();
    e.resize(dim, 0);
    Exponent::new(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxStatus {
    /// Solved and the certificate re-verified.
    Certified,
    /// Solved but the reconstructed certificate missed the tolerances.
    Unverified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproximationResult {
    pub k: u32,
    pub mode: Mode,
    pub status: ApproxStatus,
    pub solver_status: SolveStatus,
    /// `∫ ψ_k dλ` at the solver optimum.
    pub rho: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub psi: Polynomial,
    pub residuals: Residuals,
    pub iterations: usize,
    pub verification: VerificationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<GramCertificate>,
}

impl ApproximationResult {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.psi.eval_unchecked(x)
    }
}

/// Stalled solves are still usable when their best iterate is this close to
/// optimal; the certificate check decides whether `ψ_k` is trusted.
pub const NEAR_OPTIMAL_FEAS: f64 = 1e-6;
pub const NEAR_OPTIMAL_GAP: f64 = 1e-4;

pub(crate) fn near_optimal(sol: &SdpSolution) -> bool {
    matches!(
        sol.status,
        SolveStatus::MaxIterations | SolveStatus::NumericalFailure
    ) && sol.residuals.primal_feas <= NEAR_OPTIMAL_FEAS
        && sol.residuals.dual_feas <= NEAR_OPTIMAL_FEAS
        && sol.residuals.gap <= NEAR_OPTIMAL_GAP
}

/// Computes objective bounds with their default orders, then `ψ_k`.
pub fn approximate_psi(
    spec: &ProblemSpec,
    k: u32,
    mode: Mode,
    options: &SolverOptions,
) -> Result<ApproximationResult> {
    let bounds = compute_bounds(&spec.objective_pairs(), &spec.generators(), None, options)?;
    approximate_psi_with_bounds(spec, &bounds, k, mode, options)
}

pub fn approximate_psi_with_bounds(
    spec: &ProblemSpec,
    bounds: &Bounds,
    k: u32,
    mode: Mode,
    options: &SolverOptions,
) -> Result<ApproximationResult> {
    let joint = build_joint(spec, bounds, mode)?;
    let table = moments(spec.n, 2 * k);
    let prog = assemble(&joint, k, &table)?;
    let sol = solve(&prog.membership.problem, options)?;
    if !(sol.is_optimal() || near_optimal(&sol)) {
        return Err(solver_error(sol.status, k));
    }
    let mut psi = Polynomial::zero(spec.n);
    for (a, &c) in prog.coeff_basis.iter().zip(&sol.free_values) {
        psi.add_term(a.clone(), c);
    }
    let certificate = prog.membership.certificate(&sol);
    let verification = verify_certificate(
        &prog.target.at(&sol.free_values),
        &joint.generators,
        &certificate,
    )?;
    Ok(ApproximationResult {
        k,
        mode,
        status: if verification.passed {
            ApproxStatus::Certified
        } else {
            ApproxStatus::Unverified
        },
        solver_status: sol.status,
        rho: sol.primal_obj,
        f_lower: bounds.f_lower,
        f_upper: bounds.f_upper,
        psi: psi.cleanup(PSI_CLEANUP),
        residuals: sol.residuals,
        iterations: sol.iterations,
        verification,
        certificate: Some(certificate),
    })
}
