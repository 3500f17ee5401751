//! Infeasible-start primal-dual interior-point method.
//!
//! Nesterov–Todd scaling with a Mehrotra predictor-corrector step. Free
//! variables stay in the Newton system as an augmented block
//! `[M B; Bᵀ 0]`, reduced through a Cholesky factor of the Schur
//! complement `M`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Residuals, SdpProblem, SdpSolution, SolveStatus};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Target for relative primal/dual infeasibility and gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Normalized certificate residual below which infeasibility is declared.
    pub infeasibility_tol: f64,
    /// When the method stalls, iterates within this tolerance still count
    /// as optimal.
    pub accept_tol: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200,
            step_fraction: 0.95,
            infeasibility_tol: 1e-6,
            accept_tol: 1e-7,
            verbose: false,
        }
    }
}

/// Per-block constraint data in compressed form.
struct Block {
    size: usize,
    c: DMatrix<f64>,
    /// Global constraint indices touching this block, ascending.
    rows: Vec<usize>,
    /// Entry range of each local row in the flat arrays.
    offsets: Vec<usize>,
    ij: Vec<(u32, u32)>,
    /// Coefficients; diagonal ones are pre-halved for the Schur kernel.
    half: Vec<f64>,
    /// Coefficients as given.
    vals: Vec<f64>,
    local_row: Vec<u32>,
}

impl Block {
    /// `<A_i, Z>` accumulated into `out[row]` for every touching row.
    fn apply(&self, z: &DMatrix<f64>, out: &mut [f64]) {
        for (lr, &row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for e in self.offsets[lr]..self.offsets[lr + 1] {
                let (i, j) = self.ij[e];
                let (i, j) = (i as usize, j as usize);
                let v = self.vals[e];
                acc += if i == j { v * z[(i, i)] } else { 2.0 * v * z[(i, j)] };
            }
            out[row] += acc;
        }
    }

    /// `Σ_i y_i A_i`.
    fn adjoint(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.size, self.size);
        for (lr, &row) in self.rows.iter().enumerate() {
            let yi = y[row];
            if yi == 0.0 {
                continue;
            }
            for e in self.offsets[lr]..self.offsets[lr + 1] {
                let (i, j) = self.ij[e];
                let (i, j) = (i as usize, j as usize);
                out[(i, j)] += yi * self.vals[e];
                if i != j {
                    out[(j, i)] += yi * self.vals[e];
                }
            }
        }
        out
    }

    /// Adds `<A_i, W A_j W>` for this block's rows into `m`.
    fn add_schur(&self, w: &DMatrix<f64>, m: &mut DMatrix<f64>) {
        let s = self.size;
        // row-major copy so each W row is contiguous
        let wr: Vec<f64> = w.transpose().as_slice().to_vec();
        let nrows = self.rows.len();
        let mut acc = vec![0.0; nrows];
        for li in 0..nrows {
            let start = self.offsets[li];
            acc[li..].iter_mut().for_each(|a| *a = 0.0);
            for e in start..self.offsets[li + 1] {
                let (p, q) = self.ij[e];
                let (p, q) = (p as usize, q as usize);
                let coef = if p == q { self.vals[e] } else { 2.0 * self.vals[e] };
                let wp = &wr[p * s..(p + 1) * s];
                let wq = &wr[q * s..(q + 1) * s];
                for f in start..self.ij.len() {
                    let (r, t) = self.ij[f];
                    let (r, t) = (r as usize, t as usize);
                    let k = wp[r] * wq[t] + wp[t] * wq[r];
                    acc[self.local_row[f] as usize] += coef * self.half[f] * k;
                }
            }
            let gi = self.rows[li];
            for lj in li..nrows {
                let gj = self.rows[lj];
                m[(gi, gj)] += acc[lj];
                if gi != gj {
                    m[(gj, gi)] += acc[lj];
                }
            }
        }
    }
}

/// Nesterov–Todd scaling of one block: `W = G Gᵀ` with `W S W = X`
/// and `G⁻¹ X G⁻ᵀ = Gᵀ S G = diag(v)`.
struct Scaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    w: DMatrix<f64>,
    v: DVector<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let n = x.nrows();
    let l = Cholesky::new(x.clone())?.l();
    let mut t = l.transpose() * s * &l;
    symmetrize(&mut t);
    let eig = t.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return None;
    }
    let q = eig.eigenvectors;
    let lam = eig.eigenvalues;
    let mut g = &l * &q;
    for j in 0..n {
        let f = lam[j].powf(-0.25);
        g.column_mut(j).scale_mut(f);
    }
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut ginv = q.transpose() * linv;
    for i in 0..n {
        let f = lam[i].powf(0.25);
        ginv.row_mut(i).scale_mut(f);
    }
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    let v = lam.map(f64::sqrt);
    Some(Scaling { g, ginv, w, v })
}

/// Largest `α` with `diag(v) + α·D ⪰ 0`.
fn max_step(v: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = v.len();
    let mut p = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = d[(i, j)] / (v[i] * v[j]).sqrt();
        }
    }
    symmetrize(&mut p);
    let lmin = p
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn factor_spd(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut reg = 1e-14 * max_diag;
    for _ in 0..8 {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(r) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

struct Compiled {
    blocks: Vec<Block>,
    m: usize,
    nf: usize,
    b: DVector<f64>,
    /// Free-variable columns, `m × nf`.
    bmat: DMatrix<f64>,
    d: DVector<f64>,
}

fn compile(problem: &SdpProblem) -> Compiled {
    let m = problem.n_rows();
    let nf = problem.n_free;
    let cmats = problem.objective_matrices();
    let mut per_block: Vec<Vec<(usize, u32, u32, f64)>> = vec![Vec::new(); problem.block_sizes.len()];
    let mut bmat = DMatrix::zeros(m, nf);
    for (row, c) in problem.constraints.iter().enumerate() {
        for e in &c.functional.entries {
            per_block[e.block].push((row, e.i as u32, e.j as u32, e.value));
        }
        for &(v, a) in &c.functional.free {
            bmat[(row, v)] += a;
        }
    }
    let blocks = per_block
        .into_iter()
        .zip(cmats)
        .zip(&problem.block_sizes)
        .map(|((mut entries, c), &size)| {
            entries.sort_by_key(|a| (a.0, a.1, a.2));
            // merge duplicates
            let mut merged: Vec<(usize, u32, u32, f64)> = Vec::with_capacity(entries.len());
            for e in entries {
                match merged.last_mut() {
                    Some(last) if (last.0, last.1, last.2) == (e.0, e.1, e.2) => last.3 += e.3,
                    _ => merged.push(e),
                }
            }
            merged.retain(|e| e.3 != 0.0);
            let mut rows = Vec::new();
            let mut offsets = vec![0];
            let mut ij = Vec::with_capacity(merged.len());
            let mut half = Vec::with_capacity(merged.len());
            let mut vals = Vec::with_capacity(merged.len());
            let mut local_row = Vec::with_capacity(merged.len());
            for (k, e) in merged.iter().enumerate() {
                if rows.last() != Some(&e.0) {
                    if k > 0 {
                        offsets.push(k);
                    }
                    rows.push(e.0);
                }
                ij.push((e.1, e.2));
                vals.push(e.3);
                half.push(if e.1 == e.2 { 0.5 * e.3 } else { e.3 });
                local_row.push((rows.len() - 1) as u32);
            }
            offsets.push(merged.len());
            if rows.is_empty() {
                offsets = vec![0];
            }
            Block {
                size,
                c,
                rows,
                offsets,
                ij,
                half,
                vals,
                local_row,
            }
        })
        .collect();
    let b = DVector::from_iterator(m, problem.constraints.iter().map(|c| c.rhs));
    let d = DVector::from_vec(problem.objective_free());
    Compiled {
        blocks,
        m,
        nf,
        b,
        bmat,
        d,
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    c: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dc: DVector<f64>,
}

const REFINE_STEPS: usize = 2;
/// Iterations without a new most-accurate point before giving up in the
/// end game.
const STALL_ITERS: usize = 10;

/// Reduced Newton system for one iteration.
struct Newton<'a> {
    data: &'a Compiled,
    /// Schur complement `M`, kept for iterative refinement.
    mmat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `M⁻¹B`
    minv_b: DMatrix<f64>,
    /// Cholesky of `BᵀM⁻¹B`
    k_chol: Option<Cholesky<f64, Dyn>>,
}

impl<'a> Newton<'a> {
    fn solve_reduced(
        &self,
        r1: &DVector<f64>,
        rf: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let u = self.chol.solve(r1);
        if self.data.nf == 0 {
            return Some((u, DVector::zeros(0)));
        }
        let rhs = self.data.bmat.transpose() * &u - rf;
        let dc = self.k_chol.as_ref()?.solve(&rhs);
        let dy = &u - &self.minv_b * &dc;
        Some((dy, dc))
    }

    fn solve(
        &self,
        scal: &[Scaling],
        rc: &[DMatrix<f64>],
        rd: &[DMatrix<f64>],
        rp: &DVector<f64>,
        rf: &DVector<f64>,
    ) -> Option<Direction> {
        let data = self.data;
        let mut r1 = rp.clone();
        let mut buf = vec![0.0; data.m];
        for (k, blk) in data.blocks.iter().enumerate() {
            let w = &scal[k].w;
            let t = &rc[k] - w * &rd[k] * w;
            blk.apply(&t, &mut buf);
        }
        for i in 0..data.m {
            r1[i] -= buf[i];
        }
        // [M B; Bᵀ 0] [dy; dc] = [r1; rf], refined against the unfactored M
        let (mut dy, mut dc) = self.solve_reduced(&r1, rf)?;
        for _ in 0..REFINE_STEPS {
            let e1 = &r1 - &self.mmat * &dy - &data.bmat * &dc;
            let e2 = rf - data.bmat.transpose() * &dy;
            let (cy, cc) = self.solve_reduced(&e1, &e2)?;
            dy += cy;
            dc += cc;
        }
        if dy.iter().any(|v| !v.is_finite()) || dc.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut dx = Vec::with_capacity(data.blocks.len());
        let mut ds = Vec::with_capacity(data.blocks.len());
        for (k, blk) in data.blocks.iter().enumerate() {
            let mut dsk = &rd[k] - blk.adjoint(dy.as_slice());
            symmetrize(&mut dsk);
            let w = &scal[k].w;
            let mut dxk = &rc[k] - w * &dsk * w;
            symmetrize(&mut dxk);
            dx.push(dxk);
            ds.push(dsk);
        }
        Some(Direction { dx, ds, dy, dc })
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn initial_point(data: &Compiled) -> Iterate {
    let mut x = Vec::new();
    let mut s = Vec::new();
    // per-row Frobenius norms of each block's coefficients
    for blk in &data.blocks {
        let n = blk.size as f64;
        let mut xi = 10.0f64.max(n.sqrt());
        let mut eta = 10.0f64.max(n.sqrt()).max(blk.c.norm());
        for (lr, &row) in blk.rows.iter().enumerate() {
            let mut fro = 0.0;
            for e in blk.offsets[lr]..blk.offsets[lr + 1] {
                let (i, j) = blk.ij[e];
                let v = blk.vals[e];
                fro += if i == j { v * v } else { 2.0 * v * v };
            }
            let fro = fro.sqrt();
            xi = xi.max(n * (1.0 + data.b[row].abs()) / (1.0 + fro));
            eta = eta.max(fro);
        }
        x.push(DMatrix::identity(blk.size, blk.size) * xi);
        s.push(DMatrix::identity(blk.size, blk.size) * eta);
    }
    Iterate {
        x,
        s,
        y: DVector::zeros(data.m),
        c: DVector::zeros(data.nf),
    }
}

/// Solves `problem` and reports status, iterates and residuals.
///
/// Errors only for malformed input; solver trouble is reported through
/// [`SolveStatus`].
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let data = compile(problem);
    let nb = data.blocks.len();
    let big_n: f64 = data.blocks.iter().map(|b| b.size as f64).sum::<f64>().max(1.0);
    let b_norm = data.b.norm();
    let c_norm = data
        .blocks
        .iter()
        .map(|b| b.c.norm_squared())
        .sum::<f64>()
        .sqrt();
    let d_norm = data.d.norm();

    let mut it = initial_point(&data);
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut stall = 0;
    let mut best_iter = 0;
    // late iterations can lose accuracy; keep the most accurate point seen
    let mut best = (
        it.clone(),
        Residuals {
            primal_feas: f64::INFINITY,
            dual_feas: f64::INFINITY,
            gap: f64::INFINITY,
        },
    );
    let mut last = Residuals {
        primal_feas: f64::INFINITY,
        dual_feas: f64::INFINITY,
        gap: f64::INFINITY,
    };

    for iter in 0..=options.max_iter {
        iterations = iter;
        // residuals
        let mut ax = vec![0.0; data.m];
        for (k, blk) in data.blocks.iter().enumerate() {
            blk.apply(&it.x[k], &mut ax);
        }
        let ax = DVector::from_vec(ax);
        let bc = &data.bmat * &it.c;
        let rp = &data.b - &ax - &bc;
        let mut rd = Vec::with_capacity(nb);
        let mut aty_s = Vec::with_capacity(nb);
        for (k, blk) in data.blocks.iter().enumerate() {
            let aty = blk.adjoint(it.y.as_slice());
            let sum = &aty + &it.s[k];
            rd.push(&blk.c - &sum);
            aty_s.push(sum);
        }
        let bty = data.bmat.transpose() * &it.y;
        let rf = &data.d - &bty;

        let pobj: f64 = data
            .blocks
            .iter()
            .zip(&it.x)
            .map(|(b, x)| inner(&b.c, x))
            .sum::<f64>()
            + data.d.dot(&it.c);
        let dobj = data.b.dot(&it.y);
        let rd_norm = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        let res = Residuals {
            primal_feas: rp.norm() / (1.0 + b_norm),
            dual_feas: (rd_norm + rf.norm()) / (1.0 + c_norm + d_norm),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
        };
        last = res;
        if res.max() < best.1.max() {
            best = (it.clone(), res);
            best_iter = iter;
        } else if iter >= best_iter + STALL_ITERS && best.1.max() < 1e-3 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let mu: f64 = it.x.iter().zip(&it.s).map(|(x, s)| inner(x, s)).sum::<f64>() / big_n;
        if options.verbose {
            eprintln!(
                "{iter:3} pobj {pobj:+.9e} dobj {dobj:+.9e} pinf {:.2e} dinf {:.2e} gap {:.2e} mu {mu:.2e}",
                res.primal_feas, res.dual_feas, res.gap
            );
        }
        if res.max() <= options.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // infeasibility certificates
        if dobj > 0.0 && res.primal_feas > options.tol {
            let hom = aty_s.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() + bty.norm();
            if hom / dobj <= options.infeasibility_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 && res.dual_feas > options.tol {
            let hom = (&ax + &bc).norm();
            if hom / (-pobj) <= options.infeasibility_tol {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == options.max_iter {
            break;
        }

        // scaling and Schur complement
        let mut scal = Vec::with_capacity(nb);
        for k in 0..nb {
            match nt_scaling(&it.x[k], &it.s[k]) {
                Some(sc) => scal.push(sc),
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            }
        }
        if scal.len() != nb {
            break;
        }
        let mut mmat = DMatrix::zeros(data.m, data.m);
        for (k, blk) in data.blocks.iter().enumerate() {
            blk.add_schur(&scal[k].w, &mut mmat);
        }
        // rows touching no block give zero pivots
        for i in 0..data.m {
            if mmat[(i, i)] == 0.0 {
                mmat[(i, i)] = 1.0;
            }
        }
        let Some(chol) = factor_spd(&mmat) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (minv_b, k_chol) = if data.nf > 0 {
            let minv_b = chol.solve(&data.bmat);
            let mut kmat = data.bmat.transpose() * &minv_b;
            symmetrize(&mut kmat);
            (minv_b, factor_spd(&kmat))
        } else {
            (DMatrix::zeros(data.m, 0), None)
        };
        if data.nf > 0 && k_chol.is_none() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let newton = Newton {
            data: &data,
            mmat,
            chol,
            minv_b,
            k_chol,
        };

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
        let Some(aff) = newton.solve(&scal, &rc_aff, &rd, &rp, &rf) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (dxt_a, dst_a) = scaled_dirs(&scal, &aff);
        let (ap, ad) = step_lengths(&scal, &dxt_a, &dst_a);
        let ap_a = ap.min(1.0);
        let ad_a = ad.min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..nb {
            let xa = &it.x[k] + &aff.dx[k] * ap_a;
            let sa = &it.s[k] + &aff.ds[k] * ad_a;
            mu_aff += inner(&xa, &sa);
        }
        mu_aff /= big_n;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // corrector
        let mut rc = Vec::with_capacity(nb);
        for k in 0..nb {
            let v = &scal[k].v;
            let n = v.len();
            let prod = &dxt_a[k] * &dst_a[k];
            let mut t = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    let mut r = -(prod[(i, j)] + prod[(j, i)]);
                    if i == j {
                        r += 2.0 * (sigma * mu - v[i] * v[i]);
                    }
                    t[(i, j)] = r / (v[i] + v[j]);
                }
            }
            let g = &scal[k].g;
            let mut rck = g * t * g.transpose();
            symmetrize(&mut rck);
            rc.push(rck);
        }
        let Some(dir) = newton.solve(&scal, &rc, &rd, &rp, &rf) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (dxt, dst) = scaled_dirs(&scal, &dir);
        let (ap, ad) = step_lengths(&scal, &dxt, &dst);
        let ap = (options.step_fraction * ap).min(1.0);
        let ad = (options.step_fraction * ad).min(1.0);

        for k in 0..nb {
            it.x[k] += &dir.dx[k] * ap;
            it.s[k] += &dir.ds[k] * ad;
            symmetrize(&mut it.x[k]);
            symmetrize(&mut it.s[k]);
        }
        it.c += &dir.dc * ap;
        it.y += &dir.dy * ad;

        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall >= 3 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        } else {
            stall = 0;
        }
    }

    // On failure report the most accurate iterate seen, which may still be
    // good enough to accept.
    if !matches!(
        status,
        SolveStatus::Optimal | SolveStatus::Infeasible | SolveStatus::Unbounded
    ) {
        it = best.0;
        last = best.1;
        if last.max() <= options.accept_tol {
            status = SolveStatus::Optimal;
        }
    }

    let pobj: f64 = data
        .blocks
        .iter()
        .zip(&it.x)
        .map(|(b, x)| inner(&b.c, x))
        .sum::<f64>()
        + data.d.dot(&it.c);
    let dobj = data.b.dot(&it.y);
    let mut sol = SdpSolution {
        status,
        block_values: it.x,
        free_values: it.c.as_slice().to_vec(),
        dual_values: it.y.as_slice().to_vec(),
        dual_slack: it.s,
        primal_obj: pobj,
        dual_obj: dobj,
        residuals: last,
        iterations,
    };
    if sol.status == SolveStatus::Optimal && sol.min_block_eigenvalue() < -1e-8 {
        sol.status = SolveStatus::NumericalFailure;
    }
    Ok(sol)
}

fn scaled_dirs(scal: &[Scaling], dir: &Direction) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let mut dxt = Vec::with_capacity(scal.len());
    let mut dst = Vec::with_capacity(scal.len());
    for (k, sc) in scal.iter().enumerate() {
        let mut a = &sc.ginv * &dir.dx[k] * sc.ginv.transpose();
        symmetrize(&mut a);
        let mut b = sc.g.transpose() * &dir.ds[k] * &sc.g;
        symmetrize(&mut b);
        dxt.push(a);
        dst.push(b);
    }
    (dxt, dst)
}

fn step_lengths(scal: &[Scaling], dxt: &[DMatrix<f64>], dst: &[DMatrix<f64>]) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for (k, sc) in scal.iter().enumerate() {
        ap = ap.min(max_step(&sc.v, &dxt[k]));
        ad = ad.min(max_step(&sc.v, &dst[k]));
    }
    (ap, ad)
}
