//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sosvec::sdp::{LinearFunctional, SdpProblem};

pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

pub fn add_matrix(f: &mut LinearFunctional, block: usize, a: &DMatrix<f64>) {
    for j in 0..a.ncols() {
        for i in 0..=j {
            f.push_entry(block, i, j, a[(i, j)]);
        }
    }
}

/// Builds an SDP whose optimum is a chosen strictly complementary pair.
pub struct Planted {
    pub problem: SdpProblem,
    pub x: Vec<DMatrix<f64>>,
    pub c: Vec<f64>,
    pub value: f64,
}

pub fn planted(rng: &mut ChaCha8Rng, sizes: &[usize], n_rows: usize, n_free: usize) -> Planted {
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for &n in sizes {
        let q = random_orthogonal(n, rng);
        let rank = rng.gen_range(1..n.max(2)).min(n);
        let mut dx = DMatrix::zeros(n, n);
        let mut ds = DMatrix::zeros(n, n);
        for i in 0..n {
            if i < rank {
                dx[(i, i)] = rng.gen_range(0.5..2.0);
            } else {
                ds[(i, i)] = rng.gen_range(0.5..2.0);
            }
        }
        xs.push(&q * dx * q.transpose());
        ss.push(&q * ds * q.transpose());
    }
    let cstar: Vec<f64> = (0..n_free).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ystar: Vec<f64> = (0..n_rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let amats: Vec<Vec<DMatrix<f64>>> = (0..n_rows)
        .map(|_| sizes.iter().map(|&n| random_symmetric(n, rng)).collect())
        .collect();
    let bmat: Vec<Vec<f64>> = (0..n_rows)
        .map(|_| (0..n_free).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mut p = SdpProblem::new(sizes.to_vec(), n_free);
    for i in 0..n_rows {
        let mut f = LinearFunctional::new();
        let mut rhs = 0.0;
        for (b, a) in amats[i].iter().enumerate() {
            add_matrix(&mut f, b, a);
            rhs += a.dot(&xs[b]);
        }
        for v in 0..n_free {
            f.push_free(v, bmat[i][v]);
            rhs += bmat[i][v] * cstar[v];
        }
        p.add_constraint(f, rhs);
    }
    // C = A*(y) + S,  d = Bᵀy
    let mut value = 0.0;
    for (b, &n) in sizes.iter().enumerate() {
        let mut c = ss[b].clone();
        for i in 0..n_rows {
            c += &amats[i][b] * ystar[i];
        }
        debug_assert_eq!(c.nrows(), n);
        add_matrix(&mut p.objective, b, &c);
        value += c.dot(&xs[b]);
    }
    for v in 0..n_free {
        let d: f64 = (0..n_rows).map(|i| bmat[i][v] * ystar[i]).sum();
        p.objective.push_free(v, d);
        value += d * cstar[v];
    }
    Planted {
        problem: p,
        x: xs,
        c: cstar,
        value,
    }
}

pub fn problem_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name)
}

pub fn load_problem(name: &str) -> sosvec::ProblemSpec {
    sosvec::ProblemSpec::load(problem_path(name)).unwrap()
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}
