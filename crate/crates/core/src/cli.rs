//! Command dispatch behind the `sosvec` binary.
//!
//! Every command loads a problem file, maps its box onto `[−1,1]ⁿ`, and
//! emits a JSON or CSV artifact whose points are in the original coordinates.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::achievement::{approximate_psi, ApproxStatus, ApproximationResult, Mode};
use crate::analysis::{
    containment_report, minimize_over, region_generator, sample_image, MinimizationResult,
    RegionQuery,
};
use crate::error::{Error, Result};
use crate::oracle::{Grid, Oracle};
use crate::poly::TermList;
use crate::problem::AffineMap;
use crate::sdp::SolverOptions;
use crate::sos::compute_bounds;
use crate::{Polynomial, ProblemSpec};

pub const DEFAULT_GRID: usize = 201;

#[derive(Debug, Clone, Parser)]
#[command(name = "sosvec", version, about = "Inner approximations of weakly efficient sets")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Certified lower/upper bounds of every objective over the feasible set.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Relaxation order (default: smallest useful order plus one).
        #[arg(long)]
        k: Option<u32>,
    },
    /// Compute the polynomial over-estimator ψ_k.
    Approx {
        #[command(flatten)]
        common: Common,
        /// Relaxation order.
        #[arg(long)]
        k: u32,
        /// `dense` or `sparse` (correlative sparsity in the joint variables).
        #[arg(long, default_value_t = Mode::Dense)]
        mode: Mode,
        /// Include the Gram certificate in the output.
        #[arg(long)]
        certificate: bool,
    },
    /// Objective values on a grid, flagged with Ω and A(δ,k) membership (CSV).
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiSource,
        /// Sublevel threshold δ > 0.
        #[arg(long)]
        delta: f64,
        /// Grid points per box side.
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Grid containment of A(δ,k) in the oracle's weakly δ-efficient set.
    Check {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiSource,
        /// Sublevel threshold δ > 0.
        #[arg(long)]
        delta: f64,
        /// Grid points per box side.
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Minimize a polynomial over Ω with the constraint ψ_k ≤ δ.
    Minimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        psi: PsiSource,
        /// Sublevel threshold δ > 0.
        #[arg(long)]
        delta: f64,
        /// Objective as a TERMS JSON file, in original coordinates.
        #[arg(long)]
        objective: PathBuf,
        /// Relaxation order (default: half the largest degree, rounded up).
        #[arg(long)]
        order: Option<u32>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Problem JSON file.
    pub problem: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SDP solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Replace each p/q by (p·q)/q² before solving.
    #[arg(long)]
    pub square_denominators: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PsiSource {
    /// ψ_k artifact written by `approx`.
    #[arg(long, conflicts_with = "k")]
    pub psi: Option<PathBuf>,
    /// Compute ψ_k in place with this order.
    #[arg(long)]
    pub k: Option<u32>,
    /// Mode used with `--k`.
    #[arg(long, default_value_t = Mode::Dense)]
    pub mode: Mode,
}

/// `approx` output: the result plus the map from the unit box back to the
/// problem's box, since `psi` is expressed in the rescaled variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiArtifact {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
    #[serde(flatten)]
    pub result: ApproximationResult,
}

impl PsiArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn map(&self) -> AffineMap<f64> {
        AffineMap {
            center: self.center.clone(),
            half: self.half.clone(),
        }
    }
}

/// Text emitted by a command, plus an error to report after writing it
/// (a result that failed verification is still written out).
#[derive(Debug)]
pub struct Artifact {
    pub text: String,
    pub deferred: Option<Error>,
}

impl Artifact {
    fn json<T: Serialize>(value: &T) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
        text.push('\n');
        Artifact {
            text,
            deferred: None,
        }
    }
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Bounds { common, .. }
            | Command::Approx { common, .. }
            | Command::Sample { common, .. }
            | Command::Check { common, .. }
            | Command::Minimize { common, .. } => common,
        }
    }
}

struct Loaded {
    original: ProblemSpec,
    scaled: ProblemSpec,
    map: AffineMap<f64>,
    options: SolverOptions,
}

fn load(common: &Common) -> Result<Loaded> {
    let mut original = ProblemSpec::load(&common.problem)?;
    if common.square_denominators {
        original = original.square_denominators();
    }
    let (scaled, map) = original.rescale()?;
    let mut options = SolverOptions::default();
    if let Some(tol) = common.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidArgument(format!("--tol must lie in (0, 1), got {tol}")));
        }
        options.tol = tol;
    }
    Ok(Loaded {
        original,
        scaled,
        map,
        options,
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--delta must be positive, got {delta}")))
    }
}

fn check_grid(grid: usize) -> Result<()> {
    if grid >= 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("--grid needs at least 2 points".into()))
    }
}

fn psi_artifact(src: &PsiSource, l: &Loaded) -> Result<PsiArtifact> {
    let art = match (&src.psi, src.k) {
        (Some(path), _) => PsiArtifact::load(path)?,
        (None, Some(k)) => PsiArtifact {
            center: l.map.center.clone(),
            half: l.map.half.clone(),
            result: approximate_psi(&l.scaled, k, src.mode, &l.options)?,
        },
        (None, None) => {
            return Err(Error::InvalidArgument("either --psi or --k is required".into()))
        }
    };
    if art.result.psi.dim() != l.original.n || art.center.len() != l.original.n {
        return Err(Error::DimensionMismatch {
            expected: l.original.n,
            found: art.result.psi.dim(),
        });
    }
    Ok(art)
}

/// Executes one command and returns its artifact.
pub fn run(config: &RunConfig) -> Result<Artifact> {
    let cmd = &config.command;
    let l = load(cmd.common())?;
    match cmd {
        Command::Bounds { k, .. } => {
            let bounds = compute_bounds(
                &l.scaled.objective_pairs(),
                &l.scaled.generators(),
                *k,
                &l.options,
            )?;
            Ok(Artifact::json(&bounds))
        }
        Command::Approx {
            k,
            mode,
            certificate,
            ..
        } => {
            let mut result = approximate_psi(&l.scaled, *k, *mode, &l.options)?;
            if !certificate {
                result.certificate = None;
            }
            let deferred = (result.status == ApproxStatus::Unverified).then(|| {
                Error::Verification(format!(
                    "certificate mismatch {:.3e}, min eigenvalue {:.3e}",
                    result.verification.mismatch, result.verification.min_eigenvalue
                ))
            });
            let mut art = Artifact::json(&PsiArtifact {
                center: l.map.center.clone(),
                half: l.map.half.clone(),
                result,
            });
            art.deferred = deferred;
            Ok(art)
        }
        Command::Sample {
            psi, delta, grid, ..
        } => {
            check_delta(*delta)?;
            check_grid(*grid)?;
            let art = psi_artifact(psi, &l)?;
            let query = RegionQuery::new(&l.original, &art.result.psi, art.map(), *delta)?;
            let g = Grid::new(&l.original, *grid);
            Ok(Artifact {
                text: sample_image(&query, &g)?.to_csv(),
                deferred: None,
            })
        }
        Command::Check {
            psi, delta, grid, ..
        } => {
            check_delta(*delta)?;
            check_grid(*grid)?;
            let art = psi_artifact(psi, &l)?;
            let query = RegionQuery::new(&l.original, &art.result.psi, art.map(), *delta)?;
            let g = Grid::new(&l.original, *grid);
            let oracle = Oracle::new(&l.original, &g)?;
            Ok(Artifact::json(&containment_report(&query, &oracle)))
        }
        Command::Minimize {
            psi,
            delta,
            objective,
            order,
            ..
        } => {
            check_delta(*delta)?;
            let art = psi_artifact(psi, &l)?;
            let target = load_terms(objective, l.original.n)?
                .compose_affine(&l.map.center, &l.map.half)?;
            let result = minimize_scaled(&l, &target, &art.result.psi, *delta, *order)?;
            Ok(Artifact::json(&result))
        }
    }
}

fn load_terms(path: &Path, n: usize) -> Result<Polynomial> {
    let text = fs::read_to_string(path)?;
    let terms: TermList = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    terms
        .into_poly(n)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn minimize_scaled(
    l: &Loaded,
    target: &Polynomial,
    psi: &Polynomial,
    delta: f64,
    order: Option<u32>,
) -> Result<MinimizationResult> {
    let mut gens = l.scaled.generators();
    gens.push("region", region_generator(psi, delta))?;
    let order = order.unwrap_or_else(|| target.degree().max(gens.max_degree()).div_ceil(2).max(1));
    let mut result = minimize_over(target, &gens, order, &l.options)?;
    result.candidate = l.map.to_original(&result.candidate);
    Ok(result)
}
