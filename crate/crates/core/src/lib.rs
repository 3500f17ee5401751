pub mod achievement;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod poly;
pub mod problem;
pub mod scalar;
pub mod sdp;
pub mod sos;

pub use error::{Error, Result};
pub use poly::{Exponent, MonomialBasis, Poly};
pub use problem::{AffineMap, Objective, Problem};
pub use scalar::Scalar;

pub type Polynomial = Poly<f64>;
pub type ProblemSpec = Problem<f64>;
