//! Weak, weighted and log-Sobolev functional inequalities for heavy-tailed
//! measures: rate functions, weights, Lyapunov certificates, and numerical
//! checks (spectral, capacitary, Monte Carlo, Langevin dynamics).

pub mod dual;
pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod expr;
pub mod field;
mod levelset;
pub mod lyapunov;
pub mod measures;
pub mod quad;
pub mod rates;
pub mod weights;

pub use dual::Dual2;
pub use error::{Error, Result};
pub use expr::Expr;
pub use field::{Field, LowerBound, Potential, PotentialSpec};
pub use lyapunov::{LyapunovCertificate, VerificationReport};
pub use measures::{Geometry, Measure, MeasureKind, MeasureSpec};
pub use rates::{RateFunction, RateKind};
pub use weights::{ConstantKind, Weight, WeightedConstant};
