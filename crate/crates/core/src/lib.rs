//! Learnable Bregman splitting: a safeguarded block operator-splitting solver
//! for nonconvex composite problems `f(x) + Σ_n g_n(x_n)` that interleaves a
//! pluggable data-driven operator with model-based proximal-gradient steps.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod bregman;
pub mod denoise;
pub mod error;
pub mod lbs;
pub mod linops;
pub mod numerics;
pub mod problem;
pub mod prox;
pub mod splitting;
pub mod trace;

pub use bregman::{BregmanGeometry, DiagonalMahalanobis};
pub use error::{LbsError, Result};
pub use numerics::{BlockVector, DenseVector, SeededRng};
pub use prox::{BoxIndicator, LpPower, ProxFn};
pub use problem::{SmoothFn, SplitProblem};
pub use splitting::{Schedule, SolveOutput, SolverConfig};
pub use trace::{Branch, SolverTrace, TraceRow};
pub use lbs::{lbs_solve, LbsConfig};
pub use denoise::{DenoiserOp, ImageDenoiser, ResidualConvNet};
