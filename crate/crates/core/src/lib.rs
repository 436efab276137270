//! Lossy compression of symbolic melodies into typed combinator programs,
//! under joint limits on description length and search effort, with an
//! adaptive program library and synergy-driven training curricula.

pub mod adaptor;
pub mod compress;
pub mod curriculum;
pub mod edit;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod grammar;
pub mod melody;
pub mod pid;
pub mod seed;
pub mod stats;
pub mod term;

use num_rational::Ratio;

/// Pitman-Yor hyperparameters in floating point (the default).
pub type PyParamsF64 = adaptor::PyParams<f64>;
/// Pitman-Yor hyperparameters in exact rational arithmetic.
pub type ExactPyParams = adaptor::PyParams<Ratio<i64>>;
pub type ExactPyWeights = adaptor::PyWeights<Ratio<i64>>;
pub type JointTableF64 = pid::JointTable<f64>;
pub type JointTableF32 = pid::JointTable<f32>;
pub type PidResultF64 = pid::PidResult<f64>;
pub type PidResultF32 = pid::PidResult<f32>;
