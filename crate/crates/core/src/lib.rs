//! Evaluation of restricted continuous-logic sentences over the tracial
//! matrix algebras M_p(C), synchronous nonlocal games via PVM optimization
//! and rounding, and trace-moment epsilon-net lower bounds.
//!
//! Everything stochastic is seeded explicitly and merges deterministically,
//! so identical inputs give bit-identical outputs regardless of thread count.

pub mod error;
pub mod eval;
pub mod formula;
pub mod games;
pub mod matrix;
pub mod moments;
pub mod parser;
pub mod scalars;
pub mod strategy;
pub mod terms;

pub use error::{Error, Result};
pub use eval::{BoundKind, Diagnostics, EvalResult, OptimizerConfig};
pub use formula::{Classification, Formula, Sentence};
pub use games::{GameValueReport, NonlocalGame, RelaxedGameReport, RoundedPvm, SynchronousCorrelation};
pub use strategy::{game_strategy, sentence_strategy, EvalContext, GameContext};
pub use matrix::{ComplexMatrix, MatrixTuple, PVMTuple};
pub use moments::{MomentVector, NetBoundReport, NetSpec, NetTarget};
pub use scalars::{CRat, Rat};
pub use terms::{Letter, StarMonomial, Term};
