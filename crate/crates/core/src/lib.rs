//! Treewidth-guided solvers for Markov chains and Markov decision processes:
//! hitting probabilities, discounted sums, mean payoff and sparse linear
//! systems, each with a plain baseline to compare against.

pub mod bench;
pub mod discounted;
pub mod error;
pub mod gen;
pub mod hitting;
pub mod io;
pub mod linsys;
pub mod mdp;
pub mod meanpayoff;
pub mod model;
pub mod stats;
pub mod td;
pub mod work;

pub use error::SolveError;
pub use model::{Edge, MarkovChain, MarkovDecisionProcess, Owner, Strategy, TargetSet, VertexId};
pub use stats::SolverStats;
pub use td::TreeDecomposition;
