//! Minimizing network coding resources for multicast with a genetic algorithm.

pub mod baselines;
pub mod chromosome;
pub mod cli;
pub mod distsim;
pub mod error;
pub mod evaluate;
pub mod field;
pub mod ga;
pub mod seed;
pub mod stats;
pub mod topology;

pub use chromosome::{Chromosome, Fitness, Layout, Representation};
pub use error::{Error, Result};
pub use evaluate::{AlgebraicEvaluator, DecompositionEvaluator, Evaluator, EvaluatorKind};
pub use ga::{evolve, GaParams, RunStats};
pub use topology::MulticastInstance;
