//! Joint Bayesian estimation of sparse Gaussian graphical models for several
//! related groups with unequal sample sizes.
//!
//! Each group's precision matrix gets a Laplace shrinkage prior towards zero
//! and fused Laplace priors towards every other group's matrix. The penalty
//! scales carry gamma hyperpriors whose rates depend on a group's effective
//! sample size, so small groups are not forced to be sparser than large ones.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod simulation;

pub use distributions::RngHandle;
pub use error::{Error, Result};
pub use model::{ChainState, Hyperparameters, PairIndex, PanDataset};
pub use posterior::{
    network_similarity, partial_correlations, select_edges, EdgeReport, SimilarityReport,
};
pub use sampler::{run_chain, run_chain_with, ChainTrace, NexusModel, TraceOptions};
pub use simulation::{simulate_truth, SimTruth, SimulationDesign};
