//! Recursive task delegation as a recursive multi-armed bandit.
//!
//! An initial delegator (the root) hands a task to one of its neighbours,
//! which may pass it on again, until an agent with no onward options
//! executes it and the task succeeds or fails. Each agent picks its
//! delegatee with one of four bandit algorithms (ε-greedy, UCB1, Beta-UCB,
//! Thompson sampling), either in the standard node-local form or in a
//! delegation-aware form that values a neighbour by recursing over every
//! onward delegation path.
//!
//! Modules, bottom-up:
//! - [`graph`]: delegation graphs, chains, random topologies.
//! - [`world`]: hidden executor success probabilities and learned counters.
//! - [`policies`]: the eight decision policies.
//! - [`engine`]: rounds and single simulation runs.
//! - [`experiments`]: seeded batches, aggregation, CSV output and presets.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod policies;
pub mod world;

pub use engine::{run_simulation, RoundResult, RunTrace, Simulation};
pub use error::{Error, Result};
pub use experiments::{
    derive_run_seed, run_experiment, write_csv, AggregateSeries, ExperimentConfig, Preset,
};
pub use graph::{AgentId, AgentSet, Chain, DelegationGraph, ScaleFreeParams, Topology};
pub use policies::{choose_next, Algorithm, PolicyContext, PolicyKind, PolicyParams, SampleCache, Variant};
pub use world::{AgentStats, GlobalClock, GroundTruth, Prior, Stats};

/// Random stream used throughout; ChaCha8 output is stable across platforms
/// and crate versions, which the byte-identical CSV guarantee relies on.
pub type SimRng = rand_chacha::ChaCha8Rng;
