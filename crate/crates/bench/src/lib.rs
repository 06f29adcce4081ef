//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use recdel_core::world::sample_ground_truth;
use recdel_core::{DelegationGraph, GroundTruth, SimRng, Topology};

/// A binomial graph with virtual executors and its ground truth, drawn from
/// a fixed seed so every benchmark run measures the same instance.
pub struct Fixture {
    pub graph: DelegationGraph,
    pub truth: GroundTruth,
}

impl Fixture {
    pub fn binomial(agents: usize, edge_prob: f64, seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let graph = Topology::Binomial { edge_prob }
            .generate(agents, &mut rng, true)
            .expect("feasible topology");
        let truth = sample_ground_truth(&graph, &mut rng);
        Self { graph, truth }
    }
}
