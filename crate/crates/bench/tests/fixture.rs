use rand::SeedableRng;
use recdel_bench::Fixture;
use recdel_core::{run_simulation, PolicyKind, PolicyParams, SimRng};

#[test]
fn benchmark_fixtures_run_every_policy() {
    for agents in [10, 20] {
        let fx = Fixture::binomial(agents, 0.3, 7);
        assert!(fx.graph.agent_count() > agents);
        for kind in PolicyKind::all() {
            let mut rng = SimRng::seed_from_u64(3);
            let trace =
                run_simulation(&fx.graph, &fx.truth, kind, &PolicyParams::default(), 20, &mut rng).unwrap();
            assert_eq!(trace.len(), 20);
        }
    }
}
