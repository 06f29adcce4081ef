use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use recdel_bench::Fixture;
use recdel_core::{
    choose_next, run_simulation, Chain, PolicyContext, PolicyKind, PolicyParams, SampleCache, SimRng,
    Simulation,
};

fn params() -> PolicyParams {
    PolicyParams {
        ucb_c: 3.0,
        ..PolicyParams::default()
    }
}

/// One root decision after a warm-up, so counters are no longer uniform.
fn root_decision(c: &mut Criterion) {
    let fx = Fixture::binomial(20, 0.3, 7);
    let mut group = c.benchmark_group("root_decision");
    for kind in PolicyKind::all() {
        let mut sim = Simulation::new(&fx.graph, &fx.truth, kind, params()).unwrap();
        let mut rng = SimRng::seed_from_u64(11);
        for _ in 0..500 {
            sim.run_round(&mut rng).unwrap();
        }
        let p = params();
        let ctx = PolicyContext {
            graph: &fx.graph,
            stats: sim.stats(),
            clock: sim.clock(),
            params: &p,
        };
        let chain = Chain::new(fx.graph.root());
        let mut cache = SampleCache::new(fx.graph.agent_count());
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| {
                cache.clear();
                choose_next(&ctx, kind, &chain, &mut cache, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

fn short_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_200_rounds");
    group.sample_size(10);
    for agents in [10, 20] {
        let fx = Fixture::binomial(agents, 0.3, 7);
        for kind in PolicyKind::all() {
            let id = BenchmarkId::new(kind.to_string(), agents);
            group.bench_function(id, |b| {
                b.iter(|| {
                    let mut rng = SimRng::seed_from_u64(3);
                    run_simulation(&fx.graph, &fx.truth, kind, &params(), 200, &mut rng).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, root_decision, short_run);
criterion_main!(benches);
