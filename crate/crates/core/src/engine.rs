//! Single simulation runs: build a chain, execute, learn, account regret.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{AgentId, Chain, DelegationGraph};
use crate::policies::{choose_next, PolicyContext, PolicyKind, PolicyParams, SampleCache};
use crate::world::{execute_task, optimal_success_prob, GlobalClock, GroundTruth, Stats};

#[derive(Clone, Debug, PartialEq)]
pub struct RoundResult {
    pub chain: Chain,
    /// The executing agent, or `None` when the walk dead-ended at an agent
    /// whose every neighbour was already on the chain.
    pub executor: Option<AgentId>,
    pub outcome: bool,
    /// `p* - truth(executor)`, or `p*` on a dead end.
    pub regret: f64,
}

/// Cumulative pseudo-regret after each round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub cumulative_regret: Vec<f64>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.cumulative_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative_regret.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Learning state of one policy on one graph and ground truth.
#[derive(Clone, Debug)]
pub struct Simulation<'a> {
    graph: &'a DelegationGraph,
    truth: &'a GroundTruth,
    kind: PolicyKind,
    params: PolicyParams,
    stats: Stats,
    clock: GlobalClock,
    cache: SampleCache,
    optimum: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        graph: &'a DelegationGraph,
        truth: &'a GroundTruth,
        kind: PolicyKind,
        params: PolicyParams,
    ) -> Result<Self> {
        params.validate()?;
        let optimum = optimal_success_prob(graph, truth)?;
        Ok(Self {
            graph,
            truth,
            kind,
            params,
            stats: Stats::new(graph.agent_count(), params.prior)?,
            clock: GlobalClock::default(),
            cache: SampleCache::new(graph.agent_count()),
            optimum,
        })
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn clock(&self) -> GlobalClock {
        self.clock
    }

    /// Best reachable executor probability, the regret baseline.
    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    /// One delegated task, from the root down to execution.
    ///
    /// Every hop re-decides with the current agent as decision maker.
    pub fn run_round<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<RoundResult> {
        self.cache.clear();
        let mut chain = Chain::new(self.graph.root());
        loop {
            let current = chain.last();
            if self.graph.possible_delegations(current, &chain).is_empty() {
                break;
            }
            let ctx = PolicyContext {
                graph: self.graph,
                stats: &self.stats,
                clock: self.clock,
                params: &self.params,
            };
            let next = choose_next(&ctx, self.kind, &chain, &mut self.cache, rng)?;
            if !chain.push(next) {
                return Err(Error::ContractViolation(format!("policy revisited agent {next}")));
            }
        }

        let last = chain.last();
        let (executor, outcome, regret) = if self.graph.is_executor(last) {
            let outcome = execute_task(last, self.truth, rng)?;
            let p = self.truth.get(last).expect("executors carry a probability");
            (Some(last), outcome, self.optimum - p)
        } else {
            (None, false, self.optimum)
        };
        self.stats.update(&chain, outcome);
        self.clock.tick();
        Ok(RoundResult {
            chain,
            executor,
            outcome,
            regret,
        })
    }
}

/// Runs `iterations` rounds from fresh counters and returns the running
/// regret sum.
pub fn run_simulation<R: Rng + ?Sized>(
    graph: &DelegationGraph,
    truth: &GroundTruth,
    kind: PolicyKind,
    params: &PolicyParams,
    iterations: usize,
    rng: &mut R,
) -> Result<RunTrace> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    let mut sim = Simulation::new(graph, truth, kind, *params)?;
    let mut total = 0.0;
    let mut cumulative_regret = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        total += sim.run_round(rng)?.regret;
        cumulative_regret.push(total);
    }
    Ok(RunTrace { cumulative_regret })
}
