//! Hidden ground truth, task execution and the counters agents learn from.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{AgentId, Chain, DelegationGraph};

/// Hidden Bernoulli success probability of every executor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    probs: Vec<Option<f64>>,
}

impl GroundTruth {
    /// Builds a ground truth from `(executor, probability)` pairs. Every
    /// executor of `g` must be covered and only executors may appear.
    pub fn from_pairs(g: &DelegationGraph, pairs: impl IntoIterator<Item = (AgentId, f64)>) -> Result<Self> {
        let mut probs = vec![None; g.agent_count()];
        for (a, p) in pairs {
            if a.0 >= g.agent_count() || !g.is_executor(a) {
                return Err(Error::ContractViolation(format!(
                    "ground truth given for non-executor {a}"
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "success probability {p} for {a} outside [0, 1]"
                )));
            }
            probs[a.0] = Some(p);
        }
        if let Some(a) = g.agents().find(|&a| g.is_executor(a) && probs[a.0].is_none()) {
            return Err(Error::ContractViolation(format!(
                "executor {a} has no success probability"
            )));
        }
        Ok(Self { probs })
    }

    /// Success probability of `a`, `None` for agents that do not execute.
    pub fn get(&self, a: AgentId) -> Option<f64> {
        self.probs.get(a.0).copied().flatten()
    }

    /// Executors in ascending order with their probabilities.
    pub fn iter(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (AgentId(i), p)))
    }
}

/// Draws each executor's probability i.i.d. uniform on `[0, 1)`, in
/// ascending agent order. Virtual executors are treated like any other leaf.
pub fn sample_ground_truth<R: Rng + ?Sized>(g: &DelegationGraph, rng: &mut R) -> GroundTruth {
    let probs = g
        .agents()
        .map(|a| g.is_executor(a).then(|| rng.random::<f64>()))
        .collect();
    GroundTruth { probs }
}

/// Bernoulli draw for a task executed by `executor`.
pub fn execute_task<R: Rng + ?Sized>(executor: AgentId, truth: &GroundTruth, rng: &mut R) -> Result<bool> {
    let p = truth
        .get(executor)
        .ok_or_else(|| Error::ContractViolation(format!("agent {executor} is not an executor")))?;
    Ok(rng.random::<f64>() < p)
}

/// Best true success probability over executors reachable from the root.
pub fn optimal_success_prob(g: &DelegationGraph, truth: &GroundTruth) -> Result<f64> {
    g.reachable_executors()
        .into_iter()
        .filter_map(|a| truth.get(a))
        .reduce(f64::max)
        .ok_or_else(|| Error::ContractViolation("root reaches no executor".into()))
}

/// Initial pseudo-counts every agent starts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prior {
    pub succ: u64,
    pub fail: u64,
}

impl Default for Prior {
    fn default() -> Self {
        Self { succ: 1, fail: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentStats {
    pub succ: u64,
    pub fail: u64,
}

impl AgentStats {
    pub fn total(&self) -> u64 {
        self.succ + self.fail
    }

    pub fn mean(&self) -> f64 {
        self.succ as f64 / self.total() as f64
    }
}

/// Per-agent success/failure counters for one simulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stats {
    agents: Vec<AgentStats>,
    prior: Prior,
}

impl Stats {
    pub fn new(agent_count: usize, prior: Prior) -> Result<Self> {
        if prior.succ == 0 || prior.fail == 0 {
            return Err(Error::InvalidParameter(
                "prior pseudo-counts must be positive".into(),
            ));
        }
        let init = AgentStats {
            succ: prior.succ,
            fail: prior.fail,
        };
        Ok(Self {
            agents: vec![init; agent_count],
            prior,
        })
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    #[inline]
    pub fn get(&self, a: AgentId) -> AgentStats {
        self.agents[a.0]
    }

    pub fn set(&mut self, a: AgentId, stats: AgentStats) {
        self.agents[a.0] = stats;
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, AgentStats)> + '_ {
        self.agents.iter().enumerate().map(|(i, s)| (AgentId(i), *s))
    }

    /// Credits the outcome to every agent on the chain, executor and
    /// delegators alike. Agents off the chain are untouched.
    pub fn update(&mut self, chain: &Chain, outcome: bool) {
        for a in chain.as_slice() {
            let s = &mut self.agents[a.0];
            if outcome {
                s.succ += 1;
            } else {
                s.fail += 1;
            }
        }
    }
}

/// Number of completed rounds in a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GlobalClock {
    pub n: u64,
}

impl GlobalClock {
    pub fn tick(&mut self) {
        self.n += 1;
    }

    /// Round count used inside `ln(n)`; the first round counts as 1.
    pub fn effective(&self) -> u64 {
        self.n.max(1)
    }
}
