//! Delegation policies.
//!
//! Each policy decides, at one hop, which neighbour the current agent hands
//! the task to. The *standard* variants treat the hop as an ordinary bandit
//! over the immediate neighbours and score each neighbour by its own
//! counters. The *aware* variants score a neighbour by recursing over every
//! onward delegation from it, never revisiting an agent already on the
//! chain:
//!
//! - ε-greedy: an executor scores its success rate; a delegator scores
//!   `ε · mean(children) + (1 − ε) · max(children)`, i.e. the utility it
//!   would deliver if it ran ε-greedy itself.
//! - UCB1 / Beta-UCB / Thompson: an executor scores its bound (or its
//!   posterior sample); a delegator scores the maximum over its children.
//!
//! For the max-propagating policies the recursion only needs to know which
//! executors are reachable without touching the chain. On graphs where every
//! delegator has an executor child (always true once virtual executors are
//! added) this is answered by two graph searches per hop instead of a
//! path enumeration. Other graphs fall back to a memoised depth-first
//! recursion.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::graph::{AgentId, AgentSet, Chain, DelegationGraph};
use crate::world::{AgentStats, GlobalClock, Prior, Stats};

/// Default recursion depth, below the scored neighbour, of the aware
/// ε-greedy utility. Deeper agents are scored by their own success rate.
pub const DEFAULT_EPS_LOOKAHEAD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    EpsGreedy,
    Ucb1,
    BetaUcb,
    Thompson,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::EpsGreedy,
        Algorithm::Ucb1,
        Algorithm::BetaUcb,
        Algorithm::Thompson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EpsGreedy => "eps_greedy",
            Algorithm::Ucb1 => "ucb1",
            Algorithm::BetaUcb => "beta_ucb",
            Algorithm::Thompson => "thompson",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Standard,
    Aware,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Aware => "aware",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "aware" => Ok(Variant::Aware),
            _ => Err(Error::InvalidParameter(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyKind {
    pub algorithm: Algorithm,
    pub variant: Variant,
}

impl PolicyKind {
    pub const fn new(algorithm: Algorithm, variant: Variant) -> Self {
        Self { algorithm, variant }
    }

    /// All eight policies in canonical order.
    pub fn all() -> Vec<PolicyKind> {
        (0..8).map(PolicyKind::from_index).collect()
    }

    /// Canonical position in `0..8`; stable, used to derive random streams.
    pub fn index(self) -> usize {
        let alg = Algorithm::ALL.iter().position(|&a| a == self.algorithm).unwrap();
        alg * 2 + usize::from(self.variant == Variant::Aware)
    }

    pub fn from_index(i: usize) -> Self {
        let variant = if i.is_multiple_of(2) {
            Variant::Standard
        } else {
            Variant::Aware
        };
        Self::new(Algorithm::ALL[i / 2], variant)
    }

    /// Parses a comma-separated list of `algorithm[:variant]` items, or
    /// `all`. A bare algorithm stands for both variants. The result is in
    /// canonical order without duplicates.
    pub fn parse_list(s: &str) -> Result<Vec<PolicyKind>> {
        let mut kinds = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if item == "all" {
                kinds.extend(PolicyKind::all());
            } else if let Some((alg, variant)) = item.split_once(':') {
                kinds.push(PolicyKind::new(alg.parse()?, variant.parse()?));
            } else {
                let alg = item.parse()?;
                kinds.push(PolicyKind::new(alg, Variant::Standard));
                kinds.push(PolicyKind::new(alg, Variant::Aware));
            }
        }
        if kinds.is_empty() {
            return Err(Error::InvalidParameter("empty policy list".into()));
        }
        kinds.sort_by_key(|k| k.index());
        kinds.dedup();
        Ok(kinds)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.algorithm.name(), self.variant.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (alg, variant) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("expected algorithm:variant, got {s:?}")))?;
        Ok(PolicyKind::new(alg.parse()?, variant.parse()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyParams {
    /// Exploration probability of ε-greedy.
    pub epsilon: f64,
    /// Multiplier on the UCB1 and Beta-UCB exploration terms.
    pub ucb_c: f64,
    pub prior: Prior,
    /// Depth bound for the aware ε-greedy recursion; `None` is exact.
    pub eps_lookahead: Option<usize>,
    /// Depth bound for every aware recursion; `None` means the agent count.
    pub max_depth: Option<usize>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            ucb_c: 1.0,
            prior: Prior::default(),
            eps_lookahead: Some(DEFAULT_EPS_LOOKAHEAD),
            max_depth: None,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if !(self.ucb_c > 0.0 && self.ucb_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "UCB constant {} must be positive",
                self.ucb_c
            )));
        }
        if self.prior.succ == 0 || self.prior.fail == 0 {
            return Err(Error::InvalidParameter(
                "prior pseudo-counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Thompson samples drawn during the current round, at most one per agent.
#[derive(Clone, Debug)]
pub struct SampleCache {
    values: Vec<f64>,
    filled: Vec<AgentId>,
}

impl SampleCache {
    pub fn new(agent_count: usize) -> Self {
        Self {
            values: vec![f64::NAN; agent_count],
            filled: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        for a in self.filled.drain(..) {
            self.values[a.0] = f64::NAN;
        }
    }

    pub fn get(&self, a: AgentId) -> Option<f64> {
        let v = self.values[a.0];
        (!v.is_nan()).then_some(v)
    }

    /// Stores a value for `a`. Returns `false` if `a` already had one, in
    /// which case the cache is left unchanged.
    pub fn insert(&mut self, a: AgentId, value: f64) -> bool {
        if self.get(a).is_some() {
            return false;
        }
        self.values[a.0] = value;
        self.filled.push(a);
        true
    }

    pub fn len(&self) -> usize {
        self.filled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    pub fn get_or_sample<R: Rng + ?Sized>(&mut self, a: AgentId, stats: AgentStats, rng: &mut R) -> f64 {
        if let Some(v) = self.get(a) {
            return v;
        }
        let v = beta_sample(stats, rng);
        self.insert(a, v);
        v
    }
}

/// Read-only inputs shared by every policy evaluation within a hop.
#[derive(Clone, Copy, Debug)]
pub struct PolicyContext<'a> {
    pub graph: &'a DelegationGraph,
    pub stats: &'a Stats,
    pub clock: GlobalClock,
    pub params: &'a PolicyParams,
}

impl PolicyContext<'_> {
    fn max_depth(&self) -> usize {
        self.params.max_depth.unwrap_or(self.graph.agent_count())
    }

    fn eps_depth(&self) -> usize {
        self.params
            .eps_lookahead
            .unwrap_or(usize::MAX)
            .min(self.max_depth())
    }
}

pub fn mean_value(s: AgentStats) -> f64 {
    s.mean()
}

/// `mean + C·sqrt(2 ln n / (succ + fail))`.
pub fn ucb1_value(s: AgentStats, n: u64, c: f64) -> f64 {
    let total = s.total() as f64;
    s.mean() + c * (2.0 * (n as f64).ln() / total).sqrt()
}

/// Mean plus `C` standard deviations of `Beta(succ, fail)`.
pub fn beta_ucb_value(s: AgentStats, c: f64) -> f64 {
    let (a, b) = (s.succ as f64, s.fail as f64);
    let total = a + b;
    let std = (a * b / (total * total * (total + 1.0))).sqrt();
    a / total + c * std
}

pub fn beta_sample<R: Rng + ?Sized>(s: AgentStats, rng: &mut R) -> f64 {
    Beta::new(s.succ as f64, s.fail as f64)
        .expect("positive pseudo-counts give a valid Beta")
        .sample(rng)
}

/// Aware ε-greedy utility of `a`, reached after the agents in `excluded`.
pub fn calc_eps_utility(ctx: &PolicyContext<'_>, a: AgentId, excluded: &AgentSet) -> f64 {
    debug_assert!(!excluded.contains(a));
    let mut eval = EpsEvaluator::new(ctx, excluded.clone());
    eval.utility(a, 0)
}

/// Aware UCB1 utility: the largest UCB1 bound over executors reachable from
/// `a` without passing through `excluded`.
pub fn calc_ucb_utility(ctx: &PolicyContext<'_>, a: AgentId, excluded: &AgentSet) -> f64 {
    let (n, c) = (ctx.clock.effective(), ctx.params.ucb_c);
    max_utilities(ctx, &[a], excluded, |b| ucb1_value(ctx.stats.get(b), n, c))[0]
}

/// Aware Beta-UCB utility, propagated by max like [`calc_ucb_utility`].
pub fn calc_beta_ucb_utility(ctx: &PolicyContext<'_>, a: AgentId, excluded: &AgentSet) -> f64 {
    let c = ctx.params.ucb_c;
    max_utilities(ctx, &[a], excluded, |b| beta_ucb_value(ctx.stats.get(b), c))[0]
}

/// Aware Thompson utility. Each executor is sampled at most once per round
/// through `cache`, so two paths reaching it see the same value.
pub fn calc_ts_utility<R: Rng + ?Sized>(
    ctx: &PolicyContext<'_>,
    a: AgentId,
    excluded: &AgentSet,
    cache: &mut SampleCache,
    rng: &mut R,
) -> f64 {
    max_utilities(ctx, &[a], excluded, |b| {
        cache.get_or_sample(b, ctx.stats.get(b), rng)
    })[0]
}

/// Picks the agent the last member of `chain` delegates to.
pub fn choose_next<R: Rng + ?Sized>(
    ctx: &PolicyContext<'_>,
    kind: PolicyKind,
    chain: &Chain,
    cache: &mut SampleCache,
    rng: &mut R,
) -> Result<AgentId> {
    let current = chain.last();
    let candidates = ctx.graph.possible_delegations(current, chain);
    if candidates.is_empty() {
        return Err(Error::ContractViolation(format!(
            "agent {current} has no possible delegations"
        )));
    }
    let stats = ctx.stats;
    let excluded = chain.members();
    let n = ctx.clock.effective();
    let c = ctx.params.ucb_c;

    let values: Vec<f64> = match (kind.algorithm, kind.variant) {
        (Algorithm::EpsGreedy, variant) => {
            if rng.random::<f64>() < ctx.params.epsilon {
                return Ok(candidates[rng.random_range(0..candidates.len())]);
            }
            match variant {
                Variant::Standard => candidates.iter().map(|&b| mean_value(stats.get(b))).collect(),
                Variant::Aware => {
                    let mut eval = EpsEvaluator::new(ctx, excluded.clone());
                    candidates.iter().map(|&b| eval.utility(b, 0)).collect()
                }
            }
        }
        (Algorithm::Ucb1, Variant::Standard) => candidates
            .iter()
            .map(|&b| ucb1_value(stats.get(b), n, c))
            .collect(),
        (Algorithm::Ucb1, Variant::Aware) => {
            max_utilities(ctx, &candidates, excluded, |b| ucb1_value(stats.get(b), n, c))
        }
        (Algorithm::BetaUcb, Variant::Standard) => candidates
            .iter()
            .map(|&b| beta_ucb_value(stats.get(b), c))
            .collect(),
        (Algorithm::BetaUcb, Variant::Aware) => {
            max_utilities(ctx, &candidates, excluded, |b| beta_ucb_value(stats.get(b), c))
        }
        (Algorithm::Thompson, Variant::Standard) => candidates
            .iter()
            .map(|&b| beta_sample(stats.get(b), rng))
            .collect(),
        (Algorithm::Thompson, Variant::Aware) => max_utilities(ctx, &candidates, excluded, |b| {
            cache.get_or_sample(b, stats.get(b), rng)
        }),
    };
    Ok(candidates[argmax_random_tie(&values, rng)])
}

/// Index of the largest value; ties are broken uniformly at random, and the
/// stream is only consumed when there is a tie.
pub fn argmax_random_tie<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    match ties.len() {
        0 => 0,
        1 => ties[0],
        k => ties[rng.random_range(0..k)],
    }
}

/// Max-propagated utility of each start agent. `leaf` scores a terminal
/// agent and is called at most once per agent, in ascending agent order on
/// the reachability path.
fn max_utilities(
    ctx: &PolicyContext<'_>,
    starts: &[AgentId],
    excluded: &AgentSet,
    mut leaf: impl FnMut(AgentId) -> f64,
) -> Vec<f64> {
    let g = ctx.graph;
    let depth = ctx.max_depth();
    let reachability_exact =
        g.is_leaf_closed() && depth >= g.agent_count() && excluded.iter().all(|a| !g.is_executor(a));
    if reachability_exact {
        return reachable_max(g, starts, excluded, leaf);
    }

    let mut scored: HashMap<AgentId, f64> = HashMap::new();
    let mut score = |a: AgentId| *scored.entry(a).or_insert_with(|| leaf(a));
    let mut dfs = MaxDfs {
        graph: g,
        limit: depth,
        excluded: excluded.clone(),
        memo: HashMap::new(),
    };
    starts.iter().map(|&s| dfs.utility(s, 0, &mut score)).collect()
}

/// Exact max propagation on leaf-closed graphs: the value of a start is the
/// best executor reachable from it in the graph with `excluded` removed.
fn reachable_max(
    g: &DelegationGraph,
    starts: &[AgentId],
    excluded: &AgentSet,
    mut leaf: impl FnMut(AgentId) -> f64,
) -> Vec<f64> {
    let n = g.agent_count();
    let mut reach = AgentSet::with_capacity(n);
    let mut stack: Vec<AgentId> = Vec::new();
    for &s in starts {
        if reach.insert(s) {
            stack.push(s);
        }
    }
    while let Some(a) = stack.pop() {
        for &c in g.children(a) {
            if !excluded.contains(c) && reach.insert(c) {
                stack.push(c);
            }
        }
    }

    let mut leaves: Vec<(AgentId, f64)> = reach
        .iter()
        .filter(|&a| g.is_executor(a))
        .map(|a| (a, leaf(a)))
        .collect();
    leaves.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    // Reverse search from executors in decreasing value: the first executor
    // to reach an agent is its best one.
    let mut value = vec![f64::NAN; n];
    for (l, v) in leaves {
        if !value[l.0].is_nan() {
            continue;
        }
        value[l.0] = v;
        stack.push(l);
        while let Some(a) = stack.pop() {
            for &p in g.parents(a) {
                if reach.contains(p) && value[p.0].is_nan() {
                    value[p.0] = v;
                    stack.push(p);
                }
            }
        }
    }
    starts.iter().map(|s| value[s.0]).collect()
}

/// Depth-first max propagation memoised on (agent, agents already on the path).
struct MaxDfs<'g> {
    graph: &'g DelegationGraph,
    limit: usize,
    excluded: AgentSet,
    memo: HashMap<(AgentId, AgentSet), f64>,
}

impl MaxDfs<'_> {
    fn utility(&mut self, a: AgentId, depth: usize, score: &mut impl FnMut(AgentId) -> f64) -> f64 {
        let children = self.graph.candidates_excluding(a, &self.excluded);
        if children.is_empty() || depth >= self.limit {
            return score(a);
        }
        let key = (a, self.excluded.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        self.excluded.insert(a);
        let best = children
            .into_iter()
            .map(|c| self.utility(c, depth + 1, score))
            .fold(f64::NEG_INFINITY, f64::max);
        self.excluded.remove(a);
        self.memo.insert(key, best);
        best
    }
}

struct EpsEvaluator<'a> {
    ctx: &'a PolicyContext<'a>,
    limit: usize,
    excluded: AgentSet,
    memo: HashMap<(AgentId, AgentSet), f64>,
}

impl<'a> EpsEvaluator<'a> {
    fn new(ctx: &'a PolicyContext<'a>, excluded: AgentSet) -> Self {
        Self {
            ctx,
            limit: ctx.eps_depth(),
            excluded,
            memo: HashMap::new(),
        }
    }

    fn utility(&mut self, a: AgentId, depth: usize) -> f64 {
        let children = self.ctx.graph.candidates_excluding(a, &self.excluded);
        if children.is_empty() || depth >= self.limit {
            return mean_value(self.ctx.stats.get(a));
        }
        let key = (a, self.excluded.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let eps = self.ctx.params.epsilon;
        let share = eps / children.len() as f64;
        self.excluded.insert(a);
        let mut util = 0.0;
        let mut best = 0.0_f64;
        for c in children {
            let uc = self.utility(c, depth + 1);
            best = best.max(uc);
            util += share * uc;
        }
        self.excluded.remove(a);
        let v = util + (1.0 - eps) * best;
        self.memo.insert(key, v);
        v
    }
}
