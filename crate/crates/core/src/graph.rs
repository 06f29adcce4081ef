//! Delegation graphs: agents, edges, chains and random topology generators.
//!
//! A delegation graph is a directed graph in which an edge `u -> v` means
//! that `u` may hand a task on to `v`. Only agents without outgoing edges
//! (executors) perform tasks. Agents that both delegate and execute are
//! modelled by adding a *virtual executor*: a fresh leaf child standing for
//! the agent's own execution action (see [`DelegationGraph::with_virtual_executors`]).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Number of regeneration attempts before a topology is declared infeasible.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Dense agent index, stable for the life of a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

impl AgentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed-capacity bit set over agent indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AgentSet {
    words: Vec<u64>,
}

impl AgentSet {
    pub fn with_capacity(agents: usize) -> Self {
        Self {
            words: vec![0; agents.div_ceil(64)],
        }
    }

    #[inline]
    pub fn contains(&self, a: AgentId) -> bool {
        self.words
            .get(a.0 / 64)
            .is_some_and(|w| w & (1 << (a.0 % 64)) != 0)
    }

    /// Returns `true` if the agent was not already present.
    #[inline]
    pub fn insert(&mut self, a: AgentId) -> bool {
        let word = a.0 / 64;
        if word >= self.words.len() {
            self.words.resize(word + 1, 0);
        }
        let bit = 1 << (a.0 % 64);
        let fresh = self.words[word] & bit == 0;
        self.words[word] |= bit;
        fresh
    }

    #[inline]
    pub fn remove(&mut self, a: AgentId) {
        if let Some(w) = self.words.get_mut(a.0 / 64) {
            *w &= !(1 << (a.0 % 64));
        }
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(AgentId(i * 64 + bit))
            })
        })
    }
}

impl FromIterator<AgentId> for AgentSet {
    fn from_iter<T: IntoIterator<Item = AgentId>>(iter: T) -> Self {
        let mut set = AgentSet::default();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

/// The sequence of agents a task has passed through, starting at the root.
///
/// Pushing an agent that is already present is rejected, so a chain never
/// contains a repeated agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    agents: Vec<AgentId>,
    members: AgentSet,
}

impl Chain {
    pub fn new(root: AgentId) -> Self {
        let mut members = AgentSet::default();
        members.insert(root);
        Self {
            agents: vec![root],
            members,
        }
    }

    /// Builds a chain from a sequence, rejecting repeats and empty input.
    pub fn from_agents(agents: &[AgentId]) -> Result<Self> {
        let (&first, rest) = agents
            .split_first()
            .ok_or_else(|| Error::ContractViolation("a chain needs at least one agent".into()))?;
        let mut chain = Chain::new(first);
        for &a in rest {
            if !chain.push(a) {
                return Err(Error::ContractViolation(format!(
                    "agent {a} appears twice in chain"
                )));
            }
        }
        Ok(chain)
    }

    /// Appends `a`; returns `false` (leaving the chain untouched) if `a` is
    /// already in the chain.
    pub fn push(&mut self, a: AgentId) -> bool {
        if !self.members.insert(a) {
            return false;
        }
        self.agents.push(a);
        true
    }

    pub fn last(&self) -> AgentId {
        *self.agents.last().expect("chain is never empty")
    }

    pub fn root(&self) -> AgentId {
        self.agents[0]
    }

    pub fn contains(&self, a: AgentId) -> bool {
        self.members.contains(a)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn members(&self) -> &AgentSet {
        &self.members
    }

    /// Every consecutive pair is an edge of `g` and the chain starts at its root.
    pub fn is_valid_in(&self, g: &DelegationGraph) -> bool {
        self.root() == g.root()
            && self.agents.iter().all(|a| a.0 < g.agent_count())
            && self.agents.windows(2).all(|w| g.has_edge(w[0], w[1]))
    }
}

/// Directed delegation graph with a designated root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelegationGraph {
    out: Vec<Vec<AgentId>>,
    inc: Vec<Vec<AgentId>>,
    root: AgentId,
    virtual_flags: Vec<bool>,
    leaf_closed: bool,
}

impl DelegationGraph {
    /// Builds a graph from an edge list. Duplicate edges are collapsed;
    /// self-edges and out-of-range endpoints are rejected.
    pub fn new(
        agent_count: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
        root: AgentId,
    ) -> Result<Self> {
        Self::with_flags(agent_count, edges, root, vec![false; agent_count])
    }

    fn with_flags(
        agent_count: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
        root: AgentId,
        virtual_flags: Vec<bool>,
    ) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidParameter("a graph needs at least one agent".into()));
        }
        if root.0 >= agent_count {
            return Err(Error::InvalidParameter(format!(
                "root {root} out of range for {agent_count} agents"
            )));
        }
        let mut out = vec![Vec::new(); agent_count];
        for (u, v) in edges {
            if u.0 >= agent_count || v.0 >= agent_count {
                return Err(Error::InvalidParameter(format!(
                    "edge {u}->{v} out of range for {agent_count} agents"
                )));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-edge on agent {u}")));
            }
            out[u.0].push(v);
        }
        let mut inc = vec![Vec::new(); agent_count];
        for (u, children) in out.iter_mut().enumerate() {
            children.sort_unstable();
            children.dedup();
            for &v in children.iter() {
                inc[v.0].push(AgentId(u));
            }
        }
        for (a, &flag) in virtual_flags.iter().enumerate() {
            if flag && !out[a].is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "virtual agent {a} must not delegate"
                )));
            }
        }
        let leaf_closed = out
            .iter()
            .all(|children| children.is_empty() || children.iter().any(|c| out[c.0].is_empty()));
        Ok(Self {
            out,
            inc,
            root,
            virtual_flags,
            leaf_closed,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.out.len()
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agent_count()).map(AgentId)
    }

    /// Out-neighbours in ascending order.
    pub fn children(&self, a: AgentId) -> &[AgentId] {
        &self.out[a.0]
    }

    /// In-neighbours in ascending order.
    pub fn parents(&self, a: AgentId) -> &[AgentId] {
        &self.inc[a.0]
    }

    pub fn out_degree(&self, a: AgentId) -> usize {
        self.out[a.0].len()
    }

    pub fn is_executor(&self, a: AgentId) -> bool {
        self.out[a.0].is_empty()
    }

    pub fn is_virtual(&self, a: AgentId) -> bool {
        self.virtual_flags[a.0]
    }

    pub fn has_edge(&self, u: AgentId, v: AgentId) -> bool {
        self.out[u.0].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, cs)| cs.iter().map(move |&v| (AgentId(u), v)))
    }

    /// `true` when every delegating agent has at least one executor child.
    ///
    /// On such graphs a delegation walk can never dead-end, and a node's
    /// best reachable executor does not depend on the path taken to it.
    pub fn is_leaf_closed(&self) -> bool {
        self.leaf_closed
    }

    /// Out-neighbours of `a` that are not in `chain`.
    pub fn possible_delegations(&self, a: AgentId, chain: &Chain) -> Vec<AgentId> {
        self.candidates_excluding(a, chain.members())
    }

    pub fn candidates_excluding(&self, a: AgentId, excluded: &AgentSet) -> Vec<AgentId> {
        self.out[a.0]
            .iter()
            .copied()
            .filter(|c| !excluded.contains(*c))
            .collect()
    }

    /// Agents reachable from the root (the root included).
    pub fn reachable_from_root(&self) -> AgentSet {
        let mut seen = AgentSet::with_capacity(self.agent_count());
        let mut queue = VecDeque::from([self.root]);
        seen.insert(self.root);
        while let Some(a) = queue.pop_front() {
            for &c in &self.out[a.0] {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        seen
    }

    /// Executors reachable from the root, ascending.
    pub fn reachable_executors(&self) -> Vec<AgentId> {
        self.reachable_from_root()
            .iter()
            .filter(|&a| self.is_executor(a))
            .collect()
    }

    pub fn root_reaches_executor(&self) -> bool {
        !self.reachable_executors().is_empty()
    }

    /// Adds one virtual executor child to every agent with out-degree at
    /// least one. Virtual agents are numbered after the existing agents in
    /// ascending order of their owner.
    pub fn with_virtual_executors(&self) -> DelegationGraph {
        let n = self.agent_count();
        let owners: Vec<AgentId> = self.agents().filter(|&a| !self.is_executor(a)).collect();
        let total = n + owners.len();
        let mut flags = self.virtual_flags.clone();
        flags.resize(total, true);
        let extra = owners
            .iter()
            .enumerate()
            .map(|(i, &owner)| (owner, AgentId(n + i)));
        Self::with_flags(total, self.edges().chain(extra), self.root, flags)
            .expect("virtual executor transform preserves graph validity")
    }

    /// Stable 64-bit FNV-1a digest of the text encoding.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        self.to_string()
            .bytes()
            .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
    }
}

/// Adjacency-list text form:
///
/// ```text
/// root: 0
/// virtual: 3,4
/// 0: 1,2,3
/// 1: 4
/// 2:
/// ```
impl fmt::Display for DelegationGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "root: {}", self.root)?;
        let virtuals: Vec<String> = self
            .agents()
            .filter(|&a| self.is_virtual(a))
            .map(|a| a.to_string())
            .collect();
        if virtuals.is_empty() {
            writeln!(f, "virtual:")?;
        } else {
            writeln!(f, "virtual: {}", virtuals.join(","))?;
        }
        for (a, children) in self.out.iter().enumerate() {
            if children.is_empty() {
                writeln!(f, "{a}:")?;
            } else {
                let list: Vec<String> = children.iter().map(|c| c.to_string()).collect();
                writeln!(f, "{a}: {}", list.join(","))?;
            }
        }
        Ok(())
    }
}

impl FromStr for DelegationGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        fn ids(line: usize, list: &str) -> Result<Vec<AgentId>> {
            list.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse().map(AgentId).map_err(|_| Error::Parse {
                        line,
                        message: format!("bad agent id {t:?}"),
                    })
                })
                .collect()
        }

        let mut root = None;
        let mut virtuals = Vec::new();
        let mut rows: Vec<(usize, Vec<AgentId>)> = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text.split_once(':').ok_or_else(|| Error::Parse {
                line,
                message: "expected `key: value`".into(),
            })?;
            match key.trim() {
                "root" => {
                    let parsed = ids(line, value)?;
                    if parsed.len() != 1 {
                        return Err(Error::Parse {
                            line,
                            message: "root line needs exactly one id".into(),
                        });
                    }
                    root = Some(parsed[0]);
                }
                "virtual" => virtuals = ids(line, value)?,
                id => {
                    let agent: usize = id.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("unknown key {id:?}"),
                    })?;
                    if agent != rows.len() {
                        return Err(Error::Parse {
                            line,
                            message: format!("expected agent {} but found {agent}", rows.len()),
                        });
                    }
                    rows.push((agent, ids(line, value)?));
                }
            }
        }
        let root = root.ok_or(Error::Parse {
            line: 0,
            message: "missing `root:` header".into(),
        })?;
        let n = rows.len();
        let mut flags = vec![false; n];
        for v in virtuals {
            *flags.get_mut(v.0).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("virtual agent {v} out of range"),
            })? = true;
        }
        let edges = rows
            .into_iter()
            .flat_map(|(u, cs)| cs.into_iter().map(move |v| (AgentId(u), v)));
        DelegationGraph::with_flags(n, edges, root, flags)
    }
}

/// Growth-process probabilities of the directed scale-free generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleFreeParams {
    /// New node pointing at an existing node chosen by in-degree.
    pub alpha: f64,
    /// Edge between existing nodes (source by out-degree, target by in-degree).
    pub beta: f64,
    /// Existing node, chosen by out-degree, pointing at a new node.
    pub gamma: f64,
    pub delta_in: f64,
    pub delta_out: f64,
}

impl Default for ScaleFreeParams {
    fn default() -> Self {
        Self {
            alpha: 0.41,
            beta: 0.54,
            gamma: 0.05,
            delta_in: 0.2,
            delta_out: 0.0,
        }
    }
}

/// Random topology family used by experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Topology {
    Binomial { edge_prob: f64 },
    ScaleFree(ScaleFreeParams),
}

impl Topology {
    /// Draws a graph, optionally adds virtual executors, and redraws until
    /// the root of the final graph reaches an executor.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        agents: usize,
        rng: &mut R,
        virtual_executors: bool,
    ) -> Result<DelegationGraph> {
        let finish = |g: DelegationGraph| {
            if virtual_executors {
                g.with_virtual_executors()
            } else {
                g
            }
        };
        match *self {
            Topology::Binomial { edge_prob } => generate_until(rng, |rng| {
                let g = finish(binomial_once(agents, edge_prob, rng)?);
                Ok(g.root_reaches_executor().then_some(g))
            }),
            Topology::ScaleFree(params) => generate_until(rng, |rng| {
                let g = finish(scale_free_once(agents, &params, rng)?);
                Ok(g.root_reaches_executor().then_some(g))
            }),
        }
    }
}

fn generate_until<R: Rng + ?Sized>(
    rng: &mut R,
    mut attempt: impl FnMut(&mut R) -> Result<Option<DelegationGraph>>,
) -> Result<DelegationGraph> {
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        if let Some(g) = attempt(rng)? {
            return Ok(g);
        }
    }
    Err(Error::TopologyInfeasible {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

/// Directed G(n, p) graph rooted at agent 0, redrawn until the root reaches
/// an executor.
pub fn generate_binomial<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<DelegationGraph> {
    generate_binomial_with(n, p, rng, DelegationGraph::root_reaches_executor)
}

/// As [`generate_binomial`] with a caller-supplied acceptance test.
pub fn generate_binomial_with<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    accept: impl Fn(&DelegationGraph) -> bool,
) -> Result<DelegationGraph> {
    generate_until(rng, |rng| {
        let g = binomial_once(n, p, rng)?;
        Ok(accept(&g).then_some(g))
    })
}

fn binomial_once<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<DelegationGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "binomial graph needs n >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random::<f64>() < p {
                edges.push((AgentId(u), AgentId(v)));
            }
        }
    }
    DelegationGraph::new(n, edges, AgentId(0))
}

/// Directed scale-free graph grown by preferential attachment from a
/// three-agent cycle, rooted at agent 0 and redrawn until the root reaches
/// an executor. Parallel edges are collapsed and self-loops dropped.
pub fn generate_scale_free<R: Rng + ?Sized>(
    n: usize,
    params: &ScaleFreeParams,
    rng: &mut R,
) -> Result<DelegationGraph> {
    generate_scale_free_with(n, params, rng, DelegationGraph::root_reaches_executor)
}

pub fn generate_scale_free_with<R: Rng + ?Sized>(
    n: usize,
    params: &ScaleFreeParams,
    rng: &mut R,
    accept: impl Fn(&DelegationGraph) -> bool,
) -> Result<DelegationGraph> {
    generate_until(rng, |rng| {
        let g = scale_free_once(n, params, rng)?;
        Ok(accept(&g).then_some(g))
    })
}

fn scale_free_once<R: Rng + ?Sized>(
    n: usize,
    params: &ScaleFreeParams,
    rng: &mut R,
) -> Result<DelegationGraph> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "scale-free graph needs n >= 3, got {n}"
        )));
    }
    let ScaleFreeParams {
        alpha,
        beta,
        gamma,
        delta_in,
        delta_out,
    } = *params;
    if alpha < 0.0 || beta < 0.0 || gamma < 0.0 || ((alpha + beta + gamma) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "scale-free probabilities must be non-negative and sum to 1".into(),
        ));
    }
    if delta_in < 0.0 || delta_out < 0.0 {
        return Err(Error::InvalidParameter(
            "scale-free deltas must be non-negative".into(),
        ));
    }

    // Endpoint multisets: each edge contributes its source to `sources` and
    // its target to `targets`, so uniform picks are degree-proportional.
    let mut edges: Vec<(usize, usize)> = vec![(0, 1), (1, 2), (2, 0)];
    let mut sources: Vec<usize> = vec![0, 1, 2];
    let mut targets: Vec<usize> = vec![1, 2, 0];
    let mut nodes = 3;

    let choose = |pool: &[usize], nodes: usize, delta: f64, rng: &mut R| -> usize {
        if delta > 0.0 {
            let bias = nodes as f64 * delta;
            if rng.random::<f64>() < bias / (bias + pool.len() as f64) {
                return rng.random_range(0..nodes);
            }
        }
        pool[rng.random_range(0..pool.len())]
    };

    while nodes < n {
        let r: f64 = rng.random();
        let (v, w) = if r < alpha {
            let v = nodes;
            nodes += 1;
            (v, choose(&targets, nodes, delta_in, rng))
        } else if r < alpha + beta {
            let v = choose(&sources, nodes, delta_out, rng);
            (v, choose(&targets, nodes, delta_in, rng))
        } else {
            let v = choose(&sources, nodes, delta_out, rng);
            let w = nodes;
            nodes += 1;
            (v, w)
        };
        edges.push((v, w));
        sources.push(v);
        targets.push(w);
    }

    let edges = edges
        .into_iter()
        .filter(|(u, v)| u != v)
        .map(|(u, v)| (AgentId(u), AgentId(v)));
    DelegationGraph::new(n, edges, AgentId(0))
}
