//! Seeded experiment batches, aggregation and CSV output.
//!
//! A run index owns one graph and one ground truth, shared by every policy
//! in that run, so policy comparisons are paired on the environment. Each
//! policy then learns with its own random stream. All seeds derive from the
//! master seed and indices only, so results do not depend on the order in
//! which runs are scheduled.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::engine::{run_simulation, RunTrace};
use crate::error::{Error, Result};
use crate::graph::{ScaleFreeParams, Topology};
use crate::policies::{Algorithm, PolicyKind, PolicyParams, Variant};
use crate::world::sample_ground_truth;
use crate::SimRng;

/// Stream index reserved for graph and ground-truth generation. Policy `k`
/// uses stream `1 + k.index()`.
pub const ENVIRONMENT_STREAM: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub agents: usize,
    pub iterations: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicyKind>,
    pub params: PolicyParams,
    pub virtual_executors: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Binomial { edge_prob: 0.3 },
            agents: 20,
            iterations: 5000,
            runs: 100,
            master_seed: 0,
            policies: PolicyKind::all(),
            params: PolicyParams::default(),
            virtual_executors: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidParameter("no policies selected".into()));
        }
        let min_agents = match self.topology {
            Topology::Binomial { edge_prob } => {
                if !(0.0..=1.0).contains(&edge_prob) {
                    return Err(Error::InvalidParameter(format!(
                        "edge probability {edge_prob} outside [0, 1]"
                    )));
                }
                2
            }
            Topology::ScaleFree(_) => 3,
        };
        if self.agents < min_agents {
            return Err(Error::InvalidParameter(format!(
                "topology needs at least {min_agents} agents, got {}",
                self.agents
            )));
        }
        self.params.validate()
    }

    /// Provenance lines, `key=value`, in a fixed order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        match self.topology {
            Topology::Binomial { edge_prob } => {
                put("topology", "binomial".into());
                put("edge_prob", edge_prob.to_string());
            }
            Topology::ScaleFree(p) => {
                put("topology", "scalefree".into());
                put("scalefree_alpha", p.alpha.to_string());
                put("scalefree_beta", p.beta.to_string());
                put("scalefree_gamma", p.gamma.to_string());
                put("scalefree_delta_in", p.delta_in.to_string());
                put("scalefree_delta_out", p.delta_out.to_string());
            }
        }
        put("agents", self.agents.to_string());
        put("iterations", self.iterations.to_string());
        put("runs", self.runs.to_string());
        put("master_seed", self.master_seed.to_string());
        let names: Vec<String> = self.policies.iter().map(|k| k.to_string()).collect();
        put("policies", names.join(","));
        put("epsilon", self.params.epsilon.to_string());
        put("ucb_c", self.params.ucb_c.to_string());
        put("prior_succ", self.params.prior.succ.to_string());
        put("prior_fail", self.params.prior.fail.to_string());
        put(
            "eps_lookahead",
            self.params
                .eps_lookahead
                .map_or_else(|| "exact".to_string(), |d| d.to_string()),
        );
        put(
            "max_depth",
            self.params
                .max_depth
                .map_or_else(|| "agent_count".to_string(), |d| d.to_string()),
        );
        put("virtual_executors", self.virtual_executors.to_string());
        kv
    }

    pub fn describe(&self) -> String {
        self.key_values()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Named experiment grids. Each preset reproduces one evaluation setting:
///
/// | preset | topology        | agents | UCB C | policies |
/// |--------|-----------------|--------|-------|----------|
/// | fig2   | scale-free      | 20     | 3     | all 8    |
/// | fig3   | binomial p=0.3  | 20     | 3     | all 8    |
/// | fig4   | binomial p=0.3  | 20     | 1     | UCB only |
/// | fig5   | binomial p=0.3  | 10     | 3     | all 8    |
/// | fig6   | binomial p=0.3  | 50     | 3     | all 8    |
/// | fig7   | binomial p=0.6  | 20     | 3     | all 8    |
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6,
        Preset::Fig7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            params: PolicyParams {
                ucb_c: 3.0,
                ..PolicyParams::default()
            },
            ..ExperimentConfig::default()
        };
        match self {
            Preset::Fig2 => ExperimentConfig {
                topology: Topology::ScaleFree(ScaleFreeParams::default()),
                ..base
            },
            Preset::Fig3 => base,
            Preset::Fig4 => ExperimentConfig {
                params: PolicyParams {
                    ucb_c: 1.0,
                    ..base.params
                },
                policies: [Algorithm::Ucb1, Algorithm::BetaUcb]
                    .into_iter()
                    .flat_map(|a| [Variant::Standard, Variant::Aware].map(|v| PolicyKind::new(a, v)))
                    .collect(),
                ..base
            },
            Preset::Fig5 => ExperimentConfig { agents: 10, ..base },
            Preset::Fig6 => ExperimentConfig { agents: 50, ..base },
            Preset::Fig7 => ExperimentConfig {
                topology: Topology::Binomial { edge_prob: 0.6 },
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset {s:?}")))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one random stream of one run. Depends only on its inputs.
pub fn derive_run_seed(master_seed: u64, run_index: u64, stream_index: u64) -> u64 {
    let h = splitmix64(master_seed);
    let h = splitmix64(h ^ run_index);
    splitmix64(h ^ splitmix64(stream_index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Provenance of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_index: usize,
    pub environment_seed: u64,
    pub graph_fingerprint: u64,
    pub graph_agents: usize,
    pub optimum: f64,
    pub policy_seeds: Vec<(PolicyKind, u64)>,
}

/// Per-iteration statistics of one policy across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySeries {
    pub kind: PolicyKind,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Final cumulative regret of each run, in run order.
    pub finals: Vec<f64>,
}

impl PolicySeries {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSeries {
    pub runs: usize,
    pub iterations: usize,
    /// One entry per configured policy, in configuration order.
    pub series: Vec<PolicySeries>,
    pub records: Vec<RunRecord>,
}

impl AggregateSeries {
    pub fn get(&self, kind: PolicyKind) -> Option<&PolicySeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    /// Mean and standard error per iteration, aggregated in run-index order.
    pub fn from_traces(kinds: &[PolicyKind], traces: &[Vec<RunTrace>], records: Vec<RunRecord>) -> Self {
        let runs = traces.len();
        let iterations = traces.first().and_then(|t| t.first()).map_or(0, RunTrace::len);
        let series = kinds
            .iter()
            .enumerate()
            .map(|(p, &kind)| {
                let column = |i: usize| traces.iter().map(move |run| run[p].cumulative_regret[i]);
                let mut mean = Vec::with_capacity(iterations);
                let mut stderr = Vec::with_capacity(iterations);
                for i in 0..iterations {
                    let m = column(i).sum::<f64>() / runs as f64;
                    let se = if runs > 1 {
                        let ss: f64 = column(i).map(|x| (x - m) * (x - m)).sum();
                        (ss / (runs - 1) as f64).sqrt() / (runs as f64).sqrt()
                    } else {
                        0.0
                    };
                    mean.push(m);
                    stderr.push(se);
                }
                let finals = traces.iter().map(|run| run[p].final_regret()).collect();
                PolicySeries {
                    kind,
                    mean,
                    stderr,
                    finals,
                }
            })
            .collect();
        Self {
            runs,
            iterations,
            series,
            records,
        }
    }
}

fn run_one(cfg: &ExperimentConfig, run_index: usize) -> Result<(Vec<RunTrace>, RunRecord)> {
    let environment_seed = derive_run_seed(cfg.master_seed, run_index as u64, ENVIRONMENT_STREAM);
    let mut env = SimRng::seed_from_u64(environment_seed);
    let graph = cfg
        .topology
        .generate(cfg.agents, &mut env, cfg.virtual_executors)?;
    let truth = sample_ground_truth(&graph, &mut env);

    let mut traces = Vec::with_capacity(cfg.policies.len());
    let mut policy_seeds = Vec::with_capacity(cfg.policies.len());
    for &kind in &cfg.policies {
        let seed = derive_run_seed(cfg.master_seed, run_index as u64, 1 + kind.index() as u64);
        let mut rng = SimRng::seed_from_u64(seed);
        traces.push(run_simulation(
            &graph,
            &truth,
            kind,
            &cfg.params,
            cfg.iterations,
            &mut rng,
        )?);
        policy_seeds.push((kind, seed));
    }
    let record = RunRecord {
        run_index,
        environment_seed,
        graph_fingerprint: graph.fingerprint(),
        graph_agents: graph.agent_count(),
        optimum: crate::world::optimal_success_prob(&graph, &truth)?,
        policy_seeds,
    };
    Ok((traces, record))
}

/// Runs every configured policy on `runs` seeded environments, in parallel
/// on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateSeries> {
    cfg.validate()?;
    let results: Vec<(Vec<RunTrace>, RunRecord)> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_one(cfg, i))
        .collect::<Result<_>>()?;
    let (traces, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(AggregateSeries::from_traces(&cfg.policies, &traces, records))
}

/// [`run_experiment`] on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<AggregateSeries> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

pub const CSV_HEADER: [&str; 5] = ["algorithm", "variant", "iteration", "mean_cum_regret", "stderr"];

/// One data row of the results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub kind: PolicyKind,
    pub iteration: usize,
    pub mean_cum_regret: f64,
    pub stderr: f64,
}

/// Metadata file written next to a CSV: `out.csv` -> `out.csv.meta`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Writes the series as CSV, rows ordered by algorithm name, variant name,
/// then iteration (1-based), plus a `key=value` metadata file holding the
/// configuration and every seed.
pub fn write_csv(series: &AggregateSeries, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut ordered: Vec<&PolicySeries> = series.series.iter().collect();
    ordered.sort_by_key(|s| (s.kind.algorithm.name(), s.kind.variant.name()));

    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for s in ordered {
        for (i, (m, se)) in s.mean.iter().zip(&s.stderr).enumerate() {
            w.write_record([
                s.kind.algorithm.name(),
                s.kind.variant.name(),
                &(i + 1).to_string(),
                &m.to_string(),
                &se.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_metadata(series, cfg, &metadata_path(path))
}

fn write_metadata(series: &AggregateSeries, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(cfg.describe().as_bytes()).map_err(io_err)?;
    for r in &series.records {
        let i = r.run_index;
        writeln!(out, "run.{i}.environment_seed={}", r.environment_seed).map_err(io_err)?;
        writeln!(out, "run.{i}.graph_fingerprint={:016x}", r.graph_fingerprint).map_err(io_err)?;
        writeln!(out, "run.{i}.graph_agents={}", r.graph_agents).map_err(io_err)?;
        writeln!(out, "run.{i}.optimum={}", r.optimum).map_err(io_err)?;
        for (kind, seed) in &r.policy_seeds {
            writeln!(out, "run.{i}.seed.{kind}={seed}").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let field = |k: usize| {
            record
                .get(k)
                .ok_or_else(|| parse_err(line, "missing field".into()))
        };
        let kind = PolicyKind::new(field(0)?.parse()?, field(1)?.parse()?);
        let num = |k: usize| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| parse_err(line, format!("bad number in column {k}")))
        };
        rows.push(CsvRow {
            kind,
            iteration: field(2)?
                .parse()
                .map_err(|_| parse_err(line, "bad iteration".into()))?,
            mean_cum_regret: num(3)?,
            stderr: num(4)?,
        });
    }
    Ok(rows)
}
