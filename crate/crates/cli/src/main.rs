//! `recdel`: run delegation bandit experiments and write regret curves.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, ValueEnum};
use recdel_core::experiments::run_experiment_with_jobs;
use recdel_core::{write_csv, ExperimentConfig, PolicyKind, Preset, ScaleFreeParams, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Binomial,
    Scalefree,
}

/// Simulate recursive task delegation with standard and delegation-aware
/// bandit policies and report mean cumulative regret.
///
/// Without `--preset` the defaults are a binomial graph (p = 0.3) of 20
/// agents, 5000 iterations, 100 runs. Any flag overrides the corresponding
/// preset field.
#[derive(Debug, Parser)]
#[command(name = "recdel", version)]
struct Cli {
    /// Start from a named experiment (fig2 .. fig7).
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,

    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,

    /// Edge probability of the binomial topology.
    #[arg(long)]
    edge_prob: Option<f64>,

    #[arg(long)]
    agents: Option<usize>,

    /// Rounds per run.
    #[arg(long)]
    iterations: Option<usize>,

    /// Independent runs averaged per policy.
    #[arg(long)]
    runs: Option<usize>,

    /// Master seed all run seeds derive from.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    epsilon: Option<f64>,

    /// Exploration constant of UCB1 and Beta-UCB.
    #[arg(long)]
    ucb_c: Option<f64>,

    /// `all`, or a comma list of `algorithm` or `algorithm:variant`, e.g.
    /// `thompson,ucb1:aware`. Algorithms: eps_greedy, ucb1, beta_ucb,
    /// thompson. Variants: standard, aware.
    #[arg(long, value_parser = parse_policies)]
    policies: Option<PolicyList>,

    /// Give every delegator an extra executor child.
    #[arg(long, action = clap::ArgAction::Set)]
    virtual_executors: Option<bool>,

    /// Depth of the aware ε-greedy recursion, or `exact`.
    #[arg(long, value_parser = parse_lookahead)]
    eps_lookahead: Option<Lookahead>,

    /// Worker threads; output does not depend on it.
    #[arg(long)]
    jobs: Option<usize>,

    /// CSV output path. Run metadata goes to `<out>.meta`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct Lookahead(Option<usize>);

#[derive(Clone, Debug)]
struct PolicyList(Vec<PolicyKind>);

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: recdel_core::Error| e.to_string())
}

fn parse_policies(s: &str) -> Result<PolicyList, String> {
    PolicyKind::parse_list(s)
        .map(PolicyList)
        .map_err(|e| e.to_string())
}

fn parse_lookahead(s: &str) -> Result<Lookahead, String> {
    if s == "exact" {
        return Ok(Lookahead(None));
    }
    s.parse()
        .map(|d| Lookahead(Some(d)))
        .map_err(|_| format!("expected a depth or `exact`, got {s:?}"))
}

impl Cli {
    fn config(&self) -> ExperimentConfig {
        let mut cfg = self.preset.map_or_else(ExperimentConfig::default, Preset::config);
        match self.topology {
            Some(TopologyArg::Binomial) if !matches!(cfg.topology, Topology::Binomial { .. }) => {
                cfg.topology = Topology::Binomial { edge_prob: 0.3 };
            }
            Some(TopologyArg::Scalefree) => cfg.topology = Topology::ScaleFree(ScaleFreeParams::default()),
            _ => {}
        }
        if let Some(p) = self.edge_prob {
            cfg.topology = Topology::Binomial { edge_prob: p };
        }
        if let Some(v) = self.agents {
            cfg.agents = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.epsilon {
            cfg.params.epsilon = v;
        }
        if let Some(v) = self.ucb_c {
            cfg.params.ucb_c = v;
        }
        if let Some(PolicyList(v)) = &self.policies {
            cfg.policies = v.clone();
        }
        if let Some(v) = self.virtual_executors {
            cfg.virtual_executors = v;
        }
        if let Some(Lookahead(v)) = self.eps_lookahead {
            cfg.params.eps_lookahead = v;
        }
        cfg
    }
}

fn usage_error(message: &str) -> ExitCode {
    let mut cmd = Cli::command();
    eprintln!(
        "error: {message}\n\n{}\n\nFor more information, try '--help'.",
        cmd.render_usage()
    );
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.edge_prob.is_some() && cli.topology == Some(TopologyArg::Scalefree) {
        return usage_error("--edge-prob only applies to the binomial topology");
    }
    let cfg = cli.config();
    if let Err(e) = cfg.validate() {
        return usage_error(&e.to_string());
    }
    let jobs = match cli.jobs {
        Some(0) => return usage_error("--jobs must be at least 1"),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    print!("{}", cfg.describe());
    println!();

    let agg = match run_experiment_with_jobs(&cfg, jobs) {
        Ok(agg) => agg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for s in &agg.series {
        let last = s.mean.len() - 1;
        println!(
            "{:<22} final mean cumulative regret {:>10.3} (stderr {:.3})",
            s.kind.to_string(),
            s.mean[last],
            s.stderr[last]
        );
    }
    if let Some(out) = &cli.out {
        if let Err(e) = write_csv(&agg, &cfg, out) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        println!("wrote {}", out.display());
    }
    ExitCode::SUCCESS
}
