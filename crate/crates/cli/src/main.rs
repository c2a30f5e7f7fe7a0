use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use oodil::cluster::ClusterAssignment;
use oodil_cli::commands::{self, SweepAxis};
use oodil_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "oodil", version, about = "Out-of-dynamics imitation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value: `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations, one file per source.
    GenDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train the contrastive trajectory clustering and label the demonstrations.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Model checkpoint and labels file.
        #[arg(long, num_args = 2, value_names = ["MODEL", "LABELS"])]
        out: Vec<PathBuf>,
    },
    /// Train per-cluster discriminators and score every transition.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        labels: PathBuf,
        /// Imitator environment (JSON); the config's target when omitted.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["TMODEL", "WEIGHTS"])]
        out: Vec<PathBuf>,
    },
    /// Train the final policy on weighted (or uniform) demonstrations.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate a policy checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score new demonstrations with frozen models.
    ScoreNew {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tmodel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw demonstrations colored by transferability.
    Viz {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the pipeline over values of K or lambda.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Seeds; the config seed when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Demonstrations, clustering, transferability, imitation and evaluation.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDemos { common, out_dir } => {
            let cfg = common.resolve()?;
            let dir = out_dir.unwrap_or_else(|| cfg.out_dir.join("demos"));
            for p in commands::gen_demos(&cfg, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Cluster { common, demos, k, out } => {
            let mut cfg = common.resolve()?;
            if let Some(k) = k {
                cfg.cluster.k = k;
                cfg.cluster.validate()?;
            }
            let (model_out, labels_out) = pair(out, &cfg, "model.json", "labels.json");
            let corpus = commands::load_demos(&demos)?;
            let (_, labels) = commands::cluster(&cfg, &corpus, &model_out, &labels_out)?;
            println!("cluster sizes {:?}", labels.sizes());
        }
        Command::Transfer { common, demos, labels, env, out } => {
            let cfg = common.resolve()?;
            let corpus = commands::load_demos(&demos)?;
            let labels = ClusterAssignment::load(&labels).with_context(|| format!("loading {}", labels.display()))?;
            let target = commands::load_env(env.as_deref(), &cfg)?;
            let (tmodel, weights) = pair(out, &cfg, "tmodel.json", "weights.csv");
            commands::transfer(&cfg, &corpus, &labels, &target, &tmodel, &weights)?;
        }
        Command::Train { common, demos, weights, env, out, curve } => {
            let cfg = common.resolve()?;
            let corpus = commands::load_demos(&demos)?;
            let w = weights.as_deref().map(commands::load_weights).transpose()?;
            let target = commands::load_env(env.as_deref(), &cfg)?;
            let curve = curve.unwrap_or_else(|| out.with_extension("curve.csv"));
            let (_, points) = commands::train(&cfg, &corpus, w.as_deref(), &target, &out, &curve)?;
            if let Some(last) = points.last() {
                println!("final mean return {:.1}, goal rate {:.2}", last.mean_return, last.goal_rate);
            }
        }
        Command::Eval { common, policy, env, episodes, out } => {
            let cfg = common.resolve()?;
            let target = commands::load_env(env.as_deref(), &cfg)?;
            let policy = commands::load_policy(&policy)?;
            let stats = commands::eval(&cfg, &policy, &target, episodes.unwrap_or(cfg.imitate.eval_episodes), &out)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::ScoreNew { common, demos, model, tmodel, out } => {
            let cfg = common.resolve()?;
            let corpus = commands::load_demos(&demos)?;
            let w = commands::score_new_cmd(&model, &tmodel, &corpus, cfg.seed, &out)?;
            println!("scored {} transitions", w.len());
        }
        Command::Viz { common, demos, weights, env, out } => {
            let cfg = common.resolve()?;
            let corpus = commands::load_demos(&demos)?;
            let w = commands::load_weights(&weights)?;
            let target = commands::load_env(env.as_deref(), &cfg)?;
            commands::viz_cmd(&corpus, &w, &target, &out)?;
        }
        Command::Sweep { common, axis, values, seeds } => {
            let cfg = common.resolve()?;
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            let rows = commands::sweep(&cfg, axis, &values, &seeds)?;
            println!("{} sweep runs written to {}", rows.len(), cfg.out_dir.display());
        }
        Command::Pipeline { common } => {
            let cfg = common.resolve()?;
            let run = commands::pipeline(&cfg)?;
            println!(
                "{}: mean return {:.1} ± {:.1}, goal rate {:.2}",
                run.variant, run.final_eval.mean_return, run.final_eval.std_return, run.final_eval.goal_rate
            );
        }
    }
    Ok(())
}

fn pair(out: Vec<PathBuf>, cfg: &RunConfig, a: &str, b: &str) -> (PathBuf, PathBuf) {
    match <[PathBuf; 2]>::try_from(out) {
        Ok([x, y]) => (x, y),
        Err(_) => (cfg.out_dir.join(a), cfg.out_dir.join(b)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
