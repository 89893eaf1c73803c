//! Command-line surface: training, evaluation, sweeps, memory inspection
//! and editing, and rule export.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{ArgGroup, Parser, Subcommand};

use qsagent_core::qs::{HubConfig, MemoryEdit, TransitionVec};
use qsagent_harness::checkpoint::Checkpoint;
use qsagent_harness::config::TrainConfig;
use qsagent_harness::eval::{evaluate, AgentKind, EvalOptions};
use qsagent_harness::rules::export_rules;
use qsagent_harness::sweep::{sweep, SweepParam};
use qsagent_harness::train::train_to_dir;

#[derive(Parser)]
#[command(
    name = "qsagent",
    about = "Actor-critic lander training with a quasi-symbolic transition-memory agent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train RL agent, dynamics model, and transition memory.
    Train {
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and training.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a frozen checkpoint on seeded environments.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of environments.
        #[arg(long, default_value_t = 100)]
        envs: u64,
        /// Number of independent agents per kind.
        #[arg(long, default_value_t = 10)]
        agents: u64,
        /// Environment i is seeded with env-seed-base + i.
        #[arg(long, default_value_t = 0)]
        env_seed_base: u64,
        #[arg(long, default_value_t = 0)]
        agent_seed_base: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one checkpoint across a parameter range.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One of: l_max, alpha, theta_match.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 1,5,10.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 100)]
        envs: u64,
        #[arg(long, default_value_t = 10)]
        agents: u64,
        #[arg(long, default_value_t = 0)]
        env_seed_base: u64,
        #[arg(long, default_value_t = 0)]
        agent_seed_base: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a memory and hub summary of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Apply one manual memory edit and write a new checkpoint.
    #[command(group(
        ArgGroup::new("edit_op")
            .required(true)
            .args(["remove_node", "add_node", "set_value"]),
    ))]
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Delete node i.
        #[arg(long)]
        remove_node: Option<usize>,
        /// Append a node: "d1,d2,d3,d4,d5,d6,d7,d8:value".
        #[arg(long)]
        add_node: Option<String>,
        /// Replace a node's value: "i:value".
        #[arg(long)]
        set_value: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the memory as a human-readable rule table.
    ExportRules {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_add_node(spec: &str) -> anyhow::Result<MemoryEdit> {
    let (deltas, value) = spec
        .rsplit_once(':')
        .context("expected \"d1,...,d8:value\"")?;
    let components: Vec<f64> = deltas
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("bad delta component"))
        .collect::<anyhow::Result<_>>()?;
    if components.len() != 8 {
        bail!("expected 8 delta components, got {}", components.len());
    }
    let mut raw = [0.0; 8];
    raw.copy_from_slice(&components);
    Ok(MemoryEdit::Add {
        delta: TransitionVec(raw),
        value: value.trim().parse().context("bad value")?,
    })
}

fn parse_set_value(spec: &str) -> anyhow::Result<MemoryEdit> {
    let (id, value) = spec.split_once(':').context("expected \"i:value\"")?;
    Ok(MemoryEdit::SetValue(
        id.trim().parse().context("bad node id")?,
        value.trim().parse().context("bad value")?,
    ))
}

fn eval_options(
    checkpoint: &Checkpoint,
    envs: u64,
    agents: u64,
    env_seed_base: u64,
    agent_seed_base: u64,
) -> EvalOptions {
    let mut opts = EvalOptions::from_checkpoint(checkpoint);
    opts.n_envs = envs;
    opts.n_agents = agents;
    opts.env_seed_base = env_seed_base;
    opts.agent_seed_base = agent_seed_base;
    opts
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, out } => {
            let config = TrainConfig::load(&config)?;
            let (output, paths) = train_to_dir(&config, &out)?;
            let last = output.rows.last().expect("at least one episode");
            println!(
                "trained {} episodes (seed {}); final reward {:.2}, env-model mse {:.5}, {} memory nodes",
                config.episodes,
                config.master_seed,
                last.total_reward,
                last.env_model_mse,
                last.qs_node_count
            );
            println!("training log: {}", out.join("training.csv").display());
            for path in paths {
                println!("checkpoint: {}", path.display());
            }
        }
        Command::Evaluate {
            checkpoint,
            envs,
            agents,
            env_seed_base,
            agent_seed_base,
            out,
        } => {
            let checkpoint = Checkpoint::load(&checkpoint)?;
            let opts = eval_options(&checkpoint, envs, agents, env_seed_base, agent_seed_base);
            let report = evaluate(&checkpoint, &opts)?;
            report.write_csv(&out)?;
            for kind in [AgentKind::Rl, AgentKind::Qs] {
                let agg = report.aggregate(kind);
                println!(
                    "{}: mean reward {:.2} +/- {:.2} (se) over {} runs",
                    kind.as_str(),
                    agg.mean,
                    agg.stderr,
                    agg.n
                );
            }
            println!("rows: {}", out.display());
        }
        Command::Sweep {
            checkpoint,
            param,
            values,
            envs,
            agents,
            env_seed_base,
            agent_seed_base,
            out,
        } => {
            let checkpoint = Checkpoint::load(&checkpoint)?;
            let param: SweepParam = param.parse()?;
            let values: Vec<f64> = values
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("bad sweep value"))
                .collect::<anyhow::Result<_>>()?;
            let opts = eval_options(&checkpoint, envs, agents, env_seed_base, agent_seed_base);
            let report = sweep(&checkpoint, param, &values, &opts)?;
            report.write_csv(&out)?;
            for row in &report.rows {
                println!(
                    "{}={}: qs {:.2} +/- {:.2}, rl {:.2} +/- {:.2}, hubs {}{}",
                    param.as_str(),
                    row.value,
                    row.qs.mean,
                    row.qs.stderr,
                    row.rl.mean,
                    row.rl.stderr,
                    row.hub_set_size,
                    if row.retrained_memory {
                        " (retrained memory)"
                    } else {
                        ""
                    }
                );
            }
            println!("rows: {}", out.display());
        }
        Command::Inspect { checkpoint } => {
            let checkpoint = Checkpoint::load(&checkpoint)?;
            let memory = &checkpoint.memory;
            println!("episode_index: {}", checkpoint.episode_index);
            println!("master_seed: {}", checkpoint.master_seed());
            println!(
                "config: episodes={} gamma={} actor_critic_lr={} envnet_lr={} theta_match={} alpha={} l_max={} n_plans={}",
                checkpoint.config.episodes,
                checkpoint.config.gamma,
                checkpoint.config.actor_critic_lr,
                checkpoint.config.envnet_lr,
                checkpoint.config.match_threshold,
                checkpoint.config.alpha,
                checkpoint.config.l_max,
                checkpoint.config.n_plans
            );
            println!("memory nodes: {}", memory.len());
            if memory.is_empty() {
                return Ok(());
            }
            let hub_cfg = HubConfig {
                alpha: checkpoint.config.alpha,
            };
            let threshold = memory.hub_threshold(&hub_cfg)?;
            let hubs = memory.hub_set(&hub_cfg)?;
            println!("hub threshold (alpha={}): {:.6}", hub_cfg.alpha, threshold);
            println!("hub set size: {}", hubs.len());
            println!("hub ids: {hubs:?}");
            let mut order: Vec<usize> = (0..memory.len()).collect();
            order.sort_by(|&a, &b| {
                memory.nodes()[b]
                    .value
                    .partial_cmp(&memory.nodes()[a].value)
                    .unwrap()
                    .then(a.cmp(&b))
            });
            println!("top nodes by value:");
            println!("  id\tvalue\thits\thub");
            for &id in order.iter().take(10) {
                let node = &memory.nodes()[id];
                println!(
                    "  {id}\t{:.4}\t{}\t{}",
                    node.value,
                    node.hits,
                    if hubs.binary_search(&id).is_ok() { 1 } else { 0 }
                );
            }
        }
        Command::Edit {
            checkpoint,
            remove_node,
            add_node,
            set_value,
            out,
        } => {
            let mut loaded = Checkpoint::load(&checkpoint)?;
            let edit = if let Some(id) = remove_node {
                MemoryEdit::Remove(id)
            } else if let Some(spec) = add_node {
                parse_add_node(&spec)?
            } else {
                parse_set_value(&set_value.expect("clap group guarantees one edit"))?
            };
            loaded.memory.apply_edit(&edit)?;
            loaded.save(&out)?;
            println!(
                "applied {edit:?}; memory now has {} nodes; wrote {}",
                loaded.memory.len(),
                out.display()
            );
        }
        Command::ExportRules { checkpoint, out } => {
            let checkpoint = Checkpoint::load(&checkpoint)?;
            export_rules(&checkpoint, &out)?;
            println!(
                "wrote {} rules to {}",
                checkpoint.memory.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
