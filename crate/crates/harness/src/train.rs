//! Training loop: RL updates, dynamics-model batches, and memory growth,
//! with periodic checkpoints and a per-episode CSV log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qsagent_core::agent::{lr_at, run_episode, ActorCriticAgent, StepObserver};
use qsagent_core::env::LanderEnv;
use qsagent_core::envmodel::EnvNet;
use qsagent_core::qs::TransitionMemory;
use qsagent_core::seed::{derive_seed, stream_rng};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};

/// Logical rng streams of the master seed.
const STREAM_INIT: u64 = 0;
const STREAM_ACTIONS: u64 = 1;
/// Episode `ep` draws its environment seed from stream `EPISODE_BASE + ep`.
const STREAM_EPISODE_BASE: u64 = 2;

/// Per-episode training log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    /// 1-based count of completed episodes.
    pub episode: u64,
    pub total_reward: f64,
    pub env_model_mse: f64,
    pub lr_actor: f64,
    pub lr_envnet: f64,
    pub qs_node_count: usize,
    /// Steps taken this episode (not part of the CSV).
    pub steps: usize,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    /// Checkpoints at every `eval_every` episodes plus the final episode.
    pub checkpoints: Vec<Checkpoint>,
    pub rows: Vec<TrainRow>,
}

impl TrainOutput {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training emits at least one checkpoint")
    }
}

/// Runs the full training protocol in memory.
pub fn train(config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;

    let mut init_rng = stream_rng(config.master_seed, STREAM_INIT);
    let mut agent = ActorCriticAgent::init(config.gamma, &mut init_rng)?;
    agent.base_lr = config.actor_critic_lr;
    let mut envnet = EnvNet::init(&mut init_rng)?;
    envnet.base_lr = config.envnet_lr;
    let mut memory = TransitionMemory::new(config.match_threshold);

    let mut action_rng = stream_rng(config.master_seed, STREAM_ACTIONS);
    let mut env = LanderEnv::new(config.env);

    let mut rows = Vec::with_capacity(config.episodes as usize);
    let mut checkpoints = Vec::new();

    for ep in 0..config.episodes {
        let diverged = |source| HarnessError::Divergence {
            episode: ep + 1,
            source,
        };

        env.reset(derive_seed(config.master_seed, STREAM_EPISODE_BASE + ep));
        let trace = {
            let mut observers: [&mut dyn StepObserver; 2] = [&mut memory, &mut envnet];
            run_episode(&mut env, &agent, &mut action_rng, &mut observers)
        }
        .map_err(diverged)?;

        let lr_actor = lr_at(config.actor_critic_lr, ep);
        agent.update(&trace, lr_actor).map_err(diverged)?;
        let env_model_mse = envnet.end_episode_update(ep).map_err(diverged)?;

        rows.push(TrainRow {
            episode: ep + 1,
            total_reward: trace.total_reward(),
            env_model_mse,
            lr_actor,
            lr_envnet: lr_at(config.envnet_lr, ep),
            qs_node_count: memory.len(),
            steps: trace.steps.len(),
        });

        let completed = ep + 1;
        if completed % config.eval_every == 0 || completed == config.episodes {
            checkpoints.push(Checkpoint {
                config: config.clone(),
                episode_index: completed,
                agent: agent.clone(),
                envnet: envnet.clone(),
                memory: memory.clone(),
            });
        }
    }

    Ok(TrainOutput { checkpoints, rows })
}

pub fn checkpoint_filename(episode: u64) -> String {
    format!("checkpoint_{episode:06}.txt")
}

/// The training CSV: one row per episode.
pub fn training_csv(rows: &[TrainRow]) -> String {
    let mut out = String::from("episode,total_reward,env_model_mse,lr_actor,lr_envnet,qs_node_count\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{}",
            row.episode,
            row.total_reward,
            row.env_model_mse,
            row.lr_actor,
            row.lr_envnet,
            row.qs_node_count
        );
    }
    out
}

/// Trains and persists checkpoints plus `training.csv` under `out_dir`.
/// Returns the output along with the written checkpoint paths.
pub fn train_to_dir(config: &TrainConfig, out_dir: &Path) -> Result<(TrainOutput, Vec<PathBuf>)> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let output = train(config)?;
    let mut paths = Vec::new();
    for checkpoint in &output.checkpoints {
        let path = out_dir.join(checkpoint_filename(checkpoint.episode_index));
        checkpoint.save(&path)?;
        paths.push(path);
    }
    let csv_path = out_dir.join("training.csv");
    fs::write(&csv_path, training_csv(&output.rows)).map_err(|e| HarnessError::io(&csv_path, e))?;
    Ok((output, paths))
}
