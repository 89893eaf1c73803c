//! Frozen-checkpoint evaluation: the same seeded environments for every
//! agent, stochastic RL rows and plan-driven QS rows, canonical ordering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qsagent_core::agent::run_episode;
use qsagent_core::env::{LanderEnv, Outcome};
use qsagent_core::qs::{qs_run_episode, HubConfig, PlannerParams};
use qsagent_core::seed::derive_seed;
use rand::SeedableRng;

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};

/// Which decision rule produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Rl,
    Qs,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Rl => "rl",
            AgentKind::Qs => "qs",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            AgentKind::Rl => 0,
            AgentKind::Qs => 1,
        }
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub env_id: u64,
    pub agent_seed: u64,
    pub kind: AgentKind,
    pub total_reward: f64,
    pub steps: usize,
    pub outcome: Outcome,
}

/// Evaluation protocol knobs. Planner settings default to the checkpoint's
/// configuration; sweeps override them per value.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub n_envs: u64,
    pub n_agents: u64,
    pub env_seed_base: u64,
    pub agent_seed_base: u64,
    pub l_max: usize,
    pub n_plans: usize,
    pub alpha: f64,
}

impl EvalOptions {
    /// Full-scale protocol (100 environments, 10 agents) with the
    /// checkpoint's planner settings.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Self {
        EvalOptions {
            n_envs: 100,
            n_agents: 10,
            env_seed_base: 0,
            agent_seed_base: 0,
            l_max: checkpoint.config.l_max,
            n_plans: checkpoint.config.n_plans,
            alpha: checkpoint.config.alpha,
        }
    }
}

/// Mean and standard error over one agent kind's rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// All rows of one evaluation, in canonical (env, agent, kind) order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn aggregate(&self, kind: AgentKind) -> Aggregate {
        let rewards: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.total_reward)
            .collect();
        aggregate_of(&rewards)
    }

    pub fn rewards(&self, kind: AgentKind) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.total_reward)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("env_id,agent_seed,agent_kind,total_reward,steps,outcome\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:?},{},{}",
                row.env_id,
                row.agent_seed,
                row.kind.as_str(),
                row.total_reward,
                row.steps,
                row.outcome.as_str()
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| HarnessError::io(path, e))
    }
}

pub fn aggregate_of(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            mean: 0.0,
            stderr: 0.0,
            n: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, stderr, n }
}

/// Runs the evaluation protocol on a frozen checkpoint.
///
/// Environment `env_id` is seeded with `env_seed_base + env_id`, identically
/// for every agent and both kinds. Every `(env, agent, kind)` triple owns an
/// rng derived from its agent seed, so rows are independent and the report
/// is the same regardless of execution order.
pub fn evaluate(checkpoint: &Checkpoint, opts: &EvalOptions) -> Result<EvalReport> {
    if checkpoint.memory.is_empty() {
        return Err(HarnessError::EmptyMemory);
    }
    let hub_cfg = HubConfig { alpha: opts.alpha };
    let params = PlannerParams {
        l_max: opts.l_max,
        n_plans: opts.n_plans,
    };

    let mut triples = Vec::new();
    for env_id in 0..opts.n_envs {
        for agent_idx in 0..opts.n_agents {
            for kind in [AgentKind::Rl, AgentKind::Qs] {
                triples.push((env_id, opts.agent_seed_base + agent_idx, kind));
            }
        }
    }

    let rows: Vec<Result<EvalRow>> = triples
        .par_iter()
        .map(|&(env_id, agent_seed, kind)| -> Result<EvalRow> {
            let mut env = LanderEnv::new(checkpoint.config.env);
            env.reset(opts.env_seed_base + env_id);
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(agent_seed, env_id * 2 + kind.stream_tag()));
            let trace = match kind {
                AgentKind::Rl => run_episode(&mut env, &checkpoint.agent, &mut rng, &mut [])?,
                AgentKind::Qs => {
                    qs_run_episode(
                        &checkpoint.memory,
                        &hub_cfg,
                        &params,
                        &mut env,
                        &checkpoint.agent,
                        &checkpoint.envnet,
                        &mut rng,
                    )?
                    .trace
                }
            };
            Ok(EvalRow {
                env_id,
                agent_seed,
                kind,
                total_reward: trace.total_reward(),
                steps: trace.steps.len(),
                outcome: trace.outcome,
            })
        })
        .collect();

    let rows: Vec<EvalRow> = rows.into_iter().collect::<Result<_>>()?;
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::train::train;

    fn quick_checkpoint() -> Checkpoint {
        let mut config = TrainConfig::default();
        config.episodes = 5;
        config.eval_every = 5;
        config.master_seed = 77;
        train(&config).unwrap().checkpoints.pop().unwrap()
    }

    fn small_opts(checkpoint: &Checkpoint) -> EvalOptions {
        let mut opts = EvalOptions::from_checkpoint(checkpoint);
        opts.n_envs = 2;
        opts.n_agents = 3;
        opts
    }

    #[test]
    fn row_count_is_envs_times_agents_times_kinds() {
        let checkpoint = quick_checkpoint();
        let report = evaluate(&checkpoint, &small_opts(&checkpoint)).unwrap();
        assert_eq!(report.rows.len(), 2 * 3 * 2);
    }

    #[test]
    fn repeated_evaluation_is_byte_identical() {
        let checkpoint = quick_checkpoint();
        let opts = small_opts(&checkpoint);
        let a = evaluate(&checkpoint, &opts).unwrap();
        let b = evaluate(&checkpoint, &opts).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn evaluation_does_not_mutate_the_checkpoint() {
        let checkpoint = quick_checkpoint();
        let before = checkpoint.to_text();
        let _ = evaluate(&checkpoint, &small_opts(&checkpoint)).unwrap();
        assert_eq!(checkpoint.to_text(), before);
    }

    #[test]
    fn kinds_share_env_seeds() {
        // Determinism plus shared seeding: the RL and QS rows for env 0 both
        // start from the same state, so a length-1 plan executed by QS and
        // the same first action by RL yield identical first rewards when the
        // action matches. Verified indirectly: env ids appear for both kinds.
        let checkpoint = quick_checkpoint();
        let report = evaluate(&checkpoint, &small_opts(&checkpoint)).unwrap();
        for env_id in 0..2 {
            assert!(report
                .rows
                .iter()
                .any(|r| r.env_id == env_id && r.kind == AgentKind::Rl));
            assert!(report
                .rows
                .iter()
                .any(|r| r.env_id == env_id && r.kind == AgentKind::Qs));
        }
    }

    #[test]
    fn aggregates_match_manual_recomputation() {
        let checkpoint = quick_checkpoint();
        let report = evaluate(&checkpoint, &small_opts(&checkpoint)).unwrap();
        for kind in [AgentKind::Rl, AgentKind::Qs] {
            let rewards = report.rewards(kind);
            let agg = report.aggregate(kind);
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (rewards.len() - 1) as f64;
            let stderr = (var / rewards.len() as f64).sqrt();
            assert!((agg.mean - mean).abs() < 1e-12);
            assert!((agg.stderr - stderr).abs() < 1e-12);
            assert_eq!(agg.n, rewards.len());
        }
    }

    #[test]
    fn empty_memory_is_rejected() {
        let mut checkpoint = quick_checkpoint();
        checkpoint.memory = qsagent_core::qs::TransitionMemory::default();
        let err = evaluate(&checkpoint, &small_opts(&checkpoint)).unwrap_err();
        assert!(matches!(err, HarnessError::EmptyMemory));
    }
}
