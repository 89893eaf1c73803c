//! Actor-critic agent trained with the normalized-return policy gradient.
//!
//! The actor is an `[8, 100, 4]` simplex-head network, the critic an
//! `[8, 100, 1]` linear-head network. One update per episode: returns are
//! discounted, standardized across the episode, and the critic's value
//! estimate is subtracted as a baseline.

use alloc::vec::Vec;

use rand::Rng;

use crate::env::{Action, Environment, Outcome, StateVec, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Mlp, OptimizerState, OutputHead, ParamGrads};

/// Default initial learning rate for both actor and critic.
pub const DEFAULT_BASE_LR: f64 = 0.003;
/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.99;
/// Hidden width of actor and critic.
pub const HIDDEN: usize = 100;

/// Stochastic-policy agent with a state-value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub base_lr: f64,
    pub gamma: f64,
}

/// One recorded environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub state: StateVec,
    pub action: Action,
    pub log_prob: f64,
    pub value_estimate: f64,
    pub reward: f64,
    pub next_state: StateVec,
}

/// A complete episode as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Receives every real transition of an episode as it happens.
pub trait StepObserver {
    fn on_step(
        &mut self,
        state: &StateVec,
        action: Action,
        reward: f64,
        next_state: &StateVec,
    ) -> Result<()>;
}

impl ActorCriticAgent {
    /// Fresh agent with default shapes; weights drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> Result<Self> {
        let actor = Mlp::init(&[STATE_DIM, HIDDEN, ACTION_DIM], OutputHead::Simplex, rng)?;
        let critic = Mlp::init(&[STATE_DIM, HIDDEN, 1], OutputHead::Linear, rng)?;
        let actor_opt = OptimizerState::zeros_like(&actor);
        let critic_opt = OptimizerState::zeros_like(&critic);
        Ok(ActorCriticAgent {
            actor,
            critic,
            actor_opt,
            critic_opt,
            base_lr: DEFAULT_BASE_LR,
            gamma,
        })
    }

    /// Samples an action from the policy; returns `(action, ln pi(a|s), V(s))`.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &StateVec,
        rng: &mut R,
    ) -> Result<(Action, f64, f64)> {
        if !state.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        let x = state.to_array();
        let probs = self.actor.infer(&x)?;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("policy output"));
        }
        let value = self.critic.infer(&x)?[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("value output"));
        }

        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = ACTION_DIM - 1;
        for (i, &p) in probs.iter().enumerate() {
            cum += p;
            if u < cum {
                chosen = i;
                break;
            }
        }
        let action = Action::from_index(chosen).unwrap();
        let log_prob = libm::log(probs[chosen]);
        Ok((action, log_prob, value))
    }

    /// One policy-gradient update on the actor and one squared-error update
    /// on the critic from a completed episode. Returns the two losses.
    pub fn update(&mut self, trace: &EpisodeTrace, lr: f64) -> Result<(f64, f64)> {
        if trace.steps.is_empty() {
            return Err(Error::InvalidConfig("empty episode trace".into()));
        }
        let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
        let returns = compute_returns(&rewards, self.gamma);
        let normalized = normalize_returns(&returns);

        let mut actor_grads = ParamGrads::zeros_like(&self.actor);
        let mut critic_grads = ParamGrads::zeros_like(&self.critic);
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;

        for (step, &target) in trace.steps.iter().zip(&normalized) {
            let x = step.state.to_array();
            // The advantage is a constant here: no gradient flows through V
            // in the actor term.
            let advantage = target - step.value_estimate;

            let (probs, cache) = self.actor.forward(&x)?;
            let a = step.action.index();
            policy_loss += -libm::log(probs[a]) * advantage;
            let mut out_grad = [0.0; ACTION_DIM];
            out_grad[a] = -advantage / probs[a];
            actor_grads.accumulate(&self.actor.backward(&cache, &out_grad)?);

            let (v, vcache) = self.critic.forward(&x)?;
            let err = v[0] - target;
            value_loss += err * err;
            critic_grads.accumulate(&self.critic.backward(&vcache, &[2.0 * err])?);
        }

        if !policy_loss.is_finite() {
            return Err(Error::NonFinite("policy loss"));
        }
        if !value_loss.is_finite() {
            return Err(Error::NonFinite("value loss"));
        }

        self.actor.optimizer_step(&actor_grads, &mut self.actor_opt, lr)?;
        self.critic.optimizer_step(&critic_grads, &mut self.critic_opt, lr)?;
        Ok((policy_loss, value_loss))
    }
}

/// Discounted returns `R(t) = r_t + gamma * R(t+1)`, computed backwards.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = Vec::with_capacity(rewards.len());
    let mut acc = 0.0;
    for &r in rewards.iter().rev() {
        acc = r + gamma * acc;
        returns.push(acc);
    }
    returns.reverse();
    returns
}

/// Standardizes returns to zero mean and unit sample deviation;
/// `(R(t) - mean) / (std + 1e-8)`. A length-1 input maps to 0.
pub fn normalize_returns(returns: &[f64]) -> Vec<f64> {
    let n = returns.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = returns.iter().map(|r| (r - mean) * (r - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    returns.iter().map(|r| (r - mean) / (std + 1e-8)).collect()
}

/// Learning-rate schedule: a tenfold decay every 1000 episodes.
pub fn lr_at(base_lr: f64, episode_index: u64) -> f64 {
    let decades = episode_index / 1000;
    let mut lr = base_lr;
    for _ in 0..decades {
        lr *= 0.1;
    }
    lr
}

/// Runs one full episode, forwarding every real transition to the observers
/// in registration order. The environment must be freshly reset.
pub fn run_episode<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &mut E,
    agent: &ActorCriticAgent,
    rng: &mut R,
    observers: &mut [&mut dyn StepObserver],
) -> Result<EpisodeTrace> {
    let mut steps = Vec::new();
    let mut state = *env.state();
    loop {
        let (action, log_prob, value_estimate) = agent.select_action(&state, rng)?;
        let result = env.step(action)?;
        for obs in observers.iter_mut() {
            obs.on_step(&state, action, result.reward, &result.next_state)?;
        }
        steps.push(TraceStep {
            state,
            action,
            log_prob,
            value_estimate,
            reward: result.reward,
            next_state: result.next_state,
        });
        state = result.next_state;
        if result.done {
            return Ok(EpisodeTrace {
                steps,
                outcome: result.outcome,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, LanderEnv};
    use crate::nn::OutputHead;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn some_state() -> StateVec {
        StateVec {
            x: 0.1,
            y: 1.0,
            vx: -0.2,
            vy: -0.3,
            theta: 0.05,
            omega: 0.01,
            leg_left: 0.0,
            leg_right: 0.0,
        }
    }

    fn zeroed_agent() -> ActorCriticAgent {
        let mut agent = ActorCriticAgent::init(0.99, &mut rng(0)).unwrap();
        let zero = |net: &Mlp| {
            let sizes = net.layer_sizes().to_vec();
            let weights = net.weights().iter().map(|w| vec![0.0; w.len()]).collect();
            let biases = net.biases().iter().map(|b| vec![0.0; b.len()]).collect();
            Mlp::from_parts(sizes, weights, biases, net.head()).unwrap()
        };
        agent.actor = zero(&agent.actor);
        agent.critic = zero(&agent.critic);
        agent.actor_opt = OptimizerState::zeros_like(&agent.actor);
        agent.critic_opt = OptimizerState::zeros_like(&agent.critic);
        agent
    }

    #[test]
    fn zero_weight_actor_samples_uniformly() {
        let agent = zeroed_agent();
        let mut r = rng(3);
        let (_, log_prob, value) = agent.select_action(&some_state(), &mut r).unwrap();
        assert!((log_prob - (0.25f64).ln()).abs() < 1e-12);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn identical_rng_states_give_identical_actions() {
        let agent = ActorCriticAgent::init(0.99, &mut rng(5)).unwrap();
        let mut r1 = rng(77);
        let mut r2 = rng(77);
        for _ in 0..50 {
            let a = agent.select_action(&some_state(), &mut r1).unwrap();
            let b = agent.select_action(&some_state(), &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn action_frequencies_match_policy_probabilities() {
        // Small non-uniform policy; 1e5 samples against 3-sigma binomial bounds.
        let actor = Mlp::from_parts(
            vec![STATE_DIM, ACTION_DIM],
            vec![vec![0.0; STATE_DIM * ACTION_DIM]],
            vec![vec![0.0, 0.5, 1.0, -0.3]],
            OutputHead::Simplex,
        )
        .unwrap();
        let mut agent = zeroed_agent();
        agent.actor = actor;

        let state = some_state();
        let probs = agent.actor.infer(&state.to_array()).unwrap();
        let n = 100_000usize;
        let mut counts = [0usize; ACTION_DIM];
        let mut r = rng(9);
        for _ in 0..n {
            let (a, _, _) = agent.select_action(&state, &mut r).unwrap();
            counts[a.index()] += 1;
        }
        for i in 0..ACTION_DIM {
            let expect = n as f64 * probs[i];
            let sigma = (n as f64 * probs[i] * (1.0 - probs[i])).sqrt();
            let diff = (counts[i] as f64 - expect).abs();
            assert!(
                diff <= 3.0 * sigma,
                "action {i}: count {} expected {expect:.1} (sigma {sigma:.1})",
                counts[i]
            );
        }
    }

    #[test]
    fn returns_with_zero_gamma_equal_rewards() {
        let rewards = [3.0, -1.0, 2.0];
        assert_eq!(compute_returns(&rewards, 0.0), rewards.to_vec());
    }

    #[test]
    fn returns_hand_computed() {
        let returns = compute_returns(&[1.0, 1.0, 1.0], 0.5);
        assert_eq!(returns, vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn zero_rewards_give_zero_returns() {
        assert_eq!(compute_returns(&[0.0; 5], 0.9), vec![0.0; 5]);
    }

    #[test]
    fn normalize_constant_input_is_zero() {
        assert_eq!(normalize_returns(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_hand_computed() {
        let out = normalize_returns(&[1.0, 2.0, 3.0]);
        assert!((out[0] + 1.0).abs() < 1e-6);
        assert!(out[1].abs() < 1e-12);
        assert!((out[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalize_singleton_is_zero() {
        assert_eq!(normalize_returns(&[42.0]), vec![0.0]);
    }

    #[test]
    fn normalize_standardizes_random_inputs() {
        let mut r = rng(21);
        let xs: Vec<f64> = (0..64).map(|_| r.gen_range(-50.0..50.0)).collect();
        let out = normalize_returns(&xs);
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        let var =
            out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (out.len() - 1) as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalize_is_shift_invariant() {
        // Adding a constant to all returns leaves the output unchanged.
        let mut r = rng(22);
        let xs: Vec<f64> = (0..32).map(|_| r.gen_range(-5.0..5.0)).collect();
        let shifted: Vec<f64> = xs.iter().map(|v| v + 17.5).collect();
        let a = normalize_returns(&xs);
        let b = normalize_returns(&shifted);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn lr_schedule_decays_tenfold_per_1000() {
        assert_eq!(lr_at(0.003, 0), 0.003);
        assert_eq!(lr_at(0.003, 999), 0.003);
        assert!((lr_at(0.003, 1000) - 0.0003).abs() < 1e-18);
        assert!((lr_at(0.05, 2500) - 0.0005).abs() < 1e-12);
    }

    fn one_step_trace(agent: &ActorCriticAgent, reward: f64) -> EpisodeTrace {
        let state = some_state();
        let value = agent.critic.infer(&state.to_array()).unwrap()[0];
        EpisodeTrace {
            steps: vec![TraceStep {
                state,
                action: Action::MainEngine,
                log_prob: 0.0,
                value_estimate: value,
                reward,
                next_state: state,
            }],
            outcome: Outcome::Timeout,
        }
    }

    #[test]
    fn zero_advantages_leave_actor_unchanged() {
        // Zero-weight critic gives V = 0 and a single step normalizes to
        // r' = 0, so the advantage is exactly zero.
        let mut agent = zeroed_agent();
        let trace = one_step_trace(&agent, 3.0);
        let before = agent.actor.clone();
        agent.update(&trace, 0.01).unwrap();
        assert_eq!(agent.actor, before);
    }

    #[test]
    fn single_step_advantage_is_negative_value() {
        // A length-1 episode normalizes to r' = 0, so the advantage must be
        // exactly -V(s0); check it through the reported policy loss.
        let mut agent = ActorCriticAgent::init(0.99, &mut rng(13)).unwrap();
        let trace = one_step_trace(&agent, 7.0);
        let v = trace.steps[0].value_estimate;
        let probs = agent
            .actor
            .infer(&trace.steps[0].state.to_array())
            .unwrap();
        let (policy_loss, _) = agent.update(&trace, 1e-9).unwrap();
        let expected_loss = -probs[Action::MainEngine.index()].ln() * (0.0 - v);
        assert!((policy_loss - expected_loss).abs() < 1e-9);
    }

    /// The update's actor loss, recomputed for a fixed set of advantages.
    fn actor_loss_of(actor: &Mlp, trace: &EpisodeTrace, advantages: &[f64]) -> f64 {
        trace
            .steps
            .iter()
            .zip(advantages)
            .map(|(step, adv)| {
                let p = actor.infer(&step.state.to_array()).unwrap();
                -p[step.action.index()].ln() * adv
            })
            .sum()
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        // Tiny actor so the full parameter sweep stays fast.
        let mut r = rng(31);
        let actor = Mlp::init(&[STATE_DIM, 5, ACTION_DIM], OutputHead::Simplex, &mut r).unwrap();
        let trace = EpisodeTrace {
            steps: vec![
                TraceStep {
                    state: some_state(),
                    action: Action::LeftEngine,
                    log_prob: 0.0,
                    value_estimate: 0.4,
                    reward: 1.0,
                    next_state: some_state(),
                },
                TraceStep {
                    state: StateVec {
                        x: -0.4,
                        y: 0.6,
                        vx: 0.3,
                        vy: -0.1,
                        theta: -0.2,
                        omega: 0.05,
                        leg_left: 0.0,
                        leg_right: 0.0,
                    },
                    action: Action::Nop,
                    log_prob: 0.0,
                    value_estimate: -0.2,
                    reward: -1.0,
                    next_state: some_state(),
                },
            ],
            outcome: Outcome::Crashed,
        };
        let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
        let normalized = normalize_returns(&compute_returns(&rewards, 0.99));
        let advantages: Vec<f64> = trace
            .steps
            .iter()
            .zip(&normalized)
            .map(|(s, r)| r - s.value_estimate)
            .collect();

        // Analytic gradient, assembled exactly as `update` does.
        let mut grads = ParamGrads::zeros_like(&actor);
        for (step, adv) in trace.steps.iter().zip(&advantages) {
            let (probs, cache) = actor.forward(&step.state.to_array()).unwrap();
            let mut g = [0.0; ACTION_DIM];
            g[step.action.index()] = -adv / probs[step.action.index()];
            grads.accumulate(&actor.backward(&cache, &g).unwrap());
        }

        let h = 1e-5;
        for l in 0..actor.weights().len() {
            for i in (0..actor.weights()[l].len()).step_by(7) {
                let perturbed = |delta: f64| {
                    let mut w: Vec<Vec<f64>> = actor.weights().to_vec();
                    w[l][i] += delta;
                    Mlp::from_parts(
                        actor.layer_sizes().to_vec(),
                        w,
                        actor.biases().to_vec(),
                        actor.head(),
                    )
                    .unwrap()
                };
                let plus = actor_loss_of(&perturbed(h), &trace, &advantages);
                let minus = actor_loss_of(&perturbed(-h), &trace, &advantages);
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = grads.weights[l][i];
                let scale = analytic.abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-4,
                    "layer {l} weight {i}: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn update_is_bit_reproducible() {
        let build = || {
            let mut agent = ActorCriticAgent::init(0.99, &mut rng(17)).unwrap();
            let mut env = LanderEnv::new(EnvConfig::default());
            env.reset(4);
            let mut r = rng(18);
            let trace = run_episode(&mut env, &agent, &mut r, &mut []).unwrap();
            agent.update(&trace, 0.003).unwrap();
            agent
        };
        let a = build();
        let b = build();
        assert_eq!(a, b);
    }

    #[test]
    fn policy_stays_on_simplex_after_updates() {
        let mut agent = ActorCriticAgent::init(1.0, &mut rng(23)).unwrap();
        let mut env = LanderEnv::new(EnvConfig::default());
        let mut r = rng(24);
        for ep in 0..10 {
            env.reset(ep);
            let trace = run_episode(&mut env, &agent, &mut r, &mut []).unwrap();
            agent.update(&trace, 0.003).unwrap();
        }
        for seed in 0..5 {
            let mut env2 = LanderEnv::new(EnvConfig::default());
            let s = env2.reset(seed);
            let p = agent.actor.infer(&s.to_array()).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    struct CountingObserver {
        calls: usize,
    }

    impl StepObserver for CountingObserver {
        fn on_step(
            &mut self,
            _state: &StateVec,
            _action: Action,
            _reward: f64,
            _next: &StateVec,
        ) -> Result<()> {
            self.calls += 1;
            Ok(())
        }
    }

    #[test]
    fn observers_see_every_step() {
        let agent = ActorCriticAgent::init(0.99, &mut rng(2)).unwrap();
        let mut env = LanderEnv::new(EnvConfig::default());
        env.reset(11);
        let mut counter = CountingObserver { calls: 0 };
        let mut r = rng(12);
        let trace = run_episode(&mut env, &agent, &mut r, &mut [&mut counter]).unwrap();
        assert_eq!(counter.calls, trace.steps.len());
        assert!(!trace.steps.is_empty());
    }

    #[test]
    fn run_episode_is_deterministic() {
        let run = || {
            let agent = ActorCriticAgent::init(0.99, &mut rng(6)).unwrap();
            let mut env = LanderEnv::new(EnvConfig::default());
            env.reset(33);
            let mut r = rng(34);
            run_episode(&mut env, &agent, &mut r, &mut []).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn forced_nop_policy_falls_to_ground() {
        // A policy that can only pick Nop free-falls from y = 1.4 and must
        // crash well within the step cap.
        let actor = Mlp::from_parts(
            vec![STATE_DIM, ACTION_DIM],
            vec![vec![0.0; STATE_DIM * ACTION_DIM]],
            vec![vec![1e6, 0.0, 0.0, 0.0]],
            OutputHead::Simplex,
        )
        .unwrap();
        let mut agent = zeroed_agent();
        agent.actor = actor;
        let mut env = LanderEnv::new(EnvConfig::default());
        env.reset(8);
        let mut r = rng(44);
        let trace = run_episode(&mut env, &agent, &mut r, &mut []).unwrap();
        assert!(matches!(
            trace.outcome,
            Outcome::Crashed | Outcome::Timeout | Outcome::OutOfBounds
        ));
        assert!(trace.steps.len() < 500, "free fall should end quickly");
        assert_eq!(trace.outcome, Outcome::Crashed);
    }
}
