//! Learned one-step dynamics model.
//!
//! A `[12, 300, 8]` linear-head network maps the 8 state components plus a
//! 4-component one-hot action to the state transition; the predicted next
//! state is the input state plus the network output. Squared error against
//! the actual next state is accumulated over an episode and applied as a
//! single batch update at the episode's end.

use alloc::vec::Vec;

use rand::Rng;

use crate::agent::lr_at;
use crate::env::{Action, StateVec, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Mlp, OptimizerState, OutputHead, ParamGrads};

/// Default initial learning rate for the dynamics model.
pub const DEFAULT_ENVNET_LR: f64 = 0.05;
/// Hidden width of the dynamics network.
pub const HIDDEN: usize = 300;

const INPUT_DIM: usize = STATE_DIM + ACTION_DIM;

#[derive(Debug, Clone, PartialEq)]
struct Sample {
    input: [f64; INPUT_DIM],
    target: [f64; STATE_DIM],
}

/// One-step dynamics model with an episode batch buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvNet {
    pub net: Mlp,
    pub opt: OptimizerState,
    pub base_lr: f64,
    samples: Vec<Sample>,
    accumulated: f64,
}

fn pack_input(state: &StateVec, action: Action) -> [f64; INPUT_DIM] {
    let mut input = [0.0; INPUT_DIM];
    input[..STATE_DIM].copy_from_slice(&state.to_array());
    input[STATE_DIM..].copy_from_slice(&action.one_hot());
    input
}

impl EnvNet {
    /// Fresh model with the default shape; weights drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        let net = Mlp::init(&[INPUT_DIM, HIDDEN, STATE_DIM], OutputHead::Linear, rng)?;
        let opt = OptimizerState::zeros_like(&net);
        Ok(EnvNet {
            net,
            opt,
            base_lr: DEFAULT_ENVNET_LR,
            samples: Vec::new(),
            accumulated: 0.0,
        })
    }

    /// Wraps an existing network (any hidden shape) with an empty buffer.
    pub fn from_parts(net: Mlp, opt: OptimizerState, base_lr: f64) -> Result<Self> {
        if net.input_dim() != INPUT_DIM {
            return Err(Error::ShapeMismatch {
                expected: INPUT_DIM,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != STATE_DIM {
            return Err(Error::ShapeMismatch {
                expected: STATE_DIM,
                got: net.output_dim(),
            });
        }
        Ok(EnvNet {
            net,
            opt,
            base_lr,
            samples: Vec::new(),
            accumulated: 0.0,
        })
    }

    /// Number of observations buffered for the pending batch update.
    pub fn buffered(&self) -> usize {
        self.samples.len()
    }

    /// Squared error accumulated so far this episode.
    pub fn accumulated_error(&self) -> f64 {
        self.accumulated
    }

    /// Predicted next state for `(state, action)`: the input state plus the
    /// network's transition output. Contact-flag outputs are raw reals.
    pub fn predict_next(&self, state: &StateVec, action: Action) -> Result<StateVec> {
        let out = self.net.infer(&pack_input(state, action))?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dynamics prediction"));
        }
        let s = state.to_array();
        Ok(StateVec::from_array(core::array::from_fn(|i| s[i] + out[i])))
    }

    /// Records one real transition; returns this step's mean-squared-error
    /// contribution (predicted next state against `actual_next`) to the
    /// episode loss.
    pub fn observe_step(
        &mut self,
        state: &StateVec,
        action: Action,
        actual_next: &StateVec,
    ) -> Result<f64> {
        let input = pack_input(state, action);
        let s = state.to_array();
        let n = actual_next.to_array();
        // The network's target is the transition; its error equals the
        // next-state prediction error exactly.
        let target: [f64; STATE_DIM] = core::array::from_fn(|i| n[i] - s[i]);
        let pred = self.net.infer(&input)?;
        let contribution = pred
            .iter()
            .zip(&target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / STATE_DIM as f64;
        self.accumulated += contribution;
        self.samples.push(Sample { input, target });
        Ok(contribution)
    }

    /// Gradient of the accumulated episode loss, plus the loss itself.
    fn batch_grads(&self) -> Result<(ParamGrads, f64)> {
        let mut grads = ParamGrads::zeros_like(&self.net);
        let mut loss = 0.0;
        for sample in &self.samples {
            let (pred, cache) = self.net.forward(&sample.input)?;
            let mut out_grad = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                let err = pred[i] - sample.target[i];
                loss += err * err / STATE_DIM as f64;
                out_grad[i] = 2.0 * err / STATE_DIM as f64;
            }
            grads.accumulate(&self.net.backward(&cache, &out_grad)?);
        }
        Ok((grads, loss))
    }

    /// One batch optimizer step on the accumulated loss with the scheduled
    /// learning rate; clears the buffer and returns the pre-update mean
    /// per-step MSE.
    pub fn end_episode_update(&mut self, episode_index: u64) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let (grads, _) = self.batch_grads()?;
        let lr = lr_at(self.base_lr, episode_index);
        self.net.optimizer_step(&grads, &mut self.opt, lr)?;
        let mean_mse = self.accumulated / self.samples.len() as f64;
        self.samples.clear();
        self.accumulated = 0.0;
        Ok(mean_mse)
    }
}

impl crate::agent::StepObserver for EnvNet {
    fn on_step(
        &mut self,
        state: &StateVec,
        action: Action,
        _reward: f64,
        next_state: &StateVec,
    ) -> Result<()> {
        self.observe_step(state, action, next_state).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn state_from(vals: [f64; STATE_DIM]) -> StateVec {
        StateVec::from_array(vals)
    }

    fn zero_envnet() -> EnvNet {
        let seed_net = Mlp::init(&[INPUT_DIM, 4, STATE_DIM], OutputHead::Linear, &mut rng(0)).unwrap();
        let weights = seed_net.weights().iter().map(|w| vec![0.0; w.len()]).collect();
        let biases = seed_net.biases().iter().map(|b| vec![0.0; b.len()]).collect();
        let net = Mlp::from_parts(
            seed_net.layer_sizes().to_vec(),
            weights,
            biases,
            OutputHead::Linear,
        )
        .unwrap();
        let opt = OptimizerState::zeros_like(&net);
        EnvNet::from_parts(net, opt, DEFAULT_ENVNET_LR).unwrap()
    }

    #[test]
    fn zero_net_predicts_identity() {
        // A zero network contributes a zero transition: next = state.
        let envnet = zero_envnet();
        let s = state_from([0.3; STATE_DIM]);
        let pred = envnet.predict_next(&s, Action::MainEngine).unwrap();
        assert_eq!(pred.to_array(), s.to_array());
    }

    #[test]
    fn input_layout_state_then_one_hot() {
        // Single affine layer that copies input slot 8 + action_index to the
        // first output: prediction[0] == 1 exactly when the one-hot index
        // matches the fired action.
        for action in Action::ALL {
            let mut w = vec![vec![0.0; INPUT_DIM * STATE_DIM]];
            w[0][STATE_DIM + action.index()] = 1.0;
            let net = Mlp::from_parts(
                vec![INPUT_DIM, STATE_DIM],
                w,
                vec![vec![0.0; STATE_DIM]],
                OutputHead::Linear,
            )
            .unwrap();
            let opt = OptimizerState::zeros_like(&net);
            let envnet = EnvNet::from_parts(net, opt, 0.05).unwrap();
            let s = state_from([0.0; STATE_DIM]);
            for probe in Action::ALL {
                let pred = envnet.predict_next(&s, probe).unwrap();
                let expect = if probe == action { 1.0 } else { 0.0 };
                assert_eq!(pred.x, expect);
            }
        }
    }

    #[test]
    fn state_components_occupy_first_eight_inputs() {
        // Copy input slot k to transition output 0 and check each state
        // component lands in the right slot: prediction.x = state.x + s[k].
        for k in 0..STATE_DIM {
            let mut w = vec![vec![0.0; INPUT_DIM * STATE_DIM]];
            w[0][k] = 1.0;
            let net = Mlp::from_parts(
                vec![INPUT_DIM, STATE_DIM],
                w,
                vec![vec![0.0; STATE_DIM]],
                OutputHead::Linear,
            )
            .unwrap();
            let envnet = EnvNet::from_parts(
                net.clone(),
                OptimizerState::zeros_like(&net),
                0.05,
            )
            .unwrap();
            let mut vals = [0.0; STATE_DIM];
            vals[k] = 2.5;
            let pred = envnet
                .predict_next(&state_from(vals), Action::Nop)
                .unwrap();
            let expect = if k == 0 { 2.5 + 2.5 } else { 2.5 };
            assert_eq!(pred.x, expect, "component {k} misplaced");
        }
    }

    #[test]
    fn perfect_prediction_contributes_zero() {
        let mut envnet = zero_envnet();
        let s = state_from([0.0; STATE_DIM]);
        let c = envnet.observe_step(&s, Action::Nop, &s).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(envnet.accumulated_error(), 0.0);
    }

    #[test]
    fn unit_error_contributes_one() {
        let mut envnet = zero_envnet();
        let s = state_from([0.0; STATE_DIM]);
        let target = state_from([1.0; STATE_DIM]);
        let c = envnet.observe_step(&s, Action::Nop, &target).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn buffer_accumulates_exactly() {
        let mut envnet = EnvNet::init(&mut rng(3)).unwrap();
        let mut sum = 0.0;
        for i in 0..10 {
            let s = state_from([i as f64 * 0.1; STATE_DIM]);
            let t = state_from([i as f64 * 0.05; STATE_DIM]);
            sum += envnet.observe_step(&s, Action::MainEngine, &t).unwrap();
        }
        assert_eq!(envnet.accumulated_error(), sum);
        assert_eq!(envnet.buffered(), 10);
    }

    #[test]
    fn update_without_observations_is_error() {
        let mut envnet = EnvNet::init(&mut rng(4)).unwrap();
        assert_eq!(envnet.end_episode_update(0), Err(Error::EmptyBuffer));
        let s = state_from([0.1; STATE_DIM]);
        envnet.observe_step(&s, Action::Nop, &s).unwrap();
        envnet.end_episode_update(0).unwrap();
        // Second consecutive call runs on an empty buffer again.
        assert_eq!(envnet.end_episode_update(1), Err(Error::EmptyBuffer));
    }

    #[test]
    fn scheduled_lr_at_episode_1000() {
        assert!((lr_at(0.05, 1000) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn reported_mse_is_pre_update_mean() {
        let mut envnet = zero_envnet();
        let s = state_from([0.0; STATE_DIM]);
        let t1 = state_from([1.0; STATE_DIM]);
        envnet.observe_step(&s, Action::Nop, &t1).unwrap(); // contributes 1
        envnet.observe_step(&s, Action::Nop, &s).unwrap(); // contributes 0
        let mse = envnet.end_episode_update(0).unwrap();
        assert_eq!(mse, 0.5);
        assert_eq!(envnet.buffered(), 0);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let mut r = rng(7);
        let net = Mlp::init(&[INPUT_DIM, 4, STATE_DIM], OutputHead::Linear, &mut r).unwrap();
        let opt = OptimizerState::zeros_like(&net);
        let mut envnet = EnvNet::from_parts(net, opt, 0.05).unwrap();

        let mut samples = Vec::new();
        for _ in 0..5 {
            let s: [f64; STATE_DIM] = core::array::from_fn(|_| r.gen_range(-1.0..1.0));
            let t: [f64; STATE_DIM] = core::array::from_fn(|_| r.gen_range(-1.0..1.0));
            let a = Action::from_index(r.gen_range(0..4)).unwrap();
            samples.push((state_from(s), a, state_from(t)));
        }
        for (s, a, t) in &samples {
            envnet.observe_step(s, *a, t).unwrap();
        }
        let (grads, _) = envnet.batch_grads().unwrap();

        let loss_of = |net: &Mlp| -> f64 {
            samples
                .iter()
                .map(|(s, a, t)| {
                    let pred = net.infer(&pack_input(s, *a)).unwrap();
                    let sa = s.to_array();
                    let ta = t.to_array();
                    pred.iter()
                        .enumerate()
                        .map(|(i, p)| {
                            let d = p - (ta[i] - sa[i]);
                            d * d
                        })
                        .sum::<f64>()
                        / STATE_DIM as f64
                })
                .sum()
        };

        let h = 1e-5;
        let base = &envnet.net;
        for l in 0..base.weights().len() {
            for i in (0..base.weights()[l].len()).step_by(5) {
                let perturbed = |delta: f64| {
                    let mut w = base.weights().to_vec();
                    w[l][i] += delta;
                    Mlp::from_parts(
                        base.layer_sizes().to_vec(),
                        w,
                        base.biases().to_vec(),
                        base.head(),
                    )
                    .unwrap()
                };
                let numeric = (loss_of(&perturbed(h)) - loss_of(&perturbed(-h))) / (2.0 * h);
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
    fn fits_constant_map_on_synthetic_set() {
        // 100 samples of next = state; a few hundred batch updates should
        // drive the per-component error below 1e-2.
        let mut r = rng(10);
        let mut envnet = EnvNet::init(&mut r).unwrap();
        let samples: Vec<(StateVec, Action)> = (0..100)
            .map(|_| {
                let s: [f64; STATE_DIM] = core::array::from_fn(|_| r.gen_range(-1.0..1.0));
                let a = Action::from_index(r.gen_range(0..4)).unwrap();
                (state_from(s), a)
            })
            .collect();
        for episode in 0..400 {
            for (s, a) in &samples {
                envnet.observe_step(s, *a, s).unwrap();
            }
            envnet.end_episode_update(episode).unwrap();
        }
        for (s, a) in &samples {
            let pred = envnet.predict_next(s, *a).unwrap();
            for (p, t) in pred.to_array().iter().zip(&s.to_array()) {
                assert!(
                    (p - t).abs() < 1e-2,
                    "component error {} too large",
                    (p - t).abs()
                );
            }
        }
    }

    #[test]
    fn episode_mse_decreases_on_linear_dynamics() {
        // Synthetic linear dynamics: next = 0.9 * state + 0.1 * bias(action).
        let mut r = rng(20);
        let mut envnet = EnvNet::init(&mut r).unwrap();
        let dynamics = |s: &StateVec, a: Action| -> StateVec {
            let mut out = [0.0; STATE_DIM];
            for (i, v) in s.to_array().iter().enumerate() {
                out[i] = 0.9 * v + 0.1 * (a.index() as f64 - 1.5);
            }
            state_from(out)
        };
        let mut first = 0.0;
        let mut last = 0.0;
        for episode in 0..200 {
            for _ in 0..50 {
                let s: [f64; STATE_DIM] = core::array::from_fn(|_| r.gen_range(-1.0..1.0));
                let a = Action::from_index(r.gen_range(0..4)).unwrap();
                let sv = state_from(s);
                envnet.observe_step(&sv, a, &dynamics(&sv, a)).unwrap();
            }
            let mse = envnet.end_episode_update(episode).unwrap();
            assert!(mse >= 0.0);
            if episode == 0 {
                first = mse;
            }
            if episode == 199 {
                last = mse;
            }
        }
        assert!(
            last < first * 0.5,
            "episode MSE did not decrease: first {first}, last {last}"
        );
    }

    #[test]
    fn prediction_is_pure() {
        let envnet = EnvNet::init(&mut rng(30)).unwrap();
        let s = state_from([0.2; STATE_DIM]);
        let a = envnet.predict_next(&s, Action::LeftEngine).unwrap();
        let b = envnet.predict_next(&s, Action::LeftEngine).unwrap();
        assert_eq!(a, b);
    }
}
