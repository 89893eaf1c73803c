//! Quasi-symbolic agent: transition memory, hub states, and rollout planning.
//!
//! The matching network stores unit-normalized state-transition vectors; its
//! activations are cosine similarities to the query and only the maximal
//! node is active. Each node carries one value weight accumulating the
//! rewards observed for that transition cluster. Hub states are the nodes
//! whose value exceeds `mean + alpha * sigma`; the planner rolls the policy
//! through the learned dynamics model until a predicted transition matches a
//! hub, and otherwise falls back to the best immediate action.

use alloc::vec::Vec;

use rand::RngCore;

use crate::agent::{ActorCriticAgent, EpisodeTrace, TraceStep};
use crate::env::{Action, Environment, StateVec, STATE_DIM};
use crate::envmodel::EnvNet;
use crate::error::{Error, Result};

/// Cosine-similarity cutoff below which a transition counts as novel.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.97;
/// Transitions with a smaller L2 norm are degenerate (no direction).
pub const DEGENERATE_NORM: f64 = 1e-9;

/// State-transition vector `delta = next - prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionVec(pub [f64; STATE_DIM]);

impl TransitionVec {
    pub fn between(prev: &StateVec, next: &StateVec) -> Self {
        let p = prev.to_array();
        let n = next.to_array();
        TransitionVec(core::array::from_fn(|i| n[i] - p[i]))
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }

    pub fn dot(&self, other: &TransitionVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_degenerate(&self) -> bool {
        self.norm() < DEGENERATE_NORM
    }

    /// Unit-norm copy, unless degenerate.
    pub fn normalized(&self) -> Option<TransitionVec> {
        let n = self.norm();
        if n < DEGENERATE_NORM {
            return None;
        }
        Some(TransitionVec(core::array::from_fn(|i| self.0[i] / n)))
    }
}

/// One matching/value node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryNode {
    /// Transition as first observed (or as added by an edit).
    pub raw: TransitionVec,
    /// `raw` normalized to unit length; the stored synaptic weights.
    pub unit: TransitionVec,
    /// Accumulated reward of the cluster.
    pub value: f64,
    /// Observations assigned to this node.
    pub hits: u64,
}

/// Outcome of feeding one transition to the memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserveOutcome {
    /// A novel transition grew the memory; holds the new node id.
    Added(usize),
    /// The reward was added to an existing node's value.
    Updated(usize),
    /// Degenerate transition; the memory is unchanged.
    Ignored,
}

/// Result of matching a query transition against the memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityResult {
    /// Winning node (lowest index on exact ties); `None` on empty memory.
    pub best_index: Option<usize>,
    /// Cosine similarity of the winner; `-inf` on empty memory.
    pub best_h: f64,
    /// Cosine similarity of every node, in node order.
    pub all_h: Vec<f64>,
}

/// Hub-extraction scale constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    pub alpha: f64,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig { alpha: 0.1 }
    }
}

/// Grow-on-novelty matching network plus value weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMemory {
    nodes: Vec<MemoryNode>,
    match_threshold: f64,
}

impl Default for TransitionMemory {
    fn default() -> Self {
        TransitionMemory::new(DEFAULT_MATCH_THRESHOLD)
    }
}

impl TransitionMemory {
    pub fn new(match_threshold: f64) -> Self {
        TransitionMemory {
            nodes: Vec::new(),
            match_threshold,
        }
    }

    /// Rebuilds a memory from stored `(raw, value, hits)` triples; units are
    /// recomputed from the raw vectors.
    pub fn from_parts(match_threshold: f64, parts: Vec<(TransitionVec, f64, u64)>) -> Result<Self> {
        let mut memory = TransitionMemory::new(match_threshold);
        for (raw, value, hits) in parts {
            let unit = raw.normalized().ok_or(Error::DegenerateTransition)?;
            memory.nodes.push(MemoryNode {
                raw,
                unit,
                value,
                hits,
            });
        }
        Ok(memory)
    }

    pub fn match_threshold(&self) -> f64 {
        self.match_threshold
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[MemoryNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&MemoryNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    /// Winning node and its cosine similarity for a unit-norm query.
    fn best_for_unit(&self, query: &TransitionVec) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, node) in self.nodes.iter().enumerate() {
            let h = node.unit.dot(query);
            match best {
                Some((_, bh)) if h <= bh => {}
                _ => best = Some((i, h)),
            }
        }
        best
    }

    /// Cosine similarities of all nodes to `delta`; the winner is the
    /// argmax, lowest index on exact ties.
    pub fn similarity(&self, delta: &TransitionVec) -> Result<SimilarityResult> {
        if !delta.is_finite() {
            return Err(Error::NonFinite("transition"));
        }
        let unit = delta.normalized().ok_or(Error::DegenerateTransition)?;
        let all_h: Vec<f64> = self.nodes.iter().map(|n| n.unit.dot(&unit)).collect();
        let best = self.best_for_unit(&unit);
        Ok(SimilarityResult {
            best_index: best.map(|(i, _)| i),
            best_h: best.map(|(_, h)| h).unwrap_or(f64::NEG_INFINITY),
            all_h,
        })
    }

    /// Feeds one transition and its reward to the memory: novel transitions
    /// grow a node, known ones add the reward to the winning node's value.
    pub fn observe(&mut self, delta: &TransitionVec, reward: f64) -> Result<ObserveOutcome> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        if !delta.is_finite() {
            return Err(Error::NonFinite("transition"));
        }
        let unit = match delta.normalized() {
            Some(u) => u,
            None => return Ok(ObserveOutcome::Ignored),
        };
        match self.best_for_unit(&unit) {
            Some((idx, h)) if h >= self.match_threshold => {
                self.nodes[idx].value += reward;
                self.nodes[idx].hits += 1;
                Ok(ObserveOutcome::Updated(idx))
            }
            _ => {
                self.nodes.push(MemoryNode {
                    raw: *delta,
                    unit,
                    value: reward,
                    hits: 1,
                });
                Ok(ObserveOutcome::Added(self.nodes.len() - 1))
            }
        }
    }

    /// `mean + alpha * sigma` of the node values (population deviation).
    pub fn hub_threshold(&self, cfg: &HubConfig) -> Result<f64> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let n = self.nodes.len() as f64;
        let mean = self.nodes.iter().map(|x| x.value).sum::<f64>() / n;
        let var = self
            .nodes
            .iter()
            .map(|x| (x.value - mean) * (x.value - mean))
            .sum::<f64>()
            / n;
        Ok(mean + cfg.alpha * libm::sqrt(var))
    }

    /// Node ids whose value strictly exceeds the hub threshold, ascending.
    pub fn hub_set(&self, cfg: &HubConfig) -> Result<Vec<usize>> {
        let threshold = self.hub_threshold(cfg)?;
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| node.value > threshold)
            .map(|(i, _)| i)
            .collect())
    }

    /// Accumulated value of the node matching `delta`, or 0 when nothing
    /// matches at the novelty threshold (unknown transitions are neutral).
    pub fn value_of(&self, delta: &TransitionVec) -> f64 {
        if !delta.is_finite() {
            return 0.0;
        }
        let unit = match delta.normalized() {
            Some(u) => u,
            None => return 0.0,
        };
        match self.best_for_unit(&unit) {
            Some((idx, h)) if h >= self.match_threshold => self.nodes[idx].value,
            _ => 0.0,
        }
    }

    /// Applies one manual edit. Node ids are positional; removing a node
    /// shifts the ids of later nodes down by one.
    pub fn apply_edit(&mut self, edit: &MemoryEdit) -> Result<()> {
        match edit {
            MemoryEdit::Remove(id) => {
                if *id >= self.nodes.len() {
                    return Err(Error::UnknownNode(*id));
                }
                self.nodes.remove(*id);
                Ok(())
            }
            MemoryEdit::Add { delta, value } => {
                if !value.is_finite() {
                    return Err(Error::NonFinite("edit value"));
                }
                if !delta.is_finite() {
                    return Err(Error::NonFinite("transition"));
                }
                let unit = delta.normalized().ok_or(Error::DegenerateTransition)?;
                self.nodes.push(MemoryNode {
                    raw: *delta,
                    unit,
                    value: *value,
                    hits: 0,
                });
                Ok(())
            }
            MemoryEdit::SetValue(id, value) => {
                if !value.is_finite() {
                    return Err(Error::NonFinite("edit value"));
                }
                let node = self.nodes.get_mut(*id).ok_or(Error::UnknownNode(*id))?;
                node.value = *value;
                Ok(())
            }
        }
    }
}

impl crate::agent::StepObserver for TransitionMemory {
    fn on_step(
        &mut self,
        state: &StateVec,
        _action: Action,
        reward: f64,
        next_state: &StateVec,
    ) -> Result<()> {
        self.observe(&TransitionVec::between(state, next_state), reward)
            .map(|_| ())
    }
}

/// Manual memory edit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryEdit {
    /// Delete exactly one node.
    Remove(usize),
    /// Append a node without a novelty check (explicit override); the new
    /// node starts with zero hits.
    Add { delta: TransitionVec, value: f64 },
    /// Replace a node's accumulated value.
    SetValue(usize, f64),
}

/// Source of proposed actions during planning.
pub trait PlanPolicy {
    fn plan_action(&self, state: &StateVec, rng: &mut dyn RngCore) -> Result<Action>;
}

impl PlanPolicy for ActorCriticAgent {
    fn plan_action(&self, state: &StateVec, rng: &mut dyn RngCore) -> Result<Action> {
        let (action, _, _) = self.select_action(state, rng)?;
        Ok(action)
    }
}

/// One-step predictive model used during planning.
pub trait PlanDynamics {
    fn plan_next(&self, state: &StateVec, action: Action) -> Result<StateVec>;
}

impl PlanDynamics for EnvNet {
    fn plan_next(&self, state: &StateVec, action: Action) -> Result<StateVec> {
        self.predict_next(state, action)
    }
}

/// Rollout limits: plan length cap and number of attempts per decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerParams {
    pub l_max: usize,
    pub n_plans: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            l_max: 10,
            n_plans: 5,
        }
    }
}

/// Step and node of a predicted hub transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HubHit {
    /// Index into the plan's actions (the hub-reaching step).
    pub step: usize,
    /// Matched memory node.
    pub node: usize,
}

/// Candidate action sequence with its predicted consequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<Action>,
    pub predicted_states: Vec<StateVec>,
    pub predicted_transitions: Vec<TransitionVec>,
    pub hub_hit: Option<HubHit>,
    /// Memory value of the first predicted transition.
    pub first_transition_value: f64,
}

/// Snaps predicted contact flags to {0, 1} at the 0.5 threshold. Transition
/// vectors for matching are formed from snapped states so the raw contact
/// outputs neither leak noise into every cosine nor blur real touchdowns.
fn snap_contacts(state: &StateVec) -> StateVec {
    let mut out = *state;
    out.leg_left = if out.leg_left >= 0.5 { 1.0 } else { 0.0 };
    out.leg_right = if out.leg_right >= 0.5 { 1.0 } else { 0.0 };
    out
}

/// Searches for an action plan that reaches a hub transition.
///
/// Up to `n_plans` rollouts of at most `l_max` steps each sample actions
/// from the policy and advance through the dynamics model. A rollout stops
/// successfully as soon as its predicted transition matches (at the novelty
/// threshold) a node of the hub set; the first such rollout is returned,
/// truncated at the hub step. When no rollout reaches a hub, the result is a
/// length-1 plan holding the first action of the rollout whose first
/// predicted transition has the greatest memory value, lowest rollout index
/// on ties.
pub fn make_plan<P, D>(
    memory: &TransitionMemory,
    hub_cfg: &HubConfig,
    params: &PlannerParams,
    start: &StateVec,
    policy: &P,
    dynamics: &D,
    rng: &mut dyn RngCore,
) -> Result<Plan>
where
    P: PlanPolicy + ?Sized,
    D: PlanDynamics + ?Sized,
{
    if params.l_max == 0 || params.n_plans == 0 {
        return Err(Error::InvalidConfig("l_max and n_plans must be >= 1".into()));
    }
    let hubs: Vec<usize> = if memory.is_empty() {
        Vec::new()
    } else {
        memory.hub_set(hub_cfg)?
    };

    // Best fallback candidate: (rollout index, action, predicted state,
    // predicted transition, value of first transition).
    let mut fallback: Option<(usize, Action, StateVec, TransitionVec, f64)> = None;

    for rollout in 0..params.n_plans {
        let mut actions = Vec::new();
        let mut predicted_states = Vec::new();
        let mut predicted_transitions = Vec::new();
        let mut cur = *start;
        let mut first_value = 0.0;

        for step in 0..params.l_max {
            let action = policy.plan_action(&cur, &mut *rng)?;
            let next = dynamics.plan_next(&cur, action)?;
            if !next.is_finite() {
                return Err(Error::NonFinite("dynamics prediction"));
            }
            let delta = TransitionVec::between(&snap_contacts(&cur), &snap_contacts(&next));
            actions.push(action);
            predicted_states.push(next);
            predicted_transitions.push(delta);

            // One similarity scan serves both the value lookup and the hub
            // test; only the winning node is ever active.
            let matched = delta
                .normalized()
                .and_then(|unit| memory.best_for_unit(&unit))
                .filter(|&(_, h)| h >= memory.match_threshold());
            if step == 0 {
                first_value = matched.map(|(i, _)| memory.nodes[i].value).unwrap_or(0.0);
            }
            if let Some((node, _)) = matched {
                if hubs.binary_search(&node).is_ok() {
                    return Ok(Plan {
                        actions,
                        predicted_states,
                        predicted_transitions,
                        hub_hit: Some(HubHit { step, node }),
                        first_transition_value: first_value,
                    });
                }
            }
            cur = next;
        }

        let better = match &fallback {
            Some((_, _, _, _, best)) => first_value > *best,
            None => true,
        };
        if better {
            fallback = Some((
                rollout,
                actions[0],
                predicted_states[0],
                predicted_transitions[0],
                first_value,
            ));
        }
    }

    let (_, action, state, transition, value) = fallback.unwrap();
    Ok(Plan {
        actions: alloc::vec![action],
        predicted_states: alloc::vec![state],
        predicted_transitions: alloc::vec![transition],
        hub_hit: None,
        first_transition_value: value,
    })
}

/// An episode driven by the quasi-symbolic agent, with its plan log.
#[derive(Debug, Clone, PartialEq)]
pub struct QsEpisode {
    pub trace: EpisodeTrace,
    /// Every plan made, in decision order; executed actions are exactly the
    /// plans' actions truncated at episode termination.
    pub plans: Vec<Plan>,
}

/// Runs one episode by repeatedly planning from the current real state and
/// executing the plan open-loop. The memory is read-only throughout.
pub fn qs_run_episode<E, P, D>(
    memory: &TransitionMemory,
    hub_cfg: &HubConfig,
    params: &PlannerParams,
    env: &mut E,
    policy: &P,
    dynamics: &D,
    rng: &mut dyn RngCore,
) -> Result<QsEpisode>
where
    E: Environment + ?Sized,
    P: PlanPolicy + ?Sized,
    D: PlanDynamics + ?Sized,
{
    let mut steps = Vec::new();
    let mut plans = Vec::new();
    loop {
        let start = *env.state();
        let plan = make_plan(memory, hub_cfg, params, &start, policy, dynamics, &mut *rng)?;
        let mut finished = None;
        for &action in &plan.actions {
            let state = *env.state();
            let result = env.step(action)?;
            steps.push(TraceStep {
                state,
                action,
                log_prob: 0.0,
                value_estimate: 0.0,
                reward: result.reward,
                next_state: result.next_state,
            });
            if result.done {
                finished = Some(result.outcome);
                break;
            }
        }
        plans.push(plan);
        if let Some(outcome) = finished {
            return Ok(QsEpisode {
                trace: EpisodeTrace { steps, outcome },
                plans,
            });
        }
    }
}
