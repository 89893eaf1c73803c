//! Self-contained lunar-lander simulation.
//!
//! Simplified rigid-body physics under explicit-Euler integration: 8 state
//! variables, 4 discrete actions, potential-based reward shaping, and
//! terminal bonuses. Episodes are deterministic given the reset seed and the
//! action sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of state variables.
pub const STATE_DIM: usize = 8;
/// Number of discrete actions.
pub const ACTION_DIM: usize = 4;

/// Speed below which leg contact counts as a landing.
const LANDED_SPEED: f64 = 0.1;

/// Lander state: position, velocity, attitude, and leg-contact flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVec {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub theta: f64,
    pub omega: f64,
    pub leg_left: f64,
    pub leg_right: f64,
}

impl StateVec {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.theta,
            self.omega,
            self.leg_left,
            self.leg_right,
        ]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        StateVec {
            x: a[0],
            y: a[1],
            vx: a[2],
            vy: a[3],
            theta: a[4],
            omega: a[5],
            leg_left: a[6],
            leg_right: a[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Translational speed.
    pub fn speed(&self) -> f64 {
        libm::sqrt(self.vx * self.vx + self.vy * self.vy)
    }
}

/// Discrete engine commands, in the fixed one-hot index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Nop = 0,
    LeftEngine = 1,
    MainEngine = 2,
    RightEngine = 3,
}

impl Action {
    pub const ALL: [Action; ACTION_DIM] = [
        Action::Nop,
        Action::LeftEngine,
        Action::MainEngine,
        Action::RightEngine,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; ACTION_DIM] {
        let mut v = [0.0; ACTION_DIM];
        v[self.index()] = 1.0;
        v
    }
}

/// How an episode step left the lander.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Landed,
    Crashed,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Landed => "landed",
            Outcome::Crashed => "crashed",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s {
            "running" => Some(Outcome::Running),
            "landed" => Some(Outcome::Landed),
            "crashed" => Some(Outcome::Crashed),
            "out_of_bounds" => Some(Outcome::OutOfBounds),
            "timeout" => Some(Outcome::Timeout),
            _ => None,
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: StateVec,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// Physics and episode constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub gravity: f64,
    pub main_accel: f64,
    pub side_torque: f64,
    pub side_accel: f64,
    pub leg_height: f64,
    pub crash_speed: f64,
    pub crash_angle: f64,
    pub x_bound: f64,
    pub max_steps: u32,
    pub fuel_cost_main: f64,
    pub fuel_cost_side: f64,
    pub terminal_bonus: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.02,
            gravity: 10.0,
            main_accel: 15.0,
            side_torque: 3.0,
            side_accel: 1.0,
            leg_height: 0.1,
            crash_speed: 1.0,
            crash_angle: 0.5,
            x_bound: 1.5,
            max_steps: 500,
            fuel_cost_main: 0.3,
            fuel_cost_side: 0.03,
            terminal_bonus: 100.0,
        }
    }
}

/// Potential used for reward shaping.
pub fn shaping(s: &StateVec) -> f64 {
    -100.0 * libm::sqrt(s.x * s.x + s.y * s.y) - 100.0 * s.speed() - 100.0 * s.theta.abs()
        + 10.0 * (s.leg_left + s.leg_right)
}

/// Per-step reward: shaping difference, fuel cost, and terminal bonus.
pub fn reward_of(
    cfg: &EnvConfig,
    prev: &StateVec,
    next: &StateVec,
    action: Action,
    outcome: Outcome,
) -> f64 {
    let fuel = match action {
        Action::MainEngine => cfg.fuel_cost_main,
        Action::LeftEngine | Action::RightEngine => cfg.fuel_cost_side,
        Action::Nop => 0.0,
    };
    let bonus = match outcome {
        Outcome::Landed => cfg.terminal_bonus,
        Outcome::Crashed | Outcome::OutOfBounds => -cfg.terminal_bonus,
        Outcome::Running | Outcome::Timeout => 0.0,
    };
    shaping(next) - shaping(prev) - fuel + bonus
}

/// Episode-oriented environment surface shared by the real lander and test
/// stand-ins.
pub trait Environment {
    /// Current state.
    fn state(&self) -> &StateVec;
    /// Advances one step; errors once the episode has terminated.
    fn step(&mut self, action: Action) -> Result<StepResult>;
    /// Whether the episode has terminated.
    fn is_done(&self) -> bool;
}

/// Deterministic, seedable lander environment.
#[derive(Debug, Clone)]
pub struct LanderEnv {
    cfg: EnvConfig,
    state: StateVec,
    steps: u32,
    done: bool,
    prev_shaping: f64,
}

impl LanderEnv {
    /// Builds an environment that must be [`reset`](Self::reset) before stepping.
    pub fn new(cfg: EnvConfig) -> Self {
        let state = StateVec::from_array([0.0; STATE_DIM]);
        LanderEnv {
            cfg,
            state,
            steps: 0,
            done: true,
            prev_shaping: shaping(&state),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &StateVec {
        &self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts a fresh episode with the initial state drawn from `seed`.
    pub fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = StateVec {
            x: rng.gen_range(-0.3..0.3),
            y: 1.4,
            vx: rng.gen_range(-0.5..0.5),
            vy: rng.gen_range(-0.5..0.0),
            theta: 0.0,
            omega: rng.gen_range(-0.1..0.1),
            leg_left: 0.0,
            leg_right: 0.0,
        };
        self.state = state;
        self.steps = 0;
        self.done = false;
        self.prev_shaping = shaping(&state);
        state
    }

    /// Overrides the current state; clears the termination flag and refreshes
    /// the shaping baseline. The step counter is left unchanged.
    pub fn set_state(&mut self, state: StateVec) {
        self.state = state;
        self.done = false;
        self.prev_shaping = shaping(&state);
    }

    /// Advances one explicit-Euler step of `dt` under `action`.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let cfg = self.cfg;
        let s = self.state;

        // Accelerations from gravity and the fired engine, using the current
        // attitude. Body-up is (-sin theta, cos theta); body-right is
        // (cos theta, sin theta).
        let (sin_t, cos_t) = (libm::sin(s.theta), libm::cos(s.theta));
        let mut ax = 0.0;
        let mut ay = -cfg.gravity;
        let mut torque = 0.0;
        match action {
            Action::Nop => {}
            Action::MainEngine => {
                ax += cfg.main_accel * -sin_t;
                ay += cfg.main_accel * cos_t;
            }
            Action::LeftEngine => {
                torque = cfg.side_torque;
                ax += -cfg.side_accel * cos_t;
                ay += -cfg.side_accel * sin_t;
            }
            Action::RightEngine => {
                torque = -cfg.side_torque;
                ax += cfg.side_accel * cos_t;
                ay += cfg.side_accel * sin_t;
            }
        }

        // Explicit Euler: positions and attitude advance on the pre-step
        // velocities, then velocities take the accelerations.
        let mut next = s;
        next.x = s.x + s.vx * cfg.dt;
        next.y = s.y + s.vy * cfg.dt;
        next.theta = s.theta + s.omega * cfg.dt;
        next.vx = s.vx + ax * cfg.dt;
        next.vy = s.vy + ay * cfg.dt;
        next.omega = s.omega + torque * cfg.dt;

        let mut outcome = Outcome::Running;

        // Ground interaction.
        if next.y <= 0.0 {
            if next.vy.abs() > cfg.crash_speed || next.theta.abs() > cfg.crash_angle {
                outcome = Outcome::Crashed;
            } else {
                // Pad support: rest on the surface.
                next.y = 0.0;
                next.vy = 0.0;
            }
        }

        let contact = next.y <= cfg.leg_height && next.theta.abs() < cfg.crash_angle;
        next.leg_left = if contact { 1.0 } else { 0.0 };
        next.leg_right = if contact { 1.0 } else { 0.0 };

        self.steps += 1;
        if outcome == Outcome::Running {
            if contact && next.speed() < LANDED_SPEED {
                outcome = Outcome::Landed;
            } else if next.x.abs() > cfg.x_bound {
                outcome = Outcome::OutOfBounds;
            } else if self.steps >= cfg.max_steps {
                outcome = Outcome::Timeout;
            }
        }

        let new_shaping = shaping(&next);
        let fuel = match action {
            Action::MainEngine => cfg.fuel_cost_main,
            Action::LeftEngine | Action::RightEngine => cfg.fuel_cost_side,
            Action::Nop => 0.0,
        };
        let bonus = match outcome {
            Outcome::Landed => cfg.terminal_bonus,
            Outcome::Crashed | Outcome::OutOfBounds => -cfg.terminal_bonus,
            Outcome::Running | Outcome::Timeout => 0.0,
        };
        let reward = new_shaping - self.prev_shaping - fuel + bonus;

        self.prev_shaping = new_shaping;
        self.state = next;
        self.done = outcome != Outcome::Running;

        Ok(StepResult {
            next_state: next,
            reward,
            done: self.done,
            outcome,
        })
    }
}

impl Environment for LanderEnv {
    fn state(&self) -> &StateVec {
        LanderEnv::state(self)
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        LanderEnv::step(self, action)
    }

    fn is_done(&self) -> bool {
        LanderEnv::is_done(self)
    }
}
