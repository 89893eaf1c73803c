//! Training configuration and its flat `key=value` file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qsagent_core::env::EnvConfig;

use crate::error::{HarnessError, Result};

/// Everything a training run needs. Defaults are the full-scale protocol;
/// desk-scale runs override `episodes` (and the evaluation sizes) explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: u64,
    pub eval_every: u64,
    pub master_seed: u64,
    pub gamma: f64,
    /// Initial actor/critic learning rate.
    pub actor_critic_lr: f64,
    /// Initial dynamics-model learning rate.
    pub envnet_lr: f64,
    /// Novelty threshold of the transition memory.
    pub match_threshold: f64,
    /// Hub-extraction scale constant.
    pub alpha: f64,
    /// Maximum plan length.
    pub l_max: usize,
    /// Plan attempts per decision.
    pub n_plans: usize,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 5000,
            eval_every: 1000,
            master_seed: 0,
            gamma: 0.99,
            actor_critic_lr: 0.003,
            envnet_lr: 0.05,
            match_threshold: 0.97,
            alpha: 0.1,
            l_max: 10,
            n_plans: 5,
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(HarnessError::ConfigValue {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if self.episodes == 0 {
            return bad("episodes", "must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be >= 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must be in (0, 1]");
        }
        if !(self.actor_critic_lr > 0.0) {
            return bad("actor_critic_lr", "must be positive");
        }
        if !(self.envnet_lr > 0.0) {
            return bad("envnet_lr", "must be positive");
        }
        if !self.match_threshold.is_finite() {
            return bad("match_threshold", "must be finite");
        }
        if !self.alpha.is_finite() {
            return bad("alpha", "must be finite");
        }
        if self.l_max == 0 {
            return bad("l_max", "must be >= 1");
        }
        if self.n_plans == 0 {
            return bad("n_plans", "must be >= 1");
        }
        if !(self.env.dt > 0.0) {
            return bad("env.dt", "must be positive");
        }
        if self.env.max_steps == 0 {
            return bad("env.max_steps", "must be >= 1");
        }
        Ok(())
    }

    /// Serializes every field as one `key=value` line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.env;
        vec![
            ("episodes", self.episodes.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("gamma", format!("{:?}", self.gamma)),
            ("actor_critic_lr", format!("{:?}", self.actor_critic_lr)),
            ("envnet_lr", format!("{:?}", self.envnet_lr)),
            ("match_threshold", format!("{:?}", self.match_threshold)),
            ("alpha", format!("{:?}", self.alpha)),
            ("l_max", self.l_max.to_string()),
            ("n_plans", self.n_plans.to_string()),
            ("env.dt", format!("{:?}", e.dt)),
            ("env.gravity", format!("{:?}", e.gravity)),
            ("env.main_accel", format!("{:?}", e.main_accel)),
            ("env.side_torque", format!("{:?}", e.side_torque)),
            ("env.side_accel", format!("{:?}", e.side_accel)),
            ("env.leg_height", format!("{:?}", e.leg_height)),
            ("env.crash_speed", format!("{:?}", e.crash_speed)),
            ("env.crash_angle", format!("{:?}", e.crash_angle)),
            ("env.x_bound", format!("{:?}", e.x_bound)),
            ("env.max_steps", e.max_steps.to_string()),
            ("env.fuel_cost_main", format!("{:?}", e.fuel_cost_main)),
            ("env.fuel_cost_side", format!("{:?}", e.fuel_cost_side)),
            ("env.terminal_bonus", format!("{:?}", e.terminal_bonus)),
        ]
    }

    /// Parses the flat format; missing keys keep their defaults, unknown
    /// keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::MalformedLine(raw.to_string()))?;
            let key = key.trim();
            let value = value.trim();
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| HarnessError::ConfigValue {
                key: key.to_string(),
                message: format!("cannot parse {value:?}"),
            })
        }
        match key {
            "episodes" => self.episodes = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "master_seed" => self.master_seed = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "actor_critic_lr" => self.actor_critic_lr = parse(key, value)?,
            "envnet_lr" => self.envnet_lr = parse(key, value)?,
            "match_threshold" => self.match_threshold = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "l_max" => self.l_max = parse(key, value)?,
            "n_plans" => self.n_plans = parse(key, value)?,
            "env.dt" => self.env.dt = parse(key, value)?,
            "env.gravity" => self.env.gravity = parse(key, value)?,
            "env.main_accel" => self.env.main_accel = parse(key, value)?,
            "env.side_torque" => self.env.side_torque = parse(key, value)?,
            "env.side_accel" => self.env.side_accel = parse(key, value)?,
            "env.leg_height" => self.env.leg_height = parse(key, value)?,
            "env.crash_speed" => self.env.crash_speed = parse(key, value)?,
            "env.crash_angle" => self.env.crash_angle = parse(key, value)?,
            "env.x_bound" => self.env.x_bound = parse(key, value)?,
            "env.max_steps" => self.env.max_steps = parse(key, value)?,
            "env.fuel_cost_main" => self.env.fuel_cost_main = parse(key, value)?,
            "env.fuel_cost_side" => self.env.fuel_cost_side = parse(key, value)?,
            "env.terminal_bonus" => self.env.terminal_bonus = parse(key, value)?,
            _ => return Err(HarnessError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }
}
