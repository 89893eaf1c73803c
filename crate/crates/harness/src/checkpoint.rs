//! Versioned text checkpoint format.
//!
//! Every numeric array is written as a labeled line of shortest
//! round-trip decimal floats, so `load(save(x)) == x` bit for bit. Corrupt
//! files, version mismatches, and truncation are reported distinctly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qsagent_core::agent::ActorCriticAgent;
use qsagent_core::envmodel::EnvNet;
use qsagent_core::nn::{Mlp, OptimizerState, OutputHead};
use qsagent_core::qs::{TransitionMemory, TransitionVec};

use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};

const MAGIC: &str = "qsagent-checkpoint";
const VERSION: u32 = 1;

/// Full serialized training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub episode_index: u64,
    pub agent: ActorCriticAgent,
    pub envnet: EnvNet,
    pub memory: TransitionMemory,
}

impl Checkpoint {
    pub fn master_seed(&self) -> u64 {
        self.config.master_seed
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} v{VERSION}");
        out.push_str("[config]\n");
        out.push_str(&self.config.to_text());
        out.push_str("[state]\n");
        let _ = writeln!(out, "episode_index={}", self.episode_index);
        write_mlp(&mut out, "actor", &self.agent.actor);
        write_opt(&mut out, "actor_opt", &self.agent.actor_opt);
        write_mlp(&mut out, "critic", &self.agent.critic);
        write_opt(&mut out, "critic_opt", &self.agent.critic_opt);
        write_mlp(&mut out, "envnet", &self.envnet.net);
        write_opt(&mut out, "envnet_opt", &self.envnet.opt);
        out.push_str("[memory]\n");
        let _ = writeln!(out, "nodes={}", self.memory.len());
        for node in self.memory.nodes() {
            for v in &node.raw.0 {
                let _ = write!(out, "{v:?} ");
            }
            let _ = writeln!(out, "{:?} {}", node.value, node.hits);
        }
        out.push_str("[end]\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut reader = Reader::new(text);

        let header = reader.next_line()?;
        match header.strip_prefix(&format!("{MAGIC} v")) {
            Some(v) if v == VERSION.to_string() => {}
            Some(v) => {
                return Err(HarnessError::VersionMismatch {
                    found: v.to_string(),
                    expected: VERSION,
                })
            }
            None => {
                return Err(HarnessError::Corrupt(format!(
                    "bad header line {header:?}"
                )))
            }
        }

        reader.expect("[config]")?;
        let mut config_lines = String::new();
        while !reader.peek()?.starts_with('[') {
            config_lines.push_str(reader.next_line()?);
            config_lines.push('\n');
        }
        let config = TrainConfig::from_text(&config_lines)?;

        reader.expect("[state]")?;
        let episode_index = reader
            .key_value("episode_index")?
            .parse()
            .map_err(|_| HarnessError::Corrupt("bad episode_index".into()))?;

        let actor = read_mlp(&mut reader, "actor")?;
        let actor_opt = read_opt(&mut reader, "actor_opt", &actor)?;
        let critic = read_mlp(&mut reader, "critic")?;
        let critic_opt = read_opt(&mut reader, "critic_opt", &critic)?;
        let envnet_mlp = read_mlp(&mut reader, "envnet")?;
        let envnet_opt = read_opt(&mut reader, "envnet_opt", &envnet_mlp)?;

        reader.expect("[memory]")?;
        let node_count: usize = reader
            .key_value("nodes")?
            .parse()
            .map_err(|_| HarnessError::Corrupt("bad node count".into()))?;
        let mut parts = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let line = reader.next_line()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 10 {
                return Err(HarnessError::Corrupt(format!(
                    "memory node line has {} fields, expected 10",
                    fields.len()
                )));
            }
            let mut raw = [0.0; 8];
            for (slot, field) in raw.iter_mut().zip(&fields[..8]) {
                *slot = parse_f64(field)?;
            }
            let value = parse_f64(fields[8])?;
            let hits: u64 = fields[9]
                .parse()
                .map_err(|_| HarnessError::Corrupt("bad hit count".into()))?;
            parts.push((TransitionVec(raw), value, hits));
        }
        let memory = TransitionMemory::from_parts(config.match_threshold, parts)?;

        reader.expect("[end]")?;

        let agent = ActorCriticAgent {
            actor,
            critic,
            actor_opt,
            critic_opt,
            base_lr: config.actor_critic_lr,
            gamma: config.gamma,
        };
        let envnet = EnvNet::from_parts(envnet_mlp, envnet_opt, config.envnet_lr)?;

        Ok(Checkpoint {
            config,
            episode_index,
            agent,
            envnet,
            memory,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_text(&text)
    }
}

fn head_name(head: OutputHead) -> &'static str {
    match head {
        OutputHead::Linear => "linear",
        OutputHead::Simplex => "simplex",
    }
}

fn write_floats(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key}=");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

fn write_mlp(out: &mut String, name: &str, mlp: &Mlp) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, "head={}", head_name(mlp.head()));
    let _ = write!(out, "layers=");
    let sizes = mlp.layer_sizes();
    for (i, s) in sizes.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{s}");
    }
    out.push('\n');
    for (l, (w, b)) in mlp.weights().iter().zip(mlp.biases()).enumerate() {
        write_floats(out, &format!("weights{l}"), w);
        write_floats(out, &format!("biases{l}"), b);
    }
}

fn write_opt(out: &mut String, name: &str, opt: &OptimizerState) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, "step_count={}", opt.step_count);
    for l in 0..opt.m_weights.len() {
        write_floats(out, &format!("m_weights{l}"), &opt.m_weights[l]);
        write_floats(out, &format!("v_weights{l}"), &opt.v_weights[l]);
        write_floats(out, &format!("m_biases{l}"), &opt.m_biases[l]);
        write_floats(out, &format!("v_biases{l}"), &opt.v_biases[l]);
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| HarnessError::Corrupt(format!("bad float {field:?}")))
}

fn parse_floats(value: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = value
        .split_whitespace()
        .map(parse_f64)
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(HarnessError::Corrupt(format!(
            "array has {} entries, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_mlp(reader: &mut Reader, name: &str) -> Result<Mlp> {
    reader.expect(&format!("[{name}]"))?;
    let head = match reader.key_value("head")? {
        "linear" => OutputHead::Linear,
        "simplex" => OutputHead::Simplex,
        other => {
            return Err(HarnessError::Corrupt(format!(
                "unknown output head {other:?}"
            )))
        }
    };
    let sizes: Vec<usize> = reader
        .key_value("layers")?
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| HarnessError::Corrupt("bad layer size".into()))
        })
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(HarnessError::Corrupt("too few layers".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..sizes.len() - 1 {
        weights.push(parse_floats(
            reader.key_value(&format!("weights{l}"))?,
            sizes[l] * sizes[l + 1],
        )?);
        biases.push(parse_floats(
            reader.key_value(&format!("biases{l}"))?,
            sizes[l + 1],
        )?);
    }
    Ok(Mlp::from_parts(sizes, weights, biases, head)?)
}

fn read_opt(reader: &mut Reader, name: &str, mlp: &Mlp) -> Result<OptimizerState> {
    reader.expect(&format!("[{name}]"))?;
    let step_count: u64 = reader
        .key_value("step_count")?
        .parse()
        .map_err(|_| HarnessError::Corrupt("bad step_count".into()))?;
    let mut opt = OptimizerState::zeros_like(mlp);
    opt.step_count = step_count;
    let sizes = mlp.layer_sizes();
    for l in 0..sizes.len() - 1 {
        let w_len = sizes[l] * sizes[l + 1];
        let b_len = sizes[l + 1];
        opt.m_weights[l] = parse_floats(reader.key_value(&format!("m_weights{l}"))?, w_len)?;
        opt.v_weights[l] = parse_floats(reader.key_value(&format!("v_weights{l}"))?, w_len)?;
        opt.m_biases[l] = parse_floats(reader.key_value(&format!("m_biases{l}"))?, b_len)?;
        opt.v_biases[l] = parse_floats(reader.key_value(&format!("v_biases{l}"))?, b_len)?;
    }
    Ok(opt)
}

/// Strict line cursor: EOF anywhere before `[end]` means truncation.
struct Reader<'a> {
    lines: std::str::Lines<'a>,
    peeked: Option<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines(),
            peeked: None,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        if let Some(line) = self.peeked.take() {
            return Ok(line);
        }
        self.lines.next().ok_or(HarnessError::Truncated)
    }

    fn peek(&mut self) -> Result<&'a str> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lines.next().ok_or(HarnessError::Truncated)?);
        }
        Ok(self.peeked.unwrap())
    }

    fn expect(&mut self, expected: &str) -> Result<()> {
        let line = self.next_line()?;
        if line != expected {
            return Err(HarnessError::Corrupt(format!(
                "expected {expected:?}, found {line:?}"
            )));
        }
        Ok(())
    }

    fn key_value(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| HarnessError::Corrupt(format!("expected key {key:?}, found {line:?}")))
    }
}
