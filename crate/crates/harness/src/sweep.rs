//! Parameter studies over plan length, hub scale, and novelty threshold.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use qsagent_core::qs::HubConfig;

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, Aggregate, EvalOptions};
use crate::train::train;

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    LMax,
    Alpha,
    ThetaMatch,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::LMax => "l_max",
            SweepParam::Alpha => "alpha",
            SweepParam::ThetaMatch => "theta_match",
        }
    }

    /// Whether this parameter requires rebuilding the memory.
    pub fn retrains_memory(self) -> bool {
        matches!(self, SweepParam::ThetaMatch)
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l_max" | "L_max" | "lmax" => Ok(SweepParam::LMax),
            "alpha" => Ok(SweepParam::Alpha),
            "theta_match" | "theta" | "match_threshold" => Ok(SweepParam::ThetaMatch),
            other => Err(HarnessError::UnknownParameter(other.to_string())),
        }
    }
}

/// One aggregate row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub qs: Aggregate,
    pub rl: Aggregate,
    pub hub_set_size: usize,
    /// True when the row's memory was rebuilt instead of reused.
    pub retrained_memory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "parameter,value,qs_mean_reward,qs_stderr,rl_mean_reward,rl_stderr,hub_set_size,memory\n",
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{},{}",
                self.param.as_str(),
                row.value,
                row.qs.mean,
                row.qs.stderr,
                row.rl.mean,
                row.rl.stderr,
                row.hub_set_size,
                if row.retrained_memory {
                    "retrained"
                } else {
                    "checkpoint"
                }
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| HarnessError::io(path, e))
    }
}

/// Evaluates the checkpoint once per value of `param`.
///
/// `l_max` and `alpha` reuse the checkpoint as-is; `theta_match` replays the
/// checkpoint's training (same master seed and episode count) with the new
/// novelty threshold to rebuild the memory, which the report flags.
pub fn sweep(
    checkpoint: &Checkpoint,
    param: SweepParam,
    values: &[f64],
    base_opts: &EvalOptions,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(HarnessError::ConfigValue {
            key: "values".into(),
            message: "sweep needs at least one value".into(),
        });
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let row = match param {
            SweepParam::LMax => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::ConfigValue {
                        key: "values".into(),
                        message: format!("l_max value {value} is not a positive integer"),
                    });
                }
                let mut opts = base_opts.clone();
                opts.l_max = value as usize;
                let report = evaluate(checkpoint, &opts)?;
                SweepRow {
                    value,
                    qs: report.aggregate(crate::eval::AgentKind::Qs),
                    rl: report.aggregate(crate::eval::AgentKind::Rl),
                    hub_set_size: checkpoint
                        .memory
                        .hub_set(&HubConfig { alpha: opts.alpha })?
                        .len(),
                    retrained_memory: false,
                }
            }
            SweepParam::Alpha => {
                let mut opts = base_opts.clone();
                opts.alpha = value;
                let report = evaluate(checkpoint, &opts)?;
                SweepRow {
                    value,
                    qs: report.aggregate(crate::eval::AgentKind::Qs),
                    rl: report.aggregate(crate::eval::AgentKind::Rl),
                    hub_set_size: checkpoint
                        .memory
                        .hub_set(&HubConfig { alpha: value })?
                        .len(),
                    retrained_memory: false,
                }
            }
            SweepParam::ThetaMatch => {
                let mut config = checkpoint.config.clone();
                config.match_threshold = value;
                config.episodes = checkpoint.episode_index;
                let retrained = train(&config)?;
                let rebuilt = retrained.final_checkpoint();
                let report = evaluate(rebuilt, base_opts)?;
                SweepRow {
                    value,
                    qs: report.aggregate(crate::eval::AgentKind::Qs),
                    rl: report.aggregate(crate::eval::AgentKind::Rl),
                    hub_set_size: rebuilt
                        .memory
                        .hub_set(&HubConfig {
                            alpha: base_opts.alpha,
                        })?
                        .len(),
                    retrained_memory: true,
                }
            }
        };
        rows.push(row);
    }
    Ok(SweepReport { param, rows })
}
