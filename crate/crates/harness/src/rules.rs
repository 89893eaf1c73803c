//! Human-readable rule table: one line per memory node.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qsagent_core::qs::HubConfig;

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};

pub const RULES_HEADER: &str =
    "node_id\tdx\tdy\tdvx\tdvy\tdtheta\tdomega\tdleg_left\tdleg_right\tvalue\thits\thub";

/// Renders the memory as a tab-separated table, sorted by value descending
/// (node id breaks ties). Hub flags use the checkpoint's alpha.
pub fn rules_text(checkpoint: &Checkpoint) -> Result<String> {
    let memory = &checkpoint.memory;
    if memory.is_empty() {
        return Err(HarnessError::EmptyMemory);
    }
    let hubs = memory.hub_set(&HubConfig {
        alpha: checkpoint.config.alpha,
    })?;

    let mut order: Vec<usize> = (0..memory.len()).collect();
    order.sort_by(|&a, &b| {
        memory.nodes()[b]
            .value
            .partial_cmp(&memory.nodes()[a].value)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut out = String::from(RULES_HEADER);
    out.push('\n');
    for id in order {
        let node = &memory.nodes()[id];
        let _ = write!(out, "{id}");
        for v in &node.raw.0 {
            let _ = write!(out, "\t{v:?}");
        }
        let _ = writeln!(
            out,
            "\t{:?}\t{}\t{}",
            node.value,
            node.hits,
            if hubs.binary_search(&id).is_ok() { 1 } else { 0 }
        );
    }
    Ok(out)
}

pub fn export_rules(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let text = rules_text(checkpoint)?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
