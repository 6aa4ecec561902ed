use std::collections::BTreeMap;

use emotrans_core::planner::enumerate_transition_plans;
use emotrans_core::EmotionLabel;
use serde::{Deserialize, Serialize};

use crate::common::write_json;
use crate::config::PipelineConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInventory {
    pub alphabet: Vec<EmotionLabel>,
    /// Plan count per transition count.
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
    pub plans: BTreeMap<usize, Vec<Vec<EmotionLabel>>>,
}

pub fn inventory(max_transitions: usize) -> CliResult<PlanInventory> {
    let mut counts = BTreeMap::new();
    let mut plans = BTreeMap::new();
    for k in 0..=max_transitions {
        let ps = enumerate_transition_plans(&EmotionLabel::ALL, k)?;
        counts.insert(k, ps.len());
        plans.insert(k, ps.into_iter().map(Vec::from).collect());
    }
    Ok(PlanInventory {
        alphabet: EmotionLabel::ALL.to_vec(),
        total: counts.values().sum(),
        counts,
        plans,
    })
}

pub fn run(cfg: &PipelineConfig) -> CliResult<PlanInventory> {
    let max = cfg.dataset.transitions.iter().copied().max().unwrap_or(3);
    let inv = inventory(max)?;
    write_json(&cfg.paths.run_dir.join("plans.json"), &inv)?;
    for (k, n) in &inv.counts {
        println!("k={k}: {n} plans");
    }
    println!("total: {}", inv.total);
    Ok(inv)
}
