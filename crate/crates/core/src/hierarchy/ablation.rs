use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_hierarchy, PipelineParams, TierAssignment, UNMAPPED};
use crate::error::Result;
use crate::graph::FilterStep;
use crate::ingest::PoolRecord;
use crate::token::TokenKey;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierChange {
    pub token: TokenKey,
    pub before: i64,
    pub after: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub step: FilterStep,
    pub core_changes: Vec<TierChange>,
    /// Tokens whose tier differs from the baseline.
    pub reassigned: usize,
    pub total: usize,
    pub share: f64,
    /// Set when the pipeline failed with this step disabled; every token is
    /// then counted as unmapped.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub baseline: TierAssignment,
    pub rows: Vec<AblationRow>,
}

/// Disables each enabled filter step in turn and compares tiers with the
/// full pipeline.
pub fn ablate_steps(records: &[PoolRecord], params: &PipelineParams, core: &[TokenKey]) -> Result<AblationReport> {
    let baseline = run_hierarchy(records, params)?.tiers;
    let steps: Vec<FilterStep> = FilterStep::ALL.into_iter().filter(|s| params.filter.steps.enabled(*s)).collect();
    let rows = steps
        .par_iter()
        .map(|&step| {
            let mut p = params.clone();
            p.filter.steps.set(step, false);
            let (tiers, error) = match run_hierarchy(records, &p) {
                Ok(run) => (run.tiers.tier, None),
                Err(e) => (BTreeMap::new(), Some(e.to_string())),
            };
            let after = |k: &TokenKey| tiers.get(k).copied().unwrap_or(UNMAPPED);
            let total = baseline.tier.len();
            let reassigned = baseline.tier.iter().filter(|(k, t)| after(k) != **t).count();
            let core_changes = core
                .iter()
                .filter_map(|k| {
                    let (before, now) = (baseline.tier_of(k), after(k));
                    (before != now).then(|| TierChange { token: k.clone(), before, after: now })
                })
                .collect();
            AblationRow {
                step,
                core_changes,
                reassigned,
                total,
                share: if total == 0 { 0.0 } else { reassigned as f64 / total as f64 },
                error,
            }
        })
        .collect();
    Ok(AblationReport { baseline, rows })
}
