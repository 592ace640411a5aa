use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_hierarchy, PipelineParams, TierAssignment};
use crate::error::Error;
use crate::ingest::PoolRecord;
use crate::stats::spearman;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub label: String,
    pub pools: usize,
    pub tier0_count: Option<usize>,
    /// Tokens mapped in both the snapshot and the baseline.
    pub common: usize,
    /// Percent of common tokens with the same tier.
    pub agreement_pct: Option<f64>,
    pub spearman: Option<f64>,
    /// Why the snapshot could not be compared, if it could not.
    pub flag: Option<String>,
}

/// Re-runs the hierarchy on each snapshot and compares tiers with the
/// baseline over tokens mapped in both.
pub fn temporal_stability(
    snapshots: &[(String, Vec<PoolRecord>)],
    baseline: &TierAssignment,
    params: &PipelineParams,
) -> Vec<StabilityRow> {
    snapshots
        .par_iter()
        .map(|(label, recs)| {
            let pools = recs.iter().map(|r| r.pool_id.as_str()).collect::<BTreeSet<_>>().len();
            let run = match run_hierarchy(recs, params) {
                Ok(r) => r,
                Err(e) => {
                    let flag = match e {
                        Error::NoBaseAssets(_) => "no base tokens discovered".to_string(),
                        other => other.to_string(),
                    };
                    return StabilityRow {
                        label: label.clone(),
                        pools,
                        tier0_count: None,
                        common: 0,
                        agreement_pct: None,
                        spearman: None,
                        flag: Some(flag),
                    };
                }
            };
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (k, t) in run.tiers.mapped() {
                let bt = baseline.tier_of(k);
                if bt >= 0 {
                    a.push(t as f64);
                    b.push(bt as f64);
                }
            }
            let common = a.len();
            let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
            let rho = if common > 0 && a == b { Some(1.0) } else { spearman(&a, &b) };
            StabilityRow {
                label: label.clone(),
                pools,
                tier0_count: Some(run.discovery.tier0.len()),
                common,
                agreement_pct: (common > 0).then(|| 100.0 * same as f64 / common as f64),
                spearman: rho,
                flag: None,
            }
        })
        .collect()
}
