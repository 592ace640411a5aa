//! Base-token discovery, tier propagation and robustness analyses.

mod ablation;
mod discover;
mod export;
mod pipeline;
mod propagate;
mod sensitivity;
mod stability;

use std::collections::{BTreeMap, BTreeSet};

pub use ablation::{ablate_steps, AblationReport, AblationRow, TierChange};
pub use discover::{discover_tier0, Demotion, Discovery, DiscoveryParams};
pub use export::{read_tiers_csv, write_tiers_csv};
pub use pipeline::{run_hierarchy, HierarchyRun, PipelineParams};
pub use propagate::{compute_graph_distance, compute_graph_distance_with, propagate_tiers, propagate_tiers_with};
pub use sensitivity::{jaccard_sensitivity, write_sensitivity_csv, SensitivityCell, SensitivityGrid, SensitivityMatrix};
pub use stability::{temporal_stability, StabilityRow};

use crate::token::TokenKey;

/// Tier of an unreachable token.
pub const UNMAPPED: i64 = -1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TierAssignment {
    /// Tier per token; `UNMAPPED` when unreachable from the base set.
    pub tier: BTreeMap<TokenKey, i64>,
    /// Visit parent of every mapped non-base token.
    pub parent: BTreeMap<TokenKey, TokenKey>,
    /// Hops from the nearest base token; absent when unreachable.
    pub graph_distance: BTreeMap<TokenKey, u32>,
    pub tier0_set: BTreeSet<TokenKey>,
}

impl TierAssignment {
    pub fn tier_of(&self, k: &TokenKey) -> i64 {
        self.tier.get(k).copied().unwrap_or(UNMAPPED)
    }

    pub fn is_mapped(&self, k: &TokenKey) -> bool {
        self.tier_of(k) >= 0
    }

    pub fn mapped(&self) -> impl Iterator<Item = (&TokenKey, i64)> {
        self.tier.iter().filter(|(_, t)| **t >= 0).map(|(k, t)| (k, *t))
    }

    pub fn max_tier(&self) -> i64 {
        self.tier.values().copied().max().unwrap_or(UNMAPPED)
    }

    /// Tokens whose tier and graph distance disagree (both defined).
    pub fn divergence(&self) -> usize {
        self.mapped()
            .filter(|(k, t)| self.graph_distance.get(*k).is_some_and(|d| i64::from(*d) != *t))
            .count()
    }

    /// Parent chain from `k` up to its base token, starting with `k`.
    pub fn lineage(&self, k: &TokenKey) -> Vec<TokenKey> {
        let mut out = vec![k.clone()];
        let mut cur = k;
        while let Some(p) = self.parent.get(cur) {
            if out.len() > self.parent.len() + 1 {
                break;
            }
            out.push(p.clone());
            cur = p;
        }
        out
    }
}
