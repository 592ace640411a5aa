use serde::{Deserialize, Serialize};

use super::{compute_graph_distance_with, discover_tier0, propagate_tiers_with, Discovery, DiscoveryParams, TierAssignment};
use crate::error::Result;
use crate::graph::{build_derivation_graph, build_full_graph, detect_cycles, Cycle, DerivationGraph, FilterParams, TokenGraph};
use crate::ingest::{PoolRecord, PrefixRegistry};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub filter: FilterParams,
    pub discovery: DiscoveryParams,
}

impl PipelineParams {
    /// Filter parameters with significance thresholds taken from discovery.
    pub fn effective_filter(&self) -> FilterParams {
        FilterParams {
            min_outdeg: self.discovery.min_outdeg,
            min_src_tvl_usd: self.discovery.min_src_tvl_usd,
            ..self.filter.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyRun {
    pub full: TokenGraph,
    pub deriv: DerivationGraph,
    pub cycles: Vec<Cycle>,
    pub discovery: Discovery,
    pub tiers: TierAssignment,
}

impl HierarchyRun {
    pub fn registry(params: &PipelineParams) -> PrefixRegistry {
        params.filter.registry.clone().unwrap_or_else(PrefixRegistry::empty)
    }
}

/// Full graph → derivation graph → base tokens → tiers and distances.
///
/// `records` should already be identity-resolved. The derivation filters
/// use the discovery thresholds to decide which tokens are significant.
pub fn run_hierarchy(records: &[PoolRecord], params: &PipelineParams) -> Result<HierarchyRun> {
    let registry = HierarchyRun::registry(params);
    let full = build_full_graph(records, &registry);
    let deriv = build_derivation_graph(&full, &params.effective_filter());
    let cycles = detect_cycles(&deriv.graph);
    for c in &cycles {
        log::info!("derivation cycle of {} tokens, {:.0} USD", c.members.len(), c.tvl_usd);
    }
    let discovery = discover_tier0(&deriv, &full, &params.discovery)?;
    let mut tiers = propagate_tiers_with(&deriv, &discovery.tier0, &discovery.demotions);
    tiers.graph_distance = compute_graph_distance_with(&deriv, &discovery.tier0, &discovery.demotions);
    let div = tiers.divergence();
    if div > 0 {
        log::info!("tier and graph distance differ for {div} tokens");
    }
    Ok(HierarchyRun { full, deriv, cycles, discovery, tiers })
}
