use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DerivationGraph, TokenGraph};
use crate::token::TokenKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryParams {
    pub min_outdeg: usize,
    pub min_src_tvl_usd: f64,
    pub demotion_ratio: f64,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        Self { min_outdeg: 3, min_src_tvl_usd: 1e6, demotion_ratio: 1000.0 }
    }
}

impl DiscoveryParams {
    /// Thresholds must be positive; a zero TVL floor is allowed so that the
    /// sensitivity grid can include an unfiltered column.
    pub fn validate(&self) -> Result<()> {
        if self.min_outdeg == 0 {
            return Err(Error::Config("min_outdeg must be at least 1".into()));
        }
        if !(self.min_src_tvl_usd >= 0.0 && self.min_src_tvl_usd.is_finite()) {
            return Err(Error::Config("min_src_tvl_usd must be finite and non-negative".into()));
        }
        if !(self.demotion_ratio > 0.0 && self.demotion_ratio.is_finite()) {
            return Err(Error::Config("demotion_ratio must be positive".into()));
        }
        Ok(())
    }
}

/// A candidate demoted to tier 1 under an alias parent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Demotion {
    pub token: TokenKey,
    pub parent: TokenKey,
    pub token_tvl: f64,
    pub parent_tvl: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Discovery {
    pub candidates: BTreeSet<TokenKey>,
    pub tier0: BTreeSet<TokenKey>,
    pub demotions: Vec<Demotion>,
}

/// Finds base tokens: no incoming derivation edge, at least `min_outdeg`
/// distinct successors and `min_src_tvl_usd` outgoing TVL in the full graph.
///
/// A candidate whose symbol extends another candidate's symbol on the same
/// chain (`WETH` over `ETH`) is demoted to tier 1 under it, unless the
/// parent is more than `demotion_ratio` times smaller.
pub fn discover_tier0(deriv: &DerivationGraph, full: &TokenGraph, p: &DiscoveryParams) -> Result<Discovery> {
    p.validate()?;
    let indeg = deriv.graph.in_degrees();
    let stats = full.source_stats();
    let candidates: BTreeSet<TokenKey> = stats
        .iter()
        .filter(|(k, s)| {
            indeg.get(*k).copied().unwrap_or(0) == 0 && s.out_degree >= p.min_outdeg && s.source_tvl >= p.min_src_tvl_usd
        })
        .map(|(k, _)| k.clone())
        .collect();
    if candidates.is_empty() {
        let roots = indeg.values().filter(|d| **d == 0).count();
        let best = stats
            .iter()
            .filter(|(k, _)| indeg.get(*k).copied().unwrap_or(0) == 0)
            .max_by(|a, b| a.1.source_tvl.total_cmp(&b.1.source_tvl))
            .map(|(k, s)| format!("; largest root {}@{} has out-degree {} and source TVL {:.0}", k.symbol, k.chain, s.out_degree, s.source_tvl))
            .unwrap_or_default();
        return Err(Error::NoBaseAssets(format!(
            "{} tokens, {roots} without incoming derivation edges, none with out-degree >= {} and source TVL >= {}{best}",
            full.node_count(),
            p.min_outdeg,
            p.min_src_tvl_usd
        )));
    }

    let tvl = |k: &TokenKey| stats.get(k).map(|s| s.source_tvl).unwrap_or(0.0);
    // Shorter symbols first: a parent is always shorter than its child, so
    // its own status is settled before it is considered.
    let mut order: Vec<&TokenKey> = candidates.iter().collect();
    order.sort_by(|a, b| a.symbol.len().cmp(&b.symbol.len()).then_with(|| a.cmp(b)));
    let mut demoted: BTreeMap<TokenKey, Demotion> = BTreeMap::new();
    for b in &order {
        let parent = candidates
            .iter()
            .filter(|a| {
                a.chain == b.chain
                    && a.symbol.len() >= 2
                    && a.symbol.len() < b.symbol.len()
                    && (b.symbol.starts_with(&a.symbol) || b.symbol.ends_with(&a.symbol))
                    && !demoted.contains_key(*a)
                    && tvl(a) >= tvl(b) / p.demotion_ratio
            })
            .max_by(|x, y| {
                x.symbol.len().cmp(&y.symbol.len()).then_with(|| tvl(x).total_cmp(&tvl(y))).then_with(|| y.cmp(x))
            });
        if let Some(a) = parent {
            log::debug!("demoting {}@{} under {}", b.symbol, b.chain, a.symbol);
            demoted.insert(
                (*b).clone(),
                Demotion { token: (*b).clone(), parent: a.clone(), token_tvl: tvl(b), parent_tvl: tvl(a) },
            );
        }
    }
    let tier0 = candidates.iter().filter(|k| !demoted.contains_key(*k)).cloned().collect();
    Ok(Discovery { candidates, tier0, demotions: demoted.into_values().collect() })
}
