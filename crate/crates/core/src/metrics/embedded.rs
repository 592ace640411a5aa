use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{effective_output, DerivationGraph};
use crate::hierarchy::TierAssignment;
use crate::ingest::{latest_per_pool, PoolRecord, PrefixRegistry};
use crate::token::{Category, TokenKey};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddedYieldTable {
    /// Matched creation yield per hierarchy edge (parent, child), percent.
    pub creation_yield: BTreeMap<(TokenKey, TokenKey), f64>,
    /// Pool whose APY was used for each matched edge.
    pub creation_pool: BTreeMap<(TokenKey, TokenKey), String>,
    /// Embedded yield of every mapped token.
    pub embedded: BTreeMap<TokenKey, f64>,
    /// Number of matched links on each mapped token's parent chain.
    pub match_chain_len: BTreeMap<TokenKey, usize>,
    /// Hierarchy edges that count toward the match rate (non-trading).
    pub eligible_edges: usize,
    pub matched_edges: usize,
    pub match_rate: f64,
}

impl EmbeddedYieldTable {
    /// Embedded yield of a token; zero for base, unmapped and unknown tokens.
    pub fn of(&self, k: &TokenKey) -> f64 {
        self.embedded.get(k).copied().unwrap_or(0.0)
    }
}

/// Sums creation yields down each token's parent chain.
///
/// The creation yield of a hierarchy edge `parent → child` is the APY of the
/// pool that issues `child`: non-trading pools whose (explicit or inferred)
/// output is the child, preferring single-input pools, then the largest
/// TVL, then the smallest pool id. Edges with no such pool contribute zero.
/// Each pool's latest observation is used.
pub fn build_embedded_yields(
    deriv: &DerivationGraph,
    tiers: &TierAssignment,
    records: &[PoolRecord],
    registry: &PrefixRegistry,
) -> Result<EmbeddedYieldTable> {
    let latest = latest_per_pool(records);
    let mut issuer: BTreeMap<TokenKey, &PoolRecord> = BTreeMap::new();
    for r in &latest {
        if r.category == Category::Dex || r.apy_total.is_none() {
            continue;
        }
        let Some(out) = effective_output(r, registry) else { continue };
        let key = out.key();
        if r.input_tokens.iter().any(|t| t.key() == key) {
            continue;
        }
        let better = |cur: &PoolRecord| {
            let rank = |p: &PoolRecord| (p.input_tokens.len() == 1, p.tvl_usd);
            let (a, b) = (rank(r), rank(cur));
            a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| cur.pool_id.cmp(&r.pool_id)).is_gt()
        };
        match issuer.get(&key) {
            Some(cur) if !better(cur) => {}
            _ => {
                issuer.insert(key, r);
            }
        }
    }

    // Category of the heaviest derivation edge behind each hierarchy link.
    let mut link_category: BTreeMap<(&TokenKey, &TokenKey), (f64, Category)> = BTreeMap::new();
    for e in &deriv.graph.edges {
        let slot = link_category.entry((&e.src, &e.dst)).or_insert((f64::NEG_INFINITY, e.category));
        if e.tvl_usd > slot.0 {
            *slot = (e.tvl_usd, e.category);
        }
    }

    let mut t = EmbeddedYieldTable::default();
    for (child, parent) in &tiers.parent {
        let dex = link_category.get(&(parent, child)).is_some_and(|(_, c)| *c == Category::Dex);
        if !dex {
            t.eligible_edges += 1;
        }
        if let Some(p) = issuer.get(child) {
            let edge = (parent.clone(), child.clone());
            t.creation_yield.insert(edge.clone(), p.apy_total.expect("issuers carry an APY"));
            t.creation_pool.insert(edge, p.pool_id.clone());
            if !dex {
                t.matched_edges += 1;
            }
        }
    }
    t.match_rate = if t.eligible_edges == 0 { 0.0 } else { t.matched_edges as f64 / t.eligible_edges as f64 };

    let mut order: Vec<(&TokenKey, i64)> = tiers.mapped().collect();
    order.sort_by_key(|(k, tier)| (*tier, *k));
    for (k, tier) in order {
        if tier == 0 {
            t.embedded.insert(k.clone(), 0.0);
            t.match_chain_len.insert(k.clone(), 0);
            continue;
        }
        let parent = tiers
            .parent
            .get(k)
            .ok_or_else(|| Error::Internal(format!("mapped token {} at tier {tier} has no parent", k.symbol)))?;
        let (Some(&up), Some(&len)) = (t.embedded.get(parent), t.match_chain_len.get(parent)) else {
            return Err(Error::Internal(format!("parent chain of {} is not tier-ordered", k.symbol)));
        };
        let edge = (parent.clone(), k.clone());
        let own = t.creation_yield.get(&edge).copied();
        t.embedded.insert(k.clone(), up + own.unwrap_or(0.0));
        t.match_chain_len.insert(k.clone(), len + usize::from(own.is_some()));
    }
    Ok(t)
}

/// Reported APY plus the embedded yield of the pool's primary token.
pub fn corrected_apy(pool: &PoolRecord, embedded: &EmbeddedYieldTable) -> Option<f64> {
    Some(pool.apy_total? + embedded.of(&pool.primary_token().key()))
}
