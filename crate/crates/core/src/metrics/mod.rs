//! Layering multiplier, its decomposition by protocol type, tier transition
//! shares and embedded yields.

mod embedded;
mod export;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use embedded::{build_embedded_yields, corrected_apy, EmbeddedYieldTable};
pub use export::{write_embedded_csv, write_multiplier_series_csv, write_transition_csv};

use crate::econ::Period;
use crate::error::{Error, Result};
use crate::graph::{build_derivation_graph, build_full_graph, DerivationGraph};
use crate::hierarchy::{PipelineParams, TierAssignment};
use crate::ingest::{latest_per_pool, PoolRecord, PrefixRegistry};
use crate::token::{ProtocolGroup, TokenKey};

pub const GROUPS: [ProtocolGroup; 4] = [ProtocolGroup::Lending, ProtocolGroup::Staking, ProtocolGroup::Dex, ProtocolGroup::Other];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierReport {
    pub lm: f64,
    pub tvl_mapped: f64,
    pub tvl_tier0: f64,
    /// TVL on unmapped tokens, left out of both sums.
    pub tvl_unmapped: f64,
    /// Share of mapped TVL per tier.
    pub tier_shares: BTreeMap<i64, f64>,
    /// ΔLM per protocol group; empty until decomposed.
    pub decomposition: BTreeMap<ProtocolGroup, f64>,
}

/// Splits each pool's TVL equally over its input tokens. Only the latest
/// observation of each pool counts.
pub fn token_tvl_attribution(records: &[PoolRecord]) -> BTreeMap<TokenKey, f64> {
    let mut out: BTreeMap<TokenKey, f64> = BTreeMap::new();
    for r in latest_per_pool(records) {
        if r.input_tokens.is_empty() {
            continue;
        }
        let share = r.tvl_usd / r.input_tokens.len() as f64;
        for t in &r.input_tokens {
            *out.entry(t.key()).or_default() += share;
        }
    }
    out
}

/// Mapped TVL over base-token TVL.
pub fn layering_multiplier(attribution: &BTreeMap<TokenKey, f64>, tiers: &TierAssignment) -> Result<MultiplierReport> {
    let mut by_tier: BTreeMap<i64, f64> = BTreeMap::new();
    let mut unmapped = 0.0;
    for (k, v) in attribution {
        match tiers.tier_of(k) {
            t if t >= 0 => *by_tier.entry(t).or_default() += v,
            _ => unmapped += v,
        }
    }
    let tvl_tier0 = by_tier.get(&0).copied().unwrap_or(0.0);
    if tvl_tier0 <= 0.0 {
        return Err(Error::UndefinedMultiplier);
    }
    let tvl_mapped: f64 = by_tier.values().sum();
    let tier_shares = by_tier.iter().map(|(t, v)| (*t, v / tvl_mapped)).collect();
    Ok(MultiplierReport {
        lm: tvl_mapped / tvl_tier0,
        tvl_mapped,
        tvl_tier0,
        tvl_unmapped: unmapped,
        tier_shares,
        decomposition: BTreeMap::new(),
    })
}

/// Allocates `lm - 1` to protocol groups by their share of TVL on
/// tier-increasing derivation edges.
pub fn decompose_multiplier(deriv: &DerivationGraph, tiers: &TierAssignment, lm: f64) -> Result<BTreeMap<ProtocolGroup, f64>> {
    let mut tvl: BTreeMap<ProtocolGroup, f64> = GROUPS.iter().map(|g| (*g, 0.0)).collect();
    for e in &deriv.graph.edges {
        let (s, d) = (tiers.tier_of(&e.src), tiers.tier_of(&e.dst));
        if s >= 0 && d == s + 1 {
            *tvl.get_mut(&e.category.group()).expect("all groups present") += e.tvl_usd;
        }
    }
    let total: f64 = tvl.values().sum();
    if total <= 0.0 {
        if (lm - 1.0).abs() <= 1e-12 {
            return Ok(tvl);
        }
        return Err(Error::Inconsistent(format!("multiplier {lm} above one but no TVL on tier-increasing edges")));
    }
    let excess = lm - 1.0;
    let out = tvl.iter().map(|(g, v)| (*g, excess * v / total)).collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    /// Tier of the source; the row describes `from → from + 1`.
    pub from: i64,
    pub total_tvl: f64,
    pub shares: BTreeMap<ProtocolGroup, f64>,
}

/// Protocol-group shares of edge TVL for each tier transition. Transitions
/// without edges (or with zero TVL) are omitted.
pub fn tier_transition_table(deriv: &DerivationGraph, tiers: &TierAssignment) -> Vec<TransitionRow> {
    let mut rows: BTreeMap<i64, BTreeMap<ProtocolGroup, f64>> = BTreeMap::new();
    for e in &deriv.graph.edges {
        let (s, d) = (tiers.tier_of(&e.src), tiers.tier_of(&e.dst));
        if s >= 0 && d == s + 1 {
            *rows.entry(s).or_default().entry(e.category.group()).or_default() += e.tvl_usd;
        }
    }
    rows.into_iter()
        .filter_map(|(from, m)| {
            let total: f64 = m.values().sum();
            (total > 0.0).then(|| TransitionRow {
                from,
                total_tvl: total,
                shares: GROUPS.iter().map(|g| (*g, m.get(g).copied().unwrap_or(0.0) / total)).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub period: Period,
    pub report: MultiplierReport,
}

/// Monthly multiplier with fixed tiers. Each month uses the latest
/// observation of every pool seen that month; the derivation graph for the
/// decomposition is rebuilt from the same records. Months where the
/// multiplier is undefined are skipped.
pub fn multiplier_series(records: &[PoolRecord], tiers: &TierAssignment, params: &PipelineParams) -> Result<Vec<SeriesPoint>> {
    let mut by_month: BTreeMap<Period, Vec<PoolRecord>> = BTreeMap::new();
    for r in records {
        by_month.entry(Period::of(&r.observed_at)).or_default().push(r.clone());
    }
    let registry = params.filter.registry.clone().unwrap_or_else(PrefixRegistry::empty);
    let filter = params.effective_filter();
    let mut out = Vec::new();
    for (period, recs) in by_month {
        let attr = token_tvl_attribution(&recs);
        let mut report = match layering_multiplier(&attr, tiers) {
            Ok(r) => r,
            Err(Error::UndefinedMultiplier) => {
                log::warn!("{period}: no base-token TVL, multiplier skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        let deriv = build_derivation_graph(&build_full_graph(&recs, &registry), &filter);
        report.decomposition = decompose_multiplier(&deriv, tiers, report.lm)?;
        out.push(SeriesPoint { period, report });
    }
    Ok(out)
}

/// Tokens appearing in `attribution` but not in the tier map.
pub fn unknown_tokens<'a>(attribution: &'a BTreeMap<TokenKey, f64>, tiers: &TierAssignment) -> BTreeSet<&'a TokenKey> {
    attribution.keys().filter(|k| !tiers.tier.contains_key(*k)).collect()
}
