//! Derivation-graph filters.
//!
//! Starting from the full graph, the steps run in a fixed order:
//!
//! - (a) drop edges of trading (DEX) protocols;
//! - (b) drop edges into a pool's output when that output is also an input;
//! - (c) drop lending edges between two significant base candidates that
//!   are not name-related;
//! - (d) reverse wrapper edges that point from wrapper to underlying;
//! - (e) drop incoming edges of significant base candidates unless the two
//!   symbols are name-related;
//! - (f) add configured CDP minting edges;
//! - (g) give parentless tokens a synthetic parent found by name matching.
//!
//! "Significant" means passing the base-candidate thresholds (distinct
//! out-degree and source TVL) in the full graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::names::{composite_parts, longest_common_substring, name_related, substring_match, NameMatch, NameRules};
use super::{AdmitRule, DerivationGraph, Edge, Provenance, SourceStats, TokenGraph};
use crate::ingest::PrefixRegistry;
use crate::token::{Category, TokenKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterStep {
    DropTrading,
    CrossCollateral,
    BaseToBase,
    ReverseWrappers,
    Tier0Protection,
    CdpEdges,
    SyntheticNames,
}

impl FilterStep {
    pub const ALL: [FilterStep; 7] = [
        FilterStep::DropTrading,
        FilterStep::CrossCollateral,
        FilterStep::BaseToBase,
        FilterStep::ReverseWrappers,
        FilterStep::Tier0Protection,
        FilterStep::CdpEdges,
        FilterStep::SyntheticNames,
    ];

    pub fn letter(self) -> char {
        match self {
            FilterStep::DropTrading => 'a',
            FilterStep::CrossCollateral => 'b',
            FilterStep::BaseToBase => 'c',
            FilterStep::ReverseWrappers => 'd',
            FilterStep::Tier0Protection => 'e',
            FilterStep::CdpEdges => 'f',
            FilterStep::SyntheticNames => 'g',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterStep::DropTrading => "drop-trading",
            FilterStep::CrossCollateral => "cross-collateral",
            FilterStep::BaseToBase => "base-to-base",
            FilterStep::ReverseWrappers => "reverse-wrappers",
            FilterStep::Tier0Protection => "tier0-protection",
            FilterStep::CdpEdges => "cdp-edges",
            FilterStep::SyntheticNames => "synthetic-names",
        }
    }
}

/// Per-step switches; all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepToggles {
    pub drop_trading: bool,
    pub cross_collateral: bool,
    pub base_to_base: bool,
    pub reverse_wrappers: bool,
    pub tier0_protection: bool,
    pub cdp_edges: bool,
    pub synthetic_names: bool,
}

impl Default for StepToggles {
    fn default() -> Self {
        Self::all(true)
    }
}

impl StepToggles {
    pub fn all(on: bool) -> Self {
        Self {
            drop_trading: on,
            cross_collateral: on,
            base_to_base: on,
            reverse_wrappers: on,
            tier0_protection: on,
            cdp_edges: on,
            synthetic_names: on,
        }
    }

    fn slot(&mut self, step: FilterStep) -> &mut bool {
        match step {
            FilterStep::DropTrading => &mut self.drop_trading,
            FilterStep::CrossCollateral => &mut self.cross_collateral,
            FilterStep::BaseToBase => &mut self.base_to_base,
            FilterStep::ReverseWrappers => &mut self.reverse_wrappers,
            FilterStep::Tier0Protection => &mut self.tier0_protection,
            FilterStep::CdpEdges => &mut self.cdp_edges,
            FilterStep::SyntheticNames => &mut self.synthetic_names,
        }
    }

    pub fn enabled(&self, step: FilterStep) -> bool {
        let mut copy = *self;
        *copy.slot(step)
    }

    pub fn set(&mut self, step: FilterStep, on: bool) {
        *self.slot(step) = on;
    }
}

/// A configured CDP minting relationship (`collateral,minted,protocol`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdpEdge {
    pub collateral: String,
    pub minted: String,
    pub protocol: String,
    /// Restrict to one chain; otherwise every chain holding both tokens.
    #[serde(default)]
    pub chain: Option<String>,
    #[serde(default)]
    pub tvl_usd: Option<f64>,
}

impl CdpEdge {
    pub fn new(collateral: &str, minted: &str, protocol: &str) -> Self {
        Self {
            collateral: collateral.into(),
            minted: minted.into(),
            protocol: protocol.into(),
            chain: None,
            tvl_usd: None,
        }
    }

    /// Reads a CSV with header `collateral,minted,protocol` and optional
    /// `chain` and `tvl_usd` columns.
    pub fn read_csv<R: std::io::Read>(reader: R) -> crate::Result<Vec<CdpEdge>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Vec::new();
        for row in rdr.deserialize() {
            out.push(row?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub steps: StepToggles,
    /// Significance thresholds shared with base-token discovery.
    pub min_outdeg: usize,
    pub min_src_tvl_usd: f64,
    pub names: NameRules,
    #[serde(skip)]
    pub cdp_edges: Vec<CdpEdge>,
    /// Wrapper and receipt prefixes; step (d) is skipped when absent.
    #[serde(skip)]
    pub registry: Option<PrefixRegistry>,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            steps: StepToggles::default(),
            min_outdeg: 3,
            min_src_tvl_usd: 1e6,
            names: NameRules::default(),
            cdp_edges: Vec::new(),
            registry: Some(PrefixRegistry::default()),
        }
    }
}

impl FilterParams {
    pub fn without(mut self, step: FilterStep) -> Self {
        self.steps.set(step, false);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovedEdge {
    pub edge: Edge,
    pub step: FilterStep,
}

struct Work<'a> {
    full: &'a TokenGraph,
    edges: Vec<(Edge, AdmitRule)>,
    removed: Vec<RemovedEdge>,
    warnings: Vec<String>,
}

impl Work<'_> {
    fn drop_where(&mut self, step: FilterStep, mut pred: impl FnMut(&Edge) -> bool) {
        let mut kept = Vec::with_capacity(self.edges.len());
        for (e, r) in self.edges.drain(..) {
            if pred(&e) {
                self.removed.push(RemovedEdge { edge: e, step });
            } else {
                kept.push((e, r));
            }
        }
        self.edges = kept;
    }

    fn sym<'k>(&self, k: &'k TokenKey) -> &'k str {
        &k.symbol
    }
}

pub fn build_derivation_graph(full: &TokenGraph, params: &FilterParams) -> DerivationGraph {
    let stats = full.source_stats();
    let significant: BTreeSet<TokenKey> = stats
        .iter()
        .filter(|(_, s)| s.out_degree >= params.min_outdeg && s.source_tvl >= params.min_src_tvl_usd)
        .map(|(k, _)| k.clone())
        .collect();
    let names = params.names;
    let steps = params.steps;

    let mut w = Work {
        full,
        edges: full.edges.iter().cloned().map(|e| (e, AdmitRule::ObservedKept)).collect(),
        removed: Vec::new(),
        warnings: Vec::new(),
    };

    if steps.drop_trading {
        w.drop_where(FilterStep::DropTrading, |e| e.category == Category::Dex);
    }
    if steps.cross_collateral {
        w.drop_where(FilterStep::CrossCollateral, |e| e.cross_collateral);
    }
    if steps.base_to_base {
        w.drop_where(FilterStep::BaseToBase, |e| {
            e.category == Category::Lending
                && significant.contains(&e.src)
                && significant.contains(&e.dst)
                && !name_related(&e.src.symbol, &e.dst.symbol, &names)
        });
    }
    if steps.reverse_wrappers {
        match params.registry.as_ref().filter(|r| !r.is_empty()) {
            Some(reg) => reverse_wrappers(&mut w, reg),
            None => {
                let msg = "prefix registry missing; wrapper reversal skipped".to_string();
                log::warn!("{msg}");
                w.warnings.push(msg);
            }
        }
    }
    if steps.tier0_protection {
        w.drop_where(FilterStep::Tier0Protection, |e| {
            significant.contains(&e.dst) && !name_related(&e.src.symbol, &e.dst.symbol, &names)
        });
    }
    if steps.cdp_edges {
        add_cdp_edges(&mut w, &params.cdp_edges);
    }
    if steps.synthetic_names {
        let prefixes = params.registry.as_ref().map(|r| r.all_prefixes_upper()).unwrap_or_default();
        add_synthetic_edges(&mut w, &significant, &stats, &prefixes, &names);
    }

    let (edges, rules): (Vec<Edge>, Vec<AdmitRule>) = w.edges.into_iter().unzip();
    DerivationGraph {
        graph: TokenGraph { nodes: full.nodes.clone(), edges },
        rules,
        removed: w.removed,
        warnings: w.warnings,
    }
}

fn reverse_wrappers(w: &mut Work<'_>, registry: &PrefixRegistry) {
    let mut out: Vec<(Edge, AdmitRule)> = Vec::with_capacity(w.edges.len());
    let mut slot: BTreeMap<(TokenKey, TokenKey, String), usize> = BTreeMap::new();
    let edges = std::mem::take(&mut w.edges);
    // Observed edges first so reversed duplicates merge into them.
    for (e, rule) in &edges {
        if !registry.is_wrapping_pair(w.sym(&e.src), w.sym(&e.dst)) {
            slot.insert((e.src.clone(), e.dst.clone(), e.protocol.clone()), out.len());
            out.push((e.clone(), *rule));
        }
    }
    for (e, _) in edges {
        if !registry.is_wrapping_pair(&e.src.symbol, &e.dst.symbol) {
            continue;
        }
        let mut r = e;
        std::mem::swap(&mut r.src, &mut r.dst);
        r.provenance = Provenance::Reversed;
        let key = (r.src.clone(), r.dst.clone(), r.protocol.clone());
        match slot.get(&key) {
            Some(&i) => out[i].0.tvl_usd += r.tvl_usd,
            None => {
                slot.insert(key, out.len());
                out.push((r, AdmitRule::Reversed));
            }
        }
    }
    w.edges = out;
}

fn add_cdp_edges(w: &mut Work<'_>, cdp: &[CdpEdge]) {
    for c in cdp {
        let coll = c.collateral.trim().to_uppercase();
        let mint = c.minted.trim().to_uppercase();
        if coll == mint {
            continue;
        }
        let mut by_chain: BTreeMap<&str, (Option<&TokenKey>, Option<&TokenKey>)> = BTreeMap::new();
        for k in w.full.nodes.keys() {
            if c.chain.as_deref().is_some_and(|ch| ch != k.chain) {
                continue;
            }
            let entry = by_chain.entry(&k.chain).or_default();
            if k.symbol == coll && entry.0.is_none() {
                entry.0 = Some(k);
            }
            if k.symbol == mint && entry.1.is_none() {
                entry.1 = Some(k);
            }
        }
        for (src, dst) in by_chain.into_values() {
            if let (Some(src), Some(dst)) = (src, dst) {
                w.edges.push((
                    Edge {
                        src: src.clone(),
                        dst: dst.clone(),
                        protocol: c.protocol.clone(),
                        category: Category::Cdp,
                        tvl_usd: c.tvl_usd.unwrap_or(0.0).max(0.0),
                        provenance: Provenance::CdpMint,
                        pool_id: None,
                        cross_collateral: false,
                    },
                    AdmitRule::CdpConfig,
                ));
            }
        }
    }
}

fn add_synthetic_edges(
    w: &mut Work<'_>,
    significant: &BTreeSet<TokenKey>,
    stats: &BTreeMap<TokenKey, SourceStats>,
    prefixes: &[String],
    rules: &NameRules,
) {
    let mut has_incoming: BTreeSet<&TokenKey> = BTreeSet::new();
    let mut linked: BTreeSet<(&TokenKey, &TokenKey)> = BTreeSet::new();
    for (e, _) in &w.edges {
        has_incoming.insert(&e.dst);
        linked.insert((&e.src, &e.dst));
        linked.insert((&e.dst, &e.src));
    }

    // Per-chain symbol index and trigram index for the substring rule.
    let mut by_symbol: BTreeMap<(&str, &str), &TokenKey> = BTreeMap::new();
    let mut trigrams: BTreeMap<(&str, &[u8]), Vec<&TokenKey>> = BTreeMap::new();
    let gram = rules.min_lcs_len.max(1);
    for k in w.full.nodes.keys() {
        by_symbol.entry((k.chain.as_str(), k.symbol.as_str())).or_insert(k);
        let bytes = k.symbol.as_bytes();
        if bytes.len() >= gram {
            let mut seen = BTreeSet::new();
            for win in bytes.windows(gram) {
                if seen.insert(win) {
                    trigrams.entry((k.chain.as_str(), win)).or_default().push(k);
                }
            }
        }
    }

    let mut added = Vec::new();
    for t in w.full.nodes.keys() {
        if has_incoming.contains(t) || significant.contains(t) {
            continue;
        }
        let Some((parent, _how)) = best_parent(t, &by_symbol, &trigrams, stats, prefixes, rules) else {
            continue;
        };
        if parent == t || linked.contains(&(parent, t)) {
            continue;
        }
        added.push((parent.clone(), t.clone()));
    }
    for (src, dst) in added {
        w.edges.push((
            Edge {
                src,
                dst,
                protocol: "name-match".into(),
                category: Category::Other,
                tvl_usd: 0.0,
                provenance: Provenance::SyntheticName,
                pool_id: None,
                cross_collateral: false,
            },
            AdmitRule::SyntheticName,
        ));
    }
}

type SymbolIndex<'a> = BTreeMap<(&'a str, &'a str), &'a TokenKey>;
type GramIndex<'a> = BTreeMap<(&'a str, &'a [u8]), Vec<&'a TokenKey>>;

fn best_parent<'a>(
    t: &TokenKey,
    by_symbol: &SymbolIndex<'a>,
    trigrams: &GramIndex<'a>,
    stats: &BTreeMap<TokenKey, SourceStats>,
    prefixes: &[String],
    rules: &NameRules,
) -> Option<(&'a TokenKey, NameMatch)> {
    let chain = t.chain.as_str();
    let sym = t.symbol.as_str();

    // Prefix stripping; prefixes are shortest first, so the first hit keeps
    // the longest core.
    for p in prefixes {
        if let Some(core) = sym.strip_prefix(p.as_str()) {
            if core.len() >= rules.min_core_len {
                if let Some(k) = by_symbol.get(&(chain, core)) {
                    return Some((k, NameMatch::PrefixStrip));
                }
            }
        }
    }

    let parts = composite_parts(sym);
    if parts.len() > 1 {
        let best = parts
            .iter()
            .filter(|p| p.len() >= rules.min_core_len && **p != sym)
            .filter_map(|p| by_symbol.get(&(chain, *p)).map(|k| (p.len(), *k)))
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)));
        if let Some((_, k)) = best {
            return Some((k, NameMatch::CompositePart));
        }
    }

    let gram = rules.min_lcs_len.max(1);
    if sym.len() < gram {
        return None;
    }
    let mut cands: BTreeSet<&TokenKey> = BTreeSet::new();
    for win in sym.as_bytes().windows(gram) {
        if let Some(list) = trigrams.get(&(chain, win)) {
            cands.extend(list.iter().copied());
        }
    }
    let tvl = |k: &TokenKey| stats.get(k).map(|s| s.source_tvl).unwrap_or(0.0);
    cands
        .into_iter()
        // strictly shorter parents keep synthetic edges acyclic
        .filter(|s| s.symbol.len() < sym.len() && substring_match(&s.symbol, sym, rules))
        .map(|s| (longest_common_substring(&s.symbol, sym), s))
        .max_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| tvl(a.1).total_cmp(&tvl(b.1))).then_with(|| b.1.cmp(a.1))
        })
        .map(|(_, k)| (k, NameMatch::Substring))
}
