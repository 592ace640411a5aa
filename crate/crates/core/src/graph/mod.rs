//! Full token graph and filtered derivation graph.

mod cycles;
mod derive;
mod export;
mod full;
pub mod names;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use cycles::{detect_cycles, Cycle};
pub use derive::{build_derivation_graph, CdpEdge, FilterParams, FilterStep, RemovedEdge, StepToggles};
pub use export::write_edges_csv;
pub use full::build_full_graph;
pub(crate) use full::effective_output;

use crate::token::{Category, TokenKey, TokenRef};

/// How an edge came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Observed,
    Reversed,
    CdpMint,
    SyntheticName,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Observed => "Observed",
            Provenance::Reversed => "Reversed",
            Provenance::CdpMint => "CdpMint",
            Provenance::SyntheticName => "SyntheticName",
        }
    }
}

/// The derivation rule that admitted an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdmitRule {
    ObservedKept,
    Reversed,
    CdpConfig,
    SyntheticName,
}

impl AdmitRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AdmitRule::ObservedKept => "observed-kept",
            AdmitRule::Reversed => "reversed",
            AdmitRule::CdpConfig => "cdp-config",
            AdmitRule::SyntheticName => "synthetic-name",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: TokenKey,
    pub dst: TokenKey,
    pub protocol: String,
    pub category: Category,
    pub tvl_usd: f64,
    pub provenance: Provenance,
    /// Pool that produced the edge; `None` for configured and synthetic edges.
    pub pool_id: Option<String>,
    /// The producing pool lists its output among its inputs.
    pub cross_collateral: bool,
}

/// Directed multigraph of tokens. Parallel edges (same endpoints, different
/// protocols) are kept distinct.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenGraph {
    pub nodes: BTreeMap<TokenKey, TokenRef>,
    pub edges: Vec<Edge>,
}

/// Out-degree and source TVL of a node in some graph.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SourceStats {
    /// Number of distinct successors.
    pub out_degree: usize,
    /// Sum of TVL on outgoing edges.
    pub source_tvl: f64,
}

impl TokenGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_node(&mut self, token: &TokenRef) -> TokenKey {
        let key = token.key();
        self.nodes.entry(key.clone()).or_insert_with(|| token.clone());
        key
    }

    pub fn display<'a>(&'a self, key: &'a TokenKey) -> &'a str {
        self.nodes.get(key).map(|t| t.symbol.as_str()).unwrap_or(key.symbol.as_str())
    }

    pub fn total_edge_tvl(&self) -> f64 {
        self.edges.iter().map(|e| e.tvl_usd).sum()
    }

    pub fn source_stats(&self) -> BTreeMap<TokenKey, SourceStats> {
        let mut succ: BTreeMap<&TokenKey, BTreeSet<&TokenKey>> = BTreeMap::new();
        let mut out: BTreeMap<TokenKey, SourceStats> =
            self.nodes.keys().map(|k| (k.clone(), SourceStats::default())).collect();
        for e in &self.edges {
            succ.entry(&e.src).or_default().insert(&e.dst);
            out.entry(e.src.clone()).or_default().source_tvl += e.tvl_usd;
        }
        for (k, s) in succ {
            out.entry(k.clone()).or_default().out_degree = s.len();
        }
        out
    }

    pub fn in_degrees(&self) -> BTreeMap<TokenKey, usize> {
        let mut deg: BTreeMap<TokenKey, usize> = self.nodes.keys().map(|k| (k.clone(), 0)).collect();
        for e in &self.edges {
            *deg.entry(e.dst.clone()).or_default() += 1;
        }
        deg
    }

    /// Outgoing edge indices per node.
    pub fn adjacency(&self) -> BTreeMap<&TokenKey, Vec<usize>> {
        let mut adj: BTreeMap<&TokenKey, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            adj.entry(&e.src).or_default().push(i);
        }
        adj
    }

    /// Builds a graph from bare key pairs; used by tests and generators.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str, f64)>, chain: &str) -> Self {
        let mut g = TokenGraph::default();
        for (s, d, tvl) in pairs {
            let src = g.add_node(&TokenRef::new(s, chain));
            let dst = g.add_node(&TokenRef::new(d, chain));
            g.edges.push(Edge {
                src,
                dst,
                protocol: "test".into(),
                category: Category::Other,
                tvl_usd: tvl,
                provenance: Provenance::Observed,
                pool_id: None,
                cross_collateral: false,
            });
        }
        g
    }
}

/// Derivation graph with a per-edge audit trail.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivationGraph {
    pub graph: TokenGraph,
    /// Admitting rule for each edge, parallel to `graph.edges`.
    pub rules: Vec<AdmitRule>,
    /// Edges dropped by a filter step.
    pub removed: Vec<RemovedEdge>,
    pub warnings: Vec<String>,
}

impl DerivationGraph {
    /// Wraps a plain graph, treating every edge as observed and kept.
    pub fn from_graph(graph: TokenGraph) -> Self {
        let rules = vec![AdmitRule::ObservedKept; graph.edges.len()];
        Self { graph, rules, removed: Vec::new(), warnings: Vec::new() }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.graph.edges
    }
}
