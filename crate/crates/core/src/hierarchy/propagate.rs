use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use super::{Demotion, TierAssignment, UNMAPPED};
use crate::graph::DerivationGraph;
use crate::token::TokenKey;

/// Queue entry: an edge from a visited token to a candidate child.
#[derive(Debug)]
struct Candidate<'a> {
    tvl: f64,
    tier: i64,
    dst: &'a TokenKey,
    parent: &'a TokenKey,
    protocol: &'a str,
}

impl Candidate<'_> {
    fn rank(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the greatest; "greater" means higher TVL, then
        // shallower tier, then smaller keys.
        self.tvl
            .total_cmp(&other.tvl)
            .then_with(|| other.tier.cmp(&self.tier))
            .then_with(|| other.dst.cmp(self.dst))
            .then_with(|| other.parent.cmp(self.parent))
            .then_with(|| other.protocol.cmp(self.protocol))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

fn push_out<'a>(
    heap: &mut BinaryHeap<Candidate<'a>>,
    adj: &BTreeMap<&'a TokenKey, Vec<usize>>,
    deriv: &'a DerivationGraph,
    k: &TokenKey,
    t: i64,
    tier: &BTreeMap<TokenKey, i64>,
) {
    let Some((src, list)) = adj.get_key_value(k) else { return };
    for &i in list {
        let e = &deriv.graph.edges[i];
        if !tier.contains_key(&e.dst) {
            heap.push(Candidate { tvl: e.tvl_usd, tier: t + 1, dst: &e.dst, parent: src, protocol: &e.protocol });
        }
    }
}

/// TVL-priority breadth-first propagation from the base set.
///
/// The queue holds edges leaving visited tokens, largest TVL first; the
/// first edge to reach a token fixes its tier and parent. Unreached tokens
/// are `UNMAPPED`. Graph distances are left empty.
pub fn propagate_tiers(deriv: &DerivationGraph, tier0: &BTreeSet<TokenKey>) -> TierAssignment {
    propagate_tiers_with(deriv, tier0, &[])
}

/// As [`propagate_tiers`], with demoted aliases pinned to tier 1 under their
/// parents before the search starts.
pub fn propagate_tiers_with(deriv: &DerivationGraph, tier0: &BTreeSet<TokenKey>, demotions: &[Demotion]) -> TierAssignment {
    let g = &deriv.graph;
    let adj = g.adjacency();
    let mut tier: BTreeMap<TokenKey, i64> = BTreeMap::new();
    let mut parent: BTreeMap<TokenKey, TokenKey> = BTreeMap::new();
    let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::new();

    for k in tier0 {
        tier.insert(k.clone(), 0);
    }
    for d in demotions {
        if tier0.contains(&d.parent) && !tier.contains_key(&d.token) {
            tier.insert(d.token.clone(), 1);
            parent.insert(d.token.clone(), d.parent.clone());
        }
    }
    let seeded: Vec<(TokenKey, i64)> = tier.iter().map(|(k, t)| (k.clone(), *t)).collect();
    for (k, t) in &seeded {
        push_out(&mut heap, &adj, deriv, k, *t, &tier);
    }
    while let Some(c) = heap.pop() {
        if tier.contains_key(c.dst) {
            continue;
        }
        let t = tier[c.parent] + 1;
        tier.insert(c.dst.clone(), t);
        parent.insert(c.dst.clone(), c.parent.clone());
        push_out(&mut heap, &adj, deriv, c.dst, t, &tier);
    }
    for k in g.nodes.keys() {
        tier.entry(k.clone()).or_insert(UNMAPPED);
    }
    TierAssignment { tier, parent, graph_distance: BTreeMap::new(), tier0_set: tier0.clone() }
}

/// Unweighted multi-source shortest path lengths from the base set.
/// Unreachable tokens are absent.
pub fn compute_graph_distance(deriv: &DerivationGraph, tier0: &BTreeSet<TokenKey>) -> BTreeMap<TokenKey, u32> {
    compute_graph_distance_with(deriv, tier0, &[])
}

/// As [`compute_graph_distance`], with each demotion treated as an edge from
/// the alias parent.
pub fn compute_graph_distance_with(
    deriv: &DerivationGraph,
    tier0: &BTreeSet<TokenKey>,
    demotions: &[Demotion],
) -> BTreeMap<TokenKey, u32> {
    let mut succ: BTreeMap<&TokenKey, Vec<&TokenKey>> = BTreeMap::new();
    for e in &deriv.graph.edges {
        succ.entry(&e.src).or_default().push(&e.dst);
    }
    for d in demotions {
        succ.entry(&d.parent).or_default().push(&d.token);
    }
    let mut dist: BTreeMap<TokenKey, u32> = BTreeMap::new();
    let mut queue: VecDeque<&TokenKey> = VecDeque::new();
    for k in tier0 {
        dist.insert(k.clone(), 0);
        queue.push_back(k);
    }
    while let Some(k) = queue.pop_front() {
        let d = dist[k];
        for &n in succ.get(k).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(n) {
                dist.insert(n.clone(), d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}
