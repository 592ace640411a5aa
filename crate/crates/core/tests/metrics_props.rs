mod common;

use std::collections::BTreeMap;

use common::*;
use defi_tiers::graph::{build_full_graph, DerivationGraph};
use defi_tiers::hierarchy::propagate_tiers;
use defi_tiers::ingest::{PoolRecord, PrefixRegistry};
use defi_tiers::metrics::{
    build_embedded_yields, corrected_apy, decompose_multiplier, layering_multiplier, token_tvl_attribution,
};
use defi_tiers::{Category, TokenKey};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CATS: [Category; 6] = [
    Category::Lending,
    Category::LiquidStaking,
    Category::Restaking,
    Category::Dex,
    Category::YieldAggregator,
    Category::Other,
];

/// Random DAG, its base set and a nonnegative TVL per node; bases get
/// strictly positive TVL.
fn instance(seed: u64) -> (usize, Vec<(usize, usize, f64)>, BTreeMap<TokenKey, f64>, DerivationGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, edges) = random_dag(&mut rng, 12, 0.3);
    let src = roots(n, &edges);
    let attr = (0..n)
        .map(|i| {
            let v = if src.contains(&i) { rng.random_range(1.0..1e6) } else if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1e6) };
            (key(&name(i)), v)
        })
        .collect();
    let mut g = graph_from(n, &edges);
    for e in &mut g.graph.edges {
        e.category = CATS[rng.random_range(0..CATS.len())];
    }
    (n, edges, attr, g)
}

/// One issuing pool per DAG edge (input src, output dst), sometimes two.
fn issuing_pools(seed: u64) -> (usize, Vec<(usize, usize, f64)>, Vec<PoolRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, edges) = random_dag(&mut rng, 10, 0.35);
    let mut recs = Vec::new();
    for (i, (a, b, tvl)) in edges.iter().enumerate() {
        let copies = if rng.random_bool(0.2) { 2 } else { 1 };
        for c in 0..copies {
            let cat = CATS[rng.random_range(0..CATS.len())];
            let apy = rng.random_range(0.0..10.0);
            recs.push(pool(&format!("e{i}-{c}"), "p", cat, &[&name(*a)], Some(&name(*b)), tvl * (c + 1) as f64, apy));
        }
    }
    (n, edges, recs)
}

proptest! {
    #[test]
    fn multiplier_is_at_least_one(seed in any::<u64>()) {
        let (n, edges, attr, g) = instance(seed);
        let src = roots(n, &edges);
        let t = propagate_tiers(&g, &keys(&src));
        let r = layering_multiplier(&attr, &t).unwrap();
        // oracle: everything reachable from a base token counts as mapped
        let reach = distance_oracle(n, &edges, &src);
        let mapped: f64 = reach.keys().map(|k| attr[k]).sum();
        let base: f64 = src.iter().map(|i| attr[&key(&name(*i))]).sum();
        prop_assert!(rel_close(r.lm, mapped / base, 1e-12));
        prop_assert!(r.lm >= 1.0);
        let above: f64 = reach.iter().filter(|(_, d)| **d > 0).map(|(k, _)| attr[k]).sum();
        prop_assert_eq!(r.lm == 1.0, above == 0.0);
    }

    #[test]
    fn decomposition_is_exact(seed in any::<u64>()) {
        let (n, edges, attr, g) = instance(seed);
        let t = propagate_tiers(&g, &keys(&roots(n, &edges)));
        let lm = layering_multiplier(&attr, &t).unwrap().lm;
        let parts = decompose_multiplier(&g, &t, lm).unwrap();
        prop_assert!((parts.values().sum::<f64>() - (lm - 1.0)).abs() <= 1e-9);
        prop_assert!(parts.values().all(|v| *v >= 0.0));
    }

    #[test]
    fn embedded_yield_rises_along_parent_chains(seed in any::<u64>()) {
        let (n, edges, recs) = issuing_pools(seed);
        let reg = PrefixRegistry::default();
        let g = DerivationGraph::from_graph(build_full_graph(&recs, &reg));
        let t = propagate_tiers(&g, &keys(&roots(n, &edges)));
        let table = build_embedded_yields(&g, &t, &recs, &reg).unwrap();

        // oracle: issuer = highest-TVL non-DEX pool minting the child, ties to the smaller id
        let mut issuer: BTreeMap<TokenKey, (f64, String, f64)> = BTreeMap::new();
        for r in recs.iter().filter(|r| r.category != Category::Dex) {
            let k = r.output_token.as_ref().unwrap().key();
            let cand = (r.tvl_usd, r.pool_id.clone(), r.apy_total.unwrap());
            let replace = issuer.get(&k).is_none_or(|cur| cand.0 > cur.0 || (cand.0 == cur.0 && cand.1 < cur.1));
            if replace {
                issuer.insert(k, cand);
            }
        }
        for (k, tier) in t.mapped() {
            let expected: f64 = t.lineage(k).iter().filter_map(|x| t.parent.get(x).and(issuer.get(x)).map(|i| i.2)).sum();
            prop_assert!((table.of(k) - expected).abs() <= 1e-9);
            if tier > 0 {
                prop_assert!(table.of(k) >= table.of(&t.parent[k]));
            }
        }
        for r in &recs {
            prop_assert!(corrected_apy(r, &table).unwrap() >= r.apy_total.unwrap());
        }
    }

    #[test]
    fn attribution_conserves_tvl(
        spec in proptest::collection::vec((proptest::collection::btree_set(0usize..8, 1..4), 0.0f64..1e9), 1..30),
    ) {
        let recs: Vec<PoolRecord> = spec
            .iter()
            .enumerate()
            .map(|(i, (ins, tvl))| {
                let names: Vec<String> = ins.iter().map(|j| name(*j)).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                pool(&format!("p{i}"), "x", Category::Dex, &refs, None, *tvl, 1.0)
            })
            .collect();
        let total: f64 = recs.iter().map(|r| r.tvl_usd).sum();
        let attributed: f64 = token_tvl_attribution(&recs).values().sum();
        prop_assert!((attributed - total).abs() <= 1e-6 * total.max(1.0));
    }
}

#[test]
fn base_only_tvl_gives_multiplier_one() {
    let edges = [(0, 1, 5.0), (1, 2, 5.0)];
    let g = graph_from(3, &edges);
    let t = propagate_tiers(&g, &keys(&[0].into()));
    let attr: BTreeMap<_, _> = [(key("T00"), 10.0), (key("T01"), 0.0)].into();
    assert_eq!(layering_multiplier(&attr, &t).unwrap().lm, 1.0);
}
