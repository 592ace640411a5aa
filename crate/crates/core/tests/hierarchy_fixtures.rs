mod common;

use std::collections::BTreeMap;

use common::*;
use defi_tiers::graph::{CdpEdge, FilterStep};
use defi_tiers::hierarchy::{ablate_steps, run_hierarchy, temporal_stability, PipelineParams};
use defi_tiers::ingest::PoolRecord;
use defi_tiers::Category;

fn one(id: &str, protocol: &str, cat: Category, inputs: &[&str], output: Option<&str>, tvl: f64) -> PoolRecord {
    pool(id, protocol, cat, inputs, output, tvl, 1.0)
}

/// Fifteen tokens on one chain. Each filter step has exactly one pool (or
/// config entry) that it acts on:
///   (a) a DEX LP token minted from USDC
///   (b) BOLD, whose only mint also takes BOLD as collateral
///   (c) an ETH → USDC borrow edge, also caught by (e)
///   (d) stETH and wstETH listed in redemption direction
///   (e) a DAI → USDC swap module
///   (f) LQTY minted against ETH, from config only
///   (g) WUSDC, seen only as a DEX input
fn fixture() -> (Vec<PoolRecord>, PipelineParams) {
    let recs = vec![
        one("l1", "aave-v3", Category::Lending, &["ETH"], None, 3e9),
        one("l2", "compound-v3", Category::Lending, &["ETH"], None, 2e9),
        one("l3", "spark", Category::Lending, &["ETH"], None, 1e9),
        one("l4", "aave-v3", Category::Lending, &["USDC"], None, 3e9),
        one("l5", "compound-v3", Category::Lending, &["USDC"], None, 2e9),
        one("l6", "spark", Category::Lending, &["USDC"], None, 1e9),
        one("a1", "uniswap-v3", Category::Dex, &["USDC"], Some("LPX"), 5e7),
        one("b1", "morpho", Category::Lending, &["USDC", "BOLD"], Some("BOLD"), 4e7),
        one("c1", "aave-v3", Category::Lending, &["ETH"], Some("USDC"), 3e7),
        one("d1", "lido", Category::LiquidStaking, &["STETH"], Some("ETH"), 2e10),
        one("d2", "lido", Category::LiquidStaking, &["WSTETH"], Some("STETH"), 1e10),
        one("e1", "maker-psm", Category::Other, &["DAI"], Some("USDC"), 5e8),
        one("f1", "uniswap-v3", Category::Dex, &["LQTY", "ETH"], None, 2e7),
        one("g1", "uniswap-v3", Category::Dex, &["WUSDC", "LQTY"], None, 1e7),
    ];
    let mut params = PipelineParams::default();
    params.filter.cdp_edges = vec![CdpEdge::new("ETH", "LQTY", "liquity")];
    (recs, params)
}

#[test]
fn baseline_tiers_by_hand() {
    let (recs, params) = fixture();
    let t = run_hierarchy(&recs, &params).unwrap().tiers;
    let want = [
        ("ETH", 0),
        ("USDC", 0),
        ("AETH", 1),
        ("CETH", 1),
        ("SPETH", 1),
        ("AUSDC", 1),
        ("CUSDC", 1),
        ("SPUSDC", 1),
        ("STETH", 1),
        ("WSTETH", 2),
        ("BOLD", -1),
        ("LQTY", 1),
        ("WUSDC", 1),
        ("LPX", -1),
        ("DAI", -1),
    ];
    assert_eq!(t.tier.len(), want.len());
    for (s, tier) in want {
        assert_eq!(t.tier_of(&key(s)), tier, "{s}");
    }
}

#[test]
fn each_step_moves_the_traced_tokens() {
    let (recs, params) = fixture();
    let core = [key("ETH"), key("STETH"), key("WSTETH"), key("USDC")];
    let rep = ablate_steps(&recs, &params, &core).unwrap();
    // (c) is shadowed by (e); (d) takes the LQTY mint down with ETH; (e)
    // orphans USDC and everything under it
    let want: BTreeMap<FilterStep, (usize, &[&str])> = [
        (FilterStep::DropTrading, (1, &[][..])),
        (FilterStep::CrossCollateral, (1, &[][..])),
        (FilterStep::BaseToBase, (0, &[][..])),
        (FilterStep::ReverseWrappers, (7, &["ETH", "STETH", "WSTETH"][..])),
        (FilterStep::Tier0Protection, (5, &["USDC"][..])),
        (FilterStep::CdpEdges, (1, &[][..])),
        (FilterStep::SyntheticNames, (1, &[][..])),
    ]
    .into();
    assert_eq!(rep.rows.len(), 7);
    for row in &rep.rows {
        let (n, core_moved) = want[&row.step];
        assert_eq!(row.reassigned, n, "{:?}", row.step);
        assert_eq!(row.total, 15);
        assert!((row.share - n as f64 / 15.0).abs() < 1e-12);
        let moved: Vec<&str> = row.core_changes.iter().map(|c| c.token.symbol.as_str()).collect();
        assert_eq!(moved, core_moved, "{:?}", row.step);
        assert!(row.core_changes.iter().all(|c| c.after == -1));
    }
}

#[test]
fn one_shifted_token_among_ten() {
    let (recs, params) = fixture();
    let mut baseline = run_hierarchy(&recs, &params).unwrap().tiers;
    for s in ["SPETH", "SPUSDC"] {
        baseline.tier.remove(&key(s));
    }
    // WUSDC now minted from the aave receipt: tier 1 → 2
    let mut drifted = recs.clone();
    drifted.push(one("w1", "wrapper", Category::Other, &["AUSDC"], Some("WUSDC"), 1e6));
    let rows = temporal_stability(&[("drift".into(), drifted)], &baseline, &params);
    let r = &rows[0];
    assert_eq!(r.common, 10);
    assert_eq!(r.agreement_pct, Some(90.0));
    // average ranks: baseline 0,0 | 1×7 | 2 → 1.5 | 6 | 10;
    // drift 0,0 | 1×6 | 2,2 → 1.5 | 5.5 | 9.5. Σdadb = 52, Σda² = 54, Σdb² = 64
    let rho = 52.0 / (54.0f64 * 64.0).sqrt();
    assert!((r.spearman.unwrap() - rho).abs() < 1e-12, "{:?} vs {rho}", r.spearman);
}
