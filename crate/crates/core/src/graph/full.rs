use super::{Edge, Provenance, TokenGraph};
use crate::ingest::{infer_receipt_token, latest_per_pool, PoolRecord, PrefixRegistry};
use crate::token::{Category, TokenRef};

/// Effective output of a pool: the explicit output, or for lending pools
/// without one the inferred receipt token.
pub(crate) fn effective_output(rec: &PoolRecord, registry: &PrefixRegistry) -> Option<TokenRef> {
    if let Some(o) = &rec.output_token {
        return Some(o.clone());
    }
    if rec.category == Category::Lending && rec.input_tokens.len() == 1 {
        return infer_receipt_token(registry, &rec.protocol, rec.category, &rec.input_tokens[0]).ok();
    }
    None
}

/// Builds the full token graph from identity-resolved records.
///
/// Each pool contributes one edge per input token that differs from the
/// pool's (explicit or inferred) output, and every such edge carries the
/// pool's full TVL. When a pool was observed several times only
/// its latest observation is used.
pub fn build_full_graph(records: &[PoolRecord], registry: &PrefixRegistry) -> TokenGraph {
    let mut g = TokenGraph::default();
    for rec in latest_per_pool(records) {
        let inputs: Vec<_> = rec.input_tokens.iter().map(|t| g.add_node(t)).collect();
        let Some(output) = effective_output(&rec, registry) else { continue };
        let out_key = g.add_node(&output);
        let cross_collateral = inputs.contains(&out_key);
        let pairs: Vec<_> = inputs.iter().filter(|k| **k != out_key).collect();
        if pairs.is_empty() {
            continue;
        }
        for src in pairs {
            g.edges.push(Edge {
                src: src.clone(),
                dst: out_key.clone(),
                protocol: rec.protocol.clone(),
                category: rec.category,
                tvl_usd: rec.tvl_usd,
                provenance: Provenance::Observed,
                pool_id: Some(rec.pool_id.clone()),
                cross_collateral,
            });
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::token::TokenKey;

    pub(crate) fn pool(
        id: &str,
        protocol: &str,
        category: Category,
        inputs: &[&str],
        output: Option<&str>,
        tvl: f64,
    ) -> PoolRecord {
        PoolRecord {
            pool_id: id.into(),
            protocol: protocol.into(),
            category,
            chain: "Ethereum".into(),
            input_tokens: inputs.iter().map(|s| TokenRef::new(*s, "Ethereum")).collect(),
            output_token: output.map(|s| TokenRef::new(s, "Ethereum")),
            tvl_usd: tvl,
            apy_total: Some(1.0),
            apy_base: None,
            apy_reward: None,
            is_stablecoin: false,
            observed_at: Utc.with_ymd_and_hms(2025, 12, 1, 0, 0, 0).unwrap(),
            apy_inconsistent: false,
        }
    }

    #[test]
    fn lending_pool_emits_receipt_edge() {
        let g = build_full_graph(
            &[pool("p", "aave-v3", Category::Lending, &["USDC"], None, 3.8e9)],
            &PrefixRegistry::default(),
        );
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let e = &g.edges[0];
        assert_eq!(e.src, TokenKey::new("USDC", "Ethereum"));
        assert_eq!(e.dst, TokenKey::new("aUSDC", "Ethereum"));
        assert_eq!(e.tvl_usd, 3.8e9);
    }

    #[test]
    fn self_pairs_are_skipped() {
        let g = build_full_graph(
            &[pool("p", "x", Category::Other, &["WETH"], Some("weth"), 5.0)],
            &PrefixRegistry::default(),
        );
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 1);
    }

    #[test]
    fn five_pool_fixture_with_outputless_dex_pool() {
        let recs = vec![
            pool("1", "aave", Category::Lending, &["USDC"], None, 100.0),
            pool("2", "lido", Category::LiquidStaking, &["ETH"], Some("stETH"), 200.0),
            pool("3", "uniswap", Category::Dex, &["USDC", "WBTC"], None, 50.0),
            pool("4", "curve", Category::Dex, &["ETH", "stETH"], Some("steCRV"), 40.0),
            pool("5", "yearn", Category::YieldAggregator, &["DAI"], None, 10.0),
        ];
        let g = build_full_graph(&recs, &PrefixRegistry::default());
        // USDC, aUSDC, ETH, stETH, WBTC, steCRV, DAI
        assert_eq!(g.node_count(), 7);
        assert!(g.nodes.contains_key(&TokenKey::new("WBTC", "Ethereum")));
        assert!(g.edges.iter().all(|e| e.pool_id.as_deref() != Some("3")));
        // both curve pairs carry the full pool TVL
        let curve: Vec<_> = g.edges.iter().filter(|e| e.pool_id.as_deref() == Some("4")).collect();
        assert_eq!(curve.len(), 2);
        assert!(curve.iter().all(|e| e.tvl_usd == 40.0));
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn cross_collateral_pools_are_marked() {
        let g = build_full_graph(
            &[pool("p", "x", Category::Lending, &["USDC", "aUSDC"], Some("aUSDC"), 10.0)],
            &PrefixRegistry::default(),
        );
        assert_eq!(g.edge_count(), 1);
        assert!(g.edges[0].cross_collateral);
        assert_eq!(g.edges[0].tvl_usd, 10.0);
    }

    #[test]
    fn only_latest_observation_counts() {
        let mut old = pool("p", "lido", Category::LiquidStaking, &["ETH"], Some("stETH"), 1.0);
        old.observed_at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let new = pool("p", "lido", Category::LiquidStaking, &["ETH"], Some("stETH"), 2.0);
        let g = build_full_graph(&[new, old], &PrefixRegistry::default());
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges[0].tvl_usd, 2.0);
    }
}
