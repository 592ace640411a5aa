//! Builders and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, TimeZone, Utc};
use defi_tiers::econ::{FeDim, PanelObservation, Var};
use defi_tiers::graph::{DerivationGraph, TokenGraph};
use defi_tiers::ingest::PoolRecord;
use defi_tiers::{Category, TokenKey, TokenRef};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

/// Single-snapshot pool on Ethereum.
pub fn pool(id: &str, protocol: &str, category: Category, inputs: &[&str], output: Option<&str>, tvl: f64, apy: f64) -> PoolRecord {
    PoolRecord {
        pool_id: id.into(),
        protocol: protocol.into(),
        category,
        chain: "Ethereum".into(),
        input_tokens: inputs.iter().map(|s| TokenRef::new(*s, "Ethereum")).collect(),
        output_token: output.map(|s| TokenRef::new(s, "Ethereum")),
        tvl_usd: tvl,
        apy_total: Some(apy),
        apy_base: None,
        apy_reward: None,
        is_stablecoin: false,
        observed_at: at(2024, 6, 1),
        apy_inconsistent: false,
    }
}

pub fn key(s: &str) -> TokenKey {
    TokenKey::new(s, "Ethereum")
}

pub fn name(i: usize) -> String {
    format!("T{i:02}")
}

/// Graph on nodes `T00..` from `(src, dst, tvl)` index triples.
pub fn graph_from(n: usize, edges: &[(usize, usize, f64)]) -> DerivationGraph {
    let names: Vec<String> = (0..n).map(name).collect();
    let mut g = TokenGraph::from_pairs(edges.iter().map(|(a, b, t)| (names[*a].as_str(), names[*b].as_str(), *t)), "Ethereum");
    for nm in &names {
        g.add_node(&TokenRef::new(nm.as_str(), "Ethereum"));
    }
    DerivationGraph::from_graph(g)
}

/// Random DAG on `2..=max_n` nodes: each forward pair `i < j` becomes an
/// edge with probability `p`, TVL uniform on 1..1000.
pub fn random_dag(rng: &mut impl Rng, max_n: usize, p: f64) -> (usize, Vec<(usize, usize, f64)>) {
    let n = rng.random_range(2..=max_n);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(1..1000) as f64));
            }
        }
    }
    (n, edges)
}

/// Nodes without incoming edges.
pub fn roots(n: usize, edges: &[(usize, usize, f64)]) -> BTreeSet<usize> {
    let with_in: BTreeSet<usize> = edges.iter().map(|e| e.1).collect();
    (0..n).filter(|i| !with_in.contains(i)).collect()
}

pub fn keys(s: &BTreeSet<usize>) -> BTreeSet<TokenKey> {
    s.iter().map(|i| key(&name(*i))).collect()
}

/// All-pairs hop counts by Floyd–Warshall; `None` when unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<Option<u32>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b, _) in edges {
        if a != b {
            d[a][b] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

/// Shortest hop count from any source, by brute force.
pub fn distance_oracle(n: usize, edges: &[(usize, usize, f64)], sources: &BTreeSet<usize>) -> BTreeMap<TokenKey, u32> {
    let d = floyd_warshall(n, edges);
    (0..n)
        .filter_map(|x| sources.iter().filter_map(|&s| d[s][x]).min().map(|v| (key(&name(x)), v)))
        .collect()
}

/// Non-trivial strongly connected components by mutual reachability.
pub fn scc_oracle(n: usize, edges: &[(usize, usize, f64)]) -> BTreeSet<BTreeSet<usize>> {
    let d = floyd_warshall(n, edges);
    let self_loop: BTreeSet<usize> = edges.iter().filter(|(a, b, _)| a == b).map(|(a, _, _)| *a).collect();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let comp: BTreeSet<usize> = (0..n).filter(|&j| d[i][j].is_some() && d[j][i].is_some()).collect();
        if comp.len() > 1 || self_loop.contains(&i) {
            out.insert(comp);
        }
    }
    out
}

pub struct DummyFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

fn fe_label(o: &PanelObservation, d: FeDim) -> String {
    match d {
        FeDim::Period => o.period.to_string(),
        FeDim::ProtocolType => o.protocol_type.as_str().to_string(),
        FeDim::Chain => o.chain.clone(),
        FeDim::Pool => o.pool_id.clone(),
        FeDim::Protocol => o.protocol.clone(),
    }
}

/// OLS with an intercept and one dummy per non-reference level of each
/// fixed-effect dimension, pool-clustered CR1 covariance, all through a
/// pseudo-inverse of the full design.
pub fn dummy_ols(rows: &[PanelObservation], dep: Var, regs: &[Var], fe: &[FeDim]) -> DummyFit {
    let n = rows.len();
    let mut cols: Vec<Vec<f64>> = regs.iter().map(|v| rows.iter().map(|r| v.value(r).unwrap()).collect()).collect();
    cols.push(vec![1.0; n]);
    for &d in fe {
        let levels: BTreeSet<String> = rows.iter().map(|r| fe_label(r, d)).collect();
        for l in levels.iter().skip(1) {
            cols.push(rows.iter().map(|r| if &fe_label(r, d) == l { 1.0 } else { 0.0 }).collect());
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| dep.value(r).unwrap()));
    // SVD of the design itself; the normal equations square its condition number
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > smax * 1e-10).collect();
    let rank = keep.len();
    let beta = svd.solve(&y, smax * 1e-10).unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let k = cols.len();
    let mut inv = DMatrix::<f64>::zeros(k, k);
    for &i in &keep {
        let vi = v_t.row(i).transpose();
        inv += &vi * vi.transpose() / svd.singular_values[i].powi(2);
    }
    let e = &y - &x * &beta;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.pool_id.as_str()).or_default().push(i);
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for idx in groups.values() {
        let mut s = DVector::<f64>::zeros(k);
        for &i in idx {
            s += x.row(i).transpose() * e[i];
        }
        meat += &s * s.transpose();
    }
    let g = groups.len() as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n - rank) as f64;
    let v = (&inv * meat * &inv) * c;
    DummyFit {
        beta: (0..regs.len()).map(|j| beta[j]).collect(),
        se: (0..regs.len()).map(|j| v[(j, j)].sqrt()).collect(),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}
