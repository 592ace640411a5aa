use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::econ::Period;
use crate::error::{Error, Result};
use crate::ingest::PoolRecord;
use crate::token::{Category, TokenKey, TokenRef};

/// Knobs for [`generate_ecosystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_base_tokens: usize,
    pub max_depth: usize,
    /// Category of each token-creating pool. Trading venues never create
    /// hierarchy tokens, so DEX is not allowed here.
    pub category_mix: BTreeMap<Category, f64>,
    /// Share of a token's amount re-deposited into its children, in (0, 1].
    pub tvl_decay: f64,
    /// Pool-level APY intercepts are drawn uniformly from this range.
    pub creation_yield_range: (f64, f64),
    pub true_tier_coef: f64,
    pub true_distance_coef: f64,
    pub true_stablecoin_coef: f64,
    pub noise_sd: f64,
    pub n_months: usize,
    pub start: Period,
    pub seed: u64,
    /// Children of each base token (inclusive range, lower bound ≥ 1).
    pub base_children: (usize, usize),
    /// Children of each derived token above the depth limit.
    pub derived_children: (usize, usize),
    /// Base token amounts (USD) are drawn uniformly from this range.
    pub base_tvl_usd: (f64, f64),
    pub max_tokens: usize,
    /// Adds low-TVL second issuers so some tokens have tier ≠ distance.
    pub diamonds: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let category_mix = [
            (Category::Lending, 0.35),
            (Category::LiquidStaking, 0.2),
            (Category::Restaking, 0.1),
            (Category::YieldAggregator, 0.15),
            (Category::Derivatives, 0.1),
            (Category::Other, 0.1),
        ]
        .into_iter()
        .collect();
        Self {
            n_base_tokens: 4,
            max_depth: 3,
            category_mix,
            tvl_decay: 0.5,
            creation_yield_range: (4.0, 8.0),
            true_tier_coef: -0.5,
            true_distance_coef: 0.0,
            true_stablecoin_coef: 0.3,
            noise_sd: 0.5,
            n_months: 12,
            start: Period::new(2022, 2),
            seed: 7,
            base_children: (3, 4),
            derived_children: (0, 3),
            base_tvl_usd: (2e8, 2e9),
            max_tokens: 200,
            diamonds: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let total: f64 = self.category_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("category probabilities sum to {total}, not 1"));
        }
        if self.category_mix.values().any(|p| !(*p >= 0.0)) {
            return bad("category probabilities must be nonnegative".into());
        }
        if self.category_mix.get(&Category::Dex).is_some_and(|p| *p > 0.0) {
            return bad("DEX pools cannot create tokens; remove DEX from category_mix".into());
        }
        if self.n_base_tokens == 0 {
            return bad("n_base_tokens must be at least 1".into());
        }
        if !(self.tvl_decay > 0.0 && self.tvl_decay <= 1.0) {
            return bad(format!("tvl_decay {} outside (0, 1]", self.tvl_decay));
        }
        let (lo, hi) = self.creation_yield_range;
        if !(lo <= hi) || !(self.base_tvl_usd.0 > 0.0 && self.base_tvl_usd.0 <= self.base_tvl_usd.1) {
            return bad("empty range in creation_yield_range or base_tvl_usd".into());
        }
        if self.base_children.0 == 0 || self.base_children.0 > self.base_children.1 || self.derived_children.0 > self.derived_children.1 {
            return bad("child-count ranges must be ordered and base tokens need at least one child".into());
        }
        if self.base_children.1 > PREFIXES.len() || self.derived_children.1 > PREFIXES.len() {
            return bad(format!("at most {} children per token", PREFIXES.len()));
        }
        if self.n_months == 0 {
            return bad("n_months must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative".into());
        }
        Ok(())
    }
}

/// Known answers for a generated ecosystem.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GroundTruth {
    pub tier: BTreeMap<TokenKey, i64>,
    pub distance: BTreeMap<TokenKey, u32>,
    pub parent: BTreeMap<TokenKey, TokenKey>,
    /// Creation yield of each hierarchy edge in the final month, percent.
    pub creation_yield: BTreeMap<(TokenKey, TokenKey), f64>,
    pub embedded: BTreeMap<TokenKey, f64>,
    pub panel_coefs: BTreeMap<String, f64>,
    /// Total amount over base amount, from the generated pool TVLs.
    pub lm: f64,
}

// (prefix, protocol, category); prefixes form a prefix-free code so every
// generated symbol decodes to a unique lineage.
const PREFIXES: [(&str, &str, Category); 9] = [
    ("a", "aave-v3", Category::Lending),
    ("c", "compound-v3", Category::Lending),
    ("sp", "spark", Category::Lending),
    ("st", "lido", Category::LiquidStaking),
    ("r", "eigenlayer", Category::Restaking),
    ("y", "yearn", Category::YieldAggregator),
    ("pt", "pendle", Category::Derivatives),
    ("w", "wrapper", Category::Other),
    ("m", "maker", Category::Cdp),
];
const CHAINS: [&str; 3] = ["Ethereum", "Arbitrum", "Base"];

struct Token {
    key: TokenKey,
    symbol: String,
    chain: &'static str,
    parent: Option<usize>,
    depth: usize,
    amount: f64,
    stable: bool,
}

struct Pool {
    id: String,
    protocol: String,
    category: Category,
    input: usize,
    /// Explicit output; `None` for holding pools and receipt-issuing
    /// lending markets.
    output: Option<usize>,
    creates: Option<usize>,
    tvl: f64,
    intercept: f64,
    reward_share: f64,
}

fn base_symbols(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let s: String = (0..3).map(|_| rng.random_range(b'A'..=b'Z') as char).collect();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Builds a forest of tokens rooted at base assets and emits monthly pool
/// snapshots for it.
///
/// Every token `X` carries an amount `A(X)`. Each child receives
/// `tvl_decay · A(X) / n_children` through one creating pool; what is left
/// sits in a DEX pool that takes `X` and issues nothing, so the TVL
/// attributed to `X` is exactly `A(X)`. Child symbols are a protocol prefix
/// plus the parent symbol (`stABC`, `aSTABC`), keeping every hierarchy edge
/// name-related.
pub fn generate_ecosystem(cfg: &SynthConfig) -> Result<(Vec<PoolRecord>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tokens: Vec<Token> = Vec::new();
    for sym in base_symbols(&mut rng, cfg.n_base_tokens) {
        let chain = *CHAINS.choose(&mut rng).expect("nonempty");
        let amount = rng.random_range(cfg.base_tvl_usd.0..=cfg.base_tvl_usd.1);
        let stable = rng.random_bool(1.0 / 3.0);
        tokens.push(Token { key: TokenKey::new(&sym, chain), symbol: sym, chain, parent: None, depth: 0, amount, stable });
    }

    let mix: Vec<(Category, f64)> = cfg.category_mix.iter().filter(|(_, p)| **p > 0.0).map(|(c, p)| (*c, *p)).collect();
    let mut pools: Vec<Pool> = Vec::new();
    let mut next = 0;
    while next < tokens.len() {
        let depth = tokens[next].depth;
        let (lo, hi) = if depth == 0 { cfg.base_children } else { cfg.derived_children };
        let room = cfg.max_tokens.saturating_sub(tokens.len());
        let n = if depth >= cfg.max_depth { 0 } else { rng.random_range(lo..=hi).min(room) };
        let mut free: Vec<usize> = (0..PREFIXES.len()).collect();
        for _ in 0..n {
            // category first, then one of its unused prefixes
            let weights: Vec<(Category, f64)> =
                mix.iter().filter(|(c, _)| free.iter().any(|&i| PREFIXES[i].2 == *c)).copied().collect();
            let cat = match weights.choose_weighted(&mut rng, |w| w.1) {
                Ok(w) => w.0,
                Err(_) => break,
            };
            let options: Vec<usize> = free.iter().copied().filter(|&i| PREFIXES[i].2 == cat).collect();
            let pick = *options.choose(&mut rng).expect("category has a free prefix");
            free.retain(|&i| i != pick);
            let (prefix, protocol, category) = PREFIXES[pick];
            let parent = &tokens[next];
            let symbol = format!("{prefix}{}", parent.symbol);
            let amount = cfg.tvl_decay * parent.amount / n as f64;
            let child = Token {
                key: TokenKey::new(&symbol, parent.chain),
                symbol,
                chain: parent.chain,
                parent: Some(next),
                depth: depth + 1,
                amount,
                stable: parent.stable,
            };
            let lending = category == Category::Lending;
            pools.push(Pool {
                id: String::new(),
                protocol: protocol.into(),
                category,
                input: next,
                output: if lending { None } else { Some(tokens.len()) },
                creates: Some(tokens.len()),
                tvl: amount,
                intercept: 0.0,
                reward_share: 0.0,
            });
            tokens.push(child);
        }
        next += 1;
    }

    let n_derived = tokens.iter().filter(|t| t.parent.is_some()).count();
    if cfg.max_depth >= 1 && n_derived == 0 {
        return Err(Error::Config("configuration produced no derived tokens".into()));
    }

    // Holding pools take up whatever was not passed to children.
    for (i, t) in tokens.iter().enumerate() {
        let passed: f64 = pools.iter().filter(|p| p.input == i).map(|p| p.tvl).sum();
        let rest = t.amount - passed;
        if rest > 1e-9 * t.amount {
            pools.push(Pool {
                id: String::new(),
                protocol: "uniswap-v3".into(),
                category: Category::Dex,
                input: i,
                output: None,
                creates: None,
                tvl: rest,
                intercept: 0.0,
                reward_share: 0.0,
            });
        }
    }

    let mut distance: BTreeMap<TokenKey, u32> = tokens.iter().map(|t| (t.key.clone(), t.depth as u32)).collect();
    if cfg.diamonds > 0 {
        let min_edge = pools.iter().filter(|p| p.creates.is_some()).map(|p| p.tvl).fold(f64::INFINITY, f64::min);
        let children = |i: usize| pools.iter().filter(|p| p.input == i && p.creates.is_some()).count();
        // only tokens too small to count as base candidates keep an
        // unrelated incoming edge through the derivation filters
        let mut targets: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].depth >= 2 && children(i) < 3).collect();
        targets.sort_by_key(|&i| (std::cmp::Reverse(tokens[i].depth), i));
        let roots: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].parent.is_none()).collect();
        let root_of = |mut i: usize| {
            while let Some(p) = tokens[i].parent {
                i = p;
            }
            i
        };
        let mut added = 0;
        for &t in &targets {
            if added == cfg.diamonds {
                break;
            }
            let own = root_of(t);
            let Some(&src) = roots.iter().find(|&&r| r != own && tokens[r].chain == tokens[t].chain) else {
                continue;
            };
            added += 1;
            pools.push(Pool {
                id: String::new(),
                protocol: "yearn".into(),
                category: Category::YieldAggregator,
                input: src,
                output: Some(t),
                creates: None,
                tvl: min_edge * 1e-3,
                intercept: 0.0,
                reward_share: 0.0,
            });
        }
        // shortest hops with the extra issuers
        loop {
            let mut changed = false;
            for p in &pools {
                if let (Some(o), true) = (p.output.or(p.creates), p.category != Category::Dex) {
                    let via = distance[&tokens[p.input].key] + 1;
                    if via < distance[&tokens[o].key] {
                        distance.insert(tokens[o].key.clone(), via);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    for (i, p) in pools.iter_mut().enumerate() {
        p.id = format!("pool-{i:04}");
        p.intercept = rng.random_range(cfg.creation_yield_range.0..=cfg.creation_yield_range.1);
        p.reward_share = rng.random_range(0.0..0.3);
    }

    let month_fx: Vec<f64> = {
        let n = Normal::new(0.0, 0.5).expect("valid sd");
        (0..cfg.n_months).map(|_| n.sample(&mut rng)).collect()
    };
    // common TVL path ending at 1 so the final month carries the amounts
    let growth: Vec<f64> = (0..cfg.n_months).map(|m| 0.8f64.powf((cfg.n_months - 1 - m) as f64 / cfg.n_months as f64)).collect();
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");

    let mut records = Vec::with_capacity(pools.len() * cfg.n_months);
    let mut final_apy: BTreeMap<usize, f64> = BTreeMap::new();
    for m in 0..cfg.n_months {
        let period = cfg.start.offset(m as i64);
        let day = period.first_day();
        let at = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).expect("midnight")) + Duration::days(14);
        for (i, p) in pools.iter().enumerate() {
            let t = &tokens[p.input];
            let eps = if cfg.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let apy = p.intercept
                + cfg.true_tier_coef * t.depth as f64
                + cfg.true_distance_coef * distance[&t.key] as f64
                + cfg.true_stablecoin_coef * if t.stable { 1.0 } else { 0.0 }
                + month_fx[m]
                + eps;
            let reward = apy * p.reward_share;
            if m + 1 == cfg.n_months {
                final_apy.insert(i, apy);
            }
            records.push(PoolRecord {
                pool_id: p.id.clone(),
                protocol: p.protocol.clone(),
                category: p.category,
                chain: t.chain.into(),
                input_tokens: vec![TokenRef::new(t.symbol.clone(), t.chain)],
                output_token: p.output.map(|o| TokenRef::new(tokens[o].symbol.clone(), tokens[o].chain)),
                tvl_usd: p.tvl * growth[m],
                apy_total: Some(apy),
                apy_base: Some(apy - reward),
                apy_reward: Some(reward),
                is_stablecoin: t.stable,
                observed_at: at,
                apy_inconsistent: false,
            });
        }
    }

    let mut truth = GroundTruth::default();
    for t in &tokens {
        truth.tier.insert(t.key.clone(), t.depth as i64);
        if let Some(p) = t.parent {
            truth.parent.insert(t.key.clone(), tokens[p].key.clone());
        }
    }
    truth.distance = distance;
    for (i, p) in pools.iter().enumerate() {
        if let Some(c) = p.creates {
            truth.creation_yield.insert((tokens[p.input].key.clone(), tokens[c].key.clone()), final_apy[&i]);
        }
    }
    for t in &tokens {
        let e = match t.parent {
            None => 0.0,
            Some(p) => truth.embedded[&tokens[p].key] + truth.creation_yield[&(tokens[p].key.clone(), t.key.clone())],
        };
        truth.embedded.insert(t.key.clone(), e);
    }
    truth.panel_coefs = [
        ("tier".to_string(), cfg.true_tier_coef),
        ("graph_distance".to_string(), cfg.true_distance_coef),
        ("stablecoin".to_string(), cfg.true_stablecoin_coef),
    ]
    .into();
    let mut held: BTreeMap<usize, f64> = BTreeMap::new();
    for p in &pools {
        *held.entry(p.input).or_default() += p.tvl;
    }
    let total: f64 = held.values().sum();
    let base: f64 = held.iter().filter(|(i, _)| tokens[**i].parent.is_none()).map(|(_, v)| v).sum();
    truth.lm = total / base;
    Ok((records, truth))
}

/// `symbol,chain,tier,graph_distance,parent_symbol,creation_yield,embedded_yield`
pub fn write_truth_csv<W: Write>(truth: &GroundTruth, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["symbol", "chain", "tier", "graph_distance", "parent_symbol", "creation_yield", "embedded_yield"])?;
    for (k, tier) in &truth.tier {
        let parent = truth.parent.get(k);
        let cy = parent.and_then(|p| truth.creation_yield.get(&(p.clone(), k.clone())));
        w.write_record([
            k.symbol.as_str(),
            &k.chain,
            &tier.to_string(),
            &truth.distance.get(k).map(|d| d.to_string()).unwrap_or_default(),
            parent.map(|p| p.symbol.as_str()).unwrap_or(""),
            &cy.map(|v| v.to_string()).unwrap_or_default(),
            &truth.embedded.get(k).map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_all_base() {
        let cfg = SynthConfig { max_depth: 0, ..Default::default() };
        let (recs, truth) = generate_ecosystem(&cfg).unwrap();
        assert!(truth.tier.values().all(|t| *t == 0));
        assert!(recs.iter().all(|r| r.output_token.is_none() && r.category == Category::Dex));
        assert_eq!(truth.lm, 1.0);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig { n_base_tokens: 3, max_depth: 3, seed: 7, ..Default::default() };
        assert_eq!(generate_ecosystem(&cfg).unwrap().0, generate_ecosystem(&cfg).unwrap().0);
        let other = SynthConfig { seed: 8, ..cfg };
        assert_ne!(generate_ecosystem(&other).unwrap().0, generate_ecosystem(&SynthConfig { seed: 7, ..other.clone() }).unwrap().0);
    }

    #[test]
    fn truth_is_a_forest() {
        let (_, truth) = generate_ecosystem(&SynthConfig { max_depth: 5, ..Default::default() }).unwrap();
        for (k, p) in &truth.parent {
            assert_eq!(truth.tier[k], truth.tier[p] + 1);
            assert_eq!(truth.distance[k] as i64, truth.tier[k]);
        }
        assert!(truth.tier.len() <= 200);
    }

    #[test]
    fn dex_in_mix_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.category_mix = [(Category::Dex, 0.5), (Category::Lending, 0.5)].into();
        assert!(matches!(generate_ecosystem(&cfg), Err(Error::Config(_))));
        cfg.category_mix = [(Category::Lending, 0.7)].into();
        assert!(matches!(generate_ecosystem(&cfg), Err(Error::Config(_))));
    }
}
