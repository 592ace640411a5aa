use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::econ::{PanelObservation, Period};
use crate::error::{Error, Result};
use crate::token::Category;

/// Multiplies the tier effect inside `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub start: Period,
    pub end: Period,
    pub tier_multiplier: f64,
}

/// Knobs for [`generate_panel`], which draws a pool-month panel directly
/// from a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelSimConfig {
    pub n_pools: usize,
    pub n_months: usize,
    pub start: Period,
    pub tier_coef: f64,
    pub distance_coef: f64,
    /// Coefficients of the corrected APY; the embedded yield is the
    /// difference, so `apy_corrected = apy + embedded_yield` holds exactly.
    pub corrected_tier_coef: f64,
    pub corrected_distance_coef: f64,
    /// Probability that a token of tier ≥ 2 has a shorter path to a base.
    pub shortcut_prob: f64,
    pub noise_sd: f64,
    /// Standard deviation of the pool-level random intercept.
    pub pool_sd: f64,
    pub regimes: Vec<RegimeShift>,
    pub seed: u64,
}

impl Default for PanelSimConfig {
    fn default() -> Self {
        Self {
            n_pools: 120,
            n_months: 12,
            start: Period::new(2022, 2),
            tier_coef: -0.5,
            distance_coef: 0.0,
            corrected_tier_coef: 1.0,
            corrected_distance_coef: 0.0,
            shortcut_prob: 0.4,
            noise_sd: 1.0,
            pool_sd: 0.5,
            regimes: Vec::new(),
            seed: 1,
        }
    }
}

const TYPES: [Category; 5] =
    [Category::Lending, Category::Dex, Category::LiquidStaking, Category::YieldAggregator, Category::Derivatives];
const CHAINS: [&str; 3] = ["Ethereum", "Arbitrum", "Base"];

/// Panel with tiers uniform on 0..=3, graph distance equal to tier except
/// for random shortcuts, additive month, protocol-type and chain effects,
/// a pool random intercept and Gaussian noise.
pub fn generate_panel(cfg: &PanelSimConfig) -> Result<Vec<PanelObservation>> {
    if cfg.n_pools == 0 || cfg.n_months == 0 {
        return Err(Error::Config("panel needs at least one pool and one month".into()));
    }
    if !(0.0..=1.0).contains(&cfg.shortcut_prob) || !(cfg.noise_sd >= 0.0) || !(cfg.pool_sd >= 0.0) {
        return Err(Error::Config("shortcut_prob must be a probability and standard deviations nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let type_fx: BTreeMap<Category, f64> = TYPES.iter().map(|c| (*c, std.sample(&mut rng))).collect();
    let chain_fx: Vec<f64> = CHAINS.iter().map(|_| std.sample(&mut rng)).collect();
    let month_fx: Vec<f64> = (0..cfg.n_months).map(|_| std.sample(&mut rng)).collect();

    let mut out = Vec::with_capacity(cfg.n_pools * cfg.n_months);
    for p in 0..cfg.n_pools {
        let tier = rng.random_range(0..=3i64);
        let distance = if tier >= 2 && rng.random_bool(cfg.shortcut_prob) { rng.random_range(1..tier) } else { tier };
        let ptype = TYPES[rng.random_range(0..TYPES.len())];
        let chain = rng.random_range(0..CHAINS.len());
        let stable = rng.random_bool(0.3);
        let u = cfg.pool_sd * std.sample(&mut rng);
        let size = rng.random_range(8.0..20.0);
        let embedded = (cfg.corrected_tier_coef - cfg.tier_coef) * tier as f64
            + (cfg.corrected_distance_coef - cfg.distance_coef) * distance as f64;
        for m in 0..cfg.n_months {
            let period = cfg.start.offset(m as i64);
            let mult: f64 = cfg
                .regimes
                .iter()
                .filter(|r| period >= r.start && period <= r.end)
                .map(|r| r.tier_multiplier)
                .product();
            let apy = 10.0
                + mult * cfg.tier_coef * tier as f64
                + cfg.distance_coef * distance as f64
                + type_fx[&ptype]
                + chain_fx[chain]
                + month_fx[m]
                + u
                + cfg.noise_sd * std.sample(&mut rng);
            out.push(PanelObservation {
                pool_id: format!("pool-{p:04}"),
                period,
                protocol: format!("{}-{}", ptype.as_str().to_lowercase(), p % 7),
                protocol_type: ptype,
                chain: CHAINS[chain].into(),
                apy,
                apy_raw: apy,
                apy_corrected: apy + embedded,
                embedded_yield: embedded,
                apy_base: Some(0.8 * apy),
                apy_reward: Some(0.2 * apy),
                log_tvl: size + 0.01 * m as f64,
                tier,
                graph_distance: Some(distance as u32),
                is_stablecoin: stable,
            });
        }
    }
    Ok(out)
}
