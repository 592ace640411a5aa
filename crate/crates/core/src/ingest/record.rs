use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::token::{Category, TokenRef};

/// Maximum allowed gap between `apy_total` and `apy_base + apy_reward`
/// before a record is flagged inconsistent.
pub const APY_TOLERANCE: f64 = 0.01;

/// One pool observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub pool_id: String,
    pub protocol: String,
    pub category: Category,
    pub chain: String,
    pub input_tokens: Vec<TokenRef>,
    pub output_token: Option<TokenRef>,
    pub tvl_usd: f64,
    /// Total APY in percent; `None` when the source had no value.
    pub apy_total: Option<f64>,
    pub apy_base: Option<f64>,
    pub apy_reward: Option<f64>,
    pub is_stablecoin: bool,
    pub observed_at: DateTime<Utc>,
    /// Set when base + reward disagrees with the total by more than
    /// [`APY_TOLERANCE`].
    pub apy_inconsistent: bool,
}

impl PoolRecord {
    /// First-listed input token.
    pub fn primary_token(&self) -> &TokenRef {
        &self.input_tokens[0]
    }

    pub(crate) fn check_apy_consistency(&mut self) {
        self.apy_inconsistent = match (self.apy_total, self.apy_base, self.apy_reward) {
            (Some(t), Some(b), Some(r)) => (t - (b + r)).abs() > APY_TOLERANCE,
            _ => false,
        };
    }
}

/// Keeps the most recent observation of every pool; on equal timestamps the
/// later record in input order wins. Output is sorted by pool id.
pub fn latest_per_pool(records: &[PoolRecord]) -> Vec<PoolRecord> {
    let mut latest: BTreeMap<&str, &PoolRecord> = BTreeMap::new();
    for r in records {
        match latest.get(r.pool_id.as_str()) {
            Some(prev) if prev.observed_at > r.observed_at => {}
            _ => {
                latest.insert(&r.pool_id, r);
            }
        }
    }
    latest.into_values().cloned().collect()
}
