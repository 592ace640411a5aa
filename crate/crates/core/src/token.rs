//! Token identity and protocol categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A token as it appears in pool data.
///
/// `symbol` keeps the casing found in the source for display; matching is
/// done on the uppercased symbol. Two refs denote the same token when their
/// chains match and either both carry an address and the addresses match, or
/// at least one lacks an address and the uppercased symbols match.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRef {
    pub symbol: String,
    pub chain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

impl TokenRef {
    pub fn new(symbol: impl Into<String>, chain: impl Into<String>) -> Self {
        Self { symbol: symbol.into().trim().to_string(), chain: chain.into().trim().to_string(), address: None }
    }

    pub fn with_address(mut self, address: impl Into<String>) -> Self {
        let a = address.into().trim().to_ascii_lowercase();
        self.address = if a.is_empty() { None } else { Some(a) };
        self
    }

    /// Uppercased symbol used for all matching.
    pub fn match_symbol(&self) -> String {
        self.symbol.to_uppercase()
    }

    /// Graph key. Identity resolution strips addresses that are not needed to
    /// tell tokens apart, so after resolution this key is canonical.
    pub fn key(&self) -> TokenKey {
        TokenKey { symbol: self.match_symbol(), chain: self.chain.clone(), address: self.address.clone() }
    }
}

impl PartialEq for TokenRef {
    fn eq(&self, other: &Self) -> bool {
        if self.chain != other.chain {
            return false;
        }
        match (&self.address, &other.address) {
            (Some(a), Some(b)) => a == b,
            _ => self.match_symbol() == other.match_symbol(),
        }
    }
}

impl fmt::Display for TokenRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.symbol, self.chain)
    }
}

/// Canonical, totally ordered node key.
///
/// Ordering is (symbol, chain, address), which is also the deterministic
/// tie-break order used during tier propagation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenKey {
    pub symbol: String,
    pub chain: String,
    pub address: Option<String>,
}

impl TokenKey {
    pub fn new(symbol: &str, chain: &str) -> Self {
        Self { symbol: symbol.trim().to_uppercase(), chain: chain.trim().to_string(), address: None }
    }
}

impl fmt::Display for TokenKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.address {
            Some(a) => write!(f, "{}@{}#{}", self.symbol, self.chain, a),
            None => write!(f, "{}@{}", self.symbol, self.chain),
        }
    }
}

/// Protocol category as used by the derivation filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Lending,
    LiquidStaking,
    Restaking,
    #[serde(rename = "DEX")]
    Dex,
    #[serde(rename = "CDP")]
    Cdp,
    YieldAggregator,
    Derivatives,
    Other,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Lending,
        Category::LiquidStaking,
        Category::Restaking,
        Category::Dex,
        Category::Cdp,
        Category::YieldAggregator,
        Category::Derivatives,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Lending => "Lending",
            Category::LiquidStaking => "LiquidStaking",
            Category::Restaking => "Restaking",
            Category::Dex => "DEX",
            Category::Cdp => "CDP",
            Category::YieldAggregator => "YieldAggregator",
            Category::Derivatives => "Derivatives",
            Category::Other => "Other",
        }
    }

    pub fn group(self) -> ProtocolGroup {
        match self {
            Category::Lending => ProtocolGroup::Lending,
            Category::LiquidStaking | Category::Restaking => ProtocolGroup::Staking,
            Category::Dex => ProtocolGroup::Dex,
            _ => ProtocolGroup::Other,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String =
            s.chars().filter(|c| !matches!(c, ' ' | '_' | '-')).collect::<String>().to_ascii_lowercase();
        Ok(match norm.as_str() {
            "lending" => Category::Lending,
            "liquidstaking" | "staking" => Category::LiquidStaking,
            "restaking" | "liquidrestaking" => Category::Restaking,
            "dex" | "dexs" | "dexes" => Category::Dex,
            "cdp" => Category::Cdp,
            "yieldaggregator" | "yield" => Category::YieldAggregator,
            "derivatives" => Category::Derivatives,
            "other" => Category::Other,
            _ => return Err(Error::Config(format!("unknown protocol category `{s}`"))),
        })
    }
}

/// The four protocol groups used for multiplier decomposition and the
/// tier-transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProtocolGroup {
    Lending,
    Staking,
    Dex,
    Other,
}

impl ProtocolGroup {
    pub const ALL: [ProtocolGroup; 4] =
        [ProtocolGroup::Lending, ProtocolGroup::Staking, ProtocolGroup::Dex, ProtocolGroup::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolGroup::Lending => "lending",
            ProtocolGroup::Staking => "staking",
            ProtocolGroup::Dex => "dex",
            ProtocolGroup::Other => "other",
        }
    }
}
