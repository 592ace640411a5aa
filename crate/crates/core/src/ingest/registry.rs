use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{Category, TokenRef};

/// Naming conventions for receipt and wrapper tokens.
///
/// `receipt` maps a protocol slug to the prefix its receipt tokens carry
/// (`aave` issues `aUSDC` for `USDC`). `wrappers` lists generic wrapper
/// prefixes (`w`, `wst`, `st`). Both sets are used to recognise wrapping
/// pairs when reversing edges and when stripping prefixes from names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixRegistry {
    #[serde(default)]
    pub receipt: BTreeMap<String, String>,
    #[serde(default)]
    pub wrappers: Vec<String>,
}

impl Default for PrefixRegistry {
    fn default() -> Self {
        let receipt = [("aave", "a"), ("compound", "c"), ("spark", "sp")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let wrappers = ["w", "wst", "st"].into_iter().map(String::from).collect();
        Self { receipt, wrappers }
    }
}

impl PrefixRegistry {
    pub fn empty() -> Self {
        Self { receipt: BTreeMap::new(), wrappers: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.receipt.is_empty() && self.wrappers.is_empty()
    }

    /// Receipt prefix for a protocol slug. Matches the slug exactly, else the
    /// longest registered key that prefixes the slug at a `-` boundary, so
    /// `aave-v3` resolves to the `aave` rule.
    pub fn receipt_prefix(&self, protocol: &str) -> Option<&str> {
        let slug = protocol.trim().to_ascii_lowercase();
        if let Some(p) = self.receipt.get(&slug) {
            return Some(p);
        }
        self.receipt
            .iter()
            .filter(|(k, _)| slug.len() > k.len() && slug.starts_with(k.as_str()) && slug.as_bytes()[k.len()] == b'-')
            .max_by_key(|(k, _)| k.len())
            .map(|(_, v)| v.as_str())
    }

    /// All distinct prefixes, uppercased, shortest first (ties alphabetical).
    pub fn all_prefixes_upper(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .receipt
            .values()
            .chain(self.wrappers.iter())
            .map(|p| p.trim().to_uppercase())
            .filter(|p| !p.is_empty())
            .collect();
        let mut v: Vec<String> = set.into_iter().collect();
        v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        v
    }

    /// True when `wrapper` (uppercased) equals some prefix followed by
    /// `underlying` (uppercased).
    pub fn is_wrapping_pair(&self, wrapper: &str, underlying: &str) -> bool {
        let w = wrapper.to_uppercase();
        let u = underlying.to_uppercase();
        if u.is_empty() || w.len() <= u.len() || !w.ends_with(&u) {
            return false;
        }
        let head = &w[..w.len() - u.len()];
        self.all_prefixes_upper().iter().any(|p| p == head)
    }
}

/// Derives the receipt token a lending (or CDP-style) protocol issues for a
/// deposit of `input`.
pub fn infer_receipt_token(
    registry: &PrefixRegistry,
    protocol: &str,
    category: Category,
    input: &TokenRef,
) -> Result<TokenRef> {
    if !matches!(category, Category::Lending | Category::Cdp) {
        return Err(Error::InvalidArgument(format!("{category} protocols do not issue receipt tokens")));
    }
    let prefix = registry
        .receipt_prefix(protocol)
        .ok_or_else(|| Error::NoRule { protocol: protocol.to_string() })?;
    Ok(TokenRef::new(format!("{prefix}{}", input.symbol), input.chain.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> TokenRef {
        TokenRef::new(s, "Ethereum")
    }

    #[test]
    fn receipt_symbols_follow_protocol_prefix() {
        let reg = PrefixRegistry::default();
        let a = infer_receipt_token(&reg, "aave", Category::Lending, &tok("USDC")).unwrap();
        assert_eq!(a.symbol, "aUSDC");
        assert_eq!(a.chain, "Ethereum");
        let c = infer_receipt_token(&reg, "compound", Category::Lending, &tok("WETH")).unwrap();
        assert_eq!(c.symbol, "cWETH");
        let sp = infer_receipt_token(&reg, "spark", Category::Lending, &tok("wstETH")).unwrap();
        assert_eq!(sp.symbol, "spwstETH");
    }

    #[test]
    fn versioned_slugs_resolve() {
        let reg = PrefixRegistry::default();
        assert_eq!(reg.receipt_prefix("aave-v3"), Some("a"));
        assert_eq!(reg.receipt_prefix("compound-v2"), Some("c"));
        assert_eq!(reg.receipt_prefix("aavex"), None);
    }

    #[test]
    fn unregistered_protocol_has_no_rule() {
        let reg = PrefixRegistry::default();
        let err = infer_receipt_token(&reg, "morpho", Category::Lending, &tok("USDC")).unwrap_err();
        assert!(matches!(err, Error::NoRule { .. }));
    }

    #[test]
    fn wrapping_pairs() {
        let reg = PrefixRegistry::default();
        assert!(reg.is_wrapping_pair("WETH", "ETH"));
        assert!(reg.is_wrapping_pair("wstETH", "stETH"));
        assert!(reg.is_wrapping_pair("stETH", "ETH"));
        assert!(reg.is_wrapping_pair("aUSDC", "USDC"));
        assert!(!reg.is_wrapping_pair("ETH", "WETH"));
        assert!(!reg.is_wrapping_pair("xETH", "ETH"));
    }
}
