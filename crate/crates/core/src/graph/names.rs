//! Symbol matching rules for wrapper detection and synthetic name edges.

use serde::{Deserialize, Serialize};

/// Thresholds for name-based matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NameRules {
    /// Minimum length of a stripped core or composite part.
    pub min_core_len: usize,
    /// Minimum longest-common-substring length.
    pub min_lcs_len: usize,
    /// Minimum longest-common-substring length as a fraction of the shorter
    /// symbol.
    pub min_lcs_frac: f64,
}

impl Default for NameRules {
    fn default() -> Self {
        Self { min_core_len: 2, min_lcs_len: 3, min_lcs_frac: 0.6 }
    }
}

/// How a synthetic parent was matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NameMatch {
    PrefixStrip,
    CompositePart,
    Substring,
}

/// Length of the longest common substring (byte-wise on ASCII-uppercased
/// input).
pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Substring rule: shared run of at least `min_lcs_len` characters that
/// covers at least `min_lcs_frac` of the shorter symbol.
pub fn substring_match(a: &str, b: &str, rules: &NameRules) -> bool {
    let shorter = a.len().min(b.len());
    let lcs = longest_common_substring(a, b);
    lcs >= rules.min_lcs_len && lcs as f64 >= rules.min_lcs_frac * shorter as f64
}

/// Whether two uppercased symbols are name-related: one contains the other
/// and the contained one is at least `min_core_len` long. Sharing a run
/// such as `USD` is not enough.
pub fn name_related(a: &str, b: &str, rules: &NameRules) -> bool {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    s.len() >= rules.min_core_len && l.contains(s)
}

/// Splits a composite symbol such as `PT-weETH-26DEC2024` into its parts.
pub fn composite_parts(symbol: &str) -> Vec<&str> {
    symbol.split(['-', '_', '/', ' ']).filter(|p| !p.is_empty()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_examples() {
        assert_eq!(longest_common_substring("WEETH", "EETH"), 4);
        assert_eq!(longest_common_substring("ABC", "XYZ"), 0);
        assert_eq!(longest_common_substring("AWSTETH", "WSTETH"), 6);
    }

    #[test]
    fn relatedness() {
        let r = NameRules::default();
        assert!(name_related("ETH", "WETH", &r));
        assert!(name_related("STETH", "WSTETH", &r));
        assert!(!name_related("USDC", "DAI", &r));
        // a single shared letter never counts
        assert!(!name_related("A", "AB", &r));
        assert!(!name_related("USDC", "USDT", &r));
        // 3 of 5 = 60%
        assert!(substring_match("ABCDE", "XXABCYY", &r));
        assert!(!substring_match("ABCDEF", "XXABCYY", &r));
        assert!(substring_match("USDC", "USDT", &r));
    }

    #[test]
    fn composite_split() {
        assert_eq!(composite_parts("PT-weETH-26DEC2024"), vec!["PT", "weETH", "26DEC2024"]);
        assert_eq!(composite_parts("USDC"), vec!["USDC"]);
    }
}
