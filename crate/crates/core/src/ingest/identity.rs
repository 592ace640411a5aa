//! Cross-chain token identity resolution.
//!
//! Raw token mentions are merged when they share a contract address on the
//! same chain, and when they share a symbol on the same chain without
//! conflicting addresses. Tokens on different chains are never merged. When
//! one (symbol, chain) pair carries several distinct addresses the variants
//! stay separate and keep their address in the key.

use std::collections::{BTreeMap, BTreeSet};

use super::record::PoolRecord;
use crate::token::{TokenKey, TokenRef};

/// One canonical node of the token table.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalToken {
    pub token: TokenRef,
    /// Every address observed for the merged variants.
    pub addresses: BTreeSet<String>,
    /// Number of distinct raw variants merged into this node.
    pub merged_variants: usize,
}

#[derive(Debug, Clone)]
pub struct Resolution {
    pub records: Vec<PoolRecord>,
    pub tokens: BTreeMap<TokenKey, CanonicalToken>,
    /// Ambiguity messages for (symbol, chain) pairs with conflicting addresses.
    pub diagnostics: Vec<String>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Lower index (first seen) stays the root.
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

type Variant = (String, String, Option<String>); // (SYMBOL, chain, address)

fn variant_of(t: &TokenRef) -> Variant {
    (t.match_symbol(), t.chain.clone(), t.address.clone())
}

pub fn resolve_identity(records: &[PoolRecord]) -> Resolution {
    // Distinct raw variants in order of first appearance, with display casing.
    let mut index: BTreeMap<Variant, usize> = BTreeMap::new();
    let mut variants: Vec<(Variant, String)> = Vec::new();
    let mut visit = |t: &TokenRef| {
        let v = variant_of(t);
        if !index.contains_key(&v) {
            index.insert(v.clone(), variants.len());
            variants.push((v, t.symbol.clone()));
        }
    };
    for r in records {
        r.input_tokens.iter().for_each(&mut visit);
        if let Some(o) = &r.output_token {
            visit(o);
        }
    }

    // Addresses seen per (SYMBOL, chain).
    let mut group_addrs: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for ((sym, chain, addr), _) in &variants {
        let e = group_addrs.entry((sym.clone(), chain.clone())).or_default();
        if let Some(a) = addr {
            e.insert(a.clone());
        }
    }

    let mut uf = UnionFind((0..variants.len()).collect());
    let mut by_addr: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut by_symbol: BTreeMap<(String, String, bool), usize> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (i, ((sym, chain, addr), _)) in variants.iter().enumerate() {
        if let Some(a) = addr {
            match by_addr.get(&(chain.clone(), a.clone())) {
                Some(&j) => uf.union(i, j),
                None => {
                    by_addr.insert((chain.clone(), a.clone()), i);
                }
            }
        }
        let ambiguous = group_addrs[&(sym.clone(), chain.clone())].len() > 1;
        // In an ambiguous group only address-less variants merge by symbol.
        if !ambiguous || addr.is_none() {
            let k = (sym.clone(), chain.clone(), ambiguous);
            match by_symbol.get(&k) {
                Some(&j) => uf.union(i, j),
                None => {
                    by_symbol.insert(k, i);
                }
            }
        }
    }
    for ((sym, chain), addrs) in &group_addrs {
        if addrs.len() > 1 {
            let list: Vec<&str> = addrs.iter().map(String::as_str).collect();
            diagnostics.push(format!("conflicting addresses for {sym} on {chain}: {}", list.join(", ")));
        }
    }

    // Components -> canonical tokens.
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..variants.len() {
        let root = uf.find(i);
        members.entry(root).or_default().push(i);
    }
    let mut per_symbol: BTreeMap<(String, String), usize> = BTreeMap::new();
    for &root in members.keys() {
        let ((sym, chain, _), _) = &variants[root];
        *per_symbol.entry((sym.clone(), chain.clone())).or_default() += 1;
    }
    let mut canonical_of = vec![TokenRef::new("", ""); variants.len()];
    let mut tokens = BTreeMap::new();
    for (&root, ids) in &members {
        let ((sym, chain, _), display) = &variants[root];
        let addresses: BTreeSet<String> = ids.iter().filter_map(|&i| variants[i].0 .2.clone()).collect();
        let shared = per_symbol[&(sym.clone(), chain.clone())] > 1;
        let mut token = TokenRef::new(display.as_str(), chain.as_str());
        if shared {
            if let Some(first) = addresses.iter().next() {
                token.address = Some(first.clone());
            }
        }
        for &i in ids {
            canonical_of[i] = token.clone();
        }
        tokens.insert(token.key(), CanonicalToken { token, addresses, merged_variants: ids.len() });
    }

    let remap = |t: &TokenRef| canonical_of[index[&variant_of(t)]].clone();
    let records = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.input_tokens = r.input_tokens.iter().map(remap).collect();
            r.output_token = r.output_token.as_ref().map(remap);
            r
        })
        .collect();

    Resolution { records, tokens, diagnostics }
}
