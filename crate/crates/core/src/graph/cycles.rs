//! Strongly connected components of the derivation graph.

use std::collections::BTreeMap;

use serde::Serialize;

use super::TokenGraph;
use crate::token::TokenKey;

/// A non-trivial strongly connected component (two or more tokens, or a
/// token with a self-loop).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cycle {
    /// Members in key order.
    pub members: Vec<TokenKey>,
    /// TVL on edges internal to the component.
    pub tvl_usd: f64,
}

/// Tarjan's algorithm, iterative. Components come back ordered by their
/// smallest member.
pub fn detect_cycles(g: &TokenGraph) -> Vec<Cycle> {
    let keys: Vec<&TokenKey> = g.nodes.keys().collect();
    let index_of: BTreeMap<&TokenKey, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let n = keys.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for e in &g.edges {
        let (Some(&s), Some(&d)) = (index_of.get(&e.src), index_of.get(&e.dst)) else { continue };
        if s == d {
            self_loop[s] = true;
        } else {
            succ[s].push(d);
        }
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }

    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp_of = vec![UNSEEN; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut next = 0usize;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp_of[w] = comps.len();
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }

    let mut tvl = vec![0.0; comps.len()];
    for e in &g.edges {
        let (Some(&s), Some(&d)) = (index_of.get(&e.src), index_of.get(&e.dst)) else { continue };
        if comp_of[s] == comp_of[d] {
            tvl[comp_of[s]] += e.tvl_usd;
        }
    }
    let mut out: Vec<Cycle> = comps
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.len() > 1 || self_loop[c[0]])
        .map(|(i, mut c)| {
            c.sort_unstable();
            Cycle { members: c.into_iter().map(|j| keys[j].clone()).collect(), tvl_usd: tvl[i] }
        })
        .collect();
    out.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    out
}
