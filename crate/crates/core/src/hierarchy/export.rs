use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{TierAssignment, UNMAPPED};
use crate::error::{Error, Result};
use crate::graph::TokenGraph;
use crate::token::TokenKey;

#[derive(Debug, Serialize, Deserialize)]
struct TierRow {
    symbol: String,
    chain: String,
    tier: i64,
    parent_symbol: Option<String>,
    graph_distance: Option<u32>,
    tier0_flag: bool,
}

/// Writes `symbol,chain,tier,parent_symbol,graph_distance,tier0_flag`, one
/// row per token of `graph`.
pub fn write_tiers_csv<W: Write>(t: &TierAssignment, graph: &TokenGraph, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for k in graph.nodes.keys() {
        w.serialize(TierRow {
            symbol: graph.display(k).to_string(),
            chain: k.chain.clone(),
            tier: t.tier_of(k),
            parent_symbol: t.parent.get(k).map(|p| graph.display(p).to_string()),
            graph_distance: t.graph_distance.get(k).copied(),
            tier0_flag: t.tier0_set.contains(k),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a tier table back. Parents are looked up on the child's chain.
pub fn read_tiers_csv<R: Read>(reader: R) -> Result<TierAssignment> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut t = TierAssignment::default();
    for row in rdr.deserialize() {
        let row: TierRow = row?;
        if row.tier < UNMAPPED {
            return Err(Error::Inconsistent(format!("tier {} for {}", row.tier, row.symbol)));
        }
        let k = TokenKey::new(&row.symbol, &row.chain);
        if row.tier0_flag != (row.tier == 0) {
            return Err(Error::Inconsistent(format!("tier0_flag disagrees with tier for {}", row.symbol)));
        }
        if row.tier0_flag {
            t.tier0_set.insert(k.clone());
        }
        if let Some(p) = row.parent_symbol.filter(|p| !p.is_empty()) {
            t.parent.insert(k.clone(), TokenKey::new(&p, &row.chain));
        }
        if let Some(d) = row.graph_distance {
            t.graph_distance.insert(k.clone(), d);
        }
        t.tier.insert(k, row.tier);
    }
    Ok(t)
}
