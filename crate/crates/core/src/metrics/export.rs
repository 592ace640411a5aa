use std::io::Write;

use super::{EmbeddedYieldTable, SeriesPoint, TransitionRow, GROUPS};
use crate::error::Result;
use crate::graph::TokenGraph;
use crate::hierarchy::TierAssignment;

/// `period,lm,tvl_mapped,tvl_tier0,share_t0..share_t4,dlm_lending,dlm_staking,dlm_dex,dlm_other`;
/// `share_t4` covers tier 4 and deeper.
pub fn write_multiplier_series_csv<W: Write>(series: &[SeriesPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["period", "lm", "tvl_mapped", "tvl_tier0"].map(String::from).to_vec();
    header.extend((0..5).map(|t| format!("share_t{t}")));
    header.extend(GROUPS.iter().map(|g| format!("dlm_{}", g.as_str())));
    w.write_record(&header)?;
    for p in series {
        let r = &p.report;
        let mut row = vec![p.period.to_string(), r.lm.to_string(), r.tvl_mapped.to_string(), r.tvl_tier0.to_string()];
        for t in 0..5 {
            let s: f64 = r.tier_shares.iter().filter(|(k, _)| if t == 4 { **k >= 4 } else { **k == t }).map(|(_, v)| v).sum();
            row.push(s.to_string());
        }
        for g in GROUPS {
            row.push(r.decomposition.get(&g).copied().unwrap_or(0.0).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `symbol,chain,tier,embedded_pct,match_chain_len` for every mapped token.
pub fn write_embedded_csv<W: Write>(
    table: &EmbeddedYieldTable,
    tiers: &TierAssignment,
    graph: &TokenGraph,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["symbol", "chain", "tier", "embedded_pct", "match_chain_len"])?;
    for (k, e) in &table.embedded {
        w.write_record([
            graph.display(k),
            &k.chain,
            &tiers.tier_of(k).to_string(),
            &e.to_string(),
            &table.match_chain_len.get(k).copied().unwrap_or(0).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `transition,total_tvl,lending,staking,dex,other`.
pub fn write_transition_csv<W: Write>(rows: &[TransitionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["transition".to_string(), "total_tvl".to_string()];
    header.extend(GROUPS.iter().map(|g| g.as_str().to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![format!("T{}->T{}", r.from, r.from + 1), r.total_tvl.to_string()];
        row.extend(GROUPS.iter().map(|g| r.shares[g].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
