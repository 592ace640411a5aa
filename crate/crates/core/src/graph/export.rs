use std::io::Write;

use super::DerivationGraph;

/// Writes the derivation graph as
/// `src_symbol,src_chain,dst_symbol,dst_chain,protocol,category,tvl_usd,provenance,rule`.
pub fn write_edges_csv<W: Write>(d: &DerivationGraph, writer: W) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "src_symbol", "src_chain", "dst_symbol", "dst_chain", "protocol", "category", "tvl_usd", "provenance", "rule",
    ])?;
    for (e, rule) in d.graph.edges.iter().zip(&d.rules) {
        w.write_record([
            d.graph.display(&e.src),
            &e.src.chain,
            d.graph.display(&e.dst),
            &e.dst.chain,
            &e.protocol,
            e.category.as_str(),
            &e.tvl_usd.to_string(),
            e.provenance.as_str(),
            rule.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
