use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{discover_tier0, DiscoveryParams};
use crate::error::{Error, Result};
use crate::graph::{DerivationGraph, TokenGraph};
use crate::stats::jaccard;
use crate::token::TokenKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityGrid {
    pub min_outdeg: Vec<usize>,
    pub min_src_tvl_usd: Vec<f64>,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        Self { min_outdeg: vec![2, 3, 5, 7, 10], min_src_tvl_usd: vec![0.0, 1e5, 1e6, 1e7, 1e8] }
    }
}

impl SensitivityGrid {
    /// Row-major cells, keeping the baseline's demotion ratio.
    pub fn cells(&self, baseline: &DiscoveryParams) -> Vec<DiscoveryParams> {
        self.min_outdeg
            .iter()
            .flat_map(|&d| {
                self.min_src_tvl_usd.iter().map(move |&t| DiscoveryParams { min_outdeg: d, min_src_tvl_usd: t, ..*baseline })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCell {
    pub params: DiscoveryParams,
    pub tier0: BTreeSet<TokenKey>,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub baseline: DiscoveryParams,
    pub baseline_tier0: BTreeSet<TokenKey>,
    pub cells: Vec<SensitivityCell>,
}

impl SensitivityMatrix {
    pub fn get(&self, min_outdeg: usize, min_src_tvl_usd: f64) -> Option<&SensitivityCell> {
        self.cells.iter().find(|c| c.params.min_outdeg == min_outdeg && c.params.min_src_tvl_usd == min_src_tvl_usd)
    }
}

fn tier0_or_empty(deriv: &DerivationGraph, full: &TokenGraph, p: &DiscoveryParams) -> Result<BTreeSet<TokenKey>> {
    match discover_tier0(deriv, full, p) {
        Ok(d) => Ok(d.tier0),
        Err(Error::NoBaseAssets(msg)) => {
            log::warn!("no base tokens at out-degree {} / TVL {}: {msg}", p.min_outdeg, p.min_src_tvl_usd);
            Ok(BTreeSet::new())
        }
        Err(e) => Err(e),
    }
}

/// Re-runs discovery for every cell on a fixed derivation graph and compares
/// each base set with the baseline's by Jaccard similarity.
pub fn jaccard_sensitivity(
    deriv: &DerivationGraph,
    full: &TokenGraph,
    grid: &[DiscoveryParams],
    baseline: &DiscoveryParams,
) -> Result<SensitivityMatrix> {
    let base = tier0_or_empty(deriv, full, baseline)?;
    let cells = grid
        .par_iter()
        .map(|p| {
            let set = tier0_or_empty(deriv, full, p)?;
            if set.is_empty() && base.is_empty() {
                log::warn!("empty base sets on both sides; similarity defined as 1");
            }
            let j = jaccard(&set, &base);
            Ok(SensitivityCell { params: *p, tier0: set, jaccard: j })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityMatrix { baseline: *baseline, baseline_tier0: base, cells })
}

fn tvl_label(v: f64) -> String {
    match v {
        v if v >= 1e9 && (v / 1e9).fract() == 0.0 => format!("${}B", v / 1e9),
        v if v >= 1e6 && (v / 1e6).fract() == 0.0 => format!("${}M", v / 1e6),
        v if v >= 1e3 && (v / 1e3).fract() == 0.0 => format!("${}K", v / 1e3),
        v => format!("${v}"),
    }
}

/// Rows are out-degree thresholds, columns TVL thresholds.
pub fn write_sensitivity_csv<W: Write>(m: &SensitivityMatrix, writer: W) -> Result<()> {
    let mut outdeg: Vec<usize> = m.cells.iter().map(|c| c.params.min_outdeg).collect();
    outdeg.dedup();
    let mut tvls: Vec<f64> = Vec::new();
    for c in &m.cells {
        if !tvls.contains(&c.params.min_src_tvl_usd) {
            tvls.push(c.params.min_src_tvl_usd);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["min_outdeg".to_string()];
    header.extend(tvls.iter().map(|t| tvl_label(*t)));
    w.write_record(&header)?;
    let mut seen = BTreeSet::new();
    for d in outdeg {
        if !seen.insert(d) {
            continue;
        }
        let mut row = vec![if d == m.baseline.min_outdeg { format!("{d} (base)") } else { d.to_string() }];
        for t in &tvls {
            row.push(m.get(d, *t).map(|c| format!("{:.2}", c.jaccard)).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
