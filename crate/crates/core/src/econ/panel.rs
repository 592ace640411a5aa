use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{winsorize, Period};
use crate::error::{Error, Result};
use crate::hierarchy::TierAssignment;
use crate::ingest::PoolRecord;
use crate::metrics::EmbeddedYieldTable;
use crate::token::Category;

/// One pool-month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub pool_id: String,
    pub period: Period,
    pub protocol: String,
    pub protocol_type: Category,
    pub chain: String,
    /// APY after outlier treatment.
    pub apy: f64,
    /// APY before outlier treatment (already inside the APY frame).
    pub apy_raw: f64,
    pub apy_corrected: f64,
    pub embedded_yield: f64,
    pub apy_base: Option<f64>,
    pub apy_reward: Option<f64>,
    pub log_tvl: f64,
    pub tier: i64,
    pub graph_distance: Option<u32>,
    pub is_stablecoin: bool,
}

/// How snapshots within a month are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Mean,
    Last,
    TvlWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelOptions {
    pub aggregation: Aggregation,
    pub min_tvl_usd: f64,
    /// APY frame is `[0, apy_max)`.
    pub apy_max: f64,
    pub winsor_lo: f64,
    pub winsor_hi: f64,
    pub max_tier: i64,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self { aggregation: Aggregation::Mean, min_tvl_usd: 1000.0, apy_max: 100.0, winsor_lo: 0.01, winsor_hi: 0.99, max_tier: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Attrition {
    /// Pool-months after aggregation.
    pub rows_in: usize,
    /// Rows dropped by each filter, in application order.
    pub dropped: Vec<(&'static str, usize)>,
    pub rows_out: usize,
}

impl fmt::Display for Attrition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} pool-months", self.rows_in)?;
        for (name, n) in &self.dropped {
            write!(f, "; {name}: -{n}")?;
        }
        write!(f, "; kept {}", self.rows_out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub rows: Vec<PanelObservation>,
    pub attrition: Attrition,
}

struct Cell<'a> {
    recs: Vec<&'a PoolRecord>,
}

fn mean_of(values: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut s, mut w) = (0.0, 0.0);
    for (v, wt) in values {
        s += v * wt;
        w += wt;
    }
    (w > 0.0).then(|| s / w)
}

impl Cell<'_> {
    fn last(&self) -> &PoolRecord {
        self.recs.iter().max_by_key(|r| r.observed_at).expect("non-empty cell")
    }

    fn field(&self, agg: Aggregation, f: impl Fn(&PoolRecord) -> Option<f64>) -> Option<f64> {
        match agg {
            Aggregation::Last => f(self.last()),
            Aggregation::Mean => mean_of(self.recs.iter().filter_map(|r| f(r).map(|v| (v, 1.0)))),
            Aggregation::TvlWeighted => {
                let w = mean_of(self.recs.iter().filter_map(|r| f(r).map(|v| (v, r.tvl_usd))));
                // all-zero TVL falls back to the plain mean
                w.or_else(|| mean_of(self.recs.iter().filter_map(|r| f(r).map(|v| (v, 1.0)))))
            }
        }
    }
}

/// Aggregates records to pool-months and applies, in order: missing APY or
/// TVL, TVL floor, APY frame, winsorization of APY over the remaining rows,
/// tier range. Corrected APY is the treated APY plus the embedded yield of
/// the pool's primary token.
pub fn build_panel(
    records: &[PoolRecord],
    tiers: &TierAssignment,
    embedded: &EmbeddedYieldTable,
    opts: &PanelOptions,
) -> Result<Panel> {
    if !(0.0 <= opts.winsor_lo && opts.winsor_lo < opts.winsor_hi && opts.winsor_hi <= 1.0) {
        return Err(Error::Config(format!("winsorization bounds {} / {} out of order", opts.winsor_lo, opts.winsor_hi)));
    }
    let mut cells: BTreeMap<(&str, Period), Cell<'_>> = BTreeMap::new();
    for r in records {
        cells.entry((r.pool_id.as_str(), Period::of(&r.observed_at))).or_insert(Cell { recs: Vec::new() }).recs.push(r);
    }
    let mut att = Attrition { rows_in: cells.len(), ..Default::default() };

    let mut rows = Vec::with_capacity(cells.len());
    let mut missing = 0;
    for ((pool, period), cell) in &cells {
        let agg = opts.aggregation;
        let apy = cell.field(agg, |r| r.apy_total.filter(|v| v.is_finite()));
        // TVL itself is never TVL-weighted
        let tvl_agg = if agg == Aggregation::Last { Aggregation::Last } else { Aggregation::Mean };
        let tvl = cell.field(tvl_agg, |r| r.tvl_usd.is_finite().then_some(r.tvl_usd));
        let (Some(apy), Some(tvl)) = (apy, tvl) else {
            missing += 1;
            continue;
        };
        let last = cell.last();
        let key = last.primary_token().key();
        let emb = embedded.of(&key);
        rows.push((
            tvl,
            PanelObservation {
                pool_id: pool.to_string(),
                period: *period,
                protocol: last.protocol.clone(),
                protocol_type: last.category,
                chain: last.chain.clone(),
                apy,
                apy_raw: apy,
                apy_corrected: apy + emb,
                embedded_yield: emb,
                apy_base: cell.field(agg, |r| r.apy_base),
                apy_reward: cell.field(agg, |r| r.apy_reward),
                log_tvl: 0.0,
                tier: tiers.tier_of(&key),
                graph_distance: tiers.graph_distance.get(&key).copied(),
                is_stablecoin: last.is_stablecoin,
            },
        ));
    }
    att.dropped.push(("missing APY or TVL", missing));

    let before = rows.len();
    rows.retain(|(tvl, _)| *tvl >= opts.min_tvl_usd && *tvl > 0.0);
    att.dropped.push(("TVL below floor", before - rows.len()));

    let before = rows.len();
    rows.retain(|(_, o)| o.apy >= 0.0 && o.apy < opts.apy_max);
    att.dropped.push(("APY outside frame", before - rows.len()));

    let raw: Vec<f64> = rows.iter().map(|(_, o)| o.apy_raw).collect();
    let treated = winsorize(&raw, opts.winsor_lo, opts.winsor_hi);
    for ((tvl, o), w) in rows.iter_mut().zip(treated) {
        o.apy = w;
        o.apy_corrected = w + o.embedded_yield;
        o.log_tvl = tvl.ln();
    }
    att.dropped.push(("winsorization", 0));

    let before = rows.len();
    rows.retain(|(_, o)| (0..=opts.max_tier).contains(&o.tier));
    att.dropped.push(("tier outside range", before - rows.len()));

    att.rows_out = rows.len();
    if rows.is_empty() {
        return Err(Error::EmptyPanel(att.to_string()));
    }
    Ok(Panel { rows: rows.into_iter().map(|(_, o)| o).collect(), attrition: att })
}

pub fn write_panel_csv<W: Write>(rows: &[PanelObservation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(reader: R) -> Result<Vec<PanelObservation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::token::{TokenKey, TokenRef};

    fn rec(pool: &str, day: u32, apy: f64, tvl: f64) -> PoolRecord {
        PoolRecord {
            pool_id: pool.into(),
            protocol: "aave".into(),
            category: Category::Lending,
            chain: "Ethereum".into(),
            input_tokens: vec![TokenRef::new("USDC", "Ethereum")],
            output_token: None,
            tvl_usd: tvl,
            apy_total: Some(apy),
            apy_base: None,
            apy_reward: None,
            is_stablecoin: true,
            observed_at: Utc.with_ymd_and_hms(2024, 3, day, 0, 0, 0).unwrap(),
            apy_inconsistent: false,
        }
    }

    fn tiers() -> TierAssignment {
        let mut t = TierAssignment::default();
        t.tier.insert(TokenKey::new("USDC", "Ethereum"), 0);
        t
    }

    fn no_winsor() -> PanelOptions {
        PanelOptions { winsor_lo: 0.0, winsor_hi: 1.0, ..Default::default() }
    }

    #[test]
    fn monthly_mean() {
        let recs = vec![rec("p", 1, 2.0, 1e6), rec("p", 2, 3.0, 1e6), rec("p", 3, 4.0, 1e6)];
        let p = build_panel(&recs, &tiers(), &EmbeddedYieldTable::default(), &no_winsor()).unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].apy, 3.0);
        assert_eq!(p.rows[0].period, Period::new(2024, 3));
    }

    #[test]
    fn last_and_weighted() {
        let recs = vec![rec("p", 1, 2.0, 1e6), rec("p", 3, 4.0, 3e6)];
        let last = PanelOptions { aggregation: Aggregation::Last, ..no_winsor() };
        let p = build_panel(&recs, &tiers(), &EmbeddedYieldTable::default(), &last).unwrap();
        assert_eq!(p.rows[0].apy, 4.0);
        assert_eq!(p.rows[0].log_tvl, 3e6f64.ln());
        let w = PanelOptions { aggregation: Aggregation::TvlWeighted, ..no_winsor() };
        let p = build_panel(&recs, &tiers(), &EmbeddedYieldTable::default(), &w).unwrap();
        assert_eq!(p.rows[0].apy, 3.5);
        assert_eq!(p.rows[0].log_tvl, 2e6f64.ln());
    }

    #[test]
    fn small_pool_dropped_and_attrition_adds_up() {
        let recs = vec![rec("p", 1, 2.0, 1e6), rec("small", 1, 2.0, 500.0), rec("hot", 1, 150.0, 1e6)];
        let p = build_panel(&recs, &tiers(), &EmbeddedYieldTable::default(), &no_winsor()).unwrap();
        assert_eq!(p.rows.len(), 1);
        let a = &p.attrition;
        assert_eq!(a.rows_in, a.rows_out + a.dropped.iter().map(|d| d.1).sum::<usize>());
        assert_eq!(a.dropped[1], ("TVL below floor", 1));
        assert_eq!(a.dropped[2], ("APY outside frame", 1));
    }

    #[test]
    fn empty_panel_reports_attrition() {
        let err = build_panel(&[rec("small", 1, 2.0, 5.0)], &tiers(), &EmbeddedYieldTable::default(), &no_winsor())
            .unwrap_err();
        match err {
            Error::EmptyPanel(msg) => assert!(msg.contains("TVL below floor: -1")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec("p", 1, 2.0, 1e6)];
        let p = build_panel(&recs, &tiers(), &EmbeddedYieldTable::default(), &no_winsor()).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&p.rows, &mut buf).unwrap();
        assert_eq!(read_panel_csv(buf.as_slice()).unwrap(), p.rows);
    }
}
