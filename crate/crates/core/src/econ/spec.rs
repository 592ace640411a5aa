use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{trim_mask, winsorize, PanelObservation, Period};
use crate::error::Error;
use crate::token::Category;

/// A panel column usable as dependent variable or regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Apy,
    ApyRaw,
    ApyCorrected,
    ApyBase,
    ApyReward,
    Tier,
    GraphDistance,
    LogTvl,
    Stablecoin,
    /// Indicator `tier == k`.
    TierIs(u8),
    /// Indicator `tier >= k`.
    TierAtLeast(u8),
}

impl Var {
    pub fn value(self, o: &PanelObservation) -> Option<f64> {
        match self {
            Var::Apy => Some(o.apy),
            Var::ApyRaw => Some(o.apy_raw),
            Var::ApyCorrected => Some(o.apy_corrected),
            Var::ApyBase => o.apy_base,
            Var::ApyReward => o.apy_reward,
            Var::Tier => Some(o.tier as f64),
            Var::GraphDistance => o.graph_distance.map(f64::from),
            Var::LogTvl => Some(o.log_tvl),
            Var::Stablecoin => Some(f64::from(u8::from(o.is_stablecoin))),
            Var::TierIs(k) => Some(f64::from(u8::from(o.tier == i64::from(k)))),
            Var::TierAtLeast(k) => Some(f64::from(u8::from(o.tier >= i64::from(k)))),
        }
    }

    /// Value with the tier replaced; used when permuting tier labels.
    pub fn value_with_tier(self, o: &PanelObservation, tier: i64) -> Option<f64> {
        match self {
            Var::Tier => Some(tier as f64),
            Var::TierIs(k) => Some(f64::from(u8::from(tier == i64::from(k)))),
            Var::TierAtLeast(k) => Some(f64::from(u8::from(tier >= i64::from(k)))),
            v => v.value(o),
        }
    }

    pub fn is_tier_derived(self) -> bool {
        matches!(self, Var::Tier | Var::TierIs(_) | Var::TierAtLeast(_))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Apy => f.write_str("apy"),
            Var::ApyRaw => f.write_str("apy_raw"),
            Var::ApyCorrected => f.write_str("apy_corrected"),
            Var::ApyBase => f.write_str("apy_base"),
            Var::ApyReward => f.write_str("apy_reward"),
            Var::Tier => f.write_str("tier"),
            Var::GraphDistance => f.write_str("graph_distance"),
            Var::LogTvl => f.write_str("log_tvl"),
            Var::Stablecoin => f.write_str("stablecoin"),
            Var::TierIs(k) => write!(f, "tier_{k}"),
            Var::TierAtLeast(k) => write!(f, "tier_{k}plus"),
        }
    }
}

impl FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "apy" => Var::Apy,
            "apy_raw" => Var::ApyRaw,
            "apy_corrected" => Var::ApyCorrected,
            "apy_base" => Var::ApyBase,
            "apy_reward" => Var::ApyReward,
            "tier" => Var::Tier,
            "graph_distance" | "distance" => Var::GraphDistance,
            "log_tvl" => Var::LogTvl,
            "stablecoin" | "is_stablecoin" => Var::Stablecoin,
            _ => {
                let bad = || Error::InvalidArgument(format!("unknown panel variable `{s}`"));
                let rest = s.strip_prefix("tier_").ok_or_else(bad)?;
                match rest.strip_suffix("plus") {
                    Some(k) => Var::TierAtLeast(k.parse().map_err(|_| bad())?),
                    None => Var::TierIs(rest.parse().map_err(|_| bad())?),
                }
            }
        })
    }
}

impl Serialize for Var {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Var {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Fixed-effect dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeDim {
    Period,
    ProtocolType,
    Chain,
    Pool,
    Protocol,
}

impl FeDim {
    pub fn label(self, o: &PanelObservation) -> String {
        match self {
            FeDim::Period => o.period.to_string(),
            FeDim::ProtocolType => o.protocol_type.as_str().to_string(),
            FeDim::Chain => o.chain.clone(),
            FeDim::Pool => o.pool_id.clone(),
            FeDim::Protocol => o.protocol.clone(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeDim::Period => "period",
            FeDim::ProtocolType => "protocol_type",
            FeDim::Chain => "chain",
            FeDim::Pool => "pool",
            FeDim::Protocol => "protocol",
        }
    }
}

/// Clustering dimension; `Observation` gives heteroskedasticity-robust errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterDim {
    #[default]
    Pool,
    Period,
    Chain,
    ProtocolType,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelFilter {
    OnlyProtocolTypes(Vec<Category>),
    ExcludeProtocolTypes(Vec<Category>),
    /// Pools observed in at least this many months.
    MinMonths(usize),
    /// Pools observed at or before `start` and at or after `end`.
    SpansWindow { start: Period, end: Period },
    PeriodRange { start: Period, end: Period },
    HasDistance,
}

/// Re-derives `apy` from `apy_raw` before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierTreatment {
    None,
    Winsorize { lo: f64, hi: f64 },
    Trim { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub name: String,
    pub dependent: Var,
    pub regressors: Vec<Var>,
    #[serde(default)]
    pub fe: Vec<FeDim>,
    #[serde(default)]
    pub cluster: ClusterDim,
    #[serde(default)]
    pub filters: Vec<PanelFilter>,
    #[serde(default)]
    pub outlier: Option<OutlierTreatment>,
}

impl RegressionSpec {
    pub fn new(name: &str, dependent: Var, regressors: &[Var], fe: &[FeDim]) -> Self {
        Self {
            name: name.into(),
            dependent,
            regressors: regressors.to_vec(),
            fe: fe.to_vec(),
            cluster: ClusterDim::Pool,
            filters: Vec::new(),
            outlier: None,
        }
    }

    pub fn filter(mut self, f: PanelFilter) -> Self {
        self.filters.push(f);
        self
    }

    pub fn outlier(mut self, t: OutlierTreatment) -> Self {
        self.outlier = Some(t);
        self
    }

    /// Applies filters and outlier treatment, then keeps rows where every
    /// used variable is present.
    pub fn prepare(&self, panel: &[PanelObservation]) -> Vec<PanelObservation> {
        let mut rows: Vec<PanelObservation> = panel.to_vec();
        for f in &self.filters {
            rows = apply_filter(rows, f);
        }
        match self.outlier {
            None => {}
            Some(OutlierTreatment::None) => {
                for r in &mut rows {
                    r.apy_corrected += r.apy_raw - r.apy;
                    r.apy = r.apy_raw;
                }
            }
            Some(OutlierTreatment::Winsorize { lo, hi }) => {
                let raw: Vec<f64> = rows.iter().map(|r| r.apy_raw).collect();
                for (r, w) in rows.iter_mut().zip(winsorize(&raw, lo, hi)) {
                    r.apy_corrected += w - r.apy;
                    r.apy = w;
                }
            }
            Some(OutlierTreatment::Trim { lo, hi }) => {
                let raw: Vec<f64> = rows.iter().map(|r| r.apy_raw).collect();
                let keep = trim_mask(&raw, lo, hi);
                let mut it = keep.into_iter();
                rows.retain(|_| it.next().unwrap_or(false));
                for r in &mut rows {
                    r.apy_corrected += r.apy_raw - r.apy;
                    r.apy = r.apy_raw;
                }
            }
        }
        rows.retain(|r| self.dependent.value(r).is_some() && self.regressors.iter().all(|v| v.value(r).is_some()));
        rows
    }
}

fn apply_filter(rows: Vec<PanelObservation>, f: &PanelFilter) -> Vec<PanelObservation> {
    match f {
        PanelFilter::OnlyProtocolTypes(c) => rows.into_iter().filter(|r| c.contains(&r.protocol_type)).collect(),
        PanelFilter::ExcludeProtocolTypes(c) => rows.into_iter().filter(|r| !c.contains(&r.protocol_type)).collect(),
        PanelFilter::MinMonths(n) => {
            let mut months: BTreeMap<&str, BTreeSet<Period>> = BTreeMap::new();
            for r in &rows {
                months.entry(&r.pool_id).or_default().insert(r.period);
            }
            let keep: BTreeSet<String> =
                months.into_iter().filter(|(_, m)| m.len() >= *n).map(|(p, _)| p.to_string()).collect();
            rows.into_iter().filter(|r| keep.contains(&r.pool_id)).collect()
        }
        PanelFilter::SpansWindow { start, end } => {
            let mut span: BTreeMap<&str, (Period, Period)> = BTreeMap::new();
            for r in &rows {
                let e = span.entry(&r.pool_id).or_insert((r.period, r.period));
                e.0 = e.0.min(r.period);
                e.1 = e.1.max(r.period);
            }
            let keep: BTreeSet<String> = span
                .into_iter()
                .filter(|(_, (a, b))| a <= start && b >= end)
                .map(|(p, _)| p.to_string())
                .collect();
            rows.into_iter().filter(|r| keep.contains(&r.pool_id)).collect()
        }
        PanelFilter::PeriodRange { start, end } => {
            rows.into_iter().filter(|r| r.period >= *start && r.period <= *end).collect()
        }
        PanelFilter::HasDistance => rows.into_iter().filter(|r| r.graph_distance.is_some()).collect(),
    }
}
