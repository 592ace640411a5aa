use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ols::fit_rows;
use super::{PanelFilter, PanelObservation, Period, RegressionResult, RegressionSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollingPoint {
    /// Last month of the window.
    pub period: Period,
    pub n_obs: usize,
    /// `None` marks a gap where the window could not be fitted.
    pub coef: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

fn period_span(rows: &[PanelObservation]) -> Option<(Period, Period)> {
    let lo = rows.iter().map(|r| r.period).min()?;
    let hi = rows.iter().map(|r| r.period).max()?;
    Some((lo, hi))
}

/// Refits `spec` on every window of `window` consecutive months and reports
/// the coefficient on `regressor` with a 95% interval.
pub fn rolling_coefficients(
    panel: &[PanelObservation],
    spec: &RegressionSpec,
    regressor: &str,
    window: usize,
) -> Result<Vec<RollingPoint>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least one month".into()));
    }
    let rows = spec.prepare(panel);
    let Some((lo, hi)) = period_span(&rows) else {
        return Err(Error::Insufficient(format!("{}: no observations", spec.name)));
    };
    let span = (hi.index() - lo.index() + 1) as usize;
    let w = window.min(span) as i64;
    let mut out = Vec::new();
    for end in (lo.index() + w - 1)..=hi.index() {
        let (a, b) = (Period::from_index(end - w + 1), Period::from_index(end));
        let sub: Vec<PanelObservation> = rows.iter().filter(|r| r.period >= a && r.period <= b).cloned().collect();
        let fit = fit_rows(&sub, spec).ok().and_then(|r| r.coef(regressor).cloned());
        out.push(RollingPoint {
            period: b,
            n_obs: sub.len(),
            coef: fit.as_ref().map(|c| c.estimate),
            se: fit.as_ref().map(|c| c.se),
            ci_low: fit.as_ref().map(|c| c.estimate - 1.96 * c.se),
            ci_high: fit.as_ref().map(|c| c.estimate + 1.96 * c.se),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub label: String,
    pub start: Period,
    pub end: Period,
}

impl EventWindow {
    pub fn new(label: &str, start: Period, end: Period) -> Self {
        Self { label: label.into(), start, end }
    }

    /// Reads `label,start_date,end_date` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<EventWindow>> {
        #[derive(Deserialize)]
        struct Row {
            label: String,
            start_date: String,
            end_date: String,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            let parse = |s: &str| -> Result<Period> {
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map(Period::of_date).or_else(|_| s.parse())
            };
            let (start, end) = (parse(&r.start_date)?, parse(&r.end_date)?);
            if end < start {
                return Err(Error::Config(format!("event window {} ends before it starts", r.label)));
            }
            out.push(EventWindow { label: r.label, start, end });
        }
        Ok(out)
    }

    /// Terra, FTX, SVB and the spot Bitcoin ETF approval.
    pub fn defaults() -> Vec<EventWindow> {
        vec![
            EventWindow::new("terra", Period::new(2022, 5), Period::new(2022, 6)),
            EventWindow::new("ftx", Period::new(2022, 11), Period::new(2022, 12)),
            EventWindow::new("svb", Period::new(2023, 3), Period::new(2023, 3)),
            EventWindow::new("btc_etf", Period::new(2024, 1), Period::new(2024, 1)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventResult {
    pub window: EventWindow,
    pub result: Option<RegressionResult>,
    pub flag: Option<String>,
}

/// Refits `spec` separately inside each window.
pub fn event_window_regressions(panel: &[PanelObservation], spec: &RegressionSpec, windows: &[EventWindow]) -> Vec<EventResult> {
    windows
        .iter()
        .map(|w| {
            let mut s = spec.clone();
            s.name = format!("{}@{}", spec.name, w.label);
            s.filters.push(PanelFilter::PeriodRange { start: w.start, end: w.end });
            let rows = s.prepare(panel);
            if rows.is_empty() {
                return EventResult { window: w.clone(), result: None, flag: Some("empty window".into()) };
            }
            match fit_rows(&rows, &s) {
                Ok(r) => EventResult { window: w.clone(), result: Some(r), flag: None },
                Err(e) => EventResult { window: w.clone(), result: None, flag: Some(e.to_string()) },
            }
        })
        .collect()
}
