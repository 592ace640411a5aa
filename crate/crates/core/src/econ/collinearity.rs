use serde::Serialize;

use super::ols::{fe_groups, DEMEAN_TOL};
use super::{demean_in_place, fit_demeaned, PanelObservation, RegressionSpec, Var};
use crate::stats::pearson;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifEntry {
    pub spec: String,
    pub regressor: String,
    /// `None` when undefined (zero variance or perfect collinearity).
    pub vif: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollinearityReport {
    /// Pearson correlation of tier and graph distance where both exist.
    pub tier_distance_r: Option<f64>,
    pub vif: Vec<VifEntry>,
}

/// Variance inflation factors on the demeaned design of a specification.
pub fn vif(panel: &[PanelObservation], spec: &RegressionSpec) -> Vec<VifEntry> {
    let rows = spec.prepare(panel);
    let mut notes = Vec::new();
    let (_, fe) = fe_groups(&rows, &spec.fe, &mut notes);
    let cols: Vec<Vec<f64>> = spec
        .regressors
        .iter()
        .map(|v| {
            let mut c: Vec<f64> = rows.iter().map(|r| v.value(r).expect("prepared")).collect();
            demean_in_place(&mut c, &fe, DEMEAN_TOL);
            c
        })
        .collect();
    let obs: Vec<usize> = (0..rows.len()).collect();
    spec.regressors
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let ss: f64 = cols[j].iter().map(|x| x * x).sum();
            let value = if ss <= 1e-12 || rows.len() < 3 {
                None
            } else if cols.len() == 1 {
                Some(1.0)
            } else {
                let others: Vec<Vec<f64>> = cols.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, c)| c.clone()).collect();
                // already demeaned; the auxiliary fit only removes the mean
                match fit_demeaned(&cols[j], &others, &[], &obs) {
                    Ok(f) if f.r_squared < 1.0 - 1e-12 => Some(1.0 / (1.0 - f.r_squared)),
                    _ => None,
                }
            };
            if value.is_none() {
                log::warn!("{}: VIF of {v} undefined", spec.name);
            }
            VifEntry { spec: spec.name.clone(), regressor: v.to_string(), vif: value }
        })
        .collect()
}

pub fn collinearity_report(panel: &[PanelObservation], specs: &[RegressionSpec]) -> CollinearityReport {
    let (t, d): (Vec<f64>, Vec<f64>) = panel
        .iter()
        .filter_map(|r| Some((Var::Tier.value(r)?, Var::GraphDistance.value(r)?)))
        .unzip();
    CollinearityReport { tier_distance_r: pearson(&t, &d), vif: specs.iter().flat_map(|s| vif(panel, s)).collect() }
}
