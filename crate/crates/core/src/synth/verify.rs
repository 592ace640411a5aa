use std::collections::BTreeMap;

use serde::Serialize;

use super::GroundTruth;
use crate::econ::{build_panel, fit_panel_ols, FeDim, PanelOptions, RegressionSpec, Var};
use crate::error::{Error, Result};
use crate::hierarchy::{run_hierarchy, HierarchyRun, PipelineParams};
use crate::ingest::{resolve_identity, PoolRecord};
use crate::metrics::{build_embedded_yields, layering_multiplier, token_tvl_attribution};
use crate::token::TokenKey;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenMismatch {
    pub token: TokenKey,
    pub true_tier: i64,
    pub found_tier: i64,
    pub true_distance: u32,
    pub found_distance: Option<u32>,
}

/// How well the pipeline recovers a generated ecosystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub tokens: usize,
    pub tier_match_rate: f64,
    pub distance_match_rate: f64,
    pub lm_true: f64,
    pub lm_found: Option<f64>,
    pub lm_error: Option<f64>,
    /// Largest absolute gap between true and recovered embedded yields.
    pub embedded_max_error: Option<f64>,
    /// `(estimate − truth) / SE` per regressor.
    pub coef_z: BTreeMap<String, f64>,
    pub mismatches: Vec<TokenMismatch>,
    pub notes: Vec<String>,
}

/// Runs ingest → hierarchy → multiplier → embedded yields → panel
/// regression on generated records and compares each stage with the truth.
///
/// The panel keeps every APY (no winsorization) so the regression sees
/// the generating model unaltered. In a forest tier and distance coincide,
/// so only the sum of their coefficients is identified; it is tested
/// against the tier estimate.
pub fn verify_recovery(records: &[PoolRecord], truth: &GroundTruth, params: &PipelineParams) -> Result<RecoveryReport> {
    let resolved = resolve_identity(records).records;
    let mut report = RecoveryReport {
        tokens: truth.tier.len(),
        tier_match_rate: 0.0,
        distance_match_rate: 0.0,
        lm_true: truth.lm,
        lm_found: None,
        lm_error: None,
        embedded_max_error: None,
        coef_z: BTreeMap::new(),
        mismatches: Vec::new(),
        notes: Vec::new(),
    };
    let run: HierarchyRun = match run_hierarchy(&resolved, params) {
        Ok(r) => r,
        Err(e @ Error::NoBaseAssets(_)) => {
            report.notes.push(e.to_string());
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let tiers = &run.tiers;
    let (mut tier_ok, mut dist_ok) = (0usize, 0usize);
    for (k, t) in &truth.tier {
        let found = tiers.tier_of(k);
        let d = tiers.graph_distance.get(k).copied();
        let td = truth.distance[k];
        tier_ok += (found == *t) as usize;
        dist_ok += (d == Some(td)) as usize;
        if found != *t || d != Some(td) {
            report.mismatches.push(TokenMismatch { token: k.clone(), true_tier: *t, found_tier: found, true_distance: td, found_distance: d });
        }
    }
    let n = truth.tier.len().max(1) as f64;
    report.tier_match_rate = tier_ok as f64 / n;
    report.distance_match_rate = dist_ok as f64 / n;

    let attribution = token_tvl_attribution(&resolved);
    match layering_multiplier(&attribution, tiers) {
        Ok(m) => {
            report.lm_found = Some(m.lm);
            report.lm_error = Some((m.lm - truth.lm).abs());
        }
        Err(e) => report.notes.push(e.to_string()),
    }

    let registry = HierarchyRun::registry(params);
    let embedded = build_embedded_yields(&run.deriv, tiers, &resolved, &registry)?;
    report.embedded_max_error = truth
        .embedded
        .iter()
        .map(|(k, v)| (embedded.of(k) - v).abs())
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));

    let opts = PanelOptions { winsor_lo: 0.0, winsor_hi: 1.0, max_tier: i64::MAX, ..Default::default() };
    let panel = match build_panel(&resolved, tiers, &embedded, &opts) {
        Ok(p) => p.rows,
        Err(e) => {
            report.notes.push(e.to_string());
            return Ok(report);
        }
    };
    let forest = panel.iter().all(|r| r.graph_distance == Some(r.tier as u32));
    let coef = |name: &str| truth.panel_coefs.get(name).copied().unwrap_or(0.0);
    let (regs, targets): (Vec<Var>, Vec<(&str, f64)>) = if forest {
        (vec![Var::Tier, Var::Stablecoin], vec![("tier", coef("tier") + coef("graph_distance")), ("stablecoin", coef("stablecoin"))])
    } else {
        (
            vec![Var::Tier, Var::GraphDistance, Var::Stablecoin],
            vec![("tier", coef("tier")), ("graph_distance", coef("graph_distance")), ("stablecoin", coef("stablecoin"))],
        )
    };
    let spec = RegressionSpec::new("recovery", Var::Apy, &regs, &[FeDim::Period]);
    match fit_panel_ols(&panel, &spec) {
        Ok(fit) => {
            for (name, t) in targets {
                if let Some(c) = fit.coef(name) {
                    report.coef_z.insert(name.to_string(), (c.estimate - t) / c.se);
                }
            }
        }
        Err(e) => report.notes.push(format!("panel regression failed: {e}")),
    }
    Ok(report)
}
