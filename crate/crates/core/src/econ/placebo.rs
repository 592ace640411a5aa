use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ols::{cluster_ids, fe_groups, fit_rows, DEMEAN_TOL};
use super::{demean_in_place, FeGroups, PanelObservation, RegressionSpec};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboResult {
    pub spec: String,
    pub regressor: String,
    pub observed_coef: f64,
    /// Percent of permuted coefficients at or below the observed one.
    pub percentile: f64,
    /// Share of permuted coefficients at least as extreme in the observed
    /// direction.
    pub one_sided_p: f64,
    pub two_sided_p: f64,
    pub n_perm: usize,
    /// Permutations whose fit was degenerate and left out.
    pub n_failed: usize,
    pub seed: u64,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: BTreeMap<String, f64>,
}

/// Sub-generator for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Precomputed pieces for re-estimating the tier coefficients under
/// permuted labels (Frisch-Waugh-Lovell on the demeaned data).
struct Partialled {
    fe: Vec<FeGroups>,
    z: DMatrix<f64>,
    ztz_inv: DMatrix<f64>,
    y: DVector<f64>,
}

impl Partialled {
    fn residualize(&self, v: &mut DVector<f64>) {
        if self.z.ncols() > 0 {
            let coef = &self.ztz_inv * (self.z.transpose() * &*v);
            *v -= &self.z * coef;
        }
    }
}

/// Randomization inference: tier labels are shuffled across pools (each
/// pool keeps one label for all its months) and the focal tier coefficient
/// is re-estimated `n_perm` times.
pub fn permutation_placebo(panel: &[PanelObservation], spec: &RegressionSpec, n_perm: usize, seed: u64) -> Result<PlaceboResult> {
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be at least 1".into()));
    }
    let focal = spec
        .regressors
        .iter()
        .position(|v| v.is_tier_derived())
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no tier regressor to permute", spec.name)))?;
    let rows = spec.prepare(panel);
    let observed = fit_rows(&rows, spec)?;
    let focal_name = spec.regressors[focal].to_string();
    let observed_coef = observed
        .coef(&focal_name)
        .ok_or_else(|| Error::Insufficient(format!("{focal_name} not identified in {}", spec.name)))?
        .estimate;

    let pools: Vec<String> = {
        let mut p: Vec<String> = rows.iter().map(|r| r.pool_id.clone()).collect();
        p.sort();
        p.dedup();
        p
    };
    if pools.len() < 2 {
        return Err(Error::Insufficient(format!("{} distinct pools; at least 2 needed", pools.len())));
    }
    let pool_index: BTreeMap<&str, usize> = pools.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let row_pool: Vec<usize> = rows.iter().map(|r| pool_index[r.pool_id.as_str()]).collect();
    let mut pool_tier = vec![0i64; pools.len()];
    for (r, &p) in rows.iter().zip(&row_pool) {
        pool_tier[p] = r.tier;
    }

    let mut notes = Vec::new();
    let (_, fe) = fe_groups(&rows, &spec.fe, &mut notes);
    let _ = cluster_ids(&rows, spec.cluster);
    let n = rows.len();
    let tier_vars: Vec<usize> = (0..spec.regressors.len()).filter(|&j| spec.regressors[j].is_tier_derived()).collect();
    let other_vars: Vec<usize> = (0..spec.regressors.len()).filter(|&j| !spec.regressors[j].is_tier_derived()).collect();
    let demeaned = |mut c: Vec<f64>| {
        demean_in_place(&mut c, &fe, DEMEAN_TOL);
        c
    };
    let mut zcols: Vec<Vec<f64>> = Vec::new();
    for &j in &other_vars {
        let c = demeaned(rows.iter().map(|r| spec.regressors[j].value(r).expect("prepared")).collect());
        if c.iter().any(|v| v.abs() > 1e-12) {
            zcols.push(c);
        }
    }
    let z = DMatrix::from_fn(n, zcols.len(), |r, c| zcols[c][r]);
    let ztz_inv = if zcols.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        (z.transpose() * &z).pseudo_inverse(1e-12).map_err(|e| Error::Internal(e.to_string()))?
    };
    let y = DVector::from_vec(demeaned(rows.iter().map(|r| spec.dependent.value(r).expect("prepared")).collect()));
    let mut part = Partialled { fe, z, ztz_inv, y };
    let mut y = part.y.clone();
    part.residualize(&mut y);
    part.y = y;
    let focal_pos = tier_vars.iter().position(|&j| j == focal).expect("focal is tier-derived");

    let draws: Vec<Option<f64>> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            let mut labels = pool_tier.clone();
            labels.shuffle(&mut rng);
            let mut t = DMatrix::<f64>::zeros(n, tier_vars.len());
            for (c, &j) in tier_vars.iter().enumerate() {
                let mut col: Vec<f64> = rows
                    .iter()
                    .zip(&row_pool)
                    .map(|(r, &p)| spec.regressors[j].value_with_tier(r, labels[p]).expect("prepared"))
                    .collect();
                demean_in_place(&mut col, &part.fe, DEMEAN_TOL);
                let mut v = DVector::from_vec(col);
                part.residualize(&mut v);
                t.set_column(c, &v);
            }
            let ttt = t.transpose() * &t;
            let beta = ttt.cholesky()?.solve(&(t.transpose() * &part.y));
            Some(beta[focal_pos]).filter(|b| b.is_finite())
        })
        .collect();
    let mut coefs: Vec<f64> = draws.iter().flatten().copied().collect();
    let n_failed = n_perm - coefs.len();
    if coefs.is_empty() {
        return Err(Error::Insufficient("every permutation was degenerate".into()));
    }
    coefs.sort_by(f64::total_cmp);
    let m = coefs.len() as f64;
    let at_or_below = coefs.iter().filter(|c| **c <= observed_coef).count() as f64;
    let at_or_above = coefs.iter().filter(|c| **c >= observed_coef).count() as f64;
    let one_sided_p = if observed_coef < 0.0 { at_or_below / m } else { at_or_above / m };
    let mu = mean(&coefs);
    let sd = if coefs.len() > 1 {
        (coefs.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let quantiles = [0.0, 0.01, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99, 1.0]
        .iter()
        .map(|q| (format!("q{:05.3}", q), quantile_sorted(&coefs, *q)))
        .collect();
    Ok(PlaceboResult {
        spec: spec.name.clone(),
        regressor: focal_name,
        observed_coef,
        percentile: 100.0 * at_or_below / m,
        one_sided_p,
        two_sided_p: (2.0 * one_sided_p).min(1.0),
        n_perm,
        n_failed,
        seed,
        mean: mu,
        sd,
        quantiles,
    })
}
