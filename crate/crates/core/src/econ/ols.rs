use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ClusterDim, FeDim, PanelObservation, RegressionSpec};
use crate::error::{Error, Result};

/// Maximum absolute group mean left after demeaning.
pub const DEMEAN_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100_000;
/// A demeaned column whose residual after projection on earlier columns
/// keeps less than this share of its sum of squares is dropped.
const COLLINEAR_TOL: f64 = 1e-10;
/// Reciprocal condition number of the scaled normal matrix below which the
/// fit is refused.
const MIN_RCOND: f64 = 1e-13;

/// Group index per observation for one fixed-effect dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeGroups {
    pub ids: Vec<usize>,
    pub levels: usize,
}

impl FeGroups {
    /// Dense ids in order of first label sort.
    pub fn from_labels<S: Ord + Clone>(labels: &[S]) -> Self {
        let uniq: BTreeMap<S, usize> = {
            let mut m = BTreeMap::new();
            for l in labels {
                m.entry(l.clone()).or_insert(0);
            }
            m.into_keys().enumerate().map(|(i, k)| (k, i)).collect()
        };
        Self { ids: labels.iter().map(|l| uniq[l]).collect(), levels: uniq.len() }
    }
}

/// Subtracts group means dimension by dimension until no group mean exceeds
/// `tol` in absolute value; with no dimensions the grand mean is removed.
/// Returns the number of sweeps.
pub fn demean_in_place(col: &mut [f64], fe: &[FeGroups], tol: f64) -> usize {
    if fe.is_empty() {
        let m = col.iter().sum::<f64>() / col.len().max(1) as f64;
        col.iter_mut().for_each(|v| *v -= m);
        return 1;
    }
    // rounding noise on large values can sit above an absolute tolerance
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = tol.max(scale * 1e-14);
    let mut sums: Vec<Vec<f64>> = fe.iter().map(|g| vec![0.0; g.levels]).collect();
    let counts: Vec<Vec<f64>> = fe
        .iter()
        .map(|g| {
            let mut c = vec![0.0; g.levels];
            g.ids.iter().for_each(|&i| c[i] += 1.0);
            c
        })
        .collect();
    for sweep in 1..=MAX_SWEEPS {
        let mut worst: f64 = 0.0;
        for (d, g) in fe.iter().enumerate() {
            let s = &mut sums[d];
            s.iter_mut().for_each(|v| *v = 0.0);
            for (v, &i) in col.iter().zip(&g.ids) {
                s[i] += v;
            }
            for (m, c) in s.iter_mut().zip(&counts[d]) {
                *m /= c;
                worst = worst.max(m.abs());
            }
            for (v, &i) in col.iter_mut().zip(&g.ids) {
                *v -= s[i];
            }
        }
        // one dimension is exact after a single pass
        if worst < tol || (fe.len() == 1 && sweep >= 2) {
            return sweep;
        }
    }
    log::warn!("demeaning stopped after {MAX_SWEEPS} sweeps without reaching {tol:e}");
    MAX_SWEEPS
}

/// Rank of the fixed-effect dummy block including the intercept.
pub fn fe_rank(fe: &[FeGroups]) -> usize {
    match fe.len() {
        0 => 1,
        1 => fe[0].levels,
        2 => {
            // levels of both dimensions as nodes, observations as edges
            let (a, b) = (&fe[0], &fe[1]);
            let mut parent: Vec<usize> = (0..a.levels + b.levels).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            for (&i, &j) in a.ids.iter().zip(&b.ids) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, a.levels + j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
            let comps = (0..parent.len()).filter(|&x| find(&mut parent, x) == x).count();
            a.levels + b.levels - comps
        }
        _ => {
            let total: usize = fe.iter().map(|g| g.levels).sum();
            if total > 2500 {
                log::warn!("fixed-effect rank approximated for {total} levels");
                return total - (fe.len() - 1);
            }
            let mut offsets = Vec::with_capacity(fe.len());
            let mut o = 0;
            for g in fe {
                offsets.push(o);
                o += g.levels;
            }
            let n = fe[0].ids.len();
            let mut dtd = DMatrix::<f64>::zeros(total, total);
            for r in 0..n {
                for (d1, g1) in fe.iter().enumerate() {
                    for (d2, g2) in fe.iter().enumerate() {
                        dtd[(offsets[d1] + g1.ids[r], offsets[d2] + g2.ids[r])] += 1.0;
                    }
                }
            }
            let eig = dtd.symmetric_eigen();
            let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            eig.eigenvalues.iter().filter(|v| v.abs() > max * 1e-10 * total as f64).count()
        }
    }
}

/// Low-level fit on raw columns.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Indices of the input columns kept, in input order.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Regressors plus fixed-effect rank.
    pub n_params: usize,
    pub residuals: Vec<f64>,
}

/// OLS of `y` on `x` with fixed effects absorbed and CR1 cluster-robust
/// covariance, small-sample factor G/(G-1)·(N-1)/(N-K).
pub fn fit_demeaned(y: &[f64], x: &[Vec<f64>], fe: &[FeGroups], clusters: &[usize]) -> Result<OlsFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Insufficient("no observations".into()));
    }
    let g = {
        let mut c = clusters.to_vec();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    if g < 2 {
        return Err(Error::Insufficient(format!("{g} cluster(s); at least 2 needed")));
    }

    let mut yt = y.to_vec();
    demean_in_place(&mut yt, fe, DEMEAN_TOL);
    let mut cols: Vec<Vec<f64>> = x.to_vec();
    for c in &mut cols {
        demean_in_place(c, fe, DEMEAN_TOL);
    }

    // Modified Gram-Schmidt to spot columns spanned by earlier ones.
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        let ss: f64 = c.iter().map(|v| v * v).sum();
        let raw_ss: f64 = {
            let m = x[j].iter().sum::<f64>() / n as f64;
            x[j].iter().map(|v| (v - m) * (v - m)).sum()
        };
        let mut r = c.clone();
        for q in &basis {
            let dot: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let rss: f64 = r.iter().map(|v| v * v).sum();
        if ss <= COLLINEAR_TOL * raw_ss.max(f64::MIN_POSITIVE) || rss <= COLLINEAR_TOL * ss || ss == 0.0 {
            dropped.push(j);
            continue;
        }
        let norm = rss.sqrt();
        basis.push(r.into_iter().map(|v| v / norm).collect());
        kept.push(j);
    }

    let p = kept.len();
    let k = p + fe_rank(fe);
    if n <= k {
        return Err(Error::Insufficient(format!("{n} observations for {k} parameters")));
    }
    let xm = DMatrix::from_fn(n, p, |r, c| cols[kept[c]][r]);
    let yv = DVector::from_vec(yt);
    let sst = yv.norm_squared();

    let (beta, bread) = if p == 0 {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let xtx = xm.transpose() * &xm;
        let d: Vec<f64> = (0..p).map(|i| xtx[(i, i)].sqrt()).collect();
        let scaled = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (d[i] * d[j]));
        let eig = scaled.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !(lo > hi * MIN_RCOND) {
            return Err(Error::Singular { condition: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
        }
        let chol = xtx.clone().cholesky().ok_or(Error::Singular { condition: hi / lo })?;
        let beta = chol.solve(&(xm.transpose() * &yv));
        (beta, chol.inverse())
    };
    let resid = &yv - &xm * &beta;
    let ssr = resid.norm_squared();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };

    let mut scores: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    for r in 0..n {
        let s = scores.entry(clusters[r]).or_insert_with(|| DVector::zeros(p));
        for c in 0..p {
            s[c] += xm[(r, c)] * resid[r];
        }
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in scores.values() {
        meat += s * s.transpose();
    }
    let (nf, gf, kf) = (n as f64, g as f64, k as f64);
    let factor = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    let vcov = &bread * meat * &bread * factor;
    let se = (0..p).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect();

    Ok(OlsFit {
        kept,
        dropped,
        beta: beta.iter().copied().collect(),
        se,
        vcov,
        r_squared,
        n_obs: n,
        n_clusters: g,
        n_params: k,
        residuals: resid.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p_value: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            p if p < 0.01 => "***",
            p if p < 0.05 => "**",
            p if p < 0.1 => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub spec: String,
    pub dependent: String,
    pub coefficients: Vec<Coefficient>,
    /// Within R² (after absorbing fixed effects).
    pub r_squared: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub fe_absorbed: Vec<FeDim>,
    /// Regressors dropped as collinear.
    pub dropped: Vec<String>,
    pub notes: Vec<String>,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub(crate) fn cluster_ids(rows: &[PanelObservation], dim: ClusterDim) -> Vec<usize> {
    let labels: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| match dim {
            ClusterDim::Pool => r.pool_id.clone(),
            ClusterDim::Period => r.period.to_string(),
            ClusterDim::Chain => r.chain.clone(),
            ClusterDim::ProtocolType => r.protocol_type.as_str().to_string(),
            ClusterDim::Observation => format!("{i:012}"),
        })
        .collect();
    FeGroups::from_labels(&labels).ids
}

/// Fixed effects for the spec; single-level dimensions are dropped with a
/// note.
pub(crate) fn fe_groups(rows: &[PanelObservation], dims: &[FeDim], notes: &mut Vec<String>) -> (Vec<FeDim>, Vec<FeGroups>) {
    let mut used = Vec::new();
    let mut groups = Vec::new();
    for &d in dims {
        let labels: Vec<String> = rows.iter().map(|r| d.label(r)).collect();
        let g = FeGroups::from_labels(&labels);
        if g.levels <= 1 {
            notes.push(format!("{} fixed effect dropped: single level", d.as_str()));
            continue;
        }
        used.push(d);
        groups.push(g);
    }
    (used, groups)
}

/// Fits a specification on the panel.
pub fn fit_panel_ols(panel: &[PanelObservation], spec: &RegressionSpec) -> Result<RegressionResult> {
    let rows = spec.prepare(panel);
    fit_rows(&rows, spec)
}

pub(crate) fn fit_rows(rows: &[PanelObservation], spec: &RegressionSpec) -> Result<RegressionResult> {
    if rows.is_empty() {
        return Err(Error::Insufficient(format!("{}: no observations after filters", spec.name)));
    }
    let mut notes = Vec::new();
    let (fe_absorbed, groups) = fe_groups(rows, &spec.fe, &mut notes);
    let y: Vec<f64> = rows.iter().map(|r| spec.dependent.value(r).expect("prepared")).collect();
    let x: Vec<Vec<f64>> =
        spec.regressors.iter().map(|v| rows.iter().map(|r| v.value(r).expect("prepared")).collect()).collect();
    let clusters = cluster_ids(rows, spec.cluster);
    let fit = fit_demeaned(&y, &x, &groups, &clusters)?;
    let dropped: Vec<String> = fit.dropped.iter().map(|&j| spec.regressors[j].to_string()).collect();
    for d in &dropped {
        log::warn!("{}: {d} dropped as collinear", spec.name);
    }
    let t_dist = StudentsT::new(0.0, 1.0, (fit.n_clusters - 1) as f64).expect("positive dof");
    let coefficients = fit
        .kept
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (b, se) = (fit.beta[i], fit.se[i]);
            let t = if se > 0.0 { b / se } else { f64::NAN };
            let p = if t.is_finite() { 2.0 * (1.0 - t_dist.cdf(t.abs())) } else { f64::NAN };
            Coefficient { name: spec.regressors[j].to_string(), estimate: b, se, t, p_value: p }
        })
        .collect();
    Ok(RegressionResult {
        spec: spec.name.clone(),
        dependent: spec.dependent.to_string(),
        coefficients,
        r_squared: fit.r_squared,
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        fe_absorbed,
        dropped,
        notes,
    })
}
