mod common;

use std::collections::BTreeMap;

use common::*;
use defi_tiers::econ::{
    build_panel, collinearity_report, event_window_regressions, fit_panel_ols, permutation_placebo,
    rolling_coefficients, run_specification_suite, standard_specs, vif, winsorize, ClusterDim, EventWindow, FeDim,
    PanelFilter, PanelObservation, PanelOptions, Period, RegressionSpec, SuiteOptions, Var,
};
use defi_tiers::hierarchy::TierAssignment;
use defi_tiers::ingest::PoolRecord;
use defi_tiers::metrics::EmbeddedYieldTable;
use defi_tiers::synth::{generate_panel, PanelSimConfig, RegimeShift};
use defi_tiers::Category;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_panel(seed: u64, n_pools: usize, n_months: usize) -> Vec<PanelObservation> {
    generate_panel(&PanelSimConfig { n_pools, n_months, seed, ..PanelSimConfig::default() }).unwrap()
}

fn tier_spec(fe: &[FeDim]) -> RegressionSpec {
    RegressionSpec::new("t", Var::Apy, &[Var::Tier], fe)
}

#[test]
fn absorbed_fit_matches_dummy_expansion() {
    let fes: [&[FeDim]; 5] = [
        &[],
        &[FeDim::Period],
        &[FeDim::Period, FeDim::ProtocolType],
        &[FeDim::Period, FeDim::Chain],
        &[FeDim::Period, FeDim::ProtocolType, FeDim::Chain],
    ];
    let regs: [&[Var]; 3] = [&[Var::Tier], &[Var::Tier, Var::LogTvl], &[Var::Tier, Var::GraphDistance, Var::Stablecoin]];
    let mut checked = 0;
    for seed in 0..24u64 {
        let rows = small_panel(seed, 10 + (seed as usize % 7), 3 + (seed as usize % 3));
        let fe = fes[seed as usize % fes.len()];
        let reg = regs[seed as usize % regs.len()];
        let fit = fit_panel_ols(&rows, &RegressionSpec::new("oracle", Var::Apy, reg, fe)).unwrap();
        // a draw without shortcut paths makes distance a copy of tier
        let kept: Vec<Var> = reg.iter().copied().filter(|v| !fit.dropped.contains(&v.to_string())).collect();
        assert_eq!(kept.len(), fit.coefficients.len());
        let oracle = dummy_ols(&rows, Var::Apy, &kept, fe);
        for (j, c) in fit.coefficients.iter().enumerate() {
            assert!(rel_close(c.estimate, oracle.beta[j], 1e-8), "seed {seed} {}: {} vs {}", c.name, c.estimate, oracle.beta[j]);
            assert!(rel_close(c.se, oracle.se[j], 1e-8), "seed {seed} {} se: {} vs {}", c.name, c.se, oracle.se[j]);
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

/// HC1 by the textbook formula on a design with intercept and dummies.
fn hc1(rows: &[PanelObservation], regs: &[Var], fe: &[FeDim]) -> Vec<f64> {
    let n = rows.len();
    let mut cols: Vec<Vec<f64>> = regs.iter().map(|v| rows.iter().map(|r| v.value(r).unwrap()).collect()).collect();
    cols.push(vec![1.0; n]);
    for &d in fe {
        let mut levels: Vec<String> = rows.iter().map(|r| d.label(r)).collect();
        levels.sort();
        levels.dedup();
        for l in levels.iter().skip(1) {
            cols.push(rows.iter().map(|r| if &d.label(r) == l { 1.0 } else { 0.0 }).collect());
        }
    }
    let k = cols.len();
    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.apy));
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let e = &y - &x * (&inv * (x.transpose() * &y));
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    let v = &inv * meat * &inv * (n as f64 / (n - k) as f64);
    (0..regs.len()).map(|j| v[(j, j)].sqrt()).collect()
}

#[test]
fn singleton_clusters_give_hc1() {
    for seed in 0..5 {
        let rows = small_panel(100 + seed, 15, 4);
        let regs = [Var::Tier, Var::LogTvl];
        let mut spec = RegressionSpec::new("hc1", Var::Apy, &regs, &[FeDim::Period]);
        spec.cluster = ClusterDim::Observation;
        let fit = fit_panel_ols(&rows, &spec).unwrap();
        assert_eq!(fit.n_clusters, rows.len());
        for (c, want) in fit.coefficients.iter().zip(hc1(&rows, &regs, &[FeDim::Period])) {
            assert!(rel_close(c.se, want, 1e-8), "{} {} vs {want}", c.name, c.se);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shifting_the_dependent_changes_nothing(seed in 0u64..10_000, shift in -1e3f64..1e3, two_way in any::<bool>()) {
        let rows = small_panel(seed, 12, 4);
        let fe: &[FeDim] = if two_way { &[FeDim::Period, FeDim::Chain] } else { &[FeDim::Period] };
        let spec = RegressionSpec::new("s", Var::Apy, &[Var::Tier, Var::LogTvl], fe);
        let a = fit_panel_ols(&rows, &spec).unwrap();
        let moved: Vec<_> = rows.iter().cloned().map(|mut r| { r.apy += shift; r }).collect();
        let b = fit_panel_ols(&moved, &spec).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!(rel_close(x.estimate, y.estimate, 1e-8));
            prop_assert!(rel_close(x.se, y.se, 1e-8));
        }
        prop_assert!((a.r_squared - b.r_squared).abs() <= 1e-8);
    }

    #[test]
    fn placebo_ignores_monotone_period_relabeling(seed in 0u64..10_000, stretch in 1i64..5, offset in -30i64..30) {
        let rows = small_panel(seed, 20, 4);
        let spec = tier_spec(&[FeDim::Period]);
        let relabeled: Vec<_> = rows
            .iter()
            .cloned()
            .map(|mut r| { r.period = Period::from_index(stretch * r.period.index() + offset); r })
            .collect();
        let a = permutation_placebo(&rows, &spec, 50, seed).unwrap();
        let b = permutation_placebo(&relabeled, &spec, 50, seed).unwrap();
        prop_assert_eq!(a.one_sided_p, b.one_sided_p);
        prop_assert_eq!(a.two_sided_p, b.two_sided_p);
        prop_assert!(rel_close(a.observed_coef, b.observed_coef, 1e-9));
    }

    #[test]
    fn attrition_adds_up(
        spec in proptest::collection::vec((0usize..12, 0u32..3, 0.0f64..5000.0, -20.0f64..150.0, any::<bool>(), 0i64..6), 1..60),
    ) {
        let mut tiers = TierAssignment::default();
        let recs: Vec<PoolRecord> = spec
            .iter()
            .map(|(p, day, tvl, apy, missing, tier)| {
                let id = format!("p{p}");
                tiers.tier.insert(key(&id), *tier - 1);
                let mut r = pool(&id, "x", Category::Lending, &[&id], None, *tvl, *apy);
                r.observed_at = at(2024, 1 + day, 3);
                if *missing {
                    r.apy_total = None;
                }
                r
            })
            .collect();
        let opts = PanelOptions::default();
        match build_panel(&recs, &tiers, &EmbeddedYieldTable::default(), &opts) {
            Ok(p) => {
                let a = &p.attrition;
                prop_assert_eq!(a.rows_in, a.rows_out + a.dropped.iter().map(|d| d.1).sum::<usize>());
                prop_assert_eq!(a.rows_out, p.rows.len());
                prop_assert!(p.rows.iter().all(|r| (0..=3).contains(&r.tier) && r.log_tvl.is_finite()));
            }
            Err(e) => prop_assert!(e.to_string().contains("kept 0")),
        }
    }

    #[test]
    fn winsorizing_clamps_and_keeps_order(values in proptest::collection::vec(-1e6f64..1e6, 1..80), lo in 0.0f64..0.3, width in 0.1f64..0.7) {
        let hi = (lo + width).min(1.0);
        let w = winsorize(&values, lo, hi);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (w.iter().cloned().fold(f64::INFINITY, f64::min), w.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        prop_assert!(min >= sorted[0] && max <= sorted[sorted.len() - 1]);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] <= values[j] {
                    prop_assert!(w[i] <= w[j]);
                }
            }
        }
        prop_assert_eq!(winsorize(&values, 0.0, 1.0), values);
    }
}

#[test]
fn winsorizing_one_to_hundred() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    // linear interpolation: h = 99 p, so the 5% point sits at 5.95 and the 95% point at 95.05
    let w = winsorize(&v, 0.05, 0.95);
    assert!((w[0] - 5.95).abs() < 1e-12);
    assert!((w[99] - 95.05).abs() < 1e-12);
    assert_eq!(w[50], 51.0);
}

/// Rows with tier = s + u1 and distance = s + u2 over the full factorial
/// s in {0, 2}, u1, u2 in {0, 1, 2}: the correlation is var s / (var s + var u) = 0.6.
fn shared_component_rows() -> Vec<PanelObservation> {
    let base = small_panel(5, 1, 1).remove(0);
    let mut out = Vec::new();
    for s in [0u32, 2] {
        for u1 in 0..3u32 {
            for u2 in 0..3u32 {
                let mut r = base.clone();
                r.pool_id = format!("p{s}{u1}{u2}");
                r.tier = i64::from(s + u1);
                r.graph_distance = Some(s + u2);
                r.apy = f64::from(s + u1 * u2);
                out.push(r);
            }
        }
    }
    out
}

#[test]
fn collinearity_examples() {
    let rows = shared_component_rows();
    let joint = RegressionSpec::new("joint", Var::Apy, &[Var::Tier, Var::GraphDistance], &[]);
    let rep = collinearity_report(&rows, std::slice::from_ref(&joint));
    assert!((rep.tier_distance_r.unwrap() - 0.6).abs() < 1e-12);
    for e in &rep.vif {
        assert!((e.vif.unwrap() - 1.0 / (1.0 - 0.36)).abs() < 1e-9);
    }

    let same: Vec<_> = rows.iter().cloned().map(|mut r| { r.graph_distance = Some(r.tier as u32); r }).collect();
    let rep = collinearity_report(&same, &[joint]);
    assert!((rep.tier_distance_r.unwrap() - 1.0).abs() < 1e-12);
    assert!(rep.vif.iter().all(|e| e.vif.is_none()));

    // independent draws
    let rows = generate_panel(&PanelSimConfig { n_pools: 2000, n_months: 1, shortcut_prob: 0.0, seed: 3, ..Default::default() }).unwrap();
    let indep = RegressionSpec::new("indep", Var::Apy, &[Var::Tier, Var::Stablecoin], &[]);
    let v = vif(&rows, &indep);
    assert!(v.iter().all(|e| (e.vif.unwrap() - 1.0).abs() < 0.01), "{v:?}");
    let t: Vec<f64> = rows.iter().map(|r| r.tier as f64).collect();
    let s: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.is_stablecoin))).collect();
    assert!(defi_tiers::stats::pearson(&t, &s).unwrap().abs() < 0.05);
}

#[test]
fn tier_effect_recovered_without_fixed_effects() {
    let rows = generate_panel(&PanelSimConfig { seed: 17, ..Default::default() }).unwrap();
    let fit = fit_panel_ols(&rows, &tier_spec(&[])).unwrap();
    let c = fit.coef("tier").unwrap();
    assert!(((c.estimate + 0.5) / c.se).abs() <= 3.0, "{c:?}");
}

#[test]
fn corrected_joint_model_recovers_premium_and_discount() {
    let cfg = PanelSimConfig { n_pools: 400, corrected_tier_coef: 2.0, corrected_distance_coef: -3.0, seed: 23, ..Default::default() };
    let rows = generate_panel(&cfg).unwrap();
    let spec = RegressionSpec::new("joint", Var::ApyCorrected, &[Var::Tier, Var::GraphDistance], &[FeDim::Period]);
    let fit = fit_panel_ols(&rows, &spec).unwrap();
    let (t, d) = (fit.coef("tier").unwrap(), fit.coef("graph_distance").unwrap());
    assert!(t.estimate > 0.0 && d.estimate < 0.0);
    assert!(((t.estimate - 2.0) / t.se).abs() <= 3.0, "{t:?}");
    assert!(((d.estimate + 3.0) / d.se).abs() <= 3.0, "{d:?}");
    assert!(rows.iter().all(|r| r.apy_corrected == r.apy + r.embedded_yield));
}

#[test]
fn single_type_subsample_drops_its_fixed_effect() {
    let rows = small_panel(8, 60, 4);
    let spec = tier_spec(&[FeDim::Period, FeDim::ProtocolType]).filter(PanelFilter::OnlyProtocolTypes(vec![Category::Lending]));
    let fit = fit_panel_ols(&rows, &spec).unwrap();
    assert_eq!(fit.fe_absorbed, vec![FeDim::Period]);
    assert!(fit.notes.iter().any(|n| n.contains("protocol_type")));
}

#[test]
fn suite_reports_every_specification() {
    let rows = small_panel(4, 25, 4);
    assert_eq!(rows.len(), 100);
    let specs = standard_specs(&SuiteOptions::default());
    let out = run_specification_suite(&rows, &specs);
    assert_eq!(out.results.len() + out.skipped.len(), specs.len());
    let mut names: Vec<&str> = out.results.iter().map(|r| r.spec.as_str()).chain(out.skipped.iter().map(|s| s.0.as_str())).collect();
    names.sort();
    let mut want: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    want.sort();
    assert_eq!(names, want);
    for name in ["tier_6_dummies", "correction_joint_corrected_full", "distance_5_joint"] {
        assert!(out.results.iter().any(|r| r.spec == name), "{name} missing");
    }
}

#[test]
fn placebo_edge_cases_and_strong_signal() {
    let rows = small_panel(9, 30, 3);
    let one = permutation_placebo(&rows, &tier_spec(&[FeDim::Period]), 1, 5).unwrap();
    assert!(one.one_sided_p == 0.0 || one.one_sided_p == 1.0);

    let strong = generate_panel(&PanelSimConfig { tier_coef: -3.0, seed: 2, ..Default::default() }).unwrap();
    let r = permutation_placebo(&strong, &tier_spec(&[FeDim::Period]), 1000, 77).unwrap();
    assert!(r.one_sided_p < 0.01, "{r:?}");
    assert_eq!(r.n_perm, 1000);
    let again = permutation_placebo(&strong, &tier_spec(&[FeDim::Period]), 1000, 77).unwrap();
    assert_eq!(r, again);
}

#[test]
fn rolling_full_window_is_the_full_fit() {
    let rows = small_panel(12, 40, 6);
    let spec = tier_spec(&[FeDim::Period]);
    let full = fit_panel_ols(&rows, &spec).unwrap();
    let pts = rolling_coefficients(&rows, &spec, "tier", 6).unwrap();
    assert_eq!(pts.len(), 1);
    let c = full.coef("tier").unwrap();
    assert!(rel_close(pts[0].coef.unwrap(), c.estimate, 1e-12));
    assert!(rel_close(pts[0].ci_low.unwrap(), c.estimate - 1.96 * c.se, 1e-12));
}

#[test]
fn rolling_series_tracks_a_level_shift() {
    let start = Period::new(2022, 1);
    let cfg = PanelSimConfig {
        n_pools: 300,
        n_months: 24,
        start,
        tier_coef: -0.5,
        noise_sd: 0.5,
        regimes: vec![RegimeShift { start: start.offset(12), end: start.offset(23), tier_multiplier: 4.0 }],
        seed: 31,
        ..Default::default()
    };
    let rows = generate_panel(&cfg).unwrap();
    let pts = rolling_coefficients(&rows, &tier_spec(&[FeDim::Period]), "tier", 6).unwrap();
    assert_eq!(pts.len(), 19);
    let calm: Vec<f64> = pts.iter().filter(|p| p.period <= start.offset(11)).map(|p| p.coef.unwrap()).collect();
    let shifted: Vec<f64> = pts.iter().filter(|p| p.period >= start.offset(17)).map(|p| p.coef.unwrap()).collect();
    assert!(calm.iter().all(|c| (c + 0.5).abs() < 0.25), "{calm:?}");
    assert!(shifted.iter().all(|c| (c + 2.0).abs() < 0.5), "{shifted:?}");
}

#[test]
fn event_windows() {
    let start = Period::new(2022, 1);
    let cfg = PanelSimConfig {
        n_pools: 400,
        n_months: 12,
        start,
        regimes: vec![RegimeShift { start: start.offset(4), end: start.offset(5), tier_multiplier: 3.0 }],
        seed: 41,
        ..Default::default()
    };
    let rows = generate_panel(&cfg).unwrap();
    let spec = tier_spec(&[FeDim::Period]);

    let whole = event_window_regressions(&rows, &spec, &[EventWindow::new("all", start, start.offset(11))]);
    let full = fit_panel_ols(&rows, &spec).unwrap();
    let w = whole[0].result.as_ref().unwrap();
    assert_eq!(w.coefficients, full.coefficients);

    let windows = [
        EventWindow::new("calm", start, start.offset(3)),
        EventWindow::new("crisis", start.offset(4), start.offset(5)),
        EventWindow::new("empty", start.offset(40), start.offset(41)),
    ];
    let res = event_window_regressions(&rows, &spec, &windows);
    let calm = res[0].result.as_ref().unwrap().coef("tier").unwrap().clone();
    let crisis = res[1].result.as_ref().unwrap().coef("tier").unwrap().clone();
    assert_eq!(res[1].result.as_ref().unwrap().spec, "t@crisis");
    assert_eq!(res[2].flag.as_deref(), Some("empty window"));
    // each window on its own rows only
    let only_calm: Vec<_> = rows.iter().filter(|r| r.period <= start.offset(3)).cloned().collect();
    assert_eq!(fit_panel_ols(&only_calm, &spec).unwrap().coefficients[0].estimate, calm.estimate);
    let ratio = crisis.estimate / calm.estimate;
    let band = 3.0 * (crisis.se / calm.estimate.abs() + 3.0 * calm.se / calm.estimate.abs());
    assert!((ratio - 3.0).abs() <= band, "ratio {ratio} band {band}");
}

#[test]
fn corrected_column_adds_embedded_yield() {
    let embedded: BTreeMap<_, _> = [("A", 0.0), ("B", 3.2), ("C", 4.2), ("D", 1.5), ("E", 0.25), ("F", 10.0)]
        .iter()
        .map(|(s, v)| (key(s), *v))
        .collect();
    let mut tiers = TierAssignment::default();
    for (i, k) in embedded.keys().enumerate() {
        tiers.tier.insert(k.clone(), (i % 4) as i64);
    }
    let table = EmbeddedYieldTable { embedded: embedded.clone(), ..Default::default() };
    let apys = [1.0, 2.5, 0.0, 7.75, 12.0, 3.3];
    let recs: Vec<PoolRecord> = embedded
        .keys()
        .zip(apys)
        .map(|(k, apy)| pool(&format!("pool-{}", k.symbol), "x", Category::Lending, &[&k.symbol], None, 1e6, apy))
        .collect();
    let opts = PanelOptions { winsor_lo: 0.0, winsor_hi: 1.0, ..Default::default() };
    let panel = build_panel(&recs, &tiers, &table, &opts).unwrap();
    let hand = [1.0, 5.7, 4.2, 9.25, 12.25, 13.3];
    let got: BTreeMap<&str, f64> = panel.rows.iter().map(|r| (r.pool_id.as_str(), r.apy_corrected)).collect();
    for (k, want) in embedded.keys().zip(hand) {
        assert!((got[format!("pool-{}", k.symbol).as_str()] - want).abs() < 1e-12);
    }
}

#[test]
fn fifty_pool_feed_counts_per_tier() {
    let mut tiers = TierAssignment::default();
    let mut recs = Vec::new();
    for i in 0..50 {
        let id = format!("q{i:02}");
        tiers.tier.insert(key(&id), if i % 11 == 10 { -1 } else { (i % 4) as i64 });
        let tvl = if i % 10 == 9 { 500.0 } else { 1e5 };
        let apy = if i % 10 == 7 { 150.0 } else { 2.0 + i as f64 / 10.0 };
        recs.push(pool(&id, "x", Category::Lending, &[&id], None, tvl, apy));
    }
    // by hand: drop i%10 in {7, 9} (10 pools), then unmapped i in {10, 21, 32, 43} minus those already gone
    let kept: Vec<usize> = (0..50).filter(|i| i % 10 != 7 && i % 10 != 9 && i % 11 != 10).collect();
    assert_eq!(kept.len(), 36);
    let opts = PanelOptions { winsor_lo: 0.0, winsor_hi: 1.0, ..Default::default() };
    let panel = build_panel(&recs, &tiers, &EmbeddedYieldTable::default(), &opts).unwrap();
    for t in 0..4 {
        let want = kept.iter().filter(|i| (*i % 4) as i64 == t).count();
        assert_eq!(panel.rows.iter().filter(|r| r.tier == t).count(), want, "tier {t}");
    }
    assert_eq!(panel.attrition.dropped[1].1, 5);
    assert_eq!(panel.attrition.dropped[2].1, 5);
}
