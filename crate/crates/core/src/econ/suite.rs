use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fit_panel_ols, FeDim, OutlierTreatment, PanelFilter, PanelObservation, Period, RegressionResult, RegressionSpec, Var};
use crate::error::Result;
use crate::token::Category;

const CONTROLS: [Var; 2] = [Var::LogTvl, Var::Stablecoin];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    /// Window a pool must span for the crisis-spanning survivorship sample.
    pub span_start: Period,
    pub span_end: Period,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { span_start: Period::new(2022, 11), span_end: Period::new(2022, 11) }
    }
}

fn with_controls(main: &[Var]) -> Vec<Var> {
    main.iter().chain(CONTROLS.iter()).copied().collect()
}

fn spec(name: &str, dep: Var, main: &[Var], fe: &[FeDim]) -> RegressionSpec {
    RegressionSpec::new(name, dep, &with_controls(main), fe)
}

/// The standard set of specifications.
pub fn standard_specs(opts: &SuiteOptions) -> Vec<RegressionSpec> {
    use FeDim::{Chain, Period as Time, ProtocolType as Proto};
    let full = [Time, Proto, Chain];
    let fe_variants: [(&str, &[FeDim]); 4] =
        [("time", &[Time]), ("protocol", &[Time, Proto]), ("chain", &[Time, Chain]), ("both", &full)];
    let mut s = Vec::new();

    for (i, (label, fe)) in fe_variants.iter().enumerate() {
        s.push(spec(&format!("tier_{}_{label}_fe", i + 1), Var::Apy, &[Var::Tier], fe));
    }
    s.push(
        spec("tier_5_excl_lst", Var::Apy, &[Var::Tier], &full)
            .filter(PanelFilter::ExcludeProtocolTypes(vec![Category::LiquidStaking])),
    );
    let dummies = [Var::TierIs(1), Var::TierIs(2), Var::TierAtLeast(3)];
    s.push(spec("tier_6_dummies", Var::Apy, &dummies, &full));

    for (main, tag) in [(vec![Var::Tier], "tier"), (vec![Var::GraphDistance], "distance")] {
        for (fe, fe_tag) in [(&[Time][..], "time"), (&full[..], "full")] {
            for (dep, dep_tag) in [(Var::Apy, "original"), (Var::ApyCorrected, "corrected")] {
                s.push(spec(&format!("correction_{tag}_{dep_tag}_{fe_tag}"), dep, &main, fe));
            }
        }
    }
    for (dep, dep_tag) in [(Var::Apy, "original"), (Var::ApyCorrected, "corrected")] {
        s.push(spec(&format!("correction_joint_{dep_tag}_full"), dep, &[Var::Tier, Var::GraphDistance], &full));
    }

    for (i, (label, fe)) in fe_variants.iter().enumerate() {
        s.push(spec(&format!("distance_{}_{label}_fe", i + 1), Var::Apy, &[Var::GraphDistance], fe).filter(PanelFilter::HasDistance));
    }
    s.push(spec("distance_5_joint", Var::Apy, &[Var::GraphDistance, Var::Tier], &full).filter(PanelFilter::HasDistance));

    let subsamples: [(&str, Option<Category>); 5] = [
        ("full", None),
        ("lending", Some(Category::Lending)),
        ("dex", Some(Category::Dex)),
        ("liquid_staking", Some(Category::LiquidStaking)),
        ("yield_aggregator", Some(Category::YieldAggregator)),
    ];
    for (main, tag) in [(Var::GraphDistance, "distance"), (Var::Tier, "tier")] {
        for (label, cat) in &subsamples {
            let mut sp = spec(&format!("subsample_{tag}_{label}"), Var::Apy, &[main], &[Time, Chain]);
            if let Some(c) = cat {
                sp = sp.filter(PanelFilter::OnlyProtocolTypes(vec![*c]));
            }
            s.push(sp);
        }
    }

    let treatments: [(&str, OutlierTreatment); 5] = [
        ("frame_only", OutlierTreatment::None),
        ("winsor_1_99", OutlierTreatment::Winsorize { lo: 0.01, hi: 0.99 }),
        ("winsor_2_98", OutlierTreatment::Winsorize { lo: 0.02, hi: 0.98 }),
        ("winsor_5_95", OutlierTreatment::Winsorize { lo: 0.05, hi: 0.95 }),
        ("trim_1_99", OutlierTreatment::Trim { lo: 0.01, hi: 0.99 }),
    ];
    for (label, t) in treatments {
        s.push(spec(&format!("outlier_{label}"), Var::Apy, &[Var::Tier], &full).outlier(t));
    }

    s.push(spec("survivor_full", Var::Apy, &[Var::Tier], &full));
    s.push(spec("survivor_12m", Var::Apy, &[Var::Tier], &full).filter(PanelFilter::MinMonths(12)));
    s.push(spec("survivor_6m", Var::Apy, &[Var::Tier], &full).filter(PanelFilter::MinMonths(6)));
    s.push(
        spec("survivor_spanning", Var::Apy, &[Var::Tier], &full)
            .filter(PanelFilter::SpansWindow { start: opts.span_start, end: opts.span_end }),
    );

    s.push(spec("yield_base_tier", Var::ApyBase, &[Var::Tier], &full));
    s.push(spec("yield_base_dummies", Var::ApyBase, &dummies, &full));
    s.push(spec("yield_reward_tier", Var::ApyReward, &[Var::Tier], &full));
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub results: Vec<RegressionResult>,
    /// Specifications that could not be fitted, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Fits every specification; failures are reported, not fatal.
pub fn run_specification_suite(panel: &[PanelObservation], specs: &[RegressionSpec]) -> SuiteOutcome {
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for s in specs {
        match fit_panel_ols(panel, s) {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("{} skipped: {e}", s.name);
                skipped.push((s.name.clone(), e.to_string()));
            }
        }
    }
    SuiteOutcome { results, skipped }
}

/// `spec,regressor,coef,se,stars,r2,n,clusters`, one row per coefficient.
pub fn write_results_csv<W: Write>(results: &[RegressionResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["spec", "regressor", "coef", "se", "stars", "r2", "n", "clusters"])?;
    for r in results {
        for c in &r.coefficients {
            w.write_record([
                r.spec.as_str(),
                &c.name,
                &c.estimate.to_string(),
                &c.se.to_string(),
                c.stars(),
                &r.r_squared.to_string(),
                &r.n_obs.to_string(),
                &r.n_clusters.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
