//! Pool-month panel and regression suite.

mod collinearity;
mod ols;
mod panel;
mod period;
mod placebo;
mod spec;
mod suite;
mod windows;
mod winsor;

pub use collinearity::{collinearity_report, vif, CollinearityReport, VifEntry};
pub use ols::{demean_in_place, fe_rank, fit_demeaned, fit_panel_ols, Coefficient, FeGroups, OlsFit, RegressionResult, DEMEAN_TOL};
pub use panel::{build_panel, read_panel_csv, write_panel_csv, Aggregation, Attrition, Panel, PanelObservation, PanelOptions};
pub use period::Period;
pub use placebo::{permutation_placebo, replicate_rng, PlaceboResult};
pub use spec::{ClusterDim, FeDim, OutlierTreatment, PanelFilter, RegressionSpec, Var};
pub use suite::{run_specification_suite, standard_specs, write_results_csv, SuiteOptions, SuiteOutcome};
pub use windows::{event_window_regressions, rolling_coefficients, EventResult, EventWindow, RollingPoint};
pub use winsor::{trim_mask, winsorize};
