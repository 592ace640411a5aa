//! Synthetic ecosystems and panels with known ground truth.

mod ecosystem;
mod panel;
mod verify;

pub use ecosystem::{generate_ecosystem, write_truth_csv, GroundTruth, SynthConfig};
pub use panel::{generate_panel, PanelSimConfig, RegimeShift};
pub use verify::{verify_recovery, RecoveryReport, TokenMismatch};
