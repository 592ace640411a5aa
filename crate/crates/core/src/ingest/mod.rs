//! Pool snapshot ingestion, receipt-token inference and identity resolution.

mod category;
mod identity;
mod parse;
mod record;
mod registry;

pub use category::CategoryMap;
pub use identity::{resolve_identity, CanonicalToken, Resolution};
pub use parse::{
    parse_snapshot, parse_snapshot_file, write_diagnostics, write_snapshot, Diagnostic, ParseOptions,
    ParseOutcome, SnapshotFormat,
};
pub use record::{latest_per_pool, PoolRecord, APY_TOLERANCE};
pub use registry::{infer_receipt_token, PrefixRegistry};
