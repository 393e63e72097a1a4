//! Shared fixtures for the pipeline benchmarks.

use oustab::moments::{build_gamma, SystemSpec};
use oustab::truncation::{Filter2Spec, TruncationConfig};
use oustab::{FilterSpec, MomentOperator};

/// The worked two-dimensional configuration at second moments.
pub fn reference() -> (
    MomentOperator,
    Filter2Spec,
    TruncationConfig,
    FilterSpec,
    SystemSpec,
) {
    let sys = SystemSpec::mathieu(0.5, 0.01, 2, 0.05).unwrap();
    let op = build_gamma(&sys);
    let f2 = Filter2Spec::new(1.8, 0.9, 1.0, 1.0, 0.9).unwrap();
    let cfg = TruncationConfig::new(7, 5).unwrap();
    let filter = FilterSpec::filter2(1.8, 0.9, 1.0, 1.0, 0.9).unwrap();
    (op, f2, cfg, filter, sys)
}
