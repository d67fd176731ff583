//! Rebuild-impact analysis and release-metric aggregation.
//!
//! [`DependencyGraph`] models a layered code base as depends-on edges and
//! answers "what must be rebuilt and retested when this component
//! changes". [`aggregate_metrics`] compares per-project release metrics
//! before and after moving changes into self-contained units.

mod graph;
mod metrics;

pub use graph::{
    scpa_closure, ClosureComparison, DependencyGraph, GraphError, LayerTag, UnknownUnit,
};
pub use metrics::{
    aggregate_metrics, format_percent, load_metrics_table, ImprovementReport, Metric, MetricChange,
    MetricsError, ProjectMetrics, METRICS_HEADER,
};

/// Rounds to two decimals, halves away from zero.
///
/// A relative nudge absorbs binary representation error so that values
/// such as `1.005` round up as written.
pub fn round_half_up_2dp(value: f64) -> f64 {
    let scaled = value * 100.0;
    let nudged = scaled + scaled.signum() * scaled.abs().max(1.0) * 1e-12;
    let rounded = nudged.round() / 100.0;
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}
