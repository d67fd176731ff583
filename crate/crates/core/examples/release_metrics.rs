//! Cross-project means of the bundled release tables and the percent
//! change per metric.
//!
//! ```text
//! cargo run -p scpa-host --example release_metrics
//! ```

use scpa_host::impact::{aggregate_metrics, load_metrics_table};

const BASELINE: &str = include_str!("../data/table1.csv");
const TREATMENT: &str = include_str!("../data/table2.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let baseline = load_metrics_table(BASELINE)?;
    let treatment = load_metrics_table(TREATMENT)?;
    let report = aggregate_metrics(&baseline, &treatment)?;
    print!("{}", report.to_text());
    Ok(())
}
