//! Rebuild closures on the bundled three-tier graph: what a layered build
//! has to redo after one change, next to a self-contained unit.
//!
//! ```text
//! cargo run -p scpa-host --example impact
//! ```

use scpa_host::impact::{ClosureComparison, DependencyGraph};

const GRAPH: &str = include_str!("../data/n_tier.graph");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = DependencyGraph::parse(GRAPH)?;
    println!("{graph}");
    for changed in ["sales-data", "product-data", "product-ui"] {
        let cmp = ClosureComparison::new(&graph, changed, "sales-by-product")?;
        println!("{cmp}");
    }
    Ok(())
}
