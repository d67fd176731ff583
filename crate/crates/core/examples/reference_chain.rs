//! Three table-driven units on one extension point: priority order, a
//! divert that skips a unit, and the trace each envelope carries.
//!
//! ```text
//! cargo run -p scpa-host --example reference_chain
//! ```

use scpa_host::bundle::BundleSpec;
use scpa_host::contract::{BehaviorTable, Layer, ValueMap};
use scpa_host::host::{DiagnosticTarget, Host, HostConfig};
use semver::Version;

const EP: &str = "business.order.compute";

fn deploy(
    drop: &std::path::Path,
    name: &str,
    priority: u32,
    table: &str,
) -> Result<(), Box<dyn std::error::Error>> {
    BundleSpec::new(name, Version::new(1, 0, 0))
        .priority(priority)
        .binding(Layer::Business, EP, "compute")
        .deploy_behavior(drop, &BehaviorTable::parse(table)?)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let drop = tmp.path();
    deploy(
        drop,
        "pricing",
        100,
        "compute: set price 40; push seen pricing",
    )?;
    deploy(
        drop,
        "discount",
        200,
        "compute: push seen discount => divert shipping",
    )?;
    deploy(drop, "loyalty", 250, "compute: push seen loyalty")?;
    deploy(drop, "shipping", 300, "compute: push seen shipping => stop")?;

    let host = Host::open(HostConfig::new(drop).with_diagnostics(DiagnosticTarget::Stderr))?;
    let out = host.dispatch_envelope(scpa_host::contract::Envelope::new(
        EP,
        ValueMap::new().with("order", "o-1"),
    ))?;
    println!("payload: {}", out.payload);
    for r in out.trace() {
        println!(
            "  {}@{} {} {} {}us",
            r.unit, r.version, r.handler, r.outcome, r.duration_micros
        );
    }
    println!("loyalty was skipped by the divert; shipping stopped the chain");
    Ok(())
}
