//! A failing, a panicking and a slow unit under both error policies.
//! Fail-open skips the bad unit and carries on; fail-closed stops.
//!
//! ```text
//! cargo run -p scpa-host --example containment
//! ```

use std::time::Duration;

use scpa_host::bundle::BundleSpec;
use scpa_host::chain::ErrorPolicy;
use scpa_host::contract::{BehaviorTable, Envelope, Layer, ValueMap};
use scpa_host::host::{DiagnosticTarget, Host, HostConfig};
use semver::Version;

const EP: &str = "data.report.read";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The chain reports panics itself; keep the default hook quiet.
    std::panic::set_hook(Box::new(|_| {}));
    let tmp = tempfile::tempdir()?;
    let drop = tmp.path();
    let units = [
        ("first", 100, "read: push got first"),
        ("broken", 200, "read: fail storage offline"),
        ("crashy", 300, "read: panic index out of range"),
        ("slow", 400, "read: sleep 500; push got slow"),
        ("last", 500, "read: push got last"),
    ];
    for (name, priority, table) in units {
        BundleSpec::new(name, Version::new(1, 0, 0))
            .priority(priority)
            .binding(Layer::Data, EP, "read")
            .deploy_behavior(drop, &BehaviorTable::parse(table)?)?;
    }

    for policy in [ErrorPolicy::FailOpen, ErrorPolicy::FailClosed] {
        let config = HostConfig::new(drop)
            .with_error_policy(policy)
            .with_unit_timeout(Duration::from_millis(50))
            .with_diagnostics(DiagnosticTarget::Null);
        let host = Host::open(config)?;
        println!("{policy}:");
        match host.dispatch_envelope(Envelope::new(EP, ValueMap::new())) {
            Ok(out) => {
                for r in out.trace() {
                    println!(
                        "  {} {} {}",
                        r.unit,
                        r.outcome,
                        r.error.as_deref().unwrap_or("")
                    );
                }
                println!("  payload: {}", out.payload);
            }
            Err(e) => println!("  stopped: {e}"),
        }
    }
    Ok(())
}
