//! Disabling a unit, enabling it again and rolling back to the previous
//! version, all through files in the drop folder.
//!
//! ```text
//! cargo run -p scpa-host --example rollback
//! ```

use scpa_host::bundle::BundleSpec;
use scpa_host::contract::{BehaviorTable, Layer, Value, ValueMap};
use scpa_host::host::{DiagnosticTarget, Host, HostConfig};
use scpa_host::registry::{pin_previous, set_disabled};
use semver::Version;

const EP: &str = "business.tax.compute";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let drop = tmp.path();
    for (version, rate) in [
        (Version::new(1, 0, 0), "0.20"),
        (Version::new(1, 1, 0), "0.25"),
    ] {
        BundleSpec::new("tax", version)
            .binding(Layer::Business, EP, "compute")
            .deploy_behavior(
                drop,
                &BehaviorTable::parse(&format!("compute: append rate {rate}"))?,
            )?;
    }

    let host = Host::open(HostConfig::new(drop).with_diagnostics(DiagnosticTarget::Stderr))?;
    let rate = |host: &Host| -> Result<String, Box<dyn std::error::Error>> {
        let out = host.dispatch(EP, ValueMap::new())?;
        Ok(out
            .get("rate")
            .and_then(Value::as_text)
            .unwrap_or("(none)")
            .to_owned())
    };

    println!("newest wins:      {}", rate(&host)?);

    set_disabled(drop, "tax", true)?;
    host.hot_swap_cycle()?;
    println!("disabled:         {}", rate(&host)?);

    set_disabled(drop, "tax", false)?;
    host.hot_swap_cycle()?;
    println!("enabled:          {}", rate(&host)?);

    let (from, to) = pin_previous(drop, "tax")?;
    host.hot_swap_cycle()?;
    println!("rolled back {from} -> {to}: {}", rate(&host)?);
    Ok(())
}
