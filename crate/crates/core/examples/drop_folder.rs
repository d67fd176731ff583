//! Scans a drop folder holding one good bundle and a few broken ones and
//! prints what was discovered and why the rest were refused.
//!
//! ```text
//! cargo run -p scpa-host --example drop_folder
//! ```

use std::fs;

use scpa_host::bundle::BundleSpec;
use scpa_host::contract::{BehaviorTable, Layer};
use scpa_host::registry::scan;
use semver::Version;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let drop = tmp.path();
    let table = BehaviorTable::parse("compute: noop")?;
    let spec = |name: &str| {
        BundleSpec::new(name, Version::new(1, 0, 0)).binding(
            Layer::Business,
            "business.x.compute",
            "compute",
        )
    };

    spec("good").deploy_behavior(drop, &table)?;

    let tampered = spec("tampered").deploy_behavior(drop, &table)?;
    fs::write(tampered.join("unit.behavior"), "compute: fail gotcha")?;

    fs::create_dir_all(drop.join("odd/not-a-version"))?;

    let mismatch = spec("mismatch").deploy_behavior(drop, &table)?;
    fs::rename(&mismatch, drop.join("mismatch/2.0.0"))?;

    fs::create_dir_all(drop.join("empty/1.0.0"))?;

    let report = scan(drop)?;
    for d in &report.discoveries {
        println!(
            "found  {}@{} at {}",
            d.name,
            d.version,
            d.bundle_dir.display()
        );
    }
    for r in &report.rejects {
        println!(
            "reject {} {} {}",
            r.path.strip_prefix(drop)?.display(),
            r.code,
            r.detail
        );
    }
    Ok(())
}
