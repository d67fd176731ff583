//! The products/sales app through every drop-folder state: no units, the
//! sales unit, the buggy fix, the corrected fix, a rollback and removal.
//!
//! Builds the two sample unit crates first.
//!
//! ```text
//! cargo run -p scpa-host --example demo_walkthrough
//! ```

use std::path::Path;

use scpa_host::demo::samples::{SampleLibraries, FIX_UNIT, SALES_UNIT};
use scpa_host::demo::{self, DemoApp};
use scpa_host::host::{DiagnosticTarget, Host, HostConfig};
use scpa_host::registry::pin_previous;
use semver::Version;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let libs = SampleLibraries::build(&workspace)?;

    let tmp = tempfile::tempdir()?;
    let drop = tmp.path().join("drop");
    let data = tmp.path().join("data");
    std::fs::create_dir(&drop)?;
    demo::seed(&data)?;
    let app = DemoApp::open(&data)?;
    let host = Host::open(HostConfig::new(&drop).with_diagnostics(DiagnosticTarget::Stderr))?;

    let show = |title: &str| -> Result<(), Box<dyn std::error::Error>> {
        host.hot_swap_cycle()?;
        println!("== {title} (epoch {})\n{}", host.epoch(), app.render(&host));
        Ok(())
    };

    show("no units")?;
    libs.deploy_sales(&drop)?;
    show("sales-by-product")?;
    libs.deploy_fix(&drop, Version::new(1, 0, 0))?;
    show("price-rounding-fix 1.0.0 truncates")?;
    libs.deploy_fix(&drop, Version::new(1, 0, 1))?;
    show("price-rounding-fix 1.0.1 rounds")?;
    pin_previous(&drop, FIX_UNIT)?;
    show("rolled back to 1.0.0")?;
    std::fs::remove_dir_all(drop.join(FIX_UNIT))?;
    std::fs::remove_dir_all(drop.join(SALES_UNIT))?;
    show("units removed")?;
    Ok(())
}
