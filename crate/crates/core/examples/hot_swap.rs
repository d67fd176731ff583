//! A host with a watcher thread picks up a new version while another
//! thread keeps dispatching. Every envelope sees exactly one version.
//!
//! ```text
//! cargo run -p scpa-host --example hot_swap
//! ```

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use scpa_host::bundle::BundleSpec;
use scpa_host::contract::{BehaviorTable, Layer, Value, ValueMap};
use scpa_host::host::{DiagnosticTarget, Host, HostConfig};
use semver::Version;

const EP: &str = "business.greeting.compute";

fn deploy(drop: &std::path::Path, version: Version) -> Result<(), Box<dyn std::error::Error>> {
    let table = BehaviorTable::parse(&format!("compute: set stamp greeter@{version}"))?;
    BundleSpec::new("greeter", version)
        .binding(Layer::Business, EP, "compute")
        .deploy_behavior(drop, &table)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let drop = tmp.path().to_path_buf();
    deploy(&drop, Version::new(1, 0, 0))?;

    let config = HostConfig::new(&drop)
        .with_scan_interval(Duration::from_millis(50))
        .with_diagnostics(DiagnosticTarget::Null);
    let host = Arc::new(Host::start(config)?);

    let done = Arc::new(AtomicBool::new(false));
    let worker = {
        let (host, done) = (host.clone(), done.clone());
        std::thread::spawn(move || {
            let mut seen: BTreeMap<(u64, String), u64> = BTreeMap::new();
            while !done.load(Ordering::Relaxed) {
                let out = host
                    .dispatch_envelope(scpa_host::contract::Envelope::new(EP, ValueMap::new()))
                    .expect("fail-open chain");
                let stamp = out
                    .payload
                    .get("stamp")
                    .and_then(Value::as_text)
                    .unwrap_or("-")
                    .to_owned();
                *seen.entry((out.epoch, stamp)).or_default() += 1;
            }
            seen
        })
    };

    std::thread::sleep(Duration::from_millis(200));
    deploy(&drop, Version::new(1, 1, 0))?;
    std::thread::sleep(Duration::from_millis(300));
    done.store(true, Ordering::Relaxed);

    for ((epoch, stamp), n) in worker.join().expect("worker") {
        println!("epoch {epoch}: {stamp} x{n}");
    }
    for (name, version) in host.snapshot().units() {
        println!("active now: {name}@{version}");
    }
    Ok(())
}
