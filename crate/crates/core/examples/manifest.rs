//! Builds a unit manifest, writes it out, reads it back and checks the
//! payload checksum.
//!
//! ```text
//! cargo run -p scpa-host --example manifest
//! ```

use scpa_host::contract::{parse_manifest, serialize_manifest, verify_payload, Layer, Manifest};
use semver::Version;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let payload = b"compute: append log seen => continue\n";
    let manifest = Manifest::builder("audit-log", Version::new(1, 2, 0))
        .priority(300)
        .binding(Layer::Business, "business.order.compute", "compute")
        .binding(Layer::Ui, "ui.order.render", "compute")
        .payload("unit.behavior", payload)
        .description("appends an audit entry")
        .build()?;

    let text = serialize_manifest(&manifest);
    println!("{text}");

    let parsed = parse_manifest(&text)?;
    assert_eq!(parsed, manifest);
    println!("round trip ok: {}", parsed.id());

    verify_payload(&parsed, payload)?;
    println!("checksum ok");
    match verify_payload(&parsed, b"tampered") {
        Err(e) => println!("tampered payload refused: {e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
