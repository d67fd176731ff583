//! Operator switches applied to the drop folder directly.
//!
//! These only touch files; a running host notices them on its next scan.

use std::fs;
use std::path::Path;

use semver::Version;

use super::{resolve_active, scan, write_pin, RegistryError, DISABLED_FILE};

fn unit_dir(drop_dir: &Path, name: &str) -> Result<std::path::PathBuf, RegistryError> {
    let dir = drop_dir.join(name);
    if !crate::contract::is_unit_name(name) || !dir.is_dir() {
        return Err(RegistryError::NoVersions(name.to_owned()));
    }
    Ok(dir)
}

/// Creates or removes the `disabled` marker. Returns whether anything
/// changed.
pub fn set_disabled(drop_dir: &Path, name: &str, disabled: bool) -> Result<bool, RegistryError> {
    let marker = unit_dir(drop_dir, name)?.join(DISABLED_FILE);
    let io = |e: std::io::Error| RegistryError::Io(format!("{}: {e}", marker.display()));
    match (disabled, marker.exists()) {
        (true, false) => crate::fsutil::write_atomic(&marker, b"").map_err(io)?,
        (false, true) => fs::remove_file(&marker).map_err(io)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Pins the highest valid version below the one a host would activate now.
/// Returns `(from, to)`.
pub fn pin_previous(drop_dir: &Path, name: &str) -> Result<(Version, Version), RegistryError> {
    let dir = unit_dir(drop_dir, name)?;
    let report = scan(drop_dir)?;
    let available = report.versions(name);
    let control = report.controls.get(name).cloned().unwrap_or_default();
    let current = resolve_active(name, &available, control.pin.as_ref())?;
    let prior = available
        .into_iter()
        .filter(|v| *v < current)
        .max()
        .ok_or_else(|| RegistryError::NoPriorVersion(name.to_owned()))?;
    write_pin(&dir, &prior).map_err(|e| RegistryError::Io(e.to_string()))?;
    Ok((current, prior))
}
