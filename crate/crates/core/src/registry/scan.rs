use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use semver::Version;

use super::RegistryError;
use crate::contract::{
    is_unit_name, parse_manifest, parse_plain_version, verify_payload, Manifest, MANIFEST_FILE,
};
use crate::diag::Diagnostics;

/// Name of the per-unit pin file.
pub const PIN_FILE: &str = "pin";
/// Name of the per-unit switch-off marker.
pub const DISABLED_FILE: &str = "disabled";

/// A valid, checksum-verified bundle found on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discovery {
    pub name: String,
    pub version: Version,
    pub manifest: Manifest,
    pub bundle_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectCode {
    BadUnitDir,
    BadVersionDir,
    ManifestMissing,
    BadManifest,
    NameVersionMismatch,
    PayloadMissing,
    ChecksumMismatch,
    BadPin,
    PinMissing,
    Unreadable,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::BadUnitDir => "BadUnitDir",
            RejectCode::BadVersionDir => "BadVersionDir",
            RejectCode::ManifestMissing => "ManifestMissing",
            RejectCode::BadManifest => "BadManifest",
            RejectCode::NameVersionMismatch => "NameVersionMismatch",
            RejectCode::PayloadMissing => "PayloadMissing",
            RejectCode::ChecksumMismatch => "ChecksumMismatch",
            RejectCode::BadPin => "BadPin",
            RejectCode::PinMissing => "PinMissing",
            RejectCode::Unreadable => "Unreadable",
        }
    }
}

impl std::fmt::Display for RejectCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bundle (or control file) that could not be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub path: PathBuf,
    pub code: RejectCode,
    pub detail: String,
}

/// Operator switches found in a unit directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnitControl {
    pub pin: Option<Version>,
    pub disabled: bool,
}

/// Everything one pass over the drop folder found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub discoveries: Vec<Discovery>,
    pub rejects: Vec<Reject>,
    /// One entry per unit directory, including ones with no valid bundle.
    pub controls: BTreeMap<String, UnitControl>,
}

impl ScanReport {
    /// Valid versions of `name`, ascending.
    pub fn versions(&self, name: &str) -> Vec<Version> {
        let mut v: Vec<Version> = self
            .discoveries
            .iter()
            .filter(|d| d.name == name)
            .map(|d| d.version.clone())
            .collect();
        v.sort();
        v
    }

    pub fn discovery(&self, name: &str, version: &Version) -> Option<&Discovery> {
        self.discoveries
            .iter()
            .find(|d| d.name == name && &d.version == version)
    }

    /// Writes every reject to the diagnostic stream.
    pub fn report_rejects(&self, diag: &Diagnostics) {
        for r in &self.rejects {
            diag.reject(&r.path, r.code.as_str(), &r.detail);
        }
    }
}

/// Payload checksums already verified, keyed by payload path.
///
/// An entry is reused only while the file's size and modification time are
/// unchanged and the manifest still names the same checksum.
#[derive(Debug, Default)]
pub struct ChecksumCache {
    verified: HashMap<PathBuf, (u64, SystemTime, String)>,
    seen: HashMap<PathBuf, (u64, SystemTime, String)>,
}

impl ChecksumCache {
    fn stamp(path: &Path) -> Option<(u64, SystemTime)> {
        let meta = fs::metadata(path).ok()?;
        Some((meta.len(), meta.modified().ok()?))
    }

    fn is_verified(&self, path: &Path, checksum: &str) -> bool {
        match (self.verified.get(path), Self::stamp(path)) {
            (Some((len, mtime, sum)), Some((l, m))) => *len == l && *mtime == m && sum == checksum,
            _ => false,
        }
    }

    fn keep(&mut self, path: &Path, checksum: &str) {
        if let Some((len, mtime)) = Self::stamp(path) {
            self.seen
                .insert(path.to_path_buf(), (len, mtime, checksum.to_owned()));
        }
    }

    /// Drops entries not confirmed during the pass that just ended.
    fn finish_pass(&mut self) {
        self.verified = std::mem::take(&mut self.seen);
    }
}

fn sorted_entries(dir: &Path) -> std::io::Result<Vec<fs::DirEntry>> {
    let mut entries = fs::read_dir(dir)?.collect::<Result<Vec<_>, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Walks `<drop_dir>/<name>/<version>/manifest.scpa`.
///
/// Malformed bundles never abort the scan; they are listed in `rejects`.
/// Entries whose names start with `.` are ignored.
pub fn scan(drop_dir: &Path) -> Result<ScanReport, RegistryError> {
    scan_with(drop_dir, &mut ChecksumCache::default())
}

/// [`scan`], skipping payloads whose checksum `cache` already verified.
pub fn scan_with(drop_dir: &Path, cache: &mut ChecksumCache) -> Result<ScanReport, RegistryError> {
    let unreadable = |e: std::io::Error| RegistryError::DropDirUnreadable {
        path: drop_dir.to_path_buf(),
        reason: e.to_string(),
    };
    let entries = sorted_entries(drop_dir).map_err(unreadable)?;
    let mut report = ScanReport::default();

    for entry in entries {
        let file_name = entry.file_name();
        let name = file_name.to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        if !is_unit_name(&name) {
            report.rejects.push(Reject {
                path,
                code: RejectCode::BadUnitDir,
                detail: format!("`{name}` is not a valid unit name"),
            });
            continue;
        }
        scan_unit(&name, &path, &mut report, cache);
    }
    cache.finish_pass();
    Ok(report)
}

fn scan_unit(name: &str, unit_dir: &Path, report: &mut ScanReport, cache: &mut ChecksumCache) {
    let mut control = UnitControl {
        disabled: unit_dir.join(DISABLED_FILE).exists(),
        pin: None,
    };
    let pin_path = unit_dir.join(PIN_FILE);
    let mut pin_read = None;
    if pin_path.exists() {
        match read_pin(&pin_path) {
            Ok(v) => pin_read = Some(v),
            Err(detail) => report.rejects.push(Reject {
                path: pin_path.clone(),
                code: RejectCode::BadPin,
                detail,
            }),
        }
    }

    let entries = match sorted_entries(unit_dir) {
        Ok(e) => e,
        Err(e) => {
            report.rejects.push(Reject {
                path: unit_dir.to_path_buf(),
                code: RejectCode::Unreadable,
                detail: e.to_string(),
            });
            report.controls.insert(name.to_owned(), control);
            return;
        }
    };

    let mut found = Vec::new();
    for entry in entries {
        let path = entry.path();
        let dir_name = entry.file_name().to_string_lossy().into_owned();
        if dir_name.starts_with('.') || !path.is_dir() {
            continue;
        }
        let version = match parse_plain_version(&dir_name) {
            Ok(v) => v,
            Err(e) => {
                report.rejects.push(Reject {
                    path,
                    code: RejectCode::BadVersionDir,
                    detail: e,
                });
                continue;
            }
        };
        match check_bundle_cached(name, &version, &path, Some(&mut *cache)) {
            Ok(manifest) => {
                found.push(version.clone());
                report.discoveries.push(Discovery {
                    name: name.to_owned(),
                    version,
                    manifest,
                    bundle_dir: path,
                });
            }
            Err((code, detail)) => report.rejects.push(Reject { path, code, detail }),
        }
    }

    if let Some(pin) = pin_read {
        // Kept even when missing so resolution fails instead of silently
        // falling back to the newest version.
        if !found.contains(&pin) {
            report.rejects.push(Reject {
                path: pin_path,
                code: RejectCode::PinMissing,
                detail: format!("pinned version {pin} is not on disk"),
            });
        }
        control.pin = Some(pin);
    }
    report.controls.insert(name.to_owned(), control);
}

/// Validates one bundle directory.
pub fn check_bundle(
    name: &str,
    version: &Version,
    bundle_dir: &Path,
) -> Result<Manifest, (RejectCode, String)> {
    check_bundle_cached(name, version, bundle_dir, None)
}

fn check_bundle_cached(
    name: &str,
    version: &Version,
    bundle_dir: &Path,
    mut cache: Option<&mut ChecksumCache>,
) -> Result<Manifest, (RejectCode, String)> {
    let manifest_path = bundle_dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err((RejectCode::ManifestMissing, format!("no {MANIFEST_FILE}")));
    }
    let text =
        fs::read_to_string(&manifest_path).map_err(|e| (RejectCode::Unreadable, e.to_string()))?;
    let manifest = parse_manifest(&text).map_err(|e| (RejectCode::BadManifest, e.to_string()))?;
    if manifest.name() != name || manifest.version() != version {
        return Err((
            RejectCode::NameVersionMismatch,
            format!(
                "directory says {name}@{version}, manifest says {}",
                manifest.id()
            ),
        ));
    }
    let payload_path = bundle_dir.join(manifest.payload_ref());
    if let Some(cache) = cache.as_deref_mut() {
        if cache.is_verified(&payload_path, manifest.checksum()) {
            cache.keep(&payload_path, manifest.checksum());
            return Ok(manifest);
        }
    }
    let payload = fs::read(&payload_path).map_err(|e| {
        (
            RejectCode::PayloadMissing,
            format!("{}: {e}", manifest.payload_ref()),
        )
    })?;
    verify_payload(&manifest, &payload)
        .map_err(|e| (RejectCode::ChecksumMismatch, e.to_string()))?;
    if let Some(cache) = cache {
        cache.keep(&payload_path, manifest.checksum());
    }
    Ok(manifest)
}

/// Reads a `pin: <version>` file.
pub fn read_pin(path: &Path) -> Result<Version, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| "empty pin file".to_string())?;
    let value = line
        .strip_prefix("pin:")
        .ok_or_else(|| format!("expected `pin: <version>`, got `{line}`"))?;
    parse_plain_version(value.trim())
}

/// Persists a pin atomically.
pub fn write_pin(unit_dir: &Path, version: &Version) -> std::io::Result<()> {
    crate::fsutil::write_atomic(
        &unit_dir.join(PIN_FILE),
        format!("pin: {version}\n").as_bytes(),
    )
}

/// Pinned version if set, otherwise the highest available version.
pub fn resolve_active(
    name: &str,
    available: &[Version],
    pin: Option<&Version>,
) -> Result<Version, RegistryError> {
    if let Some(pin) = pin {
        return if available.contains(pin) {
            Ok(pin.clone())
        } else {
            Err(RegistryError::PinMissing {
                unit: name.to_owned(),
                version: pin.clone(),
            })
        };
    }
    available
        .iter()
        .max()
        .cloned()
        .ok_or_else(|| RegistryError::NoVersions(name.to_owned()))
}
