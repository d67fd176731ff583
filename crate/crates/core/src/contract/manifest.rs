//! The `manifest.scpa` format.
//!
//! A manifest is UTF-8 text with one `key: value` pair per line. Lines
//! starting with `#` are comments, blank lines are skipped, and both LF and
//! CRLF line endings are accepted. `binding:` may repeat; its value is three
//! space-separated tokens `<layer> <extension_point> <handler>`.
//!
//! ```text
//! name: sales-by-product
//! version: 1.0.0
//! priority: 100
//! reentrant: true
//! payload_ref: payload.bin
//! checksum: e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855
//! binding: business business.sales.compute compute_sales
//! ```

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Component, Path};
use std::str::FromStr;

use semver::Version;
use sha2::{Digest, Sha256};

/// File name of a unit manifest inside a bundle directory.
pub const MANIFEST_FILE: &str = "manifest.scpa";

/// Highest accepted priority value.
pub const MAX_PRIORITY: u32 = 10_000;

const MAX_NAME_LEN: usize = 64;

/// Application layer a handler plugs into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Ui,
    Business,
    Data,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Ui, Layer::Business, Layer::Data];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Ui => "ui",
            Layer::Business => "business",
            Layer::Data => "data",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ui" => Ok(Layer::Ui),
            "business" => Ok(Layer::Business),
            "data" => Ok(Layer::Data),
            other => Err(format!(
                "unknown layer `{other}` (expected ui, business or data)"
            )),
        }
    }
}

/// One handler of a unit bound to one extension point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerBinding {
    pub layer: Layer,
    pub extension_point: String,
    pub handler: String,
}

impl LayerBinding {
    pub fn new(
        layer: Layer,
        extension_point: impl Into<String>,
        handler: impl Into<String>,
    ) -> Self {
        Self {
            layer,
            extension_point: extension_point.into(),
            handler: handler.into(),
        }
    }

    fn parse(value: &str) -> Result<Self, ManifestError> {
        let tokens: Vec<&str> = value.split_whitespace().collect();
        let [layer, ep, handler] = tokens[..] else {
            return Err(bad(
                "binding",
                "expected `<layer> <extension_point> <handler>`",
            ));
        };
        let binding = LayerBinding {
            layer: layer.parse().map_err(|e: String| bad("binding", e))?,
            extension_point: ep.to_owned(),
            handler: handler.to_owned(),
        };
        binding.validate()?;
        Ok(binding)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if !is_extension_point(&self.extension_point) {
            return Err(bad(
                "binding",
                format!("invalid extension point `{}`", self.extension_point),
            ));
        }
        if !is_handler_symbol(&self.handler) {
            return Err(bad(
                "binding",
                format!("invalid handler `{}`", self.handler),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for LayerBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.layer, self.extension_point, self.handler
        )
    }
}

/// Host-side declaration of a pipeline unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    name: String,
    version: Version,
    priority: u32,
    reentrant: bool,
    bindings: Vec<LayerBinding>,
    payload_ref: String,
    checksum: String,
    description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("duplicate binding for layer {layer} at `{extension_point}`")]
    DuplicateBinding {
        layer: Layer,
        extension_point: String,
    },
}

fn bad(key: impl Into<String>, reason: impl Into<String>) -> ManifestError {
    ManifestError::BadValue {
        key: key.into(),
        reason: reason.into(),
    }
}

/// Payload digest did not match the manifest.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("checksum mismatch: expected {expected}, got {actual}")]
pub struct ChecksumMismatch {
    pub expected: String,
    pub actual: String,
}

impl Manifest {
    /// Starts a programmatic manifest; call [`ManifestBuilder::build`] to validate.
    pub fn builder(name: impl Into<String>, version: Version) -> ManifestBuilder {
        ManifestBuilder {
            manifest: Manifest {
                name: name.into(),
                version,
                priority: 100,
                reentrant: true,
                bindings: Vec::new(),
                payload_ref: String::new(),
                checksum: String::new(),
                description: None,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    pub fn priority(&self) -> u32 {
        self.priority
    }

    pub fn reentrant(&self) -> bool {
        self.reentrant
    }

    pub fn bindings(&self) -> &[LayerBinding] {
        &self.bindings
    }

    pub fn payload_ref(&self) -> &str {
        &self.payload_ref
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    /// `name@version`.
    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if !is_unit_name(&self.name) {
            return Err(bad(
                "name",
                format!(
                    "`{}` must match [a-z][a-z0-9-]* with length 1-64",
                    self.name
                ),
            ));
        }
        check_plain_version(&self.version).map_err(|r| bad("version", r))?;
        if self.priority > MAX_PRIORITY {
            return Err(bad(
                "priority",
                format!("{} exceeds {MAX_PRIORITY}", self.priority),
            ));
        }
        if self.bindings.is_empty() {
            return Err(ManifestError::MissingField("binding"));
        }
        let mut seen = BTreeSet::new();
        for b in &self.bindings {
            b.validate()?;
            if !seen.insert((b.layer, b.extension_point.as_str())) {
                return Err(ManifestError::DuplicateBinding {
                    layer: b.layer,
                    extension_point: b.extension_point.clone(),
                });
            }
        }
        if self.payload_ref.is_empty() {
            return Err(ManifestError::MissingField("payload_ref"));
        }
        if !is_relative_inside(&self.payload_ref) {
            return Err(bad(
                "payload_ref",
                "must be a relative path inside the bundle",
            ));
        }
        if !is_sha256_hex(&self.checksum) {
            return Err(bad("checksum", "expected 64 lowercase hex characters"));
        }
        if let Some(d) = &self.description {
            if d.contains(['\n', '\r']) {
                return Err(bad("description", "must be a single line"));
            }
        }
        Ok(())
    }

    /// Replaces the checksum, e.g. after rebuilding the payload.
    pub fn with_checksum(mut self, checksum: impl Into<String>) -> Result<Self, ManifestError> {
        self.checksum = checksum.into();
        self.validate()?;
        Ok(self)
    }
}

/// Programmatic construction of a [`Manifest`].
#[derive(Debug, Clone)]
pub struct ManifestBuilder {
    manifest: Manifest,
}

impl ManifestBuilder {
    pub fn priority(mut self, priority: u32) -> Self {
        self.manifest.priority = priority;
        self
    }

    pub fn reentrant(mut self, reentrant: bool) -> Self {
        self.manifest.reentrant = reentrant;
        self
    }

    pub fn binding(mut self, layer: Layer, extension_point: &str, handler: &str) -> Self {
        self.manifest
            .bindings
            .push(LayerBinding::new(layer, extension_point, handler));
        self
    }

    pub fn payload(mut self, payload_ref: impl Into<String>, payload: &[u8]) -> Self {
        self.manifest.payload_ref = payload_ref.into();
        self.manifest.checksum = sha256_hex(payload);
        self
    }

    pub fn description(mut self, description: impl Into<String>) -> Self {
        self.manifest.description = Some(description.into());
        self
    }

    pub fn build(self) -> Result<Manifest, ManifestError> {
        self.manifest.validate()?;
        Ok(self.manifest)
    }
}

/// Parses a manifest, logging a warning for each unknown key.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let (manifest, warnings) = parse_manifest_with_warnings(text)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(manifest)
}

/// Parses a manifest and returns the unknown-key warnings alongside it.
pub fn parse_manifest_with_warnings(text: &str) -> Result<(Manifest, Vec<String>), ManifestError> {
    let mut name = None;
    let mut version = None;
    let mut priority = None;
    let mut reentrant = None;
    let mut payload_ref = None;
    let mut checksum = None;
    let mut description = None;
    let mut bindings = Vec::new();
    let mut warnings = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once(':') else {
            return Err(bad(format!("line {}", idx + 1), "expected `key: value`"));
        };
        let key = key.trim();
        let value = value.trim();

        let slot = match key {
            "binding" => {
                bindings.push(LayerBinding::parse(value)?);
                continue;
            }
            "name" => &mut name,
            "version" => &mut version,
            "priority" => &mut priority,
            "reentrant" => &mut reentrant,
            "payload_ref" => &mut payload_ref,
            "checksum" => &mut checksum,
            "description" => &mut description,
            other => {
                warnings.push(format!(
                    "manifest line {}: ignoring unknown key `{other}`",
                    idx + 1
                ));
                continue;
            }
        };
        if slot.is_some() {
            return Err(bad(key, "key given more than once"));
        }
        *slot = Some(value.to_owned());
    }

    let name = name.ok_or(ManifestError::MissingField("name"))?;
    let version = version.ok_or(ManifestError::MissingField("version"))?;
    let priority = priority.ok_or(ManifestError::MissingField("priority"))?;
    let reentrant = reentrant.ok_or(ManifestError::MissingField("reentrant"))?;
    let payload_ref = payload_ref.ok_or(ManifestError::MissingField("payload_ref"))?;
    let checksum = checksum.ok_or(ManifestError::MissingField("checksum"))?;
    if bindings.is_empty() {
        return Err(ManifestError::MissingField("binding"));
    }

    let manifest = Manifest {
        name,
        version: parse_plain_version(&version).map_err(|r| bad("version", r))?,
        priority: parse_priority(&priority)?,
        reentrant: match reentrant.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(bad("reentrant", format!("`{other}` is not true or false"))),
        },
        bindings,
        payload_ref,
        checksum,
        description: description.filter(|d| !d.is_empty()),
    };
    manifest.validate()?;
    Ok((manifest, warnings))
}

fn parse_priority(value: &str) -> Result<u32, ManifestError> {
    let is_digits = !value.is_empty() && value.bytes().all(|b| b.is_ascii_digit());
    let parsed = if is_digits {
        value.parse::<u32>().ok()
    } else {
        None
    };
    match parsed {
        Some(p) if p <= MAX_PRIORITY => Ok(p),
        _ => Err(bad(
            "priority",
            format!("`{value}` is not an integer in 0..={MAX_PRIORITY}"),
        )),
    }
}

/// Canonical text form; [`parse_manifest`] reads it back to an equal value.
pub fn serialize_manifest(manifest: &Manifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name: {}", manifest.name);
    let _ = writeln!(out, "version: {}", manifest.version);
    let _ = writeln!(out, "priority: {}", manifest.priority);
    let _ = writeln!(out, "reentrant: {}", manifest.reentrant);
    let _ = writeln!(out, "payload_ref: {}", manifest.payload_ref);
    let _ = writeln!(out, "checksum: {}", manifest.checksum);
    if let Some(d) = &manifest.description {
        let _ = writeln!(out, "description: {d}");
    }
    for b in &manifest.bindings {
        let _ = writeln!(out, "binding: {b}");
    }
    out
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Succeeds iff the payload digest equals the manifest checksum.
pub fn verify_payload(manifest: &Manifest, payload: &[u8]) -> Result<(), ChecksumMismatch> {
    let actual = sha256_hex(payload);
    if actual == manifest.checksum {
        Ok(())
    } else {
        Err(ChecksumMismatch {
            expected: manifest.checksum.clone(),
            actual,
        })
    }
}

/// Parses `major.minor.patch` with no pre-release or build metadata.
pub fn parse_plain_version(text: &str) -> Result<Version, String> {
    let v = Version::parse(text).map_err(|e| format!("`{text}`: {e}"))?;
    check_plain_version(&v)?;
    Ok(v)
}

fn check_plain_version(v: &Version) -> Result<(), String> {
    if v.pre.is_empty() && v.build.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "`{v}`: pre-release and build metadata are not allowed"
        ))
    }
}

pub fn is_unit_name(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && s.len() <= MAX_NAME_LEN
        && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'-'))
}

/// `[a-z][a-z0-9_]*(\.[a-z][a-z0-9_]*)+`
pub fn is_extension_point(s: &str) -> bool {
    let segments: Vec<&str> = s.split('.').collect();
    segments.len() >= 2
        && segments.iter().all(|seg| {
            let mut bytes = seg.bytes();
            matches!(bytes.next(), Some(b'a'..=b'z'))
                && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
        })
}

fn is_handler_symbol(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z' | b'A'..=b'Z' | b'_'))
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn is_relative_inside(p: &str) -> bool {
    let path = Path::new(p);
    path.components().all(|c| matches!(c, Component::Normal(_))) && !p.contains(['\n', '\r'])
}
