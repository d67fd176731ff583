//! Creating bundles and copying them into a drop folder.

use std::fs;
use std::path::{Path, PathBuf};

use semver::Version;

use crate::contract::{
    parse_manifest, serialize_manifest, verify_payload, BehaviorTable, Layer, Manifest,
    ManifestError, MANIFEST_FILE,
};
use crate::fsutil;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Checksum(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} is already deployed with different contents")]
    Conflict(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Declarative description of a bundle to write.
#[derive(Debug, Clone)]
pub struct BundleSpec {
    name: String,
    version: Version,
    priority: u32,
    reentrant: bool,
    bindings: Vec<(Layer, String, String)>,
    description: Option<String>,
}

impl BundleSpec {
    pub fn new(name: impl Into<String>, version: Version) -> Self {
        Self {
            name: name.into(),
            version,
            priority: 100,
            reentrant: true,
            bindings: Vec::new(),
            description: None,
        }
    }

    pub fn priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn reentrant(mut self, reentrant: bool) -> Self {
        self.reentrant = reentrant;
        self
    }

    pub fn binding(mut self, layer: Layer, extension_point: &str, handler: &str) -> Self {
        self.bindings
            .push((layer, extension_point.to_owned(), handler.to_owned()));
        self
    }

    pub fn description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn manifest(&self, payload_ref: &str, payload: &[u8]) -> Result<Manifest, ManifestError> {
        let mut b = Manifest::builder(self.name.clone(), self.version.clone())
            .priority(self.priority)
            .reentrant(self.reentrant)
            .payload(payload_ref, payload);
        for (layer, ep, handler) in &self.bindings {
            b = b.binding(*layer, ep, handler);
        }
        if let Some(d) = &self.description {
            b = b.description(d.clone());
        }
        b.build()
    }

    /// Writes `payload` and a matching manifest into `bundle_dir`.
    pub fn write(
        &self,
        bundle_dir: &Path,
        payload_ref: &str,
        payload: &[u8],
    ) -> Result<Manifest, BundleError> {
        let manifest = self.manifest(payload_ref, payload)?;
        let payload_path = bundle_dir.join(payload_ref);
        if let Some(parent) = payload_path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&payload_path, payload).map_err(io(&payload_path))?;
        let manifest_path = bundle_dir.join(MANIFEST_FILE);
        fs::write(&manifest_path, serialize_manifest(&manifest)).map_err(io(&manifest_path))?;
        Ok(manifest)
    }

    /// Writes the bundle straight into `<drop>/<name>/<version>/`,
    /// atomically.
    pub fn deploy(
        &self,
        drop_dir: &Path,
        payload_ref: &str,
        payload: &[u8],
    ) -> Result<PathBuf, BundleError> {
        let staging = tempdir_in(drop_dir)?;
        self.write(&staging, payload_ref, payload)?;
        let result = install(&staging, drop_dir);
        let _ = fs::remove_dir_all(&staging);
        match result? {
            DeployOutcome::Deployed(p) | DeployOutcome::AlreadyPresent(p) => Ok(p),
        }
    }

    /// Deploys a table-driven unit as a `unit.behavior` payload.
    pub fn deploy_behavior(
        &self,
        drop_dir: &Path,
        table: &BehaviorTable,
    ) -> Result<PathBuf, BundleError> {
        self.deploy(drop_dir, "unit.behavior", table.to_string().as_bytes())
    }
}

fn tempdir_in(drop_dir: &Path) -> Result<PathBuf, BundleError> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static N: AtomicU64 = AtomicU64::new(0);
    let dir = drop_dir.join(format!(
        ".pack-{}-{}",
        std::process::id(),
        N.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeployOutcome {
    Deployed(PathBuf),
    /// An identical bundle was already in place; nothing changed.
    AlreadyPresent(PathBuf),
}

/// Reads and verifies a bundle directory.
pub fn read_bundle(bundle_dir: &Path) -> Result<Manifest, BundleError> {
    let manifest_path = bundle_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
    let manifest = parse_manifest(&text)?;
    let payload_path = bundle_dir.join(manifest.payload_ref());
    let payload = fs::read(&payload_path).map_err(io(&payload_path))?;
    verify_payload(&manifest, &payload).map_err(|e| BundleError::Checksum(e.to_string()))?;
    Ok(manifest)
}

/// Verifies `bundle_dir` and copies it to `<drop>/<name>/<version>/`.
///
/// Redeploying an identical bundle is a no-op; a different bundle under
/// the same version is refused.
pub fn install(bundle_dir: &Path, drop_dir: &Path) -> Result<DeployOutcome, BundleError> {
    let manifest = read_bundle(bundle_dir)?;
    let target = drop_dir
        .join(manifest.name())
        .join(manifest.version().to_string());
    if target.exists() {
        return match read_bundle(&target) {
            Ok(existing) if existing == manifest => Ok(DeployOutcome::AlreadyPresent(target)),
            _ => Err(BundleError::Conflict(manifest.id())),
        };
    }
    fsutil::copy_dir_atomic(bundle_dir, &target).map_err(io(&target))?;
    Ok(DeployOutcome::Deployed(target))
}
