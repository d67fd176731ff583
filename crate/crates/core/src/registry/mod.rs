//! Drop-folder discovery, unit lifecycle and epoch snapshots.
//!
//! The layout on disk is `<drop>/<name>/<version>/{manifest.scpa, payload}`
//! with two optional control files per unit directory: `pin` (holding
//! `pin: <version>`) selects a version explicitly, and an empty `disabled`
//! marker switches the unit off.
//!
//! [`Registry`] is single-writer. Every mutation publishes a new immutable
//! [`RegistrySnapshot`] with a strictly larger epoch; readers grab the
//! current snapshot through a [`SnapshotCell`] without waiting on the writer.

mod control;
mod scan;
mod snapshot;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use semver::Version;

use crate::contract::{HostContext, Value, ValueMap};
use crate::diag::Diagnostics;
use crate::loader::UnitLoader;

pub use control::{pin_previous, set_disabled};
pub use scan::{
    check_bundle, read_pin, resolve_active, scan, scan_with, write_pin, ChecksumCache, Discovery,
    Reject, RejectCode, ScanReport, UnitControl, DISABLED_FILE, PIN_FILE,
};
pub use snapshot::{
    DuplicateUnit, HandlerRef, LoadedUnit, RegistrySnapshot, SnapshotCell, UnitStats,
};
pub use state::{Transition, UnitState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("drop directory {} is unreadable: {reason}", path.display())]
    DropDirUnreadable { path: PathBuf, reason: String },
    #[error("loading {unit} failed: {reason}")]
    LoadFailed { unit: String, reason: String },
    #[error("unit `{0}` is not active")]
    NotActive(String),
    #[error("unit `{0}` has no version older than the active one")]
    NoPriorVersion(String),
    #[error("pinned version {version} of `{unit}` is not available")]
    PinMissing { unit: String, version: Version },
    #[error("unit `{0}` has no available versions")]
    NoVersions(String),
    #[error("{unit}@{version} is not known to the registry")]
    UnknownVersion { unit: String, version: Version },
    #[error("{unit}@{version} already failed ({reason}); redeploy it to retry")]
    VersionFailed {
        unit: String,
        version: Version,
        reason: String,
    },
    #[error("{unit}@{version} is already active")]
    AlreadyActive { unit: String, version: Version },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Registry settings that do not come from the drop folder.
#[derive(Debug, Clone)]
pub struct RegistryOptions {
    pub host_version: String,
    /// Parent of the per-unit data directories. Defaults to
    /// `<drop>/.scpa-data`.
    pub data_root: Option<PathBuf>,
    pub diagnostics: Diagnostics,
    /// Extra per-unit settings passed in [`HostContext::config`].
    pub unit_config: BTreeMap<String, ValueMap>,
}

impl Default for RegistryOptions {
    fn default() -> Self {
        Self {
            host_version: env!("CARGO_PKG_VERSION").to_owned(),
            data_root: None,
            diagnostics: Diagnostics::stderr(),
            unit_config: BTreeMap::new(),
        }
    }
}

struct VersionEntry {
    discovery: Discovery,
    state: UnitState,
    generation: u64,
    stats: Arc<UnitStats>,
}

struct ActiveInstance {
    unit: Arc<LoadedUnit>,
    generation: u64,
}

#[derive(Default)]
struct UnitEntry {
    versions: BTreeMap<Version, VersionEntry>,
    active: Option<ActiveInstance>,
    control: UnitControl,
}

/// Row of [`Registry::unit_states`].
#[derive(Debug, Clone)]
pub struct UnitStateRow {
    pub name: String,
    pub version: Version,
    pub state: UnitState,
    pub stats: Arc<UnitStats>,
}

/// What one reconcile pass changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwapReport {
    /// Epochs published during the pass, in order.
    pub epochs: Vec<u64>,
    pub deactivated: Vec<String>,
    pub activated: Vec<String>,
    pub failed: Vec<(String, String)>,
    pub rejects: Vec<Reject>,
    pub retired: Vec<String>,
}

impl SwapReport {
    pub fn changed(&self) -> bool {
        !self.epochs.is_empty()
    }
}

pub struct Registry {
    drop_dir: PathBuf,
    loader: Arc<dyn UnitLoader>,
    options: RegistryOptions,
    data_root: PathBuf,
    units: BTreeMap<String, UnitEntry>,
    cell: SnapshotCell,
    epoch: u64,
    draining: Vec<(ActiveInstance, Arc<UnitStats>)>,
    transitions: Vec<Transition>,
    next_generation: u64,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("drop_dir", &self.drop_dir)
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

impl Registry {
    /// An empty registry at epoch 0. Nothing is scanned yet.
    pub fn new(
        drop_dir: impl Into<PathBuf>,
        loader: Arc<dyn UnitLoader>,
        options: RegistryOptions,
    ) -> Self {
        let drop_dir = drop_dir.into();
        let data_root = options
            .data_root
            .clone()
            .unwrap_or_else(|| drop_dir.join(".scpa-data"));
        Self {
            drop_dir,
            loader,
            options,
            data_root,
            units: BTreeMap::new(),
            cell: SnapshotCell::new(RegistrySnapshot::empty(0)),
            epoch: 0,
            draining: Vec::new(),
            transitions: Vec::new(),
            next_generation: 1,
        }
    }

    pub fn drop_dir(&self) -> &Path {
        &self.drop_dir
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn snapshot(&self) -> Arc<RegistrySnapshot> {
        self.cell.load()
    }

    /// Reader handle that always sees the latest published snapshot.
    pub fn cell(&self) -> SnapshotCell {
        self.cell.clone()
    }

    /// Every lifecycle transition recorded so far.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn active_version(&self, name: &str) -> Option<&Version> {
        self.units
            .get(name)
            .and_then(|u| u.active.as_ref())
            .map(|a| a.unit.version())
    }

    pub fn pin(&self, name: &str) -> Option<&Version> {
        self.units.get(name).and_then(|u| u.control.pin.as_ref())
    }

    pub fn state(&self, name: &str, version: &Version) -> Option<&UnitState> {
        self.units
            .get(name)
            .and_then(|u| u.versions.get(version))
            .map(|v| &v.state)
    }

    /// Number of replaced versions still waiting for in-flight work.
    pub fn draining_count(&self) -> usize {
        self.draining.len()
    }

    /// Every known version and each still-draining instance.
    pub fn unit_states(&self) -> Vec<UnitStateRow> {
        let mut rows = Vec::new();
        for (name, entry) in &self.units {
            for (version, v) in &entry.versions {
                rows.push(UnitStateRow {
                    name: name.clone(),
                    version: version.clone(),
                    state: v.state.clone(),
                    stats: v.stats.clone(),
                });
            }
        }
        for (inst, stats) in &self.draining {
            let (name, version) = (inst.unit.name(), inst.unit.version());
            let listed_as_draining = rows
                .iter()
                .any(|r| r.name == name && &r.version == version && r.state == UnitState::Draining);
            if !listed_as_draining {
                rows.push(UnitStateRow {
                    name: name.to_owned(),
                    version: version.clone(),
                    state: UnitState::Draining,
                    stats: stats.clone(),
                });
            }
        }
        rows
    }

    fn record(
        &mut self,
        unit: &str,
        version: &Version,
        generation: u64,
        from: Option<UnitState>,
        to: UnitState,
    ) {
        if let Some(f) = &from {
            debug_assert!(f.can_transition_to(&to), "illegal transition {f} -> {to}");
        }
        self.transitions.push(Transition {
            unit: unit.to_owned(),
            version: version.clone(),
            generation,
            from,
            to,
        });
    }

    fn fresh_generation(&mut self) -> u64 {
        let g = self.next_generation;
        self.next_generation += 1;
        g
    }

    /// Registers `discovery` as a new lifecycle: Discovered then Validated.
    fn admit(&mut self, discovery: Discovery) {
        let generation = self.fresh_generation();
        let (name, version) = (discovery.name.clone(), discovery.version.clone());
        self.record(&name, &version, generation, None, UnitState::Discovered);
        self.record(
            &name,
            &version,
            generation,
            Some(UnitState::Discovered),
            UnitState::Validated,
        );
        let entry = self.units.entry(name).or_default();
        let stats = entry
            .versions
            .get(&version)
            .map(|v| v.stats.clone())
            .unwrap_or_default();
        entry.versions.insert(
            version,
            VersionEntry {
                discovery,
                state: UnitState::Validated,
                generation,
                stats,
            },
        );
    }

    /// Folds a scan into the known version set and the unit controls.
    pub fn ingest(&mut self, report: &ScanReport) {
        for d in &report.discoveries {
            let existing = self
                .units
                .get(&d.name)
                .and_then(|u| u.versions.get(&d.version));
            match existing {
                None => self.admit(d.clone()),
                Some(e) => {
                    let changed = e.discovery.manifest.checksum() != d.manifest.checksum();
                    match &e.state {
                        // A redeployed bundle gets a fresh chance.
                        UnitState::Failed(_) if changed => self.admit(d.clone()),
                        UnitState::Retired if changed => {
                            let entry = self.units.get_mut(&d.name).expect("unit exists");
                            entry
                                .versions
                                .get_mut(&d.version)
                                .expect("version exists")
                                .discovery = d.clone();
                        }
                        UnitState::Active | UnitState::Draining if changed => {
                            log::warn!(
                                "{}@{} changed on disk while in use; keeping the loaded copy",
                                d.name,
                                d.version
                            );
                        }
                        _ => {}
                    }
                }
            }
        }

        let on_disk: BTreeSet<(&str, &Version)> = report
            .discoveries
            .iter()
            .map(|d| (d.name.as_str(), &d.version))
            .collect();
        for (name, entry) in self.units.iter_mut() {
            entry.control = report.controls.get(name).cloned().unwrap_or_default();
            let active = entry.active.as_ref().map(|a| a.unit.version().clone());
            entry.versions.retain(|v, e| {
                on_disk.contains(&(name.as_str(), v))
                    || Some(v) == active.as_ref()
                    || e.state == UnitState::Draining
            });
        }
        self.units
            .retain(|_, u| !u.versions.is_empty() || u.active.is_some());
    }

    /// Version that should be active for `name` given the last scan.
    /// `Ok(None)` means the unit should be off.
    fn desired(&self, name: &str, report: &ScanReport) -> Result<Option<Version>, RegistryError> {
        let Some(entry) = self.units.get(name) else {
            return Ok(None);
        };
        if entry.control.disabled {
            return Ok(None);
        }
        let candidates: Vec<Version> = report
            .versions(name)
            .into_iter()
            .filter(|v| {
                !matches!(
                    entry.versions.get(v).map(|e| &e.state),
                    Some(UnitState::Failed(_))
                )
            })
            .collect();
        if candidates.is_empty() && entry.control.pin.is_none() {
            return Ok(None);
        }
        resolve_active(name, &candidates, entry.control.pin.as_ref()).map(Some)
    }

    /// Brings the active set in line with `report`: deactivations first,
    /// then activations and upgrades, each publishing one epoch.
    pub fn reconcile(&mut self, report: &ScanReport) -> SwapReport {
        self.ingest(report);
        let mut out = SwapReport {
            rejects: report.rejects.clone(),
            ..SwapReport::default()
        };
        let names: Vec<String> = self.units.keys().cloned().collect();
        let mut wanted = Vec::new();
        for name in &names {
            match self.desired(name, report) {
                Ok(v) => wanted.push((name.clone(), v)),
                Err(e) => log::warn!("leaving {name} unchanged: {e}"),
            }
        }

        for (name, want) in &wanted {
            if want.is_none() && self.active_version(name).is_some() {
                if let Ok(snap) = self.deactivate(name) {
                    out.epochs.push(snap.epoch());
                    out.deactivated.push(name.clone());
                }
            }
        }
        for (name, want) in wanted {
            let Some(version) = want else { continue };
            if self.active_version(&name) == Some(&version) {
                continue;
            }
            if matches!(self.state(&name, &version), Some(UnitState::Failed(_))) {
                continue;
            }
            // A failed candidate drops out; fall back to the next one.
            let mut version = version;
            loop {
                match self.activate(&name, &version) {
                    Ok(snap) => {
                        out.epochs.push(snap.epoch());
                        out.activated.push(format!("{name}@{version}"));
                        break;
                    }
                    Err(e) => out
                        .failed
                        .push((format!("{name}@{version}"), e.to_string())),
                }
                match self.desired(&name, report) {
                    Ok(Some(next))
                        if next != version && self.active_version(&name) != Some(&next) =>
                    {
                        version = next;
                    }
                    _ => break,
                }
            }
        }
        out.retired = self.reap();
        out
    }

    fn publish(&mut self, reason: &str) -> Arc<RegistrySnapshot> {
        self.epoch += 1;
        let actives: Vec<Arc<LoadedUnit>> = self
            .units
            .values()
            .filter_map(|u| u.active.as_ref().map(|a| a.unit.clone()))
            .collect();
        let snap = Arc::new(
            RegistrySnapshot::from_units(self.epoch, &actives)
                .expect("registry keeps one active version per unit"),
        );
        self.cell.publish(snap.clone());
        self.options.diagnostics.epoch(self.epoch, reason);
        snap
    }

    /// Loads `name@version` and makes it the unit's active version.
    ///
    /// A previously active version moves to Draining in the same epoch.
    /// If loading fails the version becomes Failed and nothing is published.
    pub fn activate(
        &mut self,
        name: &str,
        version: &Version,
    ) -> Result<Arc<RegistrySnapshot>, RegistryError> {
        let unknown = || RegistryError::UnknownVersion {
            unit: name.to_owned(),
            version: version.clone(),
        };
        let entry = self.units.get(name).ok_or_else(unknown)?;
        let ventry = entry.versions.get(version).ok_or_else(unknown)?;
        match &ventry.state {
            UnitState::Failed(reason) => {
                return Err(RegistryError::VersionFailed {
                    unit: name.to_owned(),
                    version: version.clone(),
                    reason: reason.clone(),
                })
            }
            UnitState::Active => {
                return Err(RegistryError::AlreadyActive {
                    unit: name.to_owned(),
                    version: version.clone(),
                })
            }
            UnitState::Retired | UnitState::Draining => {
                // Start a new lifecycle for a version coming back.
                let d = ventry.discovery.clone();
                self.admit(d);
            }
            UnitState::Discovered | UnitState::Validated => {}
        }

        let ventry = &self.units[name].versions[version];
        let discovery = ventry.discovery.clone();
        let generation = ventry.generation;
        let stats = ventry.stats.clone();

        let loaded = self.instantiate(&discovery, stats);
        let loaded = match loaded {
            Ok(l) => l,
            Err(reason) => {
                let failed = UnitState::Failed(reason.clone());
                self.record(
                    name,
                    version,
                    generation,
                    Some(UnitState::Validated),
                    failed.clone(),
                );
                self.units
                    .get_mut(name)
                    .unwrap()
                    .versions
                    .get_mut(version)
                    .unwrap()
                    .state = failed;
                return Err(RegistryError::LoadFailed {
                    unit: format!("{name}@{version}"),
                    reason,
                });
            }
        };

        self.record(
            name,
            version,
            generation,
            Some(UnitState::Validated),
            UnitState::Active,
        );
        let entry = self.units.get_mut(name).unwrap();
        entry.versions.get_mut(version).unwrap().state = UnitState::Active;
        let previous = entry.active.replace(ActiveInstance {
            unit: Arc::new(loaded),
            generation,
        });
        let reason = match &previous {
            Some(p) => format!("swap {name}@{}->{version}", p.unit.version()),
            None => format!("activate {name}@{version}"),
        };
        if let Some(prev) = previous {
            self.start_draining(prev);
        }
        Ok(self.publish(&reason))
    }

    fn instantiate(&self, d: &Discovery, stats: Arc<UnitStats>) -> Result<LoadedUnit, String> {
        let unit = self.loader.instantiate(&d.bundle_dir, &d.manifest)?;
        let data_dir = self.data_root.join(&d.name);
        std::fs::create_dir_all(&data_dir)
            .map_err(|e| format!("cannot create {}: {e}", data_dir.display()))?;
        let mut config = self
            .options
            .unit_config
            .get(&d.name)
            .cloned()
            .unwrap_or_default();
        config.insert("version", d.version.to_string());
        config.insert(
            "bundle_dir",
            Value::Text(d.bundle_dir.to_string_lossy().into_owned()),
        );
        let ctx = HostContext {
            host_version: self.options.host_version.clone(),
            unit_name: d.name.clone(),
            config,
            data_dir,
        };
        unit.load(&ctx).map_err(|e| e.message)?;
        Ok(LoadedUnit::with_stats(&d.manifest, unit, stats))
    }

    fn start_draining(&mut self, inst: ActiveInstance) {
        let name = inst.unit.name().to_owned();
        let version = inst.unit.version().clone();
        self.record(
            &name,
            &version,
            inst.generation,
            Some(UnitState::Active),
            UnitState::Draining,
        );
        let mut stats = Arc::default();
        if let Some(v) = self
            .units
            .get_mut(&name)
            .and_then(|u| u.versions.get_mut(&version))
        {
            if v.generation == inst.generation {
                v.state = UnitState::Draining;
            }
            stats = v.stats.clone();
        }
        self.draining.push((inst, stats));
    }

    /// Removes the unit from routing. Its version drains, then retires.
    pub fn deactivate(&mut self, name: &str) -> Result<Arc<RegistrySnapshot>, RegistryError> {
        let inst = self
            .units
            .get_mut(name)
            .and_then(|u| u.active.take())
            .ok_or_else(|| RegistryError::NotActive(name.to_owned()))?;
        let reason = format!("deactivate {}", inst.unit.id());
        self.start_draining(inst);
        Ok(self.publish(&reason))
    }

    /// Pins the next-lower version and swaps to it in one epoch.
    pub fn rollback(&mut self, name: &str) -> Result<Arc<RegistrySnapshot>, RegistryError> {
        let current = self
            .active_version(name)
            .cloned()
            .ok_or_else(|| RegistryError::NotActive(name.to_owned()))?;
        let prior = self.units[name]
            .versions
            .iter()
            .filter(|(v, e)| **v < current && !matches!(e.state, UnitState::Failed(_)))
            .map(|(v, _)| v.clone())
            .max()
            .ok_or_else(|| RegistryError::NoPriorVersion(name.to_owned()))?;
        let snap = self.activate(name, &prior)?;
        write_pin(&self.drop_dir.join(name), &prior)
            .map_err(|e| RegistryError::Io(e.to_string()))?;
        self.units.get_mut(name).unwrap().control.pin = Some(prior);
        Ok(snap)
    }

    /// Unloads draining versions that no dispatch can reach any more.
    ///
    /// A draining unit is referenced by the snapshots that still contain
    /// it; once the registry holds the only reference, no in-flight or
    /// future call can enter it.
    pub fn reap(&mut self) -> Vec<String> {
        let mut retired = Vec::new();
        let mut still = Vec::new();
        for (inst, stats) in std::mem::take(&mut self.draining) {
            if Arc::strong_count(&inst.unit) == 1 {
                inst.unit.unit.unload();
                let (name, version) = (inst.unit.name().to_owned(), inst.unit.version().clone());
                self.record(
                    &name,
                    &version,
                    inst.generation,
                    Some(UnitState::Draining),
                    UnitState::Retired,
                );
                if let Some(u) = self.units.get_mut(&name) {
                    if let Some(v) = u.versions.get_mut(&version) {
                        if v.generation == inst.generation {
                            v.state = UnitState::Retired;
                            if !v.discovery.bundle_dir.exists() {
                                u.versions.remove(&version);
                            }
                        }
                    }
                }
                retired.push(format!("{name}@{version}"));
            } else {
                still.push((inst, stats));
            }
        }
        self.draining = still;
        self.units
            .retain(|_, u| !u.versions.is_empty() || u.active.is_some());
        retired
    }

    /// Deactivates everything in one epoch and reaps what it can.
    pub fn shutdown(&mut self) -> Vec<String> {
        let actives: Vec<ActiveInstance> = self
            .units
            .values_mut()
            .filter_map(|u| u.active.take())
            .collect();
        if !actives.is_empty() {
            for inst in actives {
                self.start_draining(inst);
            }
            self.publish("shutdown");
        }
        self.reap()
    }
}
