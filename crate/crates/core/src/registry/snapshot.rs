use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use semver::Version;

use crate::chain::order_units;
use crate::contract::{LayerBinding, Manifest, PipelineUnit};

/// Per unit-version runtime counters. Counts never decrease.
#[derive(Debug, Default)]
pub struct UnitStats {
    dispatches: AtomicU64,
    errors: AtomicU64,
    total_micros: AtomicU64,
    in_flight: AtomicU64,
}

impl UnitStats {
    pub fn dispatches(&self) -> u64 {
        self.dispatches.load(Ordering::Relaxed)
    }

    pub fn errors(&self) -> u64 {
        self.errors.load(Ordering::Relaxed)
    }

    /// Calls currently executing inside the unit.
    pub fn in_flight(&self) -> u64 {
        self.in_flight.load(Ordering::Acquire)
    }

    pub fn mean_micros(&self) -> f64 {
        let n = self.dispatches();
        if n == 0 {
            0.0
        } else {
            self.total_micros.load(Ordering::Relaxed) as f64 / n as f64
        }
    }

    pub(crate) fn enter(&self) {
        self.in_flight.fetch_add(1, Ordering::AcqRel);
    }

    pub(crate) fn leave(&self, micros: u64, failed: bool) {
        self.dispatches.fetch_add(1, Ordering::Relaxed);
        self.total_micros.fetch_add(micros, Ordering::Relaxed);
        if failed {
            self.errors.fetch_add(1, Ordering::Relaxed);
        }
        self.in_flight.fetch_sub(1, Ordering::AcqRel);
    }
}

/// A unit version that has been instantiated and loaded.
pub struct LoadedUnit {
    name: String,
    version: Version,
    priority: u32,
    reentrant: bool,
    bindings: Vec<LayerBinding>,
    pub(crate) unit: Arc<dyn PipelineUnit>,
    /// Serializes calls into non-reentrant units.
    pub(crate) gate: Mutex<()>,
    stats: Arc<UnitStats>,
}

impl fmt::Debug for LoadedUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadedUnit")
            .field("name", &self.name)
            .field("version", &self.version)
            .field("priority", &self.priority)
            .finish_non_exhaustive()
    }
}

impl LoadedUnit {
    /// Wraps an already-loaded unit. Does not call `load`.
    pub fn new(manifest: &Manifest, unit: Arc<dyn PipelineUnit>) -> Self {
        Self::with_stats(manifest, unit, Arc::default())
    }

    pub(crate) fn with_stats(
        manifest: &Manifest,
        unit: Arc<dyn PipelineUnit>,
        stats: Arc<UnitStats>,
    ) -> Self {
        Self {
            name: manifest.name().to_owned(),
            version: manifest.version().clone(),
            priority: manifest.priority(),
            reentrant: manifest.reentrant(),
            bindings: manifest.bindings().to_vec(),
            unit,
            gate: Mutex::new(()),
            stats,
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

    pub fn stats(&self) -> &UnitStats {
        &self.stats
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }
}

/// One entry in a route: a unit handler bound to an extension point.
#[derive(Clone)]
pub struct HandlerRef {
    pub(crate) unit: Arc<LoadedUnit>,
    handler: String,
}

impl HandlerRef {
    pub fn new(unit: Arc<LoadedUnit>, handler: impl Into<String>) -> Self {
        Self {
            unit,
            handler: handler.into(),
        }
    }

    pub fn unit_name(&self) -> &str {
        self.unit.name()
    }

    pub fn version(&self) -> &Version {
        self.unit.version()
    }

    pub fn handler(&self) -> &str {
        &self.handler
    }

    pub fn priority(&self) -> u32 {
        self.unit.priority()
    }

    pub fn reentrant(&self) -> bool {
        self.unit.reentrant()
    }

    pub fn loaded(&self) -> &Arc<LoadedUnit> {
        &self.unit
    }
}

impl PartialEq for HandlerRef {
    fn eq(&self, other: &Self) -> bool {
        self.unit_name() == other.unit_name()
            && self.version() == other.version()
            && self.handler == other.handler
            && self.priority() == other.priority()
            && self.reentrant() == other.reentrant()
    }
}

impl Eq for HandlerRef {}

impl fmt::Debug for HandlerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{}:{}(p{})",
            self.unit_name(),
            self.version(),
            self.handler,
            self.priority()
        )
    }
}

/// Two versions of one unit were offered to a single snapshot.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unit `{0}` appears more than once")]
pub struct DuplicateUnit(pub String);

/// Immutable view of every active handler at one epoch.
///
/// Equality compares the epoch and the routes (unit, version, handler,
/// priority, reentrancy), not the unit instances.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegistrySnapshot {
    epoch: u64,
    routes: BTreeMap<String, Vec<HandlerRef>>,
}

impl RegistrySnapshot {
    pub fn empty(epoch: u64) -> Self {
        Self {
            epoch,
            routes: BTreeMap::new(),
        }
    }

    /// Builds routes from each unit's bindings, ordered by (priority, name).
    pub fn from_units<'a>(
        epoch: u64,
        units: impl IntoIterator<Item = &'a Arc<LoadedUnit>>,
    ) -> Result<Self, DuplicateUnit> {
        let mut seen = BTreeSet::new();
        let mut routes: BTreeMap<String, Vec<HandlerRef>> = BTreeMap::new();
        for unit in units {
            if !seen.insert(unit.name().to_owned()) {
                return Err(DuplicateUnit(unit.name().to_owned()));
            }
            for b in unit.bindings() {
                routes
                    .entry(b.extension_point.clone())
                    .or_default()
                    .push(HandlerRef::new(unit.clone(), b.handler.clone()));
            }
        }
        for list in routes.values_mut() {
            *list = order_units(std::mem::take(list));
        }
        Ok(Self { epoch, routes })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Handlers for `extension_point`, in execution order.
    pub fn route(&self, extension_point: &str) -> &[HandlerRef] {
        self.routes
            .get(extension_point)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn routes(&self) -> impl Iterator<Item = (&str, &[HandlerRef])> {
        self.routes.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Distinct (unit, version) pairs present in any route.
    pub fn units(&self) -> BTreeMap<String, Version> {
        self.routes
            .values()
            .flatten()
            .map(|h| (h.unit_name().to_owned(), h.version().clone()))
            .collect()
    }

    /// Route table without the epoch, for comparing registries built
    /// along different paths.
    pub fn route_table(&self) -> BTreeMap<String, Vec<(String, Version, String, u32)>> {
        self.routes
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(ep, list)| {
                (
                    ep.clone(),
                    list.iter()
                        .map(|h| {
                            (
                                h.unit_name().to_owned(),
                                h.version().clone(),
                                h.handler().to_owned(),
                                h.priority(),
                            )
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

/// Shared slot holding the latest published snapshot.
///
/// Readers clone the inner `Arc` under a short read lock; a replaced
/// snapshot stays alive for as long as some dispatch still holds it.
#[derive(Debug, Clone)]
pub struct SnapshotCell(Arc<RwLock<Arc<RegistrySnapshot>>>);

impl SnapshotCell {
    pub fn new(initial: RegistrySnapshot) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(initial))))
    }

    pub fn load(&self) -> Arc<RegistrySnapshot> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub(crate) fn publish(&self, snapshot: Arc<RegistrySnapshot>) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = snapshot;
    }
}
