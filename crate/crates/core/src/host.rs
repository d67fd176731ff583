//! The long-running host: a drop-folder watcher plus concurrent dispatch.
//!
//! One coordinator (the watcher thread, or whoever calls
//! [`Host::hot_swap_cycle`]) mutates the registry. [`Host::dispatch`] may be
//! called from any number of threads; each call pins one snapshot for its
//! whole chain, so an envelope never sees units from two epochs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use semver::Version;

use crate::chain::{run_chain, ChainError, ChainOptions, ErrorPolicy, DEFAULT_UNIT_TIMEOUT};
use crate::contract::{Envelope, ValueMap};
use crate::diag::Diagnostics;
use crate::loader::{DefaultLoader, UnitLoader};
use crate::registry::{
    scan_with, ChecksumCache, Registry, RegistryError, RegistryOptions, RegistrySnapshot,
    SnapshotCell, SwapReport,
};

pub const DEFAULT_SCAN_INTERVAL: Duration = Duration::from_millis(1000);
pub const MIN_SCAN_INTERVAL: Duration = Duration::from_millis(10);

/// Where diagnostic lines go.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DiagnosticTarget {
    #[default]
    Stderr,
    Null,
    File(PathBuf),
}

impl FromStr for DiagnosticTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "stderr" => DiagnosticTarget::Stderr,
            "none" | "null" => DiagnosticTarget::Null,
            "" => return Err("empty diagnostics target".into()),
            path => DiagnosticTarget::File(PathBuf::from(path)),
        })
    }
}

impl fmt::Display for DiagnosticTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticTarget::Stderr => f.write_str("stderr"),
            DiagnosticTarget::Null => f.write_str("none"),
            DiagnosticTarget::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostConfig {
    pub drop_dir: PathBuf,
    pub scan_interval: Duration,
    pub error_policy: ErrorPolicy,
    /// Per-unit time budget for one execute + next.
    pub unit_timeout: Duration,
    pub diagnostics: DiagnosticTarget,
}

impl HostConfig {
    pub fn new(drop_dir: impl Into<PathBuf>) -> Self {
        Self {
            drop_dir: drop_dir.into(),
            scan_interval: DEFAULT_SCAN_INTERVAL,
            error_policy: ErrorPolicy::default(),
            unit_timeout: DEFAULT_UNIT_TIMEOUT,
            diagnostics: DiagnosticTarget::default(),
        }
    }

    pub fn with_scan_interval(mut self, interval: Duration) -> Self {
        self.scan_interval = interval;
        self
    }

    pub fn with_error_policy(mut self, policy: ErrorPolicy) -> Self {
        self.error_policy = policy;
        self
    }

    pub fn with_unit_timeout(mut self, timeout: Duration) -> Self {
        self.unit_timeout = timeout;
        self
    }

    pub fn with_diagnostics(mut self, target: DiagnosticTarget) -> Self {
        self.diagnostics = target;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scan_interval < MIN_SCAN_INTERVAL {
            return Err(ConfigError::BadValue {
                key: "scan_interval_ms".into(),
                reason: "must be at least 10".into(),
            });
        }
        if self.unit_timeout < Duration::from_millis(1) {
            return Err(ConfigError::BadValue {
                key: "unit_timeout_ms".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Parses `key: value` lines. Keys: `drop_dir` (required),
    /// `scan_interval_ms`, `error_policy`, `unit_timeout_ms`, `diagnostics`.
    /// A relative `drop_dir` or diagnostics path is taken relative to
    /// `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut drop_dir = None;
        let mut config = HostConfig::new("");
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: "expected `key: value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |reason: String| ConfigError::BadValue {
                key: key.to_owned(),
                reason,
            };
            let millis = |v: &str| {
                v.parse::<u64>()
                    .map(Duration::from_millis)
                    .map_err(|_| bad(format!("`{v}` is not a whole number of milliseconds")))
            };
            match key {
                "drop_dir" => drop_dir = Some(base.join(value)),
                "scan_interval_ms" => config.scan_interval = millis(value)?,
                "unit_timeout_ms" => config.unit_timeout = millis(value)?,
                "error_policy" => config.error_policy = value.parse().map_err(bad)?,
                "diagnostics" => {
                    config.diagnostics = match value.parse().map_err(bad)? {
                        DiagnosticTarget::File(p) => DiagnosticTarget::File(base.join(p)),
                        other => other,
                    }
                }
                other => log::warn!("config line {}: ignoring unknown key `{other}`", idx + 1),
            }
        }
        config.drop_dir = drop_dir.ok_or(ConfigError::Missing("drop_dir"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_text(&self) -> String {
        format!(
            "drop_dir: {}\nscan_interval_ms: {}\nerror_policy: {}\nunit_timeout_ms: {}\ndiagnostics: {}\n",
            self.drop_dir.display(),
            self.scan_interval.as_millis(),
            self.error_policy,
            self.unit_timeout.as_millis(),
            self.diagnostics
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot open diagnostics file: {0}")]
    Diagnostics(String),
}

/// Per unit-version row of [`HostStatus`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStatus {
    pub name: String,
    pub version: Version,
    pub state: String,
    pub dispatches: u64,
    pub errors: u64,
    pub mean_micros: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostStatus {
    pub epoch: u64,
    pub drop_dir: PathBuf,
    pub uptime: Duration,
    pub units: Vec<UnitStatus>,
}

impl HostStatus {
    pub fn unit(&self, name: &str, version: &Version) -> Option<&UnitStatus> {
        self.units
            .iter()
            .find(|u| u.name == name && &u.version == version)
    }
}

impl fmt::Display for HostStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "epoch {}  drop {}  up {:.1}s",
            self.epoch,
            self.drop_dir.display(),
            self.uptime.as_secs_f64()
        )?;
        writeln!(
            f,
            "{:<24} {:<10} {:<10} {:>10} {:>8} {:>10}",
            "unit", "version", "state", "dispatches", "errors", "mean_us"
        )?;
        for u in &self.units {
            writeln!(
                f,
                "{:<24} {:<10} {:<10} {:>10} {:>8} {:>10.1}",
                u.name,
                u.version.to_string(),
                u.state,
                u.dispatches,
                u.errors,
                u.mean_micros
            )?;
        }
        Ok(())
    }
}

struct Shared {
    registry: Mutex<Registry>,
    checksums: Mutex<ChecksumCache>,
    cell: SnapshotCell,
    chain: ChainOptions,
    diagnostics: Diagnostics,
    drop_dir: PathBuf,
    started: Instant,
}

impl Shared {
    fn registry(&self) -> MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn cycle(&self) -> Result<SwapReport, HostError> {
        let report = {
            let mut cache = self.checksums.lock().unwrap_or_else(|e| e.into_inner());
            scan_with(&self.drop_dir, &mut cache)?
        };
        report.report_rejects(&self.diagnostics);
        let swap = self.registry().reconcile(&report);
        for (unit, reason) in &swap.failed {
            log::warn!("{unit} failed to load: {reason}");
        }
        Ok(swap)
    }
}

struct Watcher {
    stop: mpsc::Sender<()>,
    thread: JoinHandle<()>,
}

/// A running host. Cheap to share behind an `Arc`; all methods take `&self`.
pub struct Host {
    shared: Arc<Shared>,
    watcher: Mutex<Option<Watcher>>,
}

impl fmt::Debug for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Host")
            .field("drop_dir", &self.shared.drop_dir)
            .field("epoch", &self.shared.cell.load().epoch())
            .finish_non_exhaustive()
    }
}

fn open_diagnostics(target: &DiagnosticTarget) -> Result<Diagnostics, HostError> {
    Ok(match target {
        DiagnosticTarget::Stderr => Diagnostics::stderr(),
        DiagnosticTarget::Null => Diagnostics::null(),
        DiagnosticTarget::File(p) => Diagnostics::file(p)
            .map_err(|e| HostError::Diagnostics(format!("{}: {e}", p.display())))?,
    })
}

impl Host {
    /// Scans and activates, then starts the watcher thread.
    pub fn start(config: HostConfig) -> Result<Self, HostError> {
        let diagnostics = open_diagnostics(&config.diagnostics)?;
        Self::start_with(config, Arc::new(DefaultLoader), diagnostics)
    }

    pub fn start_with(
        config: HostConfig,
        loader: Arc<dyn UnitLoader>,
        diagnostics: Diagnostics,
    ) -> Result<Self, HostError> {
        let interval = config.scan_interval;
        let host = Self::open_with(config, loader, diagnostics)?;
        host.spawn_watcher(interval);
        Ok(host)
    }

    /// Like [`Host::start`] without a watcher; the caller drives
    /// [`Host::hot_swap_cycle`].
    pub fn open(config: HostConfig) -> Result<Self, HostError> {
        let diagnostics = open_diagnostics(&config.diagnostics)?;
        Self::open_with(config, Arc::new(DefaultLoader), diagnostics)
    }

    pub fn open_with(
        config: HostConfig,
        loader: Arc<dyn UnitLoader>,
        diagnostics: Diagnostics,
    ) -> Result<Self, HostError> {
        config.validate()?;
        let registry = Registry::new(
            &config.drop_dir,
            loader,
            RegistryOptions {
                diagnostics: diagnostics.clone(),
                ..RegistryOptions::default()
            },
        );
        let shared = Arc::new(Shared {
            cell: registry.cell(),
            registry: Mutex::new(registry),
            checksums: Mutex::default(),
            chain: ChainOptions::new(config.error_policy).with_timeout(Some(config.unit_timeout)),
            diagnostics,
            drop_dir: config.drop_dir,
            started: Instant::now(),
        });
        shared.cycle()?;
        Ok(Self {
            shared,
            watcher: Mutex::new(None),
        })
    }

    fn spawn_watcher(&self, interval: Duration) {
        let (stop, rx) = mpsc::channel();
        let shared = self.shared.clone();
        let thread = std::thread::Builder::new()
            .name("scpa-watcher".into())
            .spawn(move || {
                while let Err(RecvTimeoutError::Timeout) = rx.recv_timeout(interval) {
                    if let Err(e) = shared.cycle() {
                        log::warn!("scan failed, keeping the current units: {e}");
                    }
                }
            })
            .expect("spawn watcher thread");
        *self.watcher.lock().unwrap_or_else(|e| e.into_inner()) = Some(Watcher { stop, thread });
    }

    /// One scan + reconcile + reap pass.
    pub fn hot_swap_cycle(&self) -> Result<SwapReport, HostError> {
        self.shared.cycle()
    }

    /// Runs `payload` through `extension_point` and returns the final
    /// payload.
    pub fn dispatch(
        &self,
        extension_point: &str,
        payload: ValueMap,
    ) -> Result<ValueMap, ChainError> {
        self.dispatch_envelope(Envelope::new(extension_point, payload))
            .map(|env| env.payload)
    }

    /// Runs a fresh envelope through its extension point against the
    /// current snapshot and emits one `TRACE` line per record.
    ///
    /// # Panics
    ///
    /// If the envelope already carries a trace.
    pub fn dispatch_envelope(&self, env: Envelope) -> Result<Envelope, ChainError> {
        let snapshot = self.shared.cell.load();
        let ep = env.extension_point.clone();
        let id = env.id.clone();
        let result = run_chain(&snapshot, &ep, env, &self.shared.chain);
        let trace = match &result {
            Ok(env) => env.trace(),
            Err(e) => &e.trace,
        };
        for record in trace {
            self.shared.diagnostics.trace(&id, snapshot.epoch(), record);
        }
        result
    }

    pub fn snapshot(&self) -> Arc<RegistrySnapshot> {
        self.shared.cell.load()
    }

    pub fn epoch(&self) -> u64 {
        self.snapshot().epoch()
    }

    pub fn drop_dir(&self) -> &Path {
        &self.shared.drop_dir
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.shared.diagnostics
    }

    pub fn chain_options(&self) -> ChainOptions {
        self.shared.chain
    }

    pub fn status(&self) -> HostStatus {
        let registry = self.shared.registry();
        let units = registry
            .unit_states()
            .into_iter()
            .map(|row| UnitStatus {
                name: row.name,
                version: row.version,
                state: row.state.name().to_owned(),
                dispatches: row.stats.dispatches(),
                errors: row.stats.errors(),
                mean_micros: row.stats.mean_micros(),
            })
            .collect();
        HostStatus {
            epoch: registry.epoch(),
            drop_dir: self.shared.drop_dir.clone(),
            uptime: self.shared.started.elapsed(),
            units,
        }
    }

    /// Swaps `name` back to its previous version and pins it on disk.
    pub fn rollback(&self, name: &str) -> Result<u64, HostError> {
        Ok(self.shared.registry().rollback(name)?.epoch())
    }

    /// Runs `f` with exclusive access to the registry.
    pub fn with_registry<T>(&self, f: impl FnOnce(&mut Registry) -> T) -> T {
        f(&mut self.shared.registry())
    }

    fn stop_watcher(&self) {
        let watcher = self
            .watcher
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take();
        if let Some(w) = watcher {
            let _ = w.stop.send(());
            let _ = w.thread.join();
        }
    }

    /// Stops the watcher and deactivates every unit. Units still held by
    /// in-flight dispatches are unloaded when those finish and the host is
    /// dropped.
    pub fn shutdown(self) -> Vec<String> {
        self.stop_watcher();
        self.shared.registry().shutdown()
    }
}

impl Drop for Host {
    fn drop(&mut self) {
        self.stop_watcher();
    }
}
