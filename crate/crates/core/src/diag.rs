//! Machine-readable diagnostic stream.
//!
//! Three line kinds are emitted, one record per line:
//!
//! ```text
//! TRACE <envelope-id> <epoch> <unit>@<version> <handler> <outcome> <micros> <directive>
//! REJECT <path> <reason-code> <detail>
//! EPOCH <n> <reason>
//! ```

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::contract::ExecutionRecord;

pub trait DiagnosticSink: Send + Sync {
    fn emit(&self, line: &str);
}

struct Stderr;

impl DiagnosticSink for Stderr {
    fn emit(&self, line: &str) {
        eprintln!("{line}");
    }
}

struct Null;

impl DiagnosticSink for Null {
    fn emit(&self, _line: &str) {}
}

struct FileSink(Mutex<File>);

impl DiagnosticSink for FileSink {
    fn emit(&self, line: &str) {
        let mut f = self.0.lock().unwrap_or_else(|e| e.into_inner());
        let _ = writeln!(f, "{line}");
    }
}

/// Collects lines in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink(Arc<Mutex<Vec<String>>>);

impl MemorySink {
    pub fn lines(&self) -> Vec<String> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn clear(&self) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

impl DiagnosticSink for MemorySink {
    fn emit(&self, line: &str) {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(line.to_owned());
    }
}

/// Cloneable handle to a diagnostic sink.
#[derive(Clone)]
pub struct Diagnostics(Arc<dyn DiagnosticSink>);

impl std::fmt::Debug for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Diagnostics")
    }
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self::stderr()
    }
}

impl Diagnostics {
    pub fn new(sink: impl DiagnosticSink + 'static) -> Self {
        Self(Arc::new(sink))
    }

    pub fn stderr() -> Self {
        Self::new(Stderr)
    }

    pub fn null() -> Self {
        Self::new(Null)
    }

    pub fn memory() -> (Self, MemorySink) {
        let sink = MemorySink::default();
        (Self::new(sink.clone()), sink)
    }

    /// Appends to `path`, creating it if needed.
    pub fn file(path: &Path) -> std::io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(FileSink(Mutex::new(f))))
    }

    pub fn emit(&self, line: &str) {
        self.0.emit(line);
    }

    pub fn trace(&self, envelope_id: &str, epoch: u64, record: &ExecutionRecord) {
        let directive = record
            .directive
            .as_ref()
            .map(ToString::to_string)
            .unwrap_or_else(|| "-".into());
        self.emit(&format!(
            "TRACE {envelope_id} {epoch} {}@{} {} {} {} {directive}",
            record.unit, record.version, record.handler, record.outcome, record.duration_micros
        ));
    }

    pub fn reject(&self, path: &Path, code: &str, detail: &str) {
        self.emit(&format!(
            "REJECT {} {code} {}",
            path.display(),
            single_line(detail)
        ));
    }

    pub fn epoch(&self, epoch: u64, reason: &str) {
        self.emit(&format!("EPOCH {epoch} {}", single_line(reason)));
    }
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Parsed `TRACE` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub envelope_id: String,
    pub epoch: u64,
    pub unit: String,
    pub version: String,
    pub handler: String,
    pub outcome: String,
    pub micros: u64,
    pub directive: String,
}

impl TraceLine {
    pub fn parse(line: &str) -> Option<Self> {
        let parts: Vec<&str> = line.split(' ').collect();
        let ["TRACE", id, epoch, unit_ver, handler, outcome, micros, directive] = parts[..] else {
            return None;
        };
        let (unit, version) = unit_ver.split_once('@')?;
        Some(Self {
            envelope_id: id.to_owned(),
            epoch: epoch.parse().ok()?,
            unit: unit.to_owned(),
            version: version.to_owned(),
            handler: handler.to_owned(),
            outcome: outcome.to_owned(),
            micros: micros.parse().ok()?,
            directive: directive.to_owned(),
        })
    }
}
