//! The message that flows through a processing chain.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use semver::Version;
use serde::{Deserialize, Serialize};

use super::ValueMap;

/// Routing decision returned by a unit's `next`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainDirective {
    /// Hand the envelope to the next unit in order.
    Continue,
    /// End the chain with the current envelope.
    Stop,
    /// Jump forward to the named unit, skipping those in between.
    Divert(String),
}

impl fmt::Display for ChainDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainDirective::Continue => f.write_str("continue"),
            ChainDirective::Stop => f.write_str("stop"),
            ChainDirective::Divert(t) => write!(f, "divert:{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Error,
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "ok",
            Outcome::Error => "error",
            Outcome::Skipped => "skipped",
        })
    }
}

/// What happened when one unit handler ran on an envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub unit: String,
    pub version: Version,
    pub handler: String,
    pub outcome: Outcome,
    pub duration_micros: u64,
    /// Present when `outcome` is [`Outcome::Ok`].
    pub directive: Option<ChainDirective>,
    /// Present when `outcome` is [`Outcome::Error`].
    pub error: Option<String>,
}

impl ExecutionRecord {
    pub fn ok(
        unit: &str,
        version: &Version,
        handler: &str,
        duration_micros: u64,
        directive: ChainDirective,
    ) -> Self {
        Self {
            unit: unit.to_owned(),
            version: version.clone(),
            handler: handler.to_owned(),
            outcome: Outcome::Ok,
            duration_micros,
            directive: Some(directive),
            error: None,
        }
    }

    pub fn error(
        unit: &str,
        version: &Version,
        handler: &str,
        duration_micros: u64,
        message: impl Into<String>,
    ) -> Self {
        Self {
            unit: unit.to_owned(),
            version: version.clone(),
            handler: handler.to_owned(),
            outcome: Outcome::Error,
            duration_micros,
            directive: None,
            error: Some(message.into()),
        }
    }
}

static NEXT_ENVELOPE: AtomicU64 = AtomicU64::new(1);

fn next_envelope_id() -> String {
    let n = NEXT_ENVELOPE.fetch_add(1, Ordering::Relaxed);
    format!("{:x}-{n:08x}", std::process::id())
}

/// A payload in flight plus everything recorded about its trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub id: String,
    pub extension_point: String,
    pub payload: ValueMap,
    /// Per-unit scratch notes keyed by unit name.
    pub annotations: ValueMap,
    pub epoch: u64,
    trace: Vec<ExecutionRecord>,
}

impl Envelope {
    /// Fresh envelope with a process-unique id and an empty trace.
    pub fn new(extension_point: impl Into<String>, payload: ValueMap) -> Self {
        Self {
            id: next_envelope_id(),
            extension_point: extension_point.into(),
            payload,
            annotations: ValueMap::new(),
            epoch: 0,
            trace: Vec::new(),
        }
    }

    pub fn trace(&self) -> &[ExecutionRecord] {
        &self.trace
    }

    /// Appends to the trace. Records are never removed or reordered.
    pub fn record(&mut self, record: ExecutionRecord) {
        self.trace.push(record);
    }

    pub(crate) fn take_trace(&mut self) -> Vec<ExecutionRecord> {
        std::mem::take(&mut self.trace)
    }

    pub(crate) fn restore_trace(&mut self, trace: Vec<ExecutionRecord>) {
        self.trace = trace;
    }
}
