//! Runs an envelope through the handlers bound to one extension point.
//!
//! Handlers execute in ascending `(priority, unit name)` order. After each
//! successful `execute` the unit's `next` decides where the envelope goes:
//! on to the following handler, out of the chain, or forward to a named
//! unit. Diverts may only move forward, so a chain performs at most one
//! call per handler and always terminates.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use semver::Version;

use crate::contract::{ChainDirective, Envelope, ExecutionRecord};
use crate::registry::{HandlerRef, LoadedUnit, RegistrySnapshot};

/// Default per-unit time budget.
pub const DEFAULT_UNIT_TIMEOUT: Duration = Duration::from_millis(5000);

/// What to do when a unit fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Record the error, keep the pre-error envelope, carry on.
    FailOpen,
    /// Abort the chain with an attributed [`ChainError`].
    #[default]
    FailClosed,
}

impl std::str::FromStr for ErrorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fail-open" | "fail_open" | "FailOpen" => Ok(ErrorPolicy::FailOpen),
            "fail-closed" | "fail_closed" | "FailClosed" => Ok(ErrorPolicy::FailClosed),
            other => Err(format!("unknown error policy `{other}`")),
        }
    }
}

impl fmt::Display for ErrorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorPolicy::FailOpen => "fail-open",
            ErrorPolicy::FailClosed => "fail-closed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub policy: ErrorPolicy,
    /// `None` runs units inline on the calling thread with no time limit.
    pub timeout: Option<Duration>,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            policy: ErrorPolicy::FailClosed,
            timeout: Some(DEFAULT_UNIT_TIMEOUT),
        }
    }
}

impl ChainOptions {
    pub fn new(policy: ErrorPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }
}

/// A fail-closed chain stopped at a unit error.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{unit}@{version} handler {handler} failed: {message}")]
pub struct ChainError {
    pub unit: String,
    pub version: Version,
    pub handler: String,
    pub message: String,
    /// Records up to and including the failing unit.
    pub trace: Vec<ExecutionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DirectiveError {
    #[error("{unit} diverted backwards to {target}")]
    BackwardDivert { unit: String, target: String },
    #[error("{unit} diverted to {target}, which is not in this chain")]
    UnknownDivertTarget { unit: String, target: String },
}

/// Where the chain goes after a directive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Advance(usize),
    Terminate,
}

/// Sorts handlers ascending by `(priority, unit name)`; names compare
/// bytewise. The sort is stable.
pub fn order_units(mut handlers: Vec<HandlerRef>) -> Vec<HandlerRef> {
    handlers.sort_by(|a, b| {
        (a.priority(), a.unit_name().as_bytes()).cmp(&(b.priority(), b.unit_name().as_bytes()))
    });
    handlers
}

/// Resolves a directive issued by the handler at `position` in `order`.
pub fn apply_directive(
    directive: &ChainDirective,
    position: usize,
    order: &[HandlerRef],
) -> Result<Step, DirectiveError> {
    match directive {
        ChainDirective::Continue if position + 1 < order.len() => Ok(Step::Advance(position + 1)),
        ChainDirective::Continue | ChainDirective::Stop => Ok(Step::Terminate),
        ChainDirective::Divert(target) => {
            let unit = order[position].unit_name().to_owned();
            match order.iter().position(|h| h.unit_name() == target) {
                Some(i) if i > position => Ok(Step::Advance(i)),
                Some(_) => Err(DirectiveError::BackwardDivert {
                    unit,
                    target: target.clone(),
                }),
                None => Err(DirectiveError::UnknownDivertTarget {
                    unit,
                    target: target.clone(),
                }),
            }
        }
    }
}

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// execute + next under the unit's gate, with panics turned into errors.
fn guarded_call(
    unit: &LoadedUnit,
    handler: &str,
    env: Envelope,
) -> Result<(Envelope, ChainDirective), String> {
    let _gate = if unit.reentrant() {
        None
    } else {
        Some(unit.gate.lock().unwrap_or_else(|e| e.into_inner()))
    };
    let started = Instant::now();
    unit.stats().enter();
    let result = catch_unwind(AssertUnwindSafe(|| {
        let out = unit.unit.execute(handler, env).map_err(|e| e.message)?;
        let directive = unit.unit.next(handler, &out);
        Ok((out, directive))
    }))
    .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(p))));
    unit.stats()
        .leave(started.elapsed().as_micros() as u64, result.is_err());
    result
}

fn call_unit(
    handler: &HandlerRef,
    env: Envelope,
    timeout: Option<Duration>,
) -> Result<(Envelope, ChainDirective), String> {
    let Some(limit) = timeout else {
        return guarded_call(&handler.unit, handler.handler(), env);
    };
    let unit: Arc<LoadedUnit> = handler.unit.clone();
    let name = handler.handler().to_owned();
    let (tx, rx) = mpsc::sync_channel(1);
    let spawned = std::thread::Builder::new()
        .name(format!("scpa-{}", unit.name()))
        .spawn(move || {
            let _ = tx.send(guarded_call(&unit, &name, env));
        });
    if let Err(e) = spawned {
        return Err(format!("cannot start unit thread: {e}"));
    }
    match rx.recv_timeout(limit) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => {
            Err(format!("timed out after {} ms", limit.as_millis()))
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => Err("unit thread died".into()),
    }
}

/// Runs `env` through every handler bound to `extension_point` in
/// `snapshot`.
///
/// The returned envelope carries the snapshot's epoch and one trace record
/// per executed or failed handler; handlers skipped by a divert leave no
/// record. A failing handler (error, panic, timeout, or an invalid divert)
/// never changes the envelope.
///
/// # Panics
///
/// If `env` targets a different extension point or already has a trace.
pub fn run_chain(
    snapshot: &RegistrySnapshot,
    extension_point: &str,
    mut env: Envelope,
    options: &ChainOptions,
) -> Result<Envelope, ChainError> {
    assert_eq!(
        env.extension_point, extension_point,
        "envelope routed to the wrong chain"
    );
    assert!(
        env.trace().is_empty(),
        "envelope already ran through a chain"
    );
    env.epoch = snapshot.epoch();
    let order = snapshot.route(extension_point);

    let mut position = 0;
    while position < order.len() {
        let handler = &order[position];
        let started = Instant::now();
        let outcome = call_unit(handler, env.clone(), options.timeout).and_then(|(out, d)| {
            let step = apply_directive(&d, position, order).map_err(|e| e.to_string())?;
            Ok((out, d, step))
        });
        let micros = started.elapsed().as_micros() as u64;

        match outcome {
            Ok((mut out, directive, step)) => {
                // The unit owns the payload and annotations, nothing else.
                out.id = env.id.clone();
                out.extension_point = env.extension_point.clone();
                out.epoch = env.epoch;
                out.restore_trace(env.take_trace());
                out.record(ExecutionRecord::ok(
                    handler.unit_name(),
                    handler.version(),
                    handler.handler(),
                    micros,
                    directive,
                ));
                env = out;
                match step {
                    Step::Advance(next) => position = next,
                    Step::Terminate => break,
                }
            }
            Err(message) => {
                env.record(ExecutionRecord::error(
                    handler.unit_name(),
                    handler.version(),
                    handler.handler(),
                    micros,
                    message.clone(),
                ));
                if options.policy == ErrorPolicy::FailClosed {
                    return Err(ChainError {
                        unit: handler.unit_name().to_owned(),
                        version: handler.version().clone(),
                        handler: handler.handler().to_owned(),
                        message,
                        trace: env.trace().to_vec(),
                    });
                }
                position += 1;
            }
        }
    }
    Ok(env)
}

#[cfg(test)]
mod tests;
