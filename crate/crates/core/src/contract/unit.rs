//! The three-method contract every pipeline unit implements.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ChainDirective, Envelope, ValueMap};

/// Error raised by a unit. Carries only a message; the chain engine
/// attributes it to the unit and handler.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{message}")]
pub struct UnitError {
    pub message: String,
}

impl UnitError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Per-unit runtime context handed to [`PipelineUnit::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostContext {
    pub host_version: String,
    pub unit_name: String,
    /// Unit-scoped settings.
    pub config: ValueMap,
    /// Private scratch directory; never shared between units.
    pub data_dir: PathBuf,
}

/// What a unit reports back after loading.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Handler symbols the unit provides. Empty means "not reported".
    pub handlers: Vec<String>,
    pub notes: Option<String>,
}

/// A self-contained pipeline unit.
///
/// The host calls [`load`](Self::load) once per activation, then any number
/// of [`execute`](Self::execute)/[`next`](Self::next) pairs, and finally
/// [`unload`](Self::unload) once the version is retired. `next` is only
/// called after a successful `execute` of the same handler on the same
/// envelope, and receives the envelope that `execute` returned.
///
/// `handler` names the entry symbol from the manifest binding, so one unit
/// can serve UI, business and data extension points.
pub trait PipelineUnit: Send + Sync {
    fn load(&self, ctx: &HostContext) -> Result<LoadReport, UnitError>;

    /// Returns the transformed envelope. On error the engine keeps the input.
    fn execute(&self, handler: &str, env: Envelope) -> Result<Envelope, UnitError>;

    fn next(&self, handler: &str, env: &Envelope) -> ChainDirective;

    fn unload(&self) {}
}
