//! Turning a verified bundle into a live [`PipelineUnit`].

pub mod native;

use std::path::Path;
use std::sync::Arc;

use crate::contract::reference::BEHAVIOR_EXTENSION;
use crate::contract::{BehaviorTable, Manifest, PipelineUnit, ReferenceUnit};

/// Instantiates units from bundle directories.
///
/// Implementations must not call [`PipelineUnit::load`]; the registry does
/// that with the unit's [`HostContext`](crate::contract::HostContext).
pub trait UnitLoader: Send + Sync {
    fn instantiate(
        &self,
        bundle_dir: &Path,
        manifest: &Manifest,
    ) -> Result<Arc<dyn PipelineUnit>, String>;
}

/// Chooses the backend by payload file extension: dynamic libraries go
/// through [`native::NativeUnit`], `*.behavior` files become
/// [`ReferenceUnit`]s.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultLoader;

impl UnitLoader for DefaultLoader {
    fn instantiate(
        &self,
        bundle_dir: &Path,
        manifest: &Manifest,
    ) -> Result<Arc<dyn PipelineUnit>, String> {
        let payload = bundle_dir.join(manifest.payload_ref());
        let ext = payload
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        match ext {
            "so" | "dylib" | "dll" => Ok(Arc::new(native::NativeUnit::open(&payload)?)),
            e if e == BEHAVIOR_EXTENSION => {
                let text = std::fs::read_to_string(&payload)
                    .map_err(|e| format!("cannot read {}: {e}", payload.display()))?;
                let table = BehaviorTable::parse(&text).map_err(|e| e.to_string())?;
                Ok(Arc::new(ReferenceUnit::new(table)))
            }
            other => Err(format!("no loader for payload type `.{other}`")),
        }
    }
}
