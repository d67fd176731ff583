//! Unit contract, manifest format and the envelope data model.

mod envelope;
mod manifest;
pub mod reference;
mod unit;
mod value;

pub use envelope::{ChainDirective, Envelope, ExecutionRecord, Outcome};
pub use manifest::{
    is_extension_point, is_unit_name, parse_manifest, parse_manifest_with_warnings,
    parse_plain_version, serialize_manifest, sha256_hex, verify_payload, ChecksumMismatch, Layer,
    LayerBinding, Manifest, ManifestBuilder, ManifestError, MANIFEST_FILE, MAX_PRIORITY,
};
pub use reference::{Action, BehaviorTable, ReferenceUnit};
pub use unit::{HostContext, LoadReport, PipelineUnit, UnitError};
pub use value::{EmptyKey, Value, ValueMap};

pub use semver::Version;
