//! Packaging for the two sample units that ship in this workspace.
//!
//! The units are separate crates built as dynamic libraries; nothing in
//! this crate links against them. These helpers only know their names,
//! bindings and where cargo puts the built libraries.

use std::env::consts::{DLL_PREFIX, DLL_SUFFIX};
use std::path::{Path, PathBuf};
use std::process::Command;

use semver::Version;

use super::{EP_COMPUTE, EP_READ, EP_RENDER};
use crate::bundle::{BundleError, BundleSpec};
use crate::contract::Layer;

pub const SALES_UNIT: &str = "sales-by-product";
pub const FIX_UNIT: &str = "price-rounding-fix";

const SALES_CRATE: &str = "unit-sales-by-product";
const FIX_CRATE: &str = "unit-price-rounding-fix";

/// Adds per-product sales totals in the data, business and ui layers.
pub fn sales_by_product(version: Version) -> BundleSpec {
    BundleSpec::new(SALES_UNIT, version)
        .priority(100)
        .binding(Layer::Data, EP_READ, "read_sales")
        .binding(Layer::Business, EP_COMPUTE, "compute_totals")
        .binding(Layer::Ui, EP_RENDER, "render_column")
        .description("per-product sales totals")
}

/// Formats totals to cents after they are computed. Version 1.0.0
/// truncates; later versions round half-up.
pub fn price_rounding_fix(version: Version) -> BundleSpec {
    let handler = if version == Version::new(1, 0, 0) {
        "truncate_totals"
    } else {
        "round_totals"
    };
    BundleSpec::new(FIX_UNIT, version)
        .priority(200)
        .binding(Layer::Business, EP_COMPUTE, handler)
        .description("formats sales totals to two decimals")
}

/// File name of a cdylib built from `crate_name` on this platform.
pub fn library_file(crate_name: &str) -> String {
    format!("{DLL_PREFIX}{}{DLL_SUFFIX}", crate_name.replace('-', "_"))
}

/// Built sample-unit libraries.
#[derive(Debug, Clone)]
pub struct SampleLibraries {
    pub sales_by_product: PathBuf,
    pub price_rounding_fix: PathBuf,
}

impl SampleLibraries {
    /// Builds both unit crates with cargo (a no-op when up to date) and
    /// returns the library paths. `workspace` is the workspace root.
    pub fn build(workspace: &Path) -> Result<Self, String> {
        let cargo = std::env::var_os("CARGO").unwrap_or_else(|| "cargo".into());
        let output = Command::new(cargo)
            .current_dir(workspace)
            .args(["build", "--quiet", "-p", SALES_CRATE, "-p", FIX_CRATE])
            .output()
            .map_err(|e| format!("cannot run cargo: {e}"))?;
        if !output.status.success() {
            return Err(format!(
                "building sample units failed:\n{}",
                String::from_utf8_lossy(&output.stderr)
            ));
        }
        let target = std::env::var_os("CARGO_TARGET_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| workspace.join("target"));
        let dir = target.join("debug");
        let libs = Self {
            sales_by_product: dir.join(library_file(SALES_CRATE)),
            price_rounding_fix: dir.join(library_file(FIX_CRATE)),
        };
        for lib in [&libs.sales_by_product, &libs.price_rounding_fix] {
            if !lib.exists() {
                return Err(format!("expected {} after the build", lib.display()));
            }
        }
        Ok(libs)
    }

    fn payload(path: &Path) -> Result<(String, Vec<u8>), BundleError> {
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok((name, bytes))
    }

    /// Deploys `sales-by-product` 1.0.0 into `drop_dir`.
    pub fn deploy_sales(&self, drop_dir: &Path) -> Result<PathBuf, BundleError> {
        let (name, bytes) = Self::payload(&self.sales_by_product)?;
        sales_by_product(Version::new(1, 0, 0)).deploy(drop_dir, &name, &bytes)
    }

    /// Deploys the given `price-rounding-fix` version into `drop_dir`.
    pub fn deploy_fix(&self, drop_dir: &Path, version: Version) -> Result<PathBuf, BundleError> {
        let (name, bytes) = Self::payload(&self.price_rounding_fix)?;
        price_rounding_fix(version).deploy(drop_dir, &name, &bytes)
    }

    /// Writes `sales-by-product` 1.0.0 as a standalone bundle directory.
    pub fn pack_sales(&self, out: &Path) -> Result<PathBuf, BundleError> {
        let (name, bytes) = Self::payload(&self.sales_by_product)?;
        sales_by_product(Version::new(1, 0, 0)).write(out, &name, &bytes)?;
        Ok(out.to_path_buf())
    }

    /// Writes a `price-rounding-fix` version as a standalone bundle
    /// directory.
    pub fn pack_fix(&self, out: &Path, version: Version) -> Result<PathBuf, BundleError> {
        let (name, bytes) = Self::payload(&self.price_rounding_fix)?;
        price_rounding_fix(version).write(out, &name, &bytes)?;
        Ok(out.to_path_buf())
    }
}
