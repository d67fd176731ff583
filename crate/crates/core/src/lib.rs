//! Runtime for self-contained pipeline units.
//!
//! A unit is a versioned bundle dropped into a watched folder. Each unit
//! binds handlers to named extension points in the ui, business and data
//! layers of a host application. The host discovers bundles, loads them
//! behind a small `load` / `execute` / `next` contract, and routes every
//! dispatch through an immutable snapshot of the active handlers, so units
//! can be added, upgraded, rolled back or switched off while requests are
//! in flight.
//!
//! * [`contract`]: the unit trait, manifest format and envelope model.
//! * [`registry`]: drop-folder scanning, lifecycle and epoch snapshots.
//! * [`chain`]: ordered execution with error containment and timeouts.
//! * [`host`]: the long-running host with its watcher thread.
//! * [`impact`]: rebuild closures and release-metric aggregation.
//! * [`demo`]: the products/sales sample application.

#![allow(clippy::result_large_err)]

pub mod bundle;
pub mod chain;
pub mod cli;
pub mod contract;
pub mod demo;
pub mod diag;
pub mod fsutil;
pub mod host;
pub mod impact;
pub mod loader;
pub mod registry;
