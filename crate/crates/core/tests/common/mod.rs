//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use scpa_host::contract::{ExecutionRecord, Outcome, Version};
use scpa_host::demo::samples::SampleLibraries;
use scpa_host::host::Host;
use scpa_host::impact::{DependencyGraph, LayerTag};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("workspace root")
        .to_path_buf()
}

pub fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

/// Sample unit libraries, built once per test binary.
pub fn sample_libraries() -> &'static SampleLibraries {
    static LIBS: OnceLock<SampleLibraries> = OnceLock::new();
    LIBS.get_or_init(|| SampleLibraries::build(&workspace_root()).expect("sample units build"))
}

pub fn v(major: u64, minor: u64, patch: u64) -> Version {
    Version::new(major, minor, patch)
}

/// Polls until `cond` holds or `limit` passes.
pub fn wait_for(limit: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    while start.elapsed() < limit {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    cond()
}

/// Waits for the watcher to move the host past `epoch`.
pub fn wait_past(host: &Host, epoch: u64) -> bool {
    wait_for(Duration::from_secs(5), || host.epoch() > epoch)
}

/// Trace without timings, for structural comparison.
pub fn shape(trace: &[ExecutionRecord]) -> Vec<(String, String, String, Outcome)> {
    trace
        .iter()
        .map(|r| {
            (
                r.unit.clone(),
                r.version.to_string(),
                r.handler.clone(),
                r.outcome,
            )
        })
        .collect()
}

/// Random DAG over `n` nodes: edges only go from a higher index to a lower
/// one, so there are no cycles.
pub fn random_dag(
    rng: &mut impl Rng,
    n: usize,
    density: f64,
) -> (Vec<String>, Vec<(String, String)>) {
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..from {
            if rng.gen_bool(density) {
                edges.push((names[from].clone(), names[to].clone()));
            }
        }
    }
    (names, edges)
}

pub fn build_graph(names: &[String], edges: &[(String, String)]) -> DependencyGraph {
    let layers = [
        LayerTag::Ui,
        LayerTag::Business,
        LayerTag::Data,
        LayerTag::Shared,
    ];
    DependencyGraph::new(
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), layers[i % layers.len()])),
        edges.iter().cloned(),
    )
    .expect("valid dag")
}

/// Everything that must be rebuilt when `changed` changes, by iterating
/// "a depends on something already in the set" to a fixpoint.
pub fn closure_oracle(edges: &[(String, String)], changed: &str) -> BTreeSet<String> {
    let mut set = BTreeSet::from([changed.to_owned()]);
    loop {
        let before = set.len();
        for (from, to) in edges {
            if set.contains(to) {
                set.insert(from.clone());
            }
        }
        if set.len() == before {
            return set;
        }
    }
}

/// Groups parsed TRACE lines by envelope id.
pub fn trace_epochs(lines: &[String]) -> BTreeMap<String, BTreeSet<u64>> {
    let mut out: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for line in lines {
        if let Some(t) = scpa_host::diag::TraceLine::parse(line) {
            out.entry(t.envelope_id).or_default().insert(t.epoch);
        }
    }
    out
}
