use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::contract::reference::Action;
use crate::contract::{
    BehaviorTable, HostContext, Layer, LoadReport, Manifest, Outcome, PipelineUnit, ReferenceUnit,
    UnitError, Value, ValueMap,
};
use crate::registry::{LoadedUnit, RegistrySnapshot};

const EP: &str = "business.sales.compute";

fn loaded(
    name: &str,
    priority: u32,
    reentrant: bool,
    unit: Arc<dyn PipelineUnit>,
) -> Arc<LoadedUnit> {
    let manifest = Manifest::builder(name, Version::new(1, 0, 0))
        .priority(priority)
        .reentrant(reentrant)
        .binding(Layer::Business, EP, "h")
        .payload("unit.behavior", b"")
        .build()
        .unwrap();
    Arc::new(LoadedUnit::new(&manifest, unit))
}

fn table_unit(name: &str, priority: u32, table: BehaviorTable) -> Arc<LoadedUnit> {
    loaded(name, priority, true, Arc::new(ReferenceUnit::new(table)))
}

/// A unit whose single handler pushes its name onto `visited`.
fn stamping(name: &str, priority: u32, directive: ChainDirective) -> Arc<LoadedUnit> {
    table_unit(
        name,
        priority,
        BehaviorTable::new().on(
            "h",
            [Action::Push {
                key: "visited".into(),
                item: name.into(),
            }],
            directive,
        ),
    )
}

fn failing(name: &str, priority: u32) -> Arc<LoadedUnit> {
    table_unit(
        name,
        priority,
        BehaviorTable::new().on("h", [Action::Fail("boom".into())], ChainDirective::Continue),
    )
}

fn snapshot(units: &[Arc<LoadedUnit>]) -> RegistrySnapshot {
    RegistrySnapshot::from_units(7, units).unwrap()
}

fn visited(env: &Envelope) -> Vec<String> {
    env.payload
        .get("visited")
        .and_then(Value::as_list)
        .map(|l| l.iter().map(|v| v.as_text().unwrap().to_owned()).collect())
        .unwrap_or_default()
}

fn run(units: &[Arc<LoadedUnit>], policy: ErrorPolicy) -> Result<Envelope, ChainError> {
    let snap = snapshot(units);
    run_chain(
        &snap,
        EP,
        Envelope::new(EP, ValueMap::new()),
        &ChainOptions::new(policy).with_timeout(None),
    )
}

#[test]
fn order_is_priority_then_name_for_every_insertion_order() {
    let specs = [("beta", 100), ("alpha", 100), ("gamma", 50)];
    // Oracle: sort the plain tuples.
    let mut expected: Vec<(u32, &str)> = specs.iter().map(|(n, p)| (*p, *n)).collect();
    expected.sort();
    let expected: Vec<&str> = expected.into_iter().map(|(_, n)| n).collect();
    assert_eq!(expected, ["gamma", "alpha", "beta"]);

    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        let units: Vec<_> = perm
            .iter()
            .map(|&i| stamping(specs[i].0, specs[i].1, ChainDirective::Continue))
            .collect();
        let env = run(&units, ErrorPolicy::FailClosed).unwrap();
        assert_eq!(visited(&env), expected, "insertion order {perm:?}");
    }
}

#[test]
fn name_ties_compare_bytewise() {
    let units = [
        stamping("b", 1, ChainDirective::Continue),
        stamping("a0", 1, ChainDirective::Continue),
        stamping("a-b", 1, ChainDirective::Continue),
        stamping("a", 1, ChainDirective::Continue),
    ];
    let env = run(&units, ErrorPolicy::FailClosed).unwrap();
    assert_eq!(visited(&env), ["a", "a-b", "a0", "b"]);
}

#[test]
fn stop_ends_the_chain() {
    let units = [
        stamping("a", 1, ChainDirective::Continue),
        stamping("b", 2, ChainDirective::Stop),
        stamping("c", 3, ChainDirective::Continue),
    ];
    let env = run(&units, ErrorPolicy::FailClosed).unwrap();
    assert_eq!(visited(&env), ["a", "b"]);
    assert_eq!(env.trace().len(), 2);
    assert_eq!(env.trace()[1].directive, Some(ChainDirective::Stop));
}

#[test]
fn divert_skips_forward() {
    let units = [
        stamping("a", 1, ChainDirective::Divert("d".into())),
        stamping("b", 2, ChainDirective::Continue),
        stamping("c", 3, ChainDirective::Continue),
        stamping("d", 4, ChainDirective::Continue),
    ];
    let env = run(&units, ErrorPolicy::FailClosed).unwrap();
    assert_eq!(visited(&env), ["a", "d"]);
    let traced: Vec<_> = env.trace().iter().map(|r| r.unit.as_str()).collect();
    assert_eq!(traced, ["a", "d"]);
}

#[test]
fn backward_and_unknown_diverts_are_unit_errors() {
    let back = [
        stamping("a", 1, ChainDirective::Continue),
        stamping("b", 2, ChainDirective::Divert("a".into())),
        stamping("c", 3, ChainDirective::Continue),
    ];
    let err = run(&back, ErrorPolicy::FailClosed).unwrap_err();
    assert_eq!(err.unit, "b");
    assert!(err.message.contains("backwards"), "{}", err.message);

    // Self-divert is backwards too.
    let selfish = [stamping("a", 1, ChainDirective::Divert("a".into()))];
    assert!(run(&selfish, ErrorPolicy::FailClosed).is_err());

    let unknown = [
        stamping("a", 1, ChainDirective::Divert("zzz".into())),
        stamping("b", 2, ChainDirective::Continue),
    ];
    let env = run(&unknown, ErrorPolicy::FailOpen).unwrap();
    // The diverting unit's output is discarded like any failed call.
    assert_eq!(visited(&env), ["b"]);
    assert_eq!(env.trace()[0].outcome, Outcome::Error);
}

#[test]
fn fail_closed_attributes_the_error() {
    let units = [
        stamping("a", 1, ChainDirective::Continue),
        failing("b", 2),
        stamping("c", 3, ChainDirective::Continue),
    ];
    let err = run(&units, ErrorPolicy::FailClosed).unwrap_err();
    assert_eq!(err.unit, "b");
    assert_eq!(err.version, Version::new(1, 0, 0));
    assert_eq!(err.handler, "h");
    assert_eq!(err.message, "boom");
    assert_eq!(err.trace.len(), 2);
    assert_eq!(err.trace[1].outcome, Outcome::Error);
    assert_eq!(err.to_string(), "b@1.0.0 handler h failed: boom");
}

#[test]
fn fail_open_keeps_the_pre_error_envelope() {
    let units = [
        stamping("a", 1, ChainDirective::Continue),
        failing("b", 2),
        stamping("c", 3, ChainDirective::Continue),
    ];
    let env = run(&units, ErrorPolicy::FailOpen).unwrap();
    assert_eq!(visited(&env), ["a", "c"]);
    let outcomes: Vec<_> = env.trace().iter().map(|r| r.outcome).collect();
    assert_eq!(outcomes, [Outcome::Ok, Outcome::Error, Outcome::Ok]);
    assert_eq!(env.trace()[1].error.as_deref(), Some("boom"));
}

#[test]
fn panics_are_contained() {
    let units = [
        table_unit(
            "a",
            1,
            BehaviorTable::new().on(
                "h",
                [Action::Panic("kaput".into())],
                ChainDirective::Continue,
            ),
        ),
        stamping("b", 2, ChainDirective::Continue),
    ];
    let env = run(&units, ErrorPolicy::FailOpen).unwrap();
    assert_eq!(visited(&env), ["b"]);
    assert!(env.trace()[0].error.as_deref().unwrap().contains("kaput"));
    let err = run(&units, ErrorPolicy::FailClosed).unwrap_err();
    assert!(err.message.contains("kaput"));
}

#[test]
fn slow_units_time_out() {
    let units = [
        table_unit(
            "slow",
            1,
            BehaviorTable::new().on(
                "h",
                [Action::Sleep(Duration::from_millis(2000))],
                ChainDirective::Continue,
            ),
        ),
        stamping("b", 2, ChainDirective::Continue),
    ];
    let snap = snapshot(&units);
    let options =
        ChainOptions::new(ErrorPolicy::FailOpen).with_timeout(Some(Duration::from_millis(50)));
    let started = Instant::now();
    let env = run_chain(&snap, EP, Envelope::new(EP, ValueMap::new()), &options).unwrap();
    assert!(started.elapsed() < Duration::from_millis(1500));
    assert_eq!(visited(&env), ["b"]);
    assert!(env.trace()[0]
        .error
        .as_deref()
        .unwrap()
        .contains("timed out"));
}

#[test]
fn empty_route_returns_the_envelope_stamped() {
    let snap = RegistrySnapshot::empty(3);
    let payload = ValueMap::new().with("k", 1i64);
    let env = run_chain(
        &snap,
        EP,
        Envelope::new(EP, payload.clone()),
        &ChainOptions::default(),
    )
    .unwrap();
    assert_eq!(env.payload, payload);
    assert_eq!(env.epoch, 3);
    assert!(env.trace().is_empty());
}

/// A unit that tries to rewrite fields it does not own.
struct Meddler;

impl PipelineUnit for Meddler {
    fn load(&self, _: &HostContext) -> Result<LoadReport, UnitError> {
        Ok(LoadReport::default())
    }

    fn execute(&self, _: &str, mut env: Envelope) -> Result<Envelope, UnitError> {
        env.id = "forged".into();
        env.epoch = 999;
        env.extension_point = "ui.other.render".into();
        env.record(ExecutionRecord::ok(
            "ghost",
            &Version::new(0, 0, 1),
            "x",
            0,
            ChainDirective::Stop,
        ));
        env.payload.insert("touched", true);
        Ok(env)
    }

    fn next(&self, _: &str, _: &Envelope) -> ChainDirective {
        ChainDirective::Continue
    }
}

#[test]
fn units_cannot_rewrite_identity_or_trace() {
    let units = [loaded("meddler", 1, true, Arc::new(Meddler))];
    let snap = snapshot(&units);
    let input = Envelope::new(EP, ValueMap::new());
    let id = input.id.clone();
    let env = run_chain(&snap, EP, input, &ChainOptions::default()).unwrap();
    assert_eq!(env.id, id);
    assert_eq!(env.epoch, 7);
    assert_eq!(env.extension_point, EP);
    assert_eq!(env.trace().len(), 1);
    assert_eq!(env.trace()[0].unit, "meddler");
    assert_eq!(env.payload.get("touched"), Some(&Value::Boolean(true)));
}

/// Counts how many calls are inside `execute` at once.
#[derive(Default)]
struct Overlap {
    inside: AtomicUsize,
    peak: AtomicUsize,
}

impl PipelineUnit for Overlap {
    fn load(&self, _: &HostContext) -> Result<LoadReport, UnitError> {
        Ok(LoadReport::default())
    }

    fn execute(&self, _: &str, env: Envelope) -> Result<Envelope, UnitError> {
        let now = self.inside.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.inside.fetch_sub(1, Ordering::SeqCst);
        Ok(env)
    }

    fn next(&self, _: &str, _: &Envelope) -> ChainDirective {
        ChainDirective::Continue
    }
}

fn peak_concurrency(reentrant: bool) -> usize {
    let unit = Arc::new(Overlap::default());
    let snap = Arc::new(snapshot(&[loaded("o", 1, reentrant, unit.clone())]));
    let threads: Vec<_> = (0..8)
        .map(|_| {
            let snap = snap.clone();
            std::thread::spawn(move || {
                for _ in 0..5 {
                    run_chain(
                        &snap,
                        EP,
                        Envelope::new(EP, ValueMap::new()),
                        &ChainOptions::default(),
                    )
                    .unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    unit.peak.load(Ordering::SeqCst)
}

#[test]
fn non_reentrant_units_are_serialized() {
    assert_eq!(peak_concurrency(false), 1);
    assert!(peak_concurrency(true) > 1);
}

#[test]
fn stats_count_calls_and_errors() {
    let units = [stamping("a", 1, ChainDirective::Continue), failing("b", 2)];
    for _ in 0..3 {
        let _ = run(&units, ErrorPolicy::FailOpen);
    }
    assert_eq!(units[0].stats().dispatches(), 3);
    assert_eq!(units[0].stats().errors(), 0);
    assert_eq!(units[1].stats().dispatches(), 3);
    assert_eq!(units[1].stats().errors(), 3);
    assert_eq!(units[1].stats().in_flight(), 0);
}

#[derive(Debug, Clone)]
enum Behave {
    Continue,
    Stop,
    Divert(usize),
    Fail,
}

fn behave() -> impl Strategy<Value = Behave> {
    prop_oneof![
        4 => Just(Behave::Continue),
        1 => Just(Behave::Stop),
        2 => (0usize..8).prop_map(Behave::Divert),
        1 => Just(Behave::Fail),
    ]
}

fn build_chain(spec: &[(u32, Behave)]) -> Vec<Arc<LoadedUnit>> {
    spec.iter()
        .enumerate()
        .map(|(i, (priority, b))| {
            let name = format!("u{i}");
            match b {
                Behave::Continue => stamping(&name, *priority, ChainDirective::Continue),
                Behave::Stop => stamping(&name, *priority, ChainDirective::Stop),
                Behave::Divert(t) => stamping(
                    &name,
                    *priority,
                    ChainDirective::Divert(format!("u{}", t % spec.len())),
                ),
                Behave::Fail => failing(&name, *priority),
            }
        })
        .collect()
}

/// Step-by-step oracle of the directive rules over the sorted order.
fn oracle(spec: &[(u32, Behave)], policy: ErrorPolicy) -> Result<Vec<String>, String> {
    let mut order: Vec<(u32, String, &Behave)> = spec
        .iter()
        .enumerate()
        .map(|(i, (p, b))| (*p, format!("u{i}"), b))
        .collect();
    order.sort_by(|a, b| (a.0, a.1.as_bytes()).cmp(&(b.0, b.1.as_bytes())));
    let mut visited = Vec::new();
    let mut pos = 0;
    while pos < order.len() {
        let (_, name, b) = &order[pos];
        // None: the call failed. Some(None): end of chain.
        let step: Option<Option<usize>> = match b {
            Behave::Fail => None,
            Behave::Continue => Some(Some(pos + 1)),
            Behave::Stop => Some(None),
            Behave::Divert(t) => {
                let target = format!("u{}", t % spec.len());
                match order.iter().position(|(_, n, _)| *n == target) {
                    Some(i) if i > pos => Some(Some(i)),
                    _ => None,
                }
            }
        };
        match step {
            None if policy == ErrorPolicy::FailClosed => return Err(name.clone()),
            None => pos += 1,
            Some(next) => {
                visited.push(name.clone());
                match next {
                    Some(i) => pos = i,
                    None => break,
                }
            }
        }
    }
    Ok(visited)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chains_match_the_oracle_and_terminate(
        spec in prop::collection::vec((0u32..4, behave()), 0..8),
        open in any::<bool>(),
    ) {
        let policy = if open { ErrorPolicy::FailOpen } else { ErrorPolicy::FailClosed };
        let units = build_chain(&spec);
        let result = run(&units, policy);
        match oracle(&spec, policy) {
            Ok(expected) => {
                let env = result.unwrap();
                prop_assert_eq!(visited(&env), expected);
                // At most one record per handler, in chain order.
                let snap = snapshot(&units);
                let order: Vec<&str> = snap.route(EP).iter().map(|h| h.unit_name()).collect();
                let positions: Vec<usize> = env
                    .trace()
                    .iter()
                    .map(|r| order.iter().position(|n| *n == r.unit).unwrap())
                    .collect();
                prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(env.trace().len() <= spec.len());
            }
            Err(unit) => {
                let err = result.unwrap_err();
                prop_assert_eq!(err.unit, unit);
                prop_assert_eq!(err.trace.last().unwrap().outcome, Outcome::Error);
            }
        }
    }

    #[test]
    fn fail_open_equals_the_chain_without_the_failing_unit(
        spec in prop::collection::vec((0u32..4, prop_oneof![Just(Behave::Continue), Just(Behave::Stop)]), 1..7),
        bad in 0usize..7,
    ) {
        let bad = bad % spec.len();
        let mut with_failure = spec.clone();
        with_failure[bad].1 = Behave::Fail;
        let mut without = build_chain(&with_failure);
        let full = run(&without, ErrorPolicy::FailOpen).unwrap();
        without.remove(bad);
        let reduced = run(&without, ErrorPolicy::FailOpen).unwrap();

        prop_assert_eq!(&full.payload, &reduced.payload);
        let strip = |env: &Envelope| -> Vec<(String, Outcome)> {
            env.trace()
                .iter()
                .filter(|r| r.outcome == Outcome::Ok)
                .map(|r| (r.unit.clone(), r.outcome))
                .collect()
        };
        prop_assert_eq!(strip(&full), strip(&reduced));
    }

    #[test]
    fn presence_sets_the_trace(mask in prop::collection::vec(any::<bool>(), 5)) {
        let all: Vec<_> = (0..5).map(|i| stamping(&format!("u{i}"), i as u32, ChainDirective::Continue)).collect();
        let present: Vec<_> = all.iter().zip(&mask).filter(|(_, m)| **m).map(|(u, _)| u.clone()).collect();
        let env = run(&present, ErrorPolicy::FailClosed).unwrap();
        let expected: Vec<String> = (0..5).filter(|i| mask[*i]).map(|i| format!("u{i}")).collect();
        prop_assert_eq!(visited(&env), expected.clone());
        let traced: Vec<String> = env.trace().iter().map(|r| r.unit.clone()).collect();
        prop_assert_eq!(traced, expected);
    }
}
