//! Table-driven units.
//!
//! A [`ReferenceUnit`] follows a declarative behavior table instead of
//! compiled code. Tables are used as test doubles and can also be shipped
//! as bundle payloads (`*.behavior` files), which lets the drop folder be
//! exercised without building native libraries.
//!
//! Text form, one handler per line:
//!
//! ```text
//! # handler: action[; action]* [=> directive]
//! load: ok
//! compute: append k a; push stamps u1@1.0.0 => continue
//! audit: set checked true => divert reporter
//! broken: fail storage offline
//! ```
//!
//! Actions: `append <key> <text>`, `set <key> <literal>`, `push <key> <text>`,
//! `remove <key>`, `sleep <ms>`, `fail <message>`, `panic <message>`, `noop`.
//! Directives: `continue` (default), `stop`, `divert <unit>`.
//! `load: fail <message>` makes activation fail.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{ChainDirective, Envelope, HostContext, LoadReport, PipelineUnit, UnitError, Value};

/// File extension of behavior-table payloads.
pub const BEHAVIOR_EXTENSION: &str = "behavior";

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Concatenate text onto a text value (missing key starts empty).
    Append {
        key: String,
        text: String,
    },
    Set {
        key: String,
        value: Value,
    },
    /// Push a text item onto a list value (missing key starts empty).
    Push {
        key: String,
        item: String,
    },
    Remove {
        key: String,
    },
    Sleep(Duration),
    Fail(String),
    Panic(String),
    Noop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandlerBehavior {
    pub actions: Vec<Action>,
    pub directive: ChainDirective,
}

impl HandlerBehavior {
    pub fn new(actions: Vec<Action>, directive: ChainDirective) -> Self {
        Self { actions, directive }
    }
}

/// Per-handler behavior plus optional load failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BehaviorTable {
    handlers: BTreeMap<String, HandlerBehavior>,
    load_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("behavior table line {line}: {reason}")]
pub struct BehaviorError {
    pub line: usize,
    pub reason: String,
}

impl BehaviorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handler(mut self, name: impl Into<String>, behavior: HandlerBehavior) -> Self {
        self.handlers.insert(name.into(), behavior);
        self
    }

    /// Shorthand for a handler with actions and a directive.
    pub fn on(
        self,
        name: impl Into<String>,
        actions: impl IntoIterator<Item = Action>,
        directive: ChainDirective,
    ) -> Self {
        self.handler(
            name,
            HandlerBehavior::new(actions.into_iter().collect(), directive),
        )
    }

    pub fn failing_load(mut self, message: impl Into<String>) -> Self {
        self.load_failure = Some(message.into());
        self
    }

    pub fn get(&self, handler: &str) -> Option<&HandlerBehavior> {
        self.handlers.get(handler)
    }

    pub fn handlers(&self) -> impl Iterator<Item = &str> {
        self.handlers.keys().map(String::as_str)
    }

    pub fn parse(text: &str) -> Result<Self, BehaviorError> {
        let mut table = BehaviorTable::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |reason: String| BehaviorError {
                line: line_no,
                reason,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, body) = line
                .split_once(':')
                .ok_or_else(|| err("expected `handler: actions`".into()))?;
            let name = name.trim();
            let body = body.trim();
            if name == "load" {
                match body.split_once(' ') {
                    None if body == "ok" => {}
                    Some(("fail", msg)) => table.load_failure = Some(msg.trim().to_owned()),
                    _ => return Err(err(format!("bad load behavior `{body}`"))),
                }
                continue;
            }
            if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                return Err(err(format!("bad handler name `{name}`")));
            }
            if table.handlers.contains_key(name) {
                return Err(err(format!("handler `{name}` defined twice")));
            }
            let (actions_text, directive_text) = match body.split_once("=>") {
                Some((a, d)) => (a, Some(d.trim())),
                None => (body, None),
            };
            let directive = match directive_text {
                None | Some("continue") => ChainDirective::Continue,
                Some("stop") => ChainDirective::Stop,
                Some(d) => match d.split_whitespace().collect::<Vec<_>>()[..] {
                    ["divert", target] => ChainDirective::Divert(target.to_owned()),
                    _ => return Err(err(format!("bad directive `{d}`"))),
                },
            };
            let actions = actions_text
                .split(';')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(parse_action)
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            table
                .handlers
                .insert(name.to_owned(), HandlerBehavior::new(actions, directive));
        }
        Ok(table)
    }
}

fn parse_action(text: &str) -> Result<Action, String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let rest = |n: usize| tokens[n..].join(" ");
    let action = match tokens[..] {
        ["noop"] => Action::Noop,
        ["append", key, value] => Action::Append {
            key: key.to_owned(),
            text: value.to_owned(),
        },
        ["set", key, value] => Action::Set {
            key: key.to_owned(),
            value: parse_literal(value),
        },
        ["push", key, item] => Action::Push {
            key: key.to_owned(),
            item: item.to_owned(),
        },
        ["remove", key] => Action::Remove {
            key: key.to_owned(),
        },
        ["sleep", ms] => Action::Sleep(Duration::from_millis(
            ms.parse()
                .map_err(|_| format!("bad sleep duration `{ms}`"))?,
        )),
        ["fail", _, ..] => Action::Fail(rest(1)),
        ["panic", _, ..] => Action::Panic(rest(1)),
        _ => return Err(format!("unknown action `{text}`")),
    };
    Ok(action)
}

fn parse_literal(text: &str) -> Value {
    if let Ok(i) = text.parse::<i64>() {
        return Value::Integer(i);
    }
    match text {
        "true" => return Value::Boolean(true),
        "false" => return Value::Boolean(false),
        _ => {}
    }
    if text.contains('.') {
        if let Ok(d) = text.parse::<f64>() {
            return Value::Decimal(d);
        }
    }
    Value::Text(text.to_owned())
}

fn format_literal(value: &Value) -> String {
    match value {
        Value::Decimal(d) if d.fract() == 0.0 && d.is_finite() => format!("{d:.1}"),
        other => other.to_string(),
    }
}

impl fmt::Display for BehaviorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.load_failure {
            Some(msg) => writeln!(f, "load: fail {msg}")?,
            None => writeln!(f, "load: ok")?,
        }
        for (name, behavior) in &self.handlers {
            let actions: Vec<String> = behavior
                .actions
                .iter()
                .map(|a| match a {
                    Action::Append { key, text } => format!("append {key} {text}"),
                    Action::Set { key, value } => format!("set {key} {}", format_literal(value)),
                    Action::Push { key, item } => format!("push {key} {item}"),
                    Action::Remove { key } => format!("remove {key}"),
                    Action::Sleep(d) => format!("sleep {}", d.as_millis()),
                    Action::Fail(m) => format!("fail {m}"),
                    Action::Panic(m) => format!("panic {m}"),
                    Action::Noop => "noop".to_owned(),
                })
                .collect();
            let directive = match &behavior.directive {
                ChainDirective::Continue => "continue".to_owned(),
                ChainDirective::Stop => "stop".to_owned(),
                ChainDirective::Divert(t) => format!("divert {t}"),
            };
            writeln!(f, "{name}: {} => {directive}", actions.join("; "))?;
        }
        Ok(())
    }
}

/// One observed host call on a recording [`ReferenceUnit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Load,
    Execute(String),
    Next(String),
    Unload,
}

/// Shared log of calls made on a recording unit.
pub type CallLog = Arc<Mutex<Vec<Call>>>;

/// In-memory [`PipelineUnit`] driven by a [`BehaviorTable`].
#[derive(Debug)]
pub struct ReferenceUnit {
    table: BehaviorTable,
    calls: Option<CallLog>,
}

impl ReferenceUnit {
    pub fn new(table: BehaviorTable) -> Self {
        Self { table, calls: None }
    }

    /// A unit that records every host call into the returned log.
    pub fn recording(table: BehaviorTable) -> (Self, CallLog) {
        let log = CallLog::default();
        let unit = Self {
            table,
            calls: Some(log.clone()),
        };
        (unit, log)
    }

    pub fn table(&self) -> &BehaviorTable {
        &self.table
    }

    fn note(&self, call: Call) {
        if let Some(log) = &self.calls {
            log.lock().unwrap_or_else(|e| e.into_inner()).push(call);
        }
    }
}

impl PipelineUnit for ReferenceUnit {
    fn load(&self, _ctx: &HostContext) -> Result<LoadReport, UnitError> {
        self.note(Call::Load);
        if let Some(msg) = &self.table.load_failure {
            return Err(UnitError::new(msg.clone()));
        }
        Ok(LoadReport {
            handlers: self.table.handlers().map(str::to_owned).collect(),
            notes: None,
        })
    }

    fn execute(&self, handler: &str, mut env: Envelope) -> Result<Envelope, UnitError> {
        self.note(Call::Execute(handler.to_owned()));
        let behavior = self
            .table
            .get(handler)
            .ok_or_else(|| UnitError::new(format!("no handler `{handler}`")))?;
        for action in &behavior.actions {
            match action {
                Action::Append { key, text } => {
                    let mut current = match env.payload.get(key) {
                        Some(Value::Text(s)) => s.clone(),
                        None => String::new(),
                        Some(other) => {
                            return Err(UnitError::new(format!(
                                "cannot append to non-text `{key}` ({other})"
                            )))
                        }
                    };
                    current.push_str(text);
                    env.payload.insert(key.clone(), current);
                }
                Action::Set { key, value } => {
                    env.payload.insert(key.clone(), value.clone());
                }
                Action::Push { key, item } => {
                    let mut items = match env.payload.get(key) {
                        Some(Value::List(l)) => l.clone(),
                        None => Vec::new(),
                        Some(other) => {
                            return Err(UnitError::new(format!(
                                "cannot push to non-list `{key}` ({other})"
                            )))
                        }
                    };
                    items.push(Value::Text(item.clone()));
                    env.payload.insert(key.clone(), items);
                }
                Action::Remove { key } => {
                    env.payload.remove(key);
                }
                Action::Sleep(d) => std::thread::sleep(*d),
                Action::Fail(msg) => return Err(UnitError::new(msg.clone())),
                Action::Panic(msg) => panic!("{msg}"),
                Action::Noop => {}
            }
        }
        Ok(env)
    }

    fn next(&self, handler: &str, _env: &Envelope) -> ChainDirective {
        self.note(Call::Next(handler.to_owned()));
        self.table
            .get(handler)
            .map(|b| b.directive.clone())
            .unwrap_or(ChainDirective::Continue)
    }

    fn unload(&self) {
        self.note(Call::Unload);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ValueMap;

    fn ctx() -> HostContext {
        HostContext {
            host_version: "test".into(),
            unit_name: "u".into(),
            config: ValueMap::new(),
            data_dir: std::env::temp_dir(),
        }
    }

    #[test]
    fn append_then_continue() {
        let unit = ReferenceUnit::new(BehaviorTable::new().on(
            "h",
            [Action::Append {
                key: "k".into(),
                text: "a".into(),
            }],
            ChainDirective::Continue,
        ));
        unit.load(&ctx()).unwrap();
        let env = Envelope::new("x.y", ValueMap::new().with("k", ""));
        let out = unit.execute("h", env).unwrap();
        assert_eq!(out.payload.get("k"), Some(&Value::Text("a".into())));
        assert_eq!(unit.next("h", &out), ChainDirective::Continue);
    }

    #[test]
    fn fail_reports_message_and_leaves_input() {
        let unit = ReferenceUnit::new(BehaviorTable::new().on(
            "h",
            [Action::Fail("m".into())],
            ChainDirective::Continue,
        ));
        let env = Envelope::new("x.y", ValueMap::new().with("k", "orig"));
        let before = env.clone();
        let err = unit.execute("h", env.clone()).unwrap_err();
        assert_eq!(err.message, "m");
        assert_eq!(env, before);
    }

    #[test]
    fn parse_text_form() {
        let text = "# demo\nload: ok\n\
                    a: append k a; push stamps u@1.0.0 => continue\n\
                    b: set n 3; set d 2.5; set f true; set t word => stop\n\
                    c: sleep 5; noop => divert other\n\
                    d: fail disk is full\n";
        let t = BehaviorTable::parse(text).unwrap();
        assert_eq!(t.get("a").unwrap().actions.len(), 2);
        assert_eq!(t.get("b").unwrap().directive, ChainDirective::Stop);
        assert_eq!(
            t.get("b").unwrap().actions,
            vec![
                Action::Set {
                    key: "n".into(),
                    value: Value::Integer(3)
                },
                Action::Set {
                    key: "d".into(),
                    value: Value::Decimal(2.5)
                },
                Action::Set {
                    key: "f".into(),
                    value: Value::Boolean(true)
                },
                Action::Set {
                    key: "t".into(),
                    value: Value::Text("word".into())
                },
            ]
        );
        assert_eq!(
            t.get("c").unwrap().directive,
            ChainDirective::Divert("other".into())
        );
        assert_eq!(
            t.get("d").unwrap().actions,
            vec![Action::Fail("disk is full".into())]
        );
        assert_eq!(BehaviorTable::parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = BehaviorTable::parse("a: noop\nb: explode now\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(BehaviorTable::parse("a: noop => sideways").is_err());
        assert!(BehaviorTable::parse("load: maybe").is_err());
    }

    #[test]
    fn failing_load() {
        let unit = ReferenceUnit::new(BehaviorTable::parse("load: fail no config").unwrap());
        assert_eq!(unit.load(&ctx()).unwrap_err().message, "no config");
    }

    #[test]
    fn recording_log() {
        let (unit, log) = ReferenceUnit::recording(BehaviorTable::parse("h: noop").unwrap());
        unit.load(&ctx()).unwrap();
        let env = unit
            .execute("h", Envelope::new("x.y", ValueMap::new()))
            .unwrap();
        unit.next("h", &env);
        unit.unload();
        assert_eq!(
            *log.lock().unwrap(),
            vec![
                Call::Load,
                Call::Execute("h".into()),
                Call::Next("h".into()),
                Call::Unload
            ]
        );
    }
}
