//! Command-line front end.
//!
//! Commands act on the drop folder and on files; a running host picks up
//! drop-folder changes on its next scan. Exit codes: 0 success, 1
//! operational error, 2 usage error. Human output goes to stdout,
//! machine-readable diagnostic lines to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use semver::Version;

use crate::bundle::{install, BundleSpec, DeployOutcome};
use crate::chain::ErrorPolicy;
use crate::contract::{parse_plain_version, Layer};
use crate::demo::{self, DemoApp};
use crate::host::{Host, HostConfig};
use crate::impact::{aggregate_metrics, load_metrics_table, ClosureComparison, DependencyGraph};
use crate::registry::{pin_previous, resolve_active, scan, set_disabled, ScanReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "scpa-host", version, about = "Drop-folder pipeline unit host")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start a host on a drop folder and keep it running.
    Run {
        #[arg(long)]
        drop_dir: Option<PathBuf>,
        /// Host configuration file (`key: value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run the products/sales demo app against the host.
        #[arg(long)]
        demo: bool,
        /// Demo fixtures directory; defaults to a seeded copy under the
        /// drop folder.
        #[arg(long, requires = "demo")]
        demo_data: Option<PathBuf>,
        #[arg(long)]
        scan_interval_ms: Option<u64>,
        #[arg(long)]
        error_policy: Option<ErrorPolicy>,
        #[arg(long, hide = true)]
        exit_after_ms: Option<u64>,
    },
    /// List unit versions in a drop folder.
    List {
        #[arg(long)]
        drop_dir: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Like `list`, with a summary line.
    Status {
        #[arg(long)]
        drop_dir: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Verify a bundle directory and copy it into the drop folder.
    Deploy {
        bundle: PathBuf,
        #[arg(long)]
        drop_dir: PathBuf,
    },
    /// Switch a unit off.
    Disable {
        name: String,
        #[arg(long)]
        drop_dir: PathBuf,
    },
    /// Switch a unit back on.
    Enable {
        name: String,
        #[arg(long)]
        drop_dir: PathBuf,
    },
    /// Pin the version below the one currently selected.
    Rollback {
        name: String,
        #[arg(long)]
        drop_dir: PathBuf,
    },
    /// Rebuild closure of a change in a layered dependency graph.
    Impact {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        changed: String,
        /// Unit that would carry the same change; defaults to the
        /// changed component's id.
        #[arg(long)]
        unit: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Compare release metrics before and after.
    PaperMetrics {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        treatment: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Write a bundle directory from a payload file.
    Pack {
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = parse_plain_version)]
        version: Version,
        #[arg(long, default_value_t = 100)]
        priority: u32,
        #[arg(long)]
        non_reentrant: bool,
        /// `layer:extension.point:handler`, repeatable.
        #[arg(long = "bind", required = true, value_parser = parse_binding)]
        bindings: Vec<(Layer, String, String)>,
        #[arg(long)]
        payload: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_binding(s: &str) -> Result<(Layer, String, String), String> {
    let mut parts = s.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(layer), Some(ep), Some(handler)) => {
            Ok((layer.parse()?, ep.to_owned(), handler.to_owned()))
        }
        _ => Err(format!("expected layer:extension.point:handler, got `{s}`")),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Operational(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

enum Failure {
    Usage(String),
    Operational(String),
}

fn op<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Operational(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Operational(format!("{}: {e}", path.display())))
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run {
            drop_dir,
            config,
            demo,
            demo_data,
            scan_interval_ms,
            error_policy,
            exit_after_ms,
        } => {
            let mut cfg = match (&config, &drop_dir) {
                (Some(path), _) => HostConfig::load(path).map_err(op)?,
                (None, Some(dir)) => HostConfig::new(dir),
                (None, None) => {
                    return Err(Failure::Usage("`run` needs --drop-dir or --config".into()))
                }
            };
            if let Some(dir) = drop_dir {
                cfg.drop_dir = dir;
            }
            if let Some(ms) = scan_interval_ms {
                cfg.scan_interval = Duration::from_millis(ms);
            }
            if let Some(policy) = error_policy {
                cfg.error_policy = policy;
            } else if demo && config.is_none() {
                cfg.error_policy = ErrorPolicy::FailOpen;
            }
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            run_host(
                cfg,
                demo.then_some(demo_data),
                exit_after_ms.map(Duration::from_millis),
                out,
            )
        }
        Command::List { drop_dir, format } => list(&drop_dir, format, false, out, err),
        Command::Status { drop_dir, format } => list(&drop_dir, format, true, out, err),
        Command::Deploy { bundle, drop_dir } => {
            require_dir(&drop_dir)?;
            match install(&bundle, &drop_dir).map_err(op)? {
                DeployOutcome::Deployed(p) => writeln!(out, "deployed {}", p.display()),
                DeployOutcome::AlreadyPresent(p) => {
                    writeln!(out, "already deployed {} (no change)", p.display())
                }
            }
            .map_err(op)
        }
        Command::Disable { name, drop_dir } => {
            require_dir(&drop_dir)?;
            let changed = set_disabled(&drop_dir, &name, true).map_err(op)?;
            writeln!(
                out,
                "{name} {}",
                if changed {
                    "disabled"
                } else {
                    "already disabled"
                }
            )
            .map_err(op)
        }
        Command::Enable { name, drop_dir } => {
            require_dir(&drop_dir)?;
            let changed = set_disabled(&drop_dir, &name, false).map_err(op)?;
            writeln!(
                out,
                "{name} {}",
                if changed {
                    "enabled"
                } else {
                    "already enabled"
                }
            )
            .map_err(op)
        }
        Command::Rollback { name, drop_dir } => {
            require_dir(&drop_dir)?;
            let (from, to) = pin_previous(&drop_dir, &name).map_err(op)?;
            writeln!(out, "{name} pinned to {to} (was {from})").map_err(op)
        }
        Command::Impact {
            graph,
            changed,
            unit,
            format,
        } => {
            let g = DependencyGraph::parse(&read(&graph)?).map_err(op)?;
            let unit = unit.unwrap_or_else(|| changed.clone());
            let cmp = ClosureComparison::new(&g, &changed, &unit).map_err(op)?;
            match format {
                Format::Text => write!(out, "{cmp}"),
                Format::Csv => {
                    let mut text = String::from("closure,component\n");
                    for c in &cmp.layered {
                        text.push_str(&format!("layered,{c}\n"));
                    }
                    for c in &cmp.scpa {
                        text.push_str(&format!("unit,{c}\n"));
                    }
                    write!(out, "{text}")
                }
            }
            .map_err(op)
        }
        Command::PaperMetrics {
            baseline,
            treatment,
            format,
        } => {
            let parse = |p: &Path| -> Result<_, Failure> {
                load_metrics_table(&read(p)?)
                    .map_err(|e| Failure::Operational(format!("{}: {e}", p.display())))
            };
            let report = aggregate_metrics(&parse(&baseline)?, &parse(&treatment)?).map_err(op)?;
            match format {
                Format::Text => write!(out, "{}", report.to_text()),
                Format::Csv => write!(out, "{}", report.to_csv()),
            }
            .map_err(op)
        }
        Command::Pack {
            name,
            version,
            priority,
            non_reentrant,
            bindings,
            payload,
            out: out_dir,
        } => {
            let bytes = fs::read(&payload)
                .map_err(|e| Failure::Operational(format!("{}: {e}", payload.display())))?;
            let file = payload
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| Failure::Usage("payload must name a file".into()))?;
            let mut spec = BundleSpec::new(name, version)
                .priority(priority)
                .reentrant(!non_reentrant);
            for (layer, ep, handler) in &bindings {
                spec = spec.binding(*layer, ep, handler);
            }
            let manifest = spec.write(&out_dir, &file, &bytes).map_err(op)?;
            writeln!(out, "packed {} into {}", manifest.id(), out_dir.display()).map_err(op)
        }
    }
}

fn require_dir(dir: &Path) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::Operational(format!(
            "drop directory {} is unreadable: not a directory",
            dir.display()
        )))
    }
}

struct ListingRow {
    unit: String,
    version: Version,
    active: bool,
    pinned: bool,
    disabled: bool,
    priority: u32,
    extension_points: String,
}

/// What a host starting on this folder would do, without loading anything.
fn listing(report: &ScanReport) -> Vec<ListingRow> {
    let mut rows = Vec::new();
    for (name, control) in &report.controls {
        let versions = report.versions(name);
        let selected = if control.disabled {
            None
        } else {
            resolve_active(name, &versions, control.pin.as_ref()).ok()
        };
        for v in versions {
            let d = report.discovery(name, &v).expect("listed version");
            let eps: Vec<String> = d
                .manifest
                .bindings()
                .iter()
                .map(|b| b.extension_point.clone())
                .collect();
            rows.push(ListingRow {
                unit: name.clone(),
                active: selected.as_ref() == Some(&v),
                pinned: control.pin.as_ref() == Some(&v),
                disabled: control.disabled,
                priority: d.manifest.priority(),
                extension_points: eps.join(" "),
                version: v,
            });
        }
    }
    rows
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn list(
    drop_dir: &Path,
    format: Format,
    summary: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let report = scan(drop_dir).map_err(op)?;
    let rows = listing(&report);
    for r in &report.rejects {
        let _ = writeln!(
            err,
            "REJECT {} {} {}",
            r.path.display(),
            r.code.as_str(),
            r.detail.replace('\n', " ")
        );
    }
    let text = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| op(e);
            w.write_record([
                "unit",
                "version",
                "active",
                "pinned",
                "disabled",
                "priority",
                "extension_points",
            ])
            .map_err(io)?;
            for r in &rows {
                w.write_record([
                    r.unit.clone(),
                    r.version.to_string(),
                    yes_no(r.active).into(),
                    yes_no(r.pinned).into(),
                    yes_no(r.disabled).into(),
                    r.priority.to_string(),
                    r.extension_points.clone(),
                ])
                .map_err(io)?;
            }
            String::from_utf8(w.into_inner().map_err(op)?).map_err(op)?
        }
        Format::Text => {
            let columns: Vec<String> = [
                "unit",
                "version",
                "active",
                "pinned",
                "disabled",
                "priority",
                "extension_points",
            ]
            .into_iter()
            .map(String::from)
            .collect();
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.unit.clone(),
                        r.version.to_string(),
                        yes_no(r.active).into(),
                        yes_no(r.pinned).into(),
                        yes_no(r.disabled).into(),
                        r.priority.to_string(),
                        r.extension_points.clone(),
                    ]
                })
                .collect();
            let mut text = demo::render_table(&columns, &cells);
            if !report.rejects.is_empty() {
                text.push_str("\nrejected:\n");
                for r in &report.rejects {
                    text.push_str(&format!(
                        "  {}  {}  {}\n",
                        r.path.display(),
                        r.code.as_str(),
                        r.detail.replace('\n', " ")
                    ));
                }
            }
            if summary {
                let active = rows.iter().filter(|r| r.active).count();
                text = format!(
                    "drop {}: {} unit(s), {} version(s), {} active, {} rejected\n{text}",
                    drop_dir.display(),
                    report.controls.len(),
                    rows.len(),
                    active,
                    report.rejects.len()
                );
            }
            text
        }
    };
    write!(out, "{text}").map_err(op)
}

fn run_host(
    config: HostConfig,
    demo_data: Option<Option<PathBuf>>,
    exit_after: Option<Duration>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let interval = config.scan_interval;
    let host = Host::start(config).map_err(op)?;
    let app = match demo_data {
        None => None,
        Some(dir) => {
            let dir = match dir {
                Some(d) => d,
                None => {
                    let d = host.drop_dir().join(".scpa-data").join("demo-app");
                    demo::seed(&d).map_err(op)?;
                    d
                }
            };
            Some(DemoApp::open(dir).map_err(op)?)
        }
    };
    let _ = writeln!(
        out,
        "host running on {} at epoch {}",
        host.drop_dir().display(),
        host.epoch()
    );
    let started = Instant::now();
    let mut shown_epoch = None;
    loop {
        if let Some(app) = &app {
            let epoch = host.epoch();
            if shown_epoch != Some(epoch) {
                let _ = write!(out, "\n[epoch {epoch}]\n{}", app.render(&host));
                let _ = out.flush();
                shown_epoch = Some(epoch);
            }
        }
        if exit_after.is_some_and(|limit| started.elapsed() >= limit) {
            break;
        }
        std::thread::sleep(interval.min(Duration::from_millis(100)));
    }
    host.shutdown();
    Ok(())
}

/// Entry point for the binary: real arguments, real stdio.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    // Unlocked handles: the watcher thread writes diagnostics to stderr too.
    run(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}
