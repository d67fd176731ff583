use std::collections::BTreeSet;
use std::fmt;

/// Column order of a metrics table.
pub const METRICS_HEADER: [&str; 7] = [
    "project",
    "defects",
    "release",
    "testing",
    "development",
    "deployment",
    "loc",
];

/// Per-project averages over the releases of one study period.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectMetrics {
    pub project: String,
    /// Post-release defects per release.
    pub defects: f64,
    /// Days.
    pub release_time: f64,
    /// Days.
    pub testing_time: f64,
    /// Days.
    pub development_time: f64,
    /// Days.
    pub deployment_time: f64,
    /// Lines per release.
    pub loc_changed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Defects,
    ReleaseTime,
    TestingTime,
    DevelopmentTime,
    DeploymentTime,
    LocChanged,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Defects,
        Metric::ReleaseTime,
        Metric::TestingTime,
        Metric::DevelopmentTime,
        Metric::DeploymentTime,
        Metric::LocChanged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Defects => "defects",
            Metric::ReleaseTime => "release_time",
            Metric::TestingTime => "testing_time",
            Metric::DevelopmentTime => "development_time",
            Metric::DeploymentTime => "deployment_time",
            Metric::LocChanged => "loc_changed",
        }
    }

    pub fn of(self, m: &ProjectMetrics) -> f64 {
        match self {
            Metric::Defects => m.defects,
            Metric::ReleaseTime => m.release_time,
            Metric::TestingTime => m.testing_time,
            Metric::DevelopmentTime => m.development_time,
            Metric::DeploymentTime => m.deployment_time,
            Metric::LocChanged => m.loc_changed,
        }
    }

    /// Percent change reported alongside the original study data, where
    /// one was published.
    pub fn published_change(self) -> Option<f64> {
        match self {
            Metric::Defects => Some(-85.54),
            Metric::ReleaseTime => Some(-42.99),
            Metric::LocChanged => Some(22.58),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("project sets differ: baseline {baseline:?}, treatment {treatment:?}")]
    ProjectMismatch {
        baseline: Vec<String>,
        treatment: Vec<String>,
    },
    #[error("baseline mean of {0} is zero; percent change is undefined")]
    ZeroBaseline(Metric),
    #[error("no projects to aggregate")]
    NoProjects,
}

/// Reads a metrics CSV with header
/// `project,defects,release,testing,development,deployment,loc`.
pub fn load_metrics_table(text: &str) -> Result<Vec<ProjectMetrics>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header_err = |reason: String| MetricsError::BadRow { line: 1, reason };
    let header = reader
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(header_err(format!(
            "header must be `{}`",
            METRICS_HEADER.join(",")
        )));
    }

    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| MetricsError::BadRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| MetricsError::BadRow { line, reason };
        if record.len() != METRICS_HEADER.len() {
            return Err(bad(format!(
                "expected {} cells, found {}",
                METRICS_HEADER.len(),
                record.len()
            )));
        }
        let project = record[0].to_owned();
        if project.is_empty() {
            return Err(bad("empty project id".into()));
        }
        if !seen.insert(project.clone()) {
            return Err(bad(format!("project `{project}` listed twice")));
        }
        let mut values = [0.0; 6];
        for (i, slot) in values.iter_mut().enumerate() {
            let cell = &record[i + 1];
            let column = METRICS_HEADER[i + 1];
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("{column}: `{cell}` is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!(
                    "{column}: `{cell}` must be a finite value >= 0"
                )));
            }
            *slot = v;
        }
        let [defects, release_time, testing_time, development_time, deployment_time, loc_changed] =
            values;
        rows.push(ProjectMetrics {
            project,
            defects,
            release_time,
            testing_time,
            development_time,
            deployment_time,
            loc_changed,
        });
    }
    Ok(rows)
}

/// One row of an [`ImprovementReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricChange {
    pub metric: Metric,
    pub baseline_mean: f64,
    pub treatment_mean: f64,
    /// `(treatment - baseline) / baseline * 100`; negative is a reduction.
    pub percent_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub changes: Vec<MetricChange>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Compares cross-project means metric by metric.
pub fn aggregate_metrics(
    baseline: &[ProjectMetrics],
    treatment: &[ProjectMetrics],
) -> Result<ImprovementReport, MetricsError> {
    let ids = |rows: &[ProjectMetrics]| -> BTreeSet<String> {
        rows.iter().map(|r| r.project.clone()).collect()
    };
    let (b, t) = (ids(baseline), ids(treatment));
    if b != t || b.len() != baseline.len() || t.len() != treatment.len() {
        return Err(MetricsError::ProjectMismatch {
            baseline: baseline.iter().map(|r| r.project.clone()).collect(),
            treatment: treatment.iter().map(|r| r.project.clone()).collect(),
        });
    }
    if baseline.is_empty() {
        return Err(MetricsError::NoProjects);
    }
    let changes = Metric::ALL
        .into_iter()
        .map(|metric| {
            let baseline_mean = mean(baseline.iter().map(|r| metric.of(r)));
            let treatment_mean = mean(treatment.iter().map(|r| metric.of(r)));
            if baseline_mean <= 0.0 {
                return Err(MetricsError::ZeroBaseline(metric));
            }
            Ok(MetricChange {
                metric,
                baseline_mean,
                treatment_mean,
                percent_change: (treatment_mean - baseline_mean) / baseline_mean * 100.0,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ImprovementReport { changes })
}

/// Signed percentage with two decimals and an explicit `+` for increases.
pub fn format_percent(value: f64) -> String {
    let rounded = super::round_half_up_2dp(value);
    if rounded > 0.0 {
        format!("+{rounded:.2}%")
    } else if rounded < 0.0 {
        format!("{rounded:.2}%")
    } else {
        "0.00%".to_owned()
    }
}

/// Published figures further than this from the computed value get a note.
const NOTE_THRESHOLD: f64 = 0.005;

impl ImprovementReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricChange> {
        self.changes.iter().find(|c| c.metric == metric)
    }

    /// Change rounded half-up to two decimals.
    pub fn rounded_change(&self, metric: Metric) -> Option<f64> {
        self.get(metric)
            .map(|c| super::round_half_up_2dp(c.percent_change))
    }

    /// Explanations for metrics whose computed change differs from the
    /// published one.
    pub fn notes(&self) -> Vec<String> {
        self.changes
            .iter()
            .filter_map(|c| {
                let published = c.metric.published_change()?;
                let computed = super::round_half_up_2dp(c.percent_change);
                ((computed - published).abs() > NOTE_THRESHOLD).then(|| {
                    format!(
                        "note: {} computed from the table means is {}; the published figure is {} ({:.2} points apart)",
                        c.metric,
                        format_percent(c.percent_change),
                        format_percent(published),
                        (computed - published).abs()
                    )
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<18} {:>12} {:>12} {:>10} {:>10}\n",
            "metric", "baseline", "treatment", "change", "published"
        );
        for c in &self.changes {
            out.push_str(&format!(
                "{:<18} {:>12.3} {:>12.3} {:>10} {:>10}\n",
                c.metric.name(),
                c.baseline_mean,
                c.treatment_mean,
                format_percent(c.percent_change),
                c.metric
                    .published_change()
                    .map(format_percent)
                    .unwrap_or_else(|| "-".into())
            ));
        }
        for note in self.notes() {
            out.push_str(&note);
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "metric",
            "baseline_mean",
            "treatment_mean",
            "percent_change",
            "published_change",
        ])
        .expect("write to memory");
        for c in &self.changes {
            w.write_record([
                c.metric.name().to_owned(),
                format!("{:.3}", c.baseline_mean),
                format!("{:.3}", c.treatment_mean),
                format!("{:.2}", super::round_half_up_2dp(c.percent_change)),
                c.metric
                    .published_change()
                    .map(|p| format!("{p:.2}"))
                    .unwrap_or_default(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }
}

impl fmt::Display for ImprovementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
