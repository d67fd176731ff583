use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

/// Role of a component in a dependency graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerTag {
    Ui,
    Business,
    Data,
    Shared,
    Pipeline,
}

impl LayerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Ui => "ui",
            LayerTag::Business => "business",
            LayerTag::Data => "data",
            LayerTag::Shared => "shared",
            LayerTag::Pipeline => "pipeline",
        }
    }
}

impl FromStr for LayerTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ui" => LayerTag::Ui,
            "business" => LayerTag::Business,
            "data" => LayerTag::Data,
            "shared" => LayerTag::Shared,
            "pipeline" => LayerTag::Pipeline,
            other => return Err(format!("unknown layer `{other}`")),
        })
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("component `{0}` declared twice")]
    DuplicateNode(String),
    #[error("edge {from} -> {to} names an undeclared component")]
    DanglingEdge { from: String, to: String },
    #[error("dependency cycle through {}", .0.join(", "))]
    Cycle(Vec<String>),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
}

/// Acyclic depends-on graph over named components.
///
/// An edge `a -> b` reads "a depends on b".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    nodes: BTreeMap<String, LayerTag>,
    edges: BTreeSet<(String, String)>,
}

impl DependencyGraph {
    /// Validates and builds a graph. Duplicate edges collapse.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = (String, LayerTag)>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut graph = DependencyGraph::default();
        for (id, layer) in nodes {
            if graph.nodes.insert(id.clone(), layer).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
        }
        for (from, to) in edges {
            if !graph.nodes.contains_key(&from) || !graph.nodes.contains_key(&to) {
                return Err(GraphError::DanglingEdge { from, to });
            }
            graph.edges.insert((from, to));
        }
        graph.check_acyclic()?;
        Ok(graph)
    }

    /// Parses `node <id> <layer>` and `edge <from> <to>` lines; `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| GraphError::Syntax {
                line: idx + 1,
                reason,
            };
            match line.split_whitespace().collect::<Vec<_>>()[..] {
                ["node", id, layer] => nodes.push((id.to_owned(), layer.parse().map_err(syntax)?)),
                ["edge", from, to] => edges.push((from.to_owned(), to.to_owned())),
                _ => {
                    return Err(syntax(format!(
                        "expected `node <id> <layer>` or `edge <from> <to>`, got `{line}`"
                    )))
                }
            }
        }
        Self::new(nodes, edges)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, LayerTag)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn layer(&self, id: &str) -> Option<LayerTag> {
        self.nodes.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Kahn's algorithm; reports the nodes left on a cycle.
    fn check_acyclic(&self) -> Result<(), GraphError> {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to.as_str()).expect("validated endpoint") += 1;
        }
        let mut ready: VecDeque<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut removed = 0;
        while let Some(n) = ready.pop_front() {
            removed += 1;
            for (from, to) in &self.edges {
                if from == n {
                    let d = indegree.get_mut(to.as_str()).expect("validated endpoint");
                    *d -= 1;
                    if *d == 0 {
                        ready.push_back(to);
                    }
                }
            }
        }
        if removed == self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::Cycle(
                indegree
                    .into_iter()
                    .filter(|(_, d)| *d > 0)
                    .map(|(k, _)| k.to_owned())
                    .collect(),
            ))
        }
    }

    /// Components that must be rebuilt when `changed` changes: `changed`
    /// plus everything that depends on it, directly or transitively.
    pub fn rebuild_closure(&self, changed: &str) -> Result<BTreeSet<String>, GraphError> {
        if !self.contains(changed) {
            return Err(GraphError::UnknownComponent(changed.to_owned()));
        }
        let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (from, to) in &self.edges {
            dependents.entry(to).or_default().push(from);
        }
        let mut seen = BTreeSet::from([changed.to_owned()]);
        let mut queue = VecDeque::from([changed]);
        while let Some(n) = queue.pop_front() {
            for d in dependents.get(n).into_iter().flatten() {
                if seen.insert((*d).to_owned()) {
                    queue.push_back(d);
                }
            }
        }
        Ok(seen)
    }
}

impl fmt::Display for DependencyGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, layer) in &self.nodes {
            writeln!(f, "node {id} {layer}")?;
        }
        for (from, to) in &self.edges {
            writeln!(f, "edge {from} {to}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown unit `{0}`")]
pub struct UnknownUnit(pub String);

/// What a change costs when the changed code lives in one self-contained
/// unit: the unit alone.
pub fn scpa_closure<'a>(
    unit: &str,
    known_units: impl IntoIterator<Item = &'a str>,
) -> Result<BTreeSet<String>, UnknownUnit> {
    if known_units.into_iter().any(|u| u == unit) {
        Ok(BTreeSet::from([unit.to_owned()]))
    } else {
        Err(UnknownUnit(unit.to_owned()))
    }
}

/// Layered closure next to the single-unit closure for the same change.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureComparison {
    pub changed: String,
    pub layered: BTreeSet<String>,
    pub scpa: BTreeSet<String>,
}

impl ClosureComparison {
    pub fn new(graph: &DependencyGraph, changed: &str, unit: &str) -> Result<Self, GraphError> {
        Ok(Self {
            changed: changed.to_owned(),
            layered: graph.rebuild_closure(changed)?,
            scpa: BTreeSet::from([unit.to_owned()]),
        })
    }

    /// Fraction of layered rebuild work avoided, in percent.
    pub fn reduction_percent(&self) -> f64 {
        (1.0 - self.scpa.len() as f64 / self.layered.len() as f64) * 100.0
    }
}

impl fmt::Display for ClosureComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "changed: {}", self.changed)?;
        writeln!(f, "layered rebuild closure ({}):", self.layered.len())?;
        for c in &self.layered {
            writeln!(f, "  {c}")?;
        }
        writeln!(f, "pipeline-unit closure ({}):", self.scpa.len())?;
        for c in &self.scpa {
            writeln!(f, "  {c}")?;
        }
        writeln!(
            f,
            "closure size {} vs {}: {:.2}% less to rebuild",
            self.layered.len(),
            self.scpa.len(),
            super::round_half_up_2dp(self.reduction_percent())
        )
    }
}
