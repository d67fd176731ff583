use std::fmt;

use semver::Version;

/// Lifecycle of one unit version.
///
/// `Discovered → Validated → Active → Draining → Retired`, and any state may
/// move to `Failed`, which is terminal for that version's lifecycle.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UnitState {
    Discovered,
    Validated,
    Active,
    Draining,
    Retired,
    Failed(String),
}

impl UnitState {
    pub fn name(&self) -> &'static str {
        match self {
            UnitState::Discovered => "discovered",
            UnitState::Validated => "validated",
            UnitState::Active => "active",
            UnitState::Draining => "draining",
            UnitState::Retired => "retired",
            UnitState::Failed(_) => "failed",
        }
    }

    pub fn can_transition_to(&self, to: &UnitState) -> bool {
        use UnitState::*;
        match (self, to) {
            (Failed(_), _) => false,
            (_, Failed(_)) => true,
            (Discovered, Validated)
            | (Validated, Active)
            | (Active, Draining)
            | (Draining, Retired) => true,
            _ => false,
        }
    }
}

impl fmt::Display for UnitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitState::Failed(reason) => write!(f, "failed({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

/// One recorded state change.
///
/// `generation` distinguishes successive lifecycles of the same version:
/// a retired version that is activated again starts over at `Discovered`
/// under a fresh generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub unit: String,
    pub version: Version,
    pub generation: u64,
    pub from: Option<UnitState>,
    pub to: UnitState,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_chain() {
        use UnitState::*;
        let chain = [Discovered, Validated, Active, Draining, Retired];
        for w in chain.windows(2) {
            assert!(w[0].can_transition_to(&w[1]));
        }
        for s in &chain {
            assert!(s.can_transition_to(&Failed("x".into())));
        }
        assert!(!Failed("x".into()).can_transition_to(&Discovered));
        assert!(!Failed("x".into()).can_transition_to(&Failed("y".into())));
        assert!(!Retired.can_transition_to(&Active));
        assert!(!Validated.can_transition_to(&Draining));
        assert!(!Active.can_transition_to(&Validated));
    }
}
