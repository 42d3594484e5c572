//! Labels: the (complexity, times, constraint name) triple carried by every
//! sublicense and CP, and their recomputation after execution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocate::rank_kind;
use crate::constraint::{AgentState, Constraint, ConstraintKind, ConstraintState, NodeState};
use crate::model::{Cp, Permission, SubLicense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Complexity {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Times {
    Once,
    Many,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Label {
    pub complexity: Complexity,
    pub times: Times,
    pub constraint: ConstraintKind,
}

impl Label {
    pub fn new(complexity: Complexity, times: Times, constraint: ConstraintKind) -> Self {
        Label {
            complexity,
            times,
            constraint,
        }
    }

    /// The shape the proposed allocator steers away from.
    pub fn is_once_complex(&self) -> bool {
        self.times == Times::Once && self.complexity == Complexity::Complex
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}×{:?}×{}",
            self.complexity, self.times, self.constraint
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed label `{0}`")]
pub struct LabelParseError(String);

impl FromStr for Label {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || LabelParseError(s.to_string());
        let normalized = s.replace(" x ", "×");
        let parts: Vec<&str> = normalized.split(['×', '*']).map(str::trim).collect();
        let [c, t, k] = parts.as_slice() else {
            return Err(err());
        };
        let complexity = match c.to_ascii_lowercase().as_str() {
            "simple" => Complexity::Simple,
            "complex" => Complexity::Complex,
            _ => return Err(err()),
        };
        let times = match t.to_ascii_lowercase().as_str() {
            "once" => Times::Once,
            "many" => Times::Many,
            _ => return Err(err()),
        };
        let constraint = ConstraintKind::from_name(k).ok_or_else(err)?;
        Ok(Label::new(complexity, times, constraint))
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for Label {
    type Error = LabelParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Best-ranked constraint present; `True` when there is none.
pub fn characteristic(constraints: &[Constraint]) -> ConstraintKind {
    constraints
        .iter()
        .map(Constraint::kind)
        .filter(|k| *k != ConstraintKind::True)
        .min_by_key(|k| rank_kind(*k))
        .unwrap_or(ConstraintKind::True)
}

/// `Once` iff a live counter has exactly one use left. Timed counts are
/// taken at their worst case, as if the next use were long enough to count.
pub fn times_of(constraints: &[Constraint], states: &[ConstraintState]) -> Times {
    let last_use = constraints.iter().zip(states).any(|(c, st)| {
        matches!(c, Constraint::Count { .. } | Constraint::TimedCount { .. })
            && !st.depleted
            && st.remaining == Some(1)
    });
    if last_use {
        Times::Once
    } else {
        Times::Many
    }
}

fn complexity_of(permission_occurrences: usize) -> Complexity {
    if permission_occurrences <= 1 {
        Complexity::Simple
    } else {
        Complexity::Complex
    }
}

pub fn label_cp(cp: &Cp, states: &[ConstraintState]) -> Label {
    Label::new(
        complexity_of(cp.permissions.len()),
        times_of(&cp.constraints, states),
        characteristic(&cp.constraints),
    )
}

/// A sublicense is `Simple` when it still grants a single permission
/// occurrence: permissions of depleted CPs no longer count.
pub fn label_sublicense(sl: &SubLicense, states: &[ConstraintState], cps: &[NodeState]) -> Label {
    let live: usize = sl
        .cps
        .iter()
        .zip(cps)
        .filter(|(_, node)| !node.depleted)
        .map(|(cp, _)| cp.permissions.len())
        .sum();
    Label::new(
        complexity_of(live),
        times_of(&sl.constraints, states),
        characteristic(&sl.constraints),
    )
}

pub(crate) fn initial_cp_label(constraints: &[Constraint], permissions: &[Permission]) -> Label {
    let states: Vec<_> = constraints.iter().map(Constraint::initial_state).collect();
    Label::new(
        complexity_of(permissions.len()),
        times_of(constraints, &states),
        characteristic(constraints),
    )
}

pub(crate) fn initial_sublicense_label(constraints: &[Constraint], cps: &[Cp]) -> Label {
    let states: Vec<_> = constraints.iter().map(Constraint::initial_state).collect();
    Label::new(
        complexity_of(cps.iter().map(|cp| cp.permissions.len()).sum()),
        times_of(constraints, &states),
        characteristic(constraints),
    )
}

/// Recomputes the live labels of every node of `license`. Depleted nodes
/// keep the label they had when they were spent.
pub fn relabel_after_execution(mut state: AgentState, license: usize) -> AgentState {
    let licenses = state.shared_licenses();
    let lic = licenses.license(license);
    for (s, sl) in lic.sublicenses.iter().enumerate() {
        let sub = state.sub_state_mut(license, s);
        for (cp, node) in sl.cps.iter().zip(sub.cps.iter_mut()) {
            if !node.depleted {
                node.label = label_cp(cp, &node.constraints);
            }
        }
        if !sub.node.depleted {
            sub.node.label = label_sublicense(sl, &sub.node.constraints, &sub.cps);
        }
    }
    state
}
