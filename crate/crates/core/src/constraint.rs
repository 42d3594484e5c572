//! Constraint validity and consumption.
//!
//! [`AgentState`] pairs an installed [`LicenseSet`] with the mutable side of
//! every constraint (remaining counts, interval starts, depletion flags) and
//! the live labels. [`AgentState::consume`] is the only transition: it
//! returns a fresh state and leaves the input untouched.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, ModelError};
use crate::label::{self, Label};
use crate::model::{LicenseSet, Request, Target, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    Count {
        initial: u32,
    },
    /// Decremented only by uses lasting at least `timer` seconds.
    TimedCount {
        initial: u32,
        timer: u64,
    },
    /// Valid on `[start, end]`, both ends inclusive when present.
    DateTime {
        start: Option<Timestamp>,
        end: Option<Timestamp>,
    },
    /// Valid for `duration` seconds after the first use.
    Interval {
        duration: u64,
    },
    Unconstrained,
}

/// Constraint names, in allocation preference order (`True` best).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintKind {
    True,
    DateTime,
    Interval,
    TimedCount,
    Count,
}

impl ConstraintKind {
    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::True => "True",
            ConstraintKind::DateTime => "DateTime",
            ConstraintKind::Interval => "Interval",
            ConstraintKind::TimedCount => "TimedCount",
            ConstraintKind::Count => "Count",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            ConstraintKind::True,
            ConstraintKind::DateTime,
            ConstraintKind::Interval,
            ConstraintKind::TimedCount,
            ConstraintKind::Count,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::Count { .. } => ConstraintKind::Count,
            Constraint::TimedCount { .. } => ConstraintKind::TimedCount,
            Constraint::DateTime { .. } => ConstraintKind::DateTime,
            Constraint::Interval { .. } => ConstraintKind::Interval,
            Constraint::Unconstrained => ConstraintKind::True,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConstraint(m.to_string()));
        match *self {
            Constraint::Count { initial: 0 } => bad("count must be positive"),
            Constraint::TimedCount { initial: 0, .. } => bad("timed count must be positive"),
            Constraint::TimedCount { timer: 0, .. } => bad("timed count timer must be positive"),
            Constraint::DateTime {
                start: None,
                end: None,
            } => bad("datetime needs a start or an end"),
            Constraint::DateTime {
                start: Some(s),
                end: Some(e),
            } if s > e => bad("datetime start is after its end"),
            Constraint::Interval { duration: 0 } => bad("interval duration must be positive"),
            _ => Ok(()),
        }
    }

    pub fn initial_state(&self) -> ConstraintState {
        let remaining = match *self {
            Constraint::Count { initial } | Constraint::TimedCount { initial, .. } => Some(initial),
            _ => None,
        };
        ConstraintState {
            remaining,
            interval_started_at: None,
            depleted: false,
        }
    }

    /// Whether one use under `usage_duration` decrements this constraint.
    fn decrements(&self, usage_duration: u64) -> bool {
        match *self {
            Constraint::Count { .. } => true,
            Constraint::TimedCount { timer, .. } => usage_duration >= timer,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConstraintState {
    pub remaining: Option<u32>,
    pub interval_started_at: Option<Timestamp>,
    pub depleted: bool,
}

pub fn constraint_holds(c: &Constraint, st: &ConstraintState, at: Timestamp) -> bool {
    if st.depleted {
        return false;
    }
    match *c {
        Constraint::Unconstrained => true,
        Constraint::Count { .. } | Constraint::TimedCount { .. } => {
            st.remaining.is_some_and(|n| n >= 1)
        }
        Constraint::DateTime { start, end } => {
            start.is_none_or(|s| at >= s) && end.is_none_or(|e| at <= e)
        }
        Constraint::Interval { duration } => st
            .interval_started_at
            .is_none_or(|s| at <= s.saturating_add(duration)),
    }
}

/// Conjunction over a node's constraints; an empty list holds.
pub fn constraints_hold(cs: &[Constraint], states: &[ConstraintState], at: Timestamp) -> bool {
    cs.iter()
        .zip(states)
        .all(|(c, st)| constraint_holds(c, st, at))
}

/// Mutable side of one sublicense or CP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeState {
    pub constraints: Vec<ConstraintState>,
    pub depleted: bool,
    pub label: Label,
}

impl NodeState {
    fn fresh(constraints: &[Constraint], label: Label) -> Self {
        NodeState {
            constraints: constraints.iter().map(Constraint::initial_state).collect(),
            depleted: false,
            label,
        }
    }

    pub fn holds(&self, constraints: &[Constraint], at: Timestamp) -> bool {
        !self.depleted && constraints_hold(constraints, &self.constraints, at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubState {
    pub node: NodeState,
    pub cps: Vec<NodeState>,
}

/// Which part of a path one more use would deplete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depletion {
    None,
    CpDepletes,
    SublicenseDepletes,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentState {
    licenses: Arc<LicenseSet>,
    nodes: Vec<Vec<SubState>>,
}

impl AgentState {
    pub fn new(licenses: impl Into<Arc<LicenseSet>>) -> Self {
        let licenses = licenses.into();
        let nodes = licenses
            .licenses
            .iter()
            .map(|l| {
                l.sublicenses
                    .iter()
                    .map(|sl| SubState {
                        node: NodeState::fresh(&sl.constraints, sl.label),
                        cps: sl
                            .cps
                            .iter()
                            .map(|cp| NodeState::fresh(&cp.constraints, cp.label))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        AgentState { licenses, nodes }
    }

    pub fn licenses(&self) -> &LicenseSet {
        &self.licenses
    }

    pub fn shared_licenses(&self) -> Arc<LicenseSet> {
        Arc::clone(&self.licenses)
    }

    pub fn sub_state(&self, license: usize, sublicense: usize) -> &SubState {
        &self.nodes[license][sublicense]
    }

    /// The mutable side only; equal for equal states over the same set.
    pub fn node_states(&self) -> &[Vec<SubState>] {
        &self.nodes
    }

    pub fn cp_state(&self, t: Target) -> &NodeState {
        &self.nodes[t.license][t.sublicense].cps[t.cp]
    }

    pub fn sub_label(&self, t: Target) -> Label {
        self.nodes[t.license][t.sublicense].node.label
    }

    pub fn cp_label(&self, t: Target) -> Label {
        self.cp_state(t).label
    }

    pub(crate) fn sub_state_mut(&mut self, license: usize, sublicense: usize) -> &mut SubState {
        &mut self.nodes[license][sublicense]
    }

    /// Both the sublicense-level and the cp-level conjunction hold at `at`.
    pub fn path_valid(&self, t: Target, at: Timestamp) -> bool {
        let sl = self.licenses.sublicense(t);
        let cp = &sl.cps[t.cp];
        let sub = &self.nodes[t.license][t.sublicense];
        sub.node.holds(&sl.constraints, at) && sub.cps[t.cp].holds(&cp.constraints, at)
    }

    /// Paths of `license` that match `r` and are valid at `r.at`, in list order.
    pub fn valid_matching_paths<'a>(
        &'a self,
        license: usize,
        r: &'a Request,
    ) -> impl Iterator<Item = Target> + 'a {
        let lic = &self.licenses.licenses[license];
        lic.sublicenses.iter().enumerate().flat_map(move |(s, sl)| {
            sl.cps.iter().enumerate().filter_map(move |(c, cp)| {
                let t = Target {
                    license,
                    sublicense: s,
                    cp: c,
                };
                (cp.sat(r) && self.path_valid(t, r.at)).then_some(t)
            })
        })
    }

    fn check_target(&self, t: Target, r: &Request) -> Result<(), EngineError> {
        let in_range = self
            .nodes
            .get(t.license)
            .and_then(|l| l.get(t.sublicense))
            .is_some_and(|s| t.cp < s.cps.len());
        if !in_range {
            return Err(EngineError::InvalidTarget(format!("no path {t:?}")));
        }
        if !self.licenses.cp(t).sat(r) {
            return Err(EngineError::InvalidTarget(format!(
                "{} does not grant {r}",
                self.licenses.target_ids(t)
            )));
        }
        if !self.path_valid(t, r.at) {
            return Err(EngineError::InvalidTarget(format!(
                "{} is not valid at {}",
                self.licenses.target_ids(t),
                r.at
            )));
        }
        Ok(())
    }

    /// Exercises `r` through the CP at `t`.
    ///
    /// Counts on both levels drop by one (timed counts only for long enough
    /// uses), unstarted intervals start at `r.at`, and a counter reaching zero
    /// depletes its node for good. The affected license is relabeled. On a
    /// failed precondition the error is returned and nothing changes.
    pub fn consume(&self, t: Target, r: &Request) -> Result<AgentState, EngineError> {
        self.check_target(t, r)?;
        let mut next = self.clone();
        let sl = self.licenses.sublicense(t);
        let cp = &sl.cps[t.cp];
        let sub = next.sub_state_mut(t.license, t.sublicense);
        apply_use(&sl.constraints, &mut sub.node, r);
        apply_use(&cp.constraints, &mut sub.cps[t.cp], r);
        Ok(label::relabel_after_execution(next, t.license))
    }

    /// [`AgentState::consume`] addressed by ids.
    pub fn consume_ids(
        &self,
        license: &str,
        sublicense: &str,
        cp: &str,
        r: &Request,
    ) -> Result<AgentState, EngineError> {
        let t = self
            .licenses
            .resolve(license, sublicense, cp)
            .ok_or_else(|| {
                EngineError::InvalidTarget(format!("unknown path {license}/{sublicense}/{cp}"))
            })?;
        self.consume(t, r)
    }

    /// Lookahead: what would [`AgentState::consume`] deplete?
    pub fn is_depleting(&self, t: Target, r: &Request) -> Result<Depletion, EngineError> {
        self.check_target(t, r)?;
        let sl = self.licenses.sublicense(t);
        let sub = self.sub_state(t.license, t.sublicense);
        let hits_zero = |cs: &[Constraint], node: &NodeState| {
            cs.iter()
                .zip(&node.constraints)
                .any(|(c, st)| c.decrements(r.usage_duration) && st.remaining == Some(1))
        };
        Ok(if hits_zero(&sl.constraints, &sub.node) {
            Depletion::SublicenseDepletes
        } else if hits_zero(&sl.cps[t.cp].constraints, &sub.cps[t.cp]) {
            Depletion::CpDepletes
        } else {
            Depletion::None
        })
    }
}

fn apply_use(constraints: &[Constraint], node: &mut NodeState, r: &Request) {
    for (c, st) in constraints.iter().zip(node.constraints.iter_mut()) {
        if c.decrements(r.usage_duration) {
            if let Some(n) = st.remaining.as_mut() {
                *n = n.saturating_sub(1);
                if *n == 0 {
                    st.depleted = true;
                    node.depleted = true;
                }
            }
        }
        if matches!(c, Constraint::Interval { .. }) && st.interval_started_at.is_none() {
            st.interval_started_at = Some(r.at);
        }
    }
}
