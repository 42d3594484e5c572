//! `rights`, `remnants` and loss of rights, all as multisets of permissions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocate::matching_target;
use crate::constraint::AgentState;
use crate::error::EngineError;
use crate::model::{Permission, Request, Timestamp};

/// Permission multiset with deterministic (sorted) iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct RightsMultiset(BTreeMap<Permission, usize>);

impl RightsMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Permission) {
        self.insert_n(p, 1);
    }

    pub fn insert_n(&mut self, p: Permission, n: usize) {
        if n > 0 {
            *self.0.entry(p).or_insert(0) += n;
        }
    }

    pub fn count(&self, p: &Permission) -> usize {
        self.0.get(p).copied().unwrap_or(0)
    }

    /// Total number of occurrences.
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: &Permission) -> bool {
        self.0.contains_key(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Permission, usize)> {
        self.0.iter().map(|(p, n)| (p, *n))
    }

    /// Distinct permissions present.
    pub fn support(&self) -> impl Iterator<Item = &Permission> {
        self.0.keys()
    }

    pub fn is_subset(&self, other: &RightsMultiset) -> bool {
        self.0.iter().all(|(p, n)| other.count(p) >= *n)
    }

    /// Multiset difference; multiplicities saturate at zero.
    pub fn difference(&self, other: &RightsMultiset) -> RightsMultiset {
        let mut out = RightsMultiset::new();
        for (p, n) in &self.0 {
            out.insert_n(p.clone(), n.saturating_sub(other.count(p)));
        }
        out
    }

    pub fn singleton(p: Permission) -> RightsMultiset {
        let mut m = RightsMultiset::new();
        m.insert(p);
        m
    }
}

impl FromIterator<Permission> for RightsMultiset {
    fn from_iter<I: IntoIterator<Item = Permission>>(iter: I) -> Self {
        let mut m = RightsMultiset::new();
        for p in iter {
            m.insert(p);
        }
        m
    }
}

impl fmt::Display for RightsMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (p, n)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}:{n}")?;
        }
        f.write_str("}")
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    #[serde(flatten)]
    permission: Permission,
    count: usize,
}

impl Serialize for RightsMultiset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|(p, n)| Entry {
            permission: p.clone(),
            count: *n,
        }))
    }
}

impl<'de> Deserialize<'de> for RightsMultiset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        let mut m = RightsMultiset::new();
        for e in entries {
            m.insert_n(e.permission, e.count);
        }
        Ok(m)
    }
}

/// One occurrence per permission per CP whose full governing conjunction
/// holds at `at`. Remaining budgets do not add multiplicity.
pub fn rights(state: &AgentState, at: Timestamp) -> RightsMultiset {
    let ls = state.licenses();
    let mut out = RightsMultiset::new();
    for t in ls.paths() {
        if state.path_valid(t, at) {
            for p in &ls.cp(t).permissions {
                out.insert(p.clone());
            }
        }
    }
    out
}

/// Rights left after serving `r` through `license`'s matching path.
pub fn remnants(
    state: &AgentState,
    license: usize,
    r: &Request,
) -> Result<RightsMultiset, EngineError> {
    let t = matching_target(state, license, r).ok_or_else(|| {
        EngineError::InvalidTarget(format!(
            "license `{}` has no valid path for {r}",
            state.licenses().license(license).id
        ))
    })?;
    Ok(rights(&state.consume(t, r)?, r.at))
}

pub fn loss(
    state: &AgentState,
    license: usize,
    r: &Request,
) -> Result<RightsMultiset, EngineError> {
    Ok(rights(state, r.at).difference(&remnants(state, license, r)?))
}

/// A loss is a loss of rights when it takes away more than the one
/// occurrence the request itself uses.
pub fn loses_rights(loss: &RightsMultiset, r: &Request) -> bool {
    !loss.is_subset(&RightsMultiset::singleton(r.permission()))
}

pub fn is_lossy(state: &AgentState, license: usize, r: &Request) -> Result<bool, EngineError> {
    Ok(loses_rights(&loss(state, license, r)?, r))
}
