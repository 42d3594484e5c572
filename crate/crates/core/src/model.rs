//! The license tree: licenses own sublicenses, sublicenses own constraint
//! permission sets (CPs), and CPs grant permissions. Matching here is purely
//! structural; whether a constraint currently holds is answered by
//! [`crate::constraint`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocate::compare_labels;
use crate::constraint::Constraint;
use crate::error::{EngineError, ModelError};
use crate::label::{self, Label};

/// Abstract time in integer seconds.
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Play,
    Display,
    Print,
    Execute,
    Export,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Play,
        Action::Display,
        Action::Print,
        Action::Execute,
        Action::Export,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Play => "play",
            Action::Display => "display",
            Action::Print => "print",
            Action::Execute => "execute",
            Action::Export => "export",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownAction(s.to_string()))
    }
}

/// Opaque identifier of a protected content item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Content(String);

impl Content {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::Empty("content id".into()));
        }
        Ok(Content(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Content {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Content::new(value)
    }
}

impl From<Content> for String {
    fn from(c: Content) -> Self {
        c.0
    }
}

impl fmt::Display for Content {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An action on a content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permission {
    pub action: Action,
    pub content: Content,
}

impl Permission {
    pub fn new(action: Action, content: Content) -> Self {
        Permission { action, content }
    }

    /// Convenience constructor for tests and fixtures; panics on an empty id.
    pub fn of(action: Action, content: &str) -> Self {
        Permission::new(action, Content::new(content).expect("non-empty content id"))
    }

    pub fn matches(&self, r: &Request) -> bool {
        matches(self, r)
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.action, self.content)
    }
}

/// A user asking to exercise an action on a content at a point in time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    pub action: Action,
    pub content: Content,
    pub at: Timestamp,
    /// How long the use lasts; only timed-count constraints look at it.
    #[serde(default)]
    pub usage_duration: u64,
}

impl Request {
    pub fn new(action: Action, content: Content, at: Timestamp) -> Self {
        Request {
            action,
            content,
            at,
            usage_duration: 0,
        }
    }

    pub fn of(action: Action, content: &str, at: Timestamp) -> Self {
        Request::new(
            action,
            Content::new(content).expect("non-empty content id"),
            at,
        )
    }

    pub fn with_usage(mut self, seconds: u64) -> Self {
        self.usage_duration = seconds;
        self
    }

    /// The permission this request asks to exercise.
    pub fn permission(&self) -> Permission {
        Permission::new(self.action, self.content.clone())
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} @{}", self.action, self.content, self.at)
    }
}

pub fn matches(p: &Permission, r: &Request) -> bool {
    p.action == r.action && p.content == r.content
}

/// Constraint permission set: local constraints guarding a set of permissions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cp {
    pub id: String,
    pub constraints: Vec<Constraint>,
    pub permissions: Vec<Permission>,
    /// Label at creation time. The live label is kept in the agent state.
    pub label: Label,
}

impl Cp {
    pub fn new(
        id: impl Into<String>,
        constraints: Vec<Constraint>,
        permissions: Vec<Permission>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if permissions.is_empty() {
            return Err(ModelError::Empty(format!("permissions of cp `{id}`")));
        }
        for c in &constraints {
            c.validate()?;
        }
        let label = label::initial_cp_label(&constraints, &permissions);
        Ok(Cp {
            id,
            constraints,
            permissions,
            label,
        })
    }

    pub fn sat(&self, r: &Request) -> bool {
        self.permissions.iter().any(|p| p.matches(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubLicense {
    pub id: String,
    pub constraints: Vec<Constraint>,
    pub cps: Vec<Cp>,
    pub label: Label,
}

impl SubLicense {
    pub fn new(
        id: impl Into<String>,
        constraints: Vec<Constraint>,
        cps: Vec<Cp>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if cps.is_empty() {
            return Err(ModelError::Empty(format!("cps of sublicense `{id}`")));
        }
        unique_ids(
            cps.iter().map(|c| c.id.as_str()),
            &format!("sublicense `{id}`"),
        )?;
        for c in &constraints {
            c.validate()?;
        }
        let label = label::initial_sublicense_label(&constraints, &cps);
        Ok(SubLicense {
            id,
            constraints,
            cps,
            label,
        })
    }

    pub fn sat(&self, r: &Request) -> bool {
        self.cps.iter().any(|cp| cp.sat(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct License {
    pub id: String,
    pub sublicenses: Vec<SubLicense>,
}

impl License {
    pub fn new(id: impl Into<String>, sublicenses: Vec<SubLicense>) -> Result<Self, ModelError> {
        let id = id.into();
        if sublicenses.is_empty() {
            return Err(ModelError::Empty(format!("sublicenses of license `{id}`")));
        }
        unique_ids(
            sublicenses.iter().map(|s| s.id.as_str()),
            &format!("license `{id}`"),
        )?;
        Ok(License { id, sublicenses })
    }

    pub fn sat(&self, r: &Request) -> bool {
        self.sublicenses.iter().any(|sl| sl.sat(r))
    }
}

/// Installed licenses. List order is the final tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LicenseSet {
    pub licenses: Vec<License>,
}

impl LicenseSet {
    pub fn new(licenses: Vec<License>) -> Result<Self, ModelError> {
        unique_ids(licenses.iter().map(|l| l.id.as_str()), "license set")?;
        Ok(LicenseSet { licenses })
    }

    pub fn sat(&self, r: &Request) -> bool {
        self.licenses.iter().any(|l| l.sat(r))
    }

    pub fn len(&self) -> usize {
        self.licenses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.licenses.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.licenses.iter().position(|l| l.id == id)
    }

    pub fn license(&self, index: usize) -> &License {
        &self.licenses[index]
    }

    pub fn sublicense(&self, t: Target) -> &SubLicense {
        &self.licenses[t.license].sublicenses[t.sublicense]
    }

    pub fn cp(&self, t: Target) -> &Cp {
        &self.sublicense(t).cps[t.cp]
    }

    /// Looks up a (license, sublicense, cp) path by ids.
    pub fn resolve(&self, license: &str, sublicense: &str, cp: &str) -> Option<Target> {
        let l = self.position(license)?;
        let s = self.licenses[l]
            .sublicenses
            .iter()
            .position(|s| s.id == sublicense)?;
        let c = self.licenses[l].sublicenses[s]
            .cps
            .iter()
            .position(|c| c.id == cp)?;
        Some(Target {
            license: l,
            sublicense: s,
            cp: c,
        })
    }

    pub fn target_ids(&self, t: Target) -> TargetIds {
        TargetIds {
            license: self.licenses[t.license].id.clone(),
            sublicense: self.sublicense(t).id.clone(),
            cp: self.cp(t).id.clone(),
        }
    }

    /// Every (license, sublicense, cp) path in list order.
    pub fn paths(&self) -> impl Iterator<Item = Target> + '_ {
        self.licenses.iter().enumerate().flat_map(|(l, lic)| {
            lic.sublicenses.iter().enumerate().flat_map(move |(s, sl)| {
                (0..sl.cps.len()).map(move |c| Target {
                    license: l,
                    sublicense: s,
                    cp: c,
                })
            })
        })
    }
}

/// Positional address of a CP inside a license set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Target {
    pub license: usize,
    pub sublicense: usize,
    pub cp: usize,
}

/// The same address spelled with ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetIds {
    pub license: String,
    pub sublicense: String,
    pub cp: String,
}

impl fmt::Display for TargetIds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.license, self.sublicense, self.cp)
    }
}

pub fn sat_cp(cp: &Cp, r: &Request) -> bool {
    cp.sat(r)
}

pub fn sat_sublicense(sl: &SubLicense, r: &Request) -> bool {
    sl.sat(r)
}

pub fn sat_license(l: &License, r: &Request) -> bool {
    l.sat(r)
}

pub fn sat_set(ls: &LicenseSet, r: &Request) -> bool {
    ls.sat(r)
}

/// Best matching sublicense by creation-time label; list order breaks ties.
pub fn find_matching_sublicense<'a>(
    l: &'a License,
    r: &Request,
) -> Result<&'a SubLicense, EngineError> {
    best_by_label(l.sublicenses.iter().filter(|sl| sl.sat(r)), |sl| sl.label).ok_or_else(|| {
        EngineError::NotFound {
            what: "sublicense",
            request: r.to_string(),
        }
    })
}

/// Best matching CP of a sublicense by creation-time label.
pub fn find_matching_cp<'a>(sl: &'a SubLicense, r: &Request) -> Result<&'a Cp, EngineError> {
    best_by_label(sl.cps.iter().filter(|cp| cp.sat(r)), |cp| cp.label).ok_or_else(|| {
        EngineError::NotFound {
            what: "constraint permission set",
            request: r.to_string(),
        }
    })
}

fn best_by_label<T>(items: impl Iterator<Item = T>, label: impl Fn(&T) -> Label) -> Option<T> {
    // keeps the first of equally preferred items
    items.fold(None, |best, item| match best {
        Some(b) if compare_labels(&label(&item), &label(&b)).is_lt() => Some(item),
        Some(b) => Some(b),
        None => Some(item),
    })
}

fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>, scope: &str) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ModelError::DuplicateId {
                scope: scope.to_string(),
                id: id.to_string(),
            });
        }
    }
    Ok(())
}
