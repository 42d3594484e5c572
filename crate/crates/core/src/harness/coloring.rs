//! White/black marking of permissions.
//!
//! Every permission exercisable at the start is White. A permission turns
//! Black when a selection takes it away legitimately: the license was the
//! only candidate, every candidate would have cost something, or the
//! permission is the one requested.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocate::candidates;
use crate::constraint::AgentState;
use crate::error::EngineError;
use crate::harness::oracle::loss_via;
use crate::model::{Permission, Request, Target, Timestamp};
use crate::rights::{self, is_lossy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Black,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coloring {
    colors: BTreeMap<Permission, Color>,
}

impl Coloring {
    /// All permissions in `rights(state, at)`, White.
    pub fn new(state: &AgentState, at: Timestamp) -> Self {
        Coloring {
            colors: rights::rights(state, at)
                .support()
                .map(|p| (p.clone(), Color::White))
                .collect(),
        }
    }

    pub fn get(&self, p: &Permission) -> Option<Color> {
        self.colors.get(p).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Permission, Color)> {
        self.colors.iter().map(|(p, c)| (p, *c))
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn all_black(&self) -> bool {
        self.colors.values().all(|c| *c == Color::Black)
    }

    fn blacken(&mut self, p: &Permission) {
        if let Some(c) = self.colors.get_mut(p) {
            *c = Color::Black;
        }
    }

    /// Never turns Black into White.
    pub fn refines(&self, before: &Coloring) -> bool {
        self.colors.len() == before.colors.len()
            && before.colors.iter().all(|(p, c)| match c {
                Color::White => self.colors.contains_key(p),
                Color::Black => self.get(p) == Some(Color::Black),
            })
    }
}

/// Recolors after `r` is served through `chosen`, before consumption.
pub fn color_step(
    coloring: &Coloring,
    state: &AgentState,
    chosen: Target,
    r: &Request,
) -> Result<Coloring, EngineError> {
    let s2 = candidates(state, r);
    let forced = s2.len() == 1 || {
        let mut all = true;
        for &l in &s2 {
            if !is_lossy(state, l, r)? {
                all = false;
                break;
            }
        }
        all
    };
    let mut next = coloring.clone();
    for p in loss_via(state, chosen, r)?.support() {
        if forced || p.matches(r) {
            next.blacken(p);
        }
    }
    Ok(next)
}
