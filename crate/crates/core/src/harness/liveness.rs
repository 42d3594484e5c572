//! Bounded exploration of fair request schedules.
//!
//! A schedule is a sequence of windows, each requesting every initially
//! exercisable permission once in some order. After each step, any
//! permission that no license can serve any more must be Black.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocate::{
    allocate, candidates, Algorithm, AllocOptions, Chooser, Decision, MinimalLossChooser,
};
use crate::constraint::{AgentState, Constraint, SubState};
use crate::error::EngineError;
use crate::harness::coloring::{color_step, Color, Coloring};
use crate::label::Times;
use crate::model::{LicenseSet, Permission, Request, Timestamp};
use crate::rights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessBound {
    pub at: Timestamp,
    pub usage_duration: u64,
    /// Steps per schedule; `None` is two windows.
    pub depth: Option<usize>,
    /// Explore exhaustively up to this many schedules, sample above it.
    pub exhaustive_limit: u64,
    pub samples: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub opts: AllocOptions,
}

impl LivenessBound {
    pub fn at(at: Timestamp, usage_duration: u64) -> Self {
        LivenessBound {
            at,
            usage_duration,
            depth: None,
            exhaustive_limit: 5000,
            samples: 256,
            seed: 0,
            algorithm: Algorithm::Proposed,
            opts: AllocOptions::default(),
        }
    }
}

/// A finite request sequence; `k` windows of all permissions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub requests: Vec<Request>,
    pub k: usize,
}

impl Schedule {
    /// Every permission of `allowed` occurs in each consecutive window of
    /// `k * allowed.len()` requests.
    pub fn is_fair(&self, allowed: &[Permission]) -> bool {
        let w = self.k * allowed.len();
        if w == 0 {
            return true;
        }
        self.requests.chunks(w).filter(|c| c.len() == w).all(|c| {
            allowed
                .iter()
                .all(|p| c.iter().any(|r| r.permission() == *p))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum AssumptionViolation {
    #[error("path {path} has a sublicense labeled Many over a CP that is not Once")]
    NotDepleting { path: String },
    #[error("{path} carries a constraint that can expire: {constraint}")]
    Expiring { path: String, constraint: String },
    #[error("timer {timer} exceeds the usage duration {usage}")]
    LongTimer { timer: u64, usage: u64 },
    #[error("depth {depth} is shorter than the {permissions} permissions to cover")]
    ShortDepth { depth: usize, permissions: usize },
    #[error("engine error: {0}")]
    Engine(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LivenessVerdict {
    Pass {
        schedules: u64,
        exhaustive: bool,
        /// Schedules that ended with every permission Black.
        all_black: u64,
    },
    Fail {
        schedule: Schedule,
        step: usize,
        permission: Permission,
    },
}

impl LivenessVerdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, LivenessVerdict::Fail { .. })
    }
}

/// Checks the assumptions under which liveness is claimed.
pub fn check_assumptions(
    ls: &LicenseSet,
    bound: &LivenessBound,
) -> Result<(), AssumptionViolation> {
    let state = AgentState::new(ls.clone());
    for t in ls.paths() {
        if state.sub_label(t).times == Times::Many && state.cp_label(t).times != Times::Once {
            return Err(AssumptionViolation::NotDepleting {
                path: ls.target_ids(t).to_string(),
            });
        }
        let sl = ls.sublicense(t);
        for c in sl.constraints.iter().chain(&ls.cp(t).constraints) {
            match *c {
                Constraint::DateTime { .. } | Constraint::Interval { .. } => {
                    return Err(AssumptionViolation::Expiring {
                        path: ls.target_ids(t).to_string(),
                        constraint: format!("{c:?}"),
                    })
                }
                Constraint::TimedCount { timer, .. } if timer > bound.usage_duration => {
                    return Err(AssumptionViolation::LongTimer {
                        timer,
                        usage: bound.usage_duration,
                    })
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64)
        .try_fold(1u64, |a, b| a.checked_mul(b))
        .unwrap_or(u64::MAX)
}

fn schedule_count(n: usize, depth: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    let full = factorial(n);
    let rem = depth % n;
    let partial = ((n - rem + 1)..=n).fold(1u64, |a, b| a.saturating_mul(b as u64));
    (0..depth / n).fold(partial, |a, _| a.saturating_mul(full))
}

/// Subtree outcome: (schedules, all-black) counts, or the failing step.
type Explored = Result<(u64, u64), (usize, Permission)>;

type MemoKey = (Vec<Vec<SubState>>, Coloring, Vec<Permission>, usize);

struct Explorer<'a> {
    allowed: &'a [Permission],
    bound: &'a LivenessBound,
    depth: usize,
    /// Subtrees already explored without a violation, with their
    /// (schedules, all-black) counts.
    memo: HashMap<MemoKey, (u64, u64)>,
}

enum Step {
    Ok(AgentState, Coloring),
    Violation(Permission),
}

impl Explorer<'_> {
    fn request(&self, p: &Permission) -> Request {
        Request::new(p.action, p.content.clone(), self.bound.at)
            .with_usage(self.bound.usage_duration)
    }

    fn step(
        &self,
        state: &AgentState,
        coloring: &Coloring,
        r: &Request,
    ) -> Result<Step, EngineError> {
        let mut chooser = MinimalLossChooser;
        let decision = allocate(
            state,
            r,
            self.bound.algorithm,
            &self.bound.opts,
            Some(&mut chooser as &mut dyn Chooser),
        )?;
        let (state, coloring) = match decision {
            Decision::Chosen(t) => (state.consume(t, r)?, color_step(coloring, state, t, r)?),
            _ => (state.clone(), coloring.clone()),
        };
        for (p, c) in coloring.iter() {
            if c == Color::White && candidates(&state, &self.request(p)).is_empty() {
                return Ok(Step::Violation(p.clone()));
            }
        }
        Ok(Step::Ok(state, coloring))
    }

    /// Depth-first over all window permutations. Returns the failing prefix.
    fn exhaustive(
        &mut self,
        state: &AgentState,
        coloring: &Coloring,
        prefix: &mut Vec<Request>,
        window_left: Vec<Permission>,
    ) -> Result<Explored, EngineError> {
        if prefix.len() == self.depth {
            return Ok(Ok((1, u64::from(coloring.all_black()))));
        }
        let window_left = if window_left.is_empty() {
            self.allowed.to_vec()
        } else {
            window_left
        };
        let key = (
            state.node_states().to_vec(),
            coloring.clone(),
            window_left.clone(),
            prefix.len(),
        );
        if let Some(&counts) = self.memo.get(&key) {
            return Ok(Ok(counts));
        }
        let mut counts = (0, 0);
        for i in 0..window_left.len() {
            let mut left = window_left.clone();
            let p = left.remove(i);
            let r = self.request(&p);
            prefix.push(r.clone());
            match self.step(state, coloring, &r)? {
                Step::Violation(v) => return Ok(Err((prefix.len() - 1, v))),
                Step::Ok(s, c) => match self.exhaustive(&s, &c, prefix, left)? {
                    Ok((n, b)) => {
                        counts.0 += n;
                        counts.1 += b;
                    }
                    Err(found) => return Ok(Err(found)),
                },
            }
            prefix.pop();
        }
        self.memo.insert(key, counts);
        Ok(Ok(counts))
    }

    fn random_schedule(&self, rng: &mut ChaCha8Rng) -> Vec<Request> {
        let mut out = Vec::with_capacity(self.depth);
        while out.len() < self.depth {
            let mut w: Vec<&Permission> = self.allowed.iter().collect();
            w.shuffle(rng);
            out.extend(w.into_iter().map(|p| self.request(p)));
        }
        out.truncate(self.depth);
        out
    }
}

/// Runs every (or a seeded sample of) fair schedule of the bound's depth
/// and checks black-by-quiescence after each step.
pub fn run_bounded_liveness(
    ls: &LicenseSet,
    bound: &LivenessBound,
) -> Result<LivenessVerdict, AssumptionViolation> {
    check_assumptions(ls, bound)?;
    let engine = |e: EngineError| AssumptionViolation::Engine(e.to_string());
    let init = AgentState::new(ls.clone());
    let allowed: Vec<Permission> = rights::rights(&init, bound.at).support().cloned().collect();
    let depth = bound.depth.unwrap_or(2 * allowed.len());
    if depth < allowed.len() {
        return Err(AssumptionViolation::ShortDepth {
            depth,
            permissions: allowed.len(),
        });
    }
    let coloring = Coloring::new(&init, bound.at);
    let mut ex = Explorer {
        allowed: &allowed,
        bound,
        depth,
        memo: HashMap::new(),
    };
    let k = depth.div_ceil(allowed.len().max(1)).max(1);
    let total = schedule_count(allowed.len(), depth);
    if total <= bound.exhaustive_limit {
        let mut prefix = Vec::new();
        let found = ex
            .exhaustive(&init, &coloring, &mut prefix, Vec::new())
            .map_err(engine)?;
        return Ok(match found {
            Err((step, permission)) => LivenessVerdict::Fail {
                schedule: Schedule {
                    requests: prefix,
                    k,
                },
                step,
                permission,
            },
            Ok((schedules, all_black)) => LivenessVerdict::Pass {
                schedules,
                exhaustive: true,
                all_black,
            },
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(bound.seed);
    let mut all_black = 0;
    for _ in 0..bound.samples {
        let requests = ex.random_schedule(&mut rng);
        let (mut state, mut col) = (init.clone(), coloring.clone());
        for (i, r) in requests.iter().enumerate() {
            match ex.step(&state, &col, r).map_err(engine)? {
                Step::Violation(permission) => {
                    return Ok(LivenessVerdict::Fail {
                        schedule: Schedule {
                            requests: requests[..=i].to_vec(),
                            k,
                        },
                        step: i,
                        permission,
                    })
                }
                Step::Ok(s, c) => (state, col) = (s, c),
            }
        }
        all_black += u64::from(col.all_black());
    }
    Ok(LivenessVerdict::Pass {
        schedules: bound.samples as u64,
        exhaustive: false,
        all_black,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_fair_schedules() {
        assert_eq!(schedule_count(2, 4), 4);
        assert_eq!(schedule_count(3, 6), 36);
        assert_eq!(schedule_count(3, 4), 18);
        assert_eq!(schedule_count(0, 0), 1);
        assert_eq!(schedule_count(25, 50), u64::MAX);
    }
}
