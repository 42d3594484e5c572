//! License allocation: the baseline OMA rights-object ordering and the
//! label-filtered allocator built on top of it.
//!
//! Orderings here return [`Ordering::Less`] for the *preferred* side, so
//! sorting ascending puts the best candidate first.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::constraint::{AgentState, Constraint, ConstraintKind};
use crate::error::EngineError;
use crate::label::{Complexity, Label, Times};
use crate::model::{LicenseSet, Request, Target, Timestamp};
use crate::rights::{self, RightsMultiset};

/// How two date-time bounded rights are ordered against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateTimeTiebreak {
    /// The right that expires first is used first.
    #[default]
    Earliest,
    /// The right whose end lies further in the future wins.
    Furthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Oma,
    #[default]
    Proposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AllocOptions {
    pub datetime_tiebreak: DateTimeTiebreak,
    /// In the last filtering step, keep only licenses whose path depletes
    /// nothing when any exist. Off by default.
    #[serde(default)]
    pub prefer_undepleted: bool,
}

/// Position of a constraint in the OMA preference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rank {
    /// 0 is best: unconstrained, date-time, interval, timed count, count.
    pub ordinal: u8,
    /// Date-time end; `None` is open-ended (or not a date-time).
    pub end: Option<Timestamp>,
}

impl Rank {
    pub fn compare(&self, other: &Rank, tiebreak: DateTimeTiebreak) -> Ordering {
        self.ordinal.cmp(&other.ordinal).then_with(|| {
            if self.ordinal == ConstraintKind::DateTime.ordinal() {
                compare_ends(self.end, other.end, tiebreak)
            } else {
                Ordering::Equal
            }
        })
    }
}

fn compare_ends(
    a: Option<Timestamp>,
    b: Option<Timestamp>,
    tiebreak: DateTimeTiebreak,
) -> Ordering {
    // open-ended counts as infinitely far away
    let far = |e: Option<Timestamp>| e.unwrap_or(Timestamp::MAX);
    match tiebreak {
        DateTimeTiebreak::Earliest => far(a).cmp(&far(b)),
        DateTimeTiebreak::Furthest => far(b).cmp(&far(a)),
    }
}

pub fn rank_kind(kind: ConstraintKind) -> u8 {
    kind.ordinal()
}

pub fn rank_constraint(c: &Constraint) -> Rank {
    Rank {
        ordinal: rank_kind(c.kind()),
        end: match *c {
            Constraint::DateTime { end, .. } => end,
            _ => None,
        },
    }
}

fn label_key(l: &Label) -> (u8, u8, u8) {
    let times = match l.times {
        Times::Many => 0,
        Times::Once => 1,
    };
    // a spent simple node takes only the request with it
    let complexity = match (l.times, l.complexity) {
        (Times::Once, Complexity::Complex) => 1,
        _ => 0,
    };
    (times, complexity, rank_kind(l.constraint))
}

/// Label preference: `Many` before `Once`, then among `Once` labels
/// `Simple` before `Complex`, then by constraint rank.
pub fn compare_labels(a: &Label, b: &Label) -> Ordering {
    label_key(a).cmp(&label_key(b))
}

/// OMA ranking of one governing path (sublicense and cp constraints together).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PathRank {
    rank: Rank,
    /// 0 when the deciding constraint sits on the sublicense.
    scope: u8,
}

fn path_rank(ls: &LicenseSet, t: Target) -> PathRank {
    let sl = ls.sublicense(t);
    let cp = &sl.cps[t.cp];
    let governing = || {
        sl.constraints
            .iter()
            .chain(&cp.constraints)
            .filter(|c| !matches!(c, Constraint::Unconstrained))
    };
    let Some(best) = governing().map(|c| c.kind()).min() else {
        return PathRank {
            rank: Rank {
                ordinal: 0,
                end: None,
            },
            scope: 0,
        };
    };
    // all date-time bounds must hold, so the earliest end is the effective one
    let end = if best == ConstraintKind::DateTime {
        governing()
            .filter_map(|c| match *c {
                Constraint::DateTime { end, .. } => Some(end.unwrap_or(Timestamp::MAX)),
                _ => None,
            })
            .min()
            .filter(|e| *e != Timestamp::MAX)
    } else {
        None
    };
    let scope = u8::from(!sl.constraints.iter().any(|c| c.kind() == best));
    PathRank {
        rank: Rank {
            ordinal: rank_kind(best),
            end,
        },
        scope,
    }
}

fn compare_paths(ls: &LicenseSet, a: Target, b: Target, tiebreak: DateTimeTiebreak) -> Ordering {
    let (ra, rb) = (path_rank(ls, a), path_rank(ls, b));
    ra.rank
        .compare(&rb.rank, tiebreak)
        .then(ra.scope.cmp(&rb.scope))
}

/// Neither node on the path is labeled `Once × Complex`.
pub fn path_is_safe(state: &AgentState, t: Target) -> bool {
    !state.sub_label(t).is_once_complex() && !state.cp_label(t).is_once_complex()
}

fn path_depletes(state: &AgentState, t: Target) -> bool {
    state.sub_label(t).times == Times::Once || state.cp_label(t).times == Times::Once
}

/// The path through which `license` would serve `r`, if any is valid.
///
/// Safe paths come first, then paths spending nothing, then sublicense and
/// CP labels by [`compare_labels`]; list order settles the rest.
pub fn matching_target(state: &AgentState, license: usize, r: &Request) -> Option<Target> {
    let key = |t: &Target| {
        (
            !path_is_safe(state, *t),
            path_depletes(state, *t),
            label_key(&state.sub_label(*t)),
            label_key(&state.cp_label(*t)),
        )
    };
    // min_by_key keeps the first minimum
    state.valid_matching_paths(license, r).min_by_key(key)
}

/// Licenses that can serve `r` right now, in list order.
pub fn candidates(state: &AgentState, r: &Request) -> Vec<usize> {
    (0..state.licenses().len())
        .filter(|&l| state.valid_matching_paths(l, r).next().is_some())
        .collect()
}

/// A license offered to the user, with what choosing it would cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub license: usize,
    pub id: String,
    pub loss: RightsMultiset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Chosen(Target),
    PromptRequired(Vec<Candidate>),
    NoMatch,
}

impl Decision {
    pub fn chosen(&self) -> Option<Target> {
        match self {
            Decision::Chosen(t) => Some(*t),
            _ => None,
        }
    }
}

/// Resolves a prompt: pick one of the offered license ids.
pub trait Chooser {
    fn choose(&mut self, request: &Request, candidates: &[Candidate]) -> String;
}

impl<F> Chooser for F
where
    F: FnMut(&Request, &[Candidate]) -> String,
{
    fn choose(&mut self, request: &Request, candidates: &[Candidate]) -> String {
        self(request, candidates)
    }
}

/// Deterministic stand-in for the user: smallest loss, then smallest id.
#[derive(Debug, Clone, Copy, Default)]
pub struct MinimalLossChooser;

impl Chooser for MinimalLossChooser {
    fn choose(&mut self, _request: &Request, candidates: &[Candidate]) -> String {
        candidates
            .iter()
            .min_by(|a, b| {
                a.loss
                    .total()
                    .cmp(&b.loss.total())
                    .then_with(|| a.id.cmp(&b.id))
            })
            .map(|c| c.id.clone())
            .unwrap_or_default()
    }
}

/// Best license among `pool` by OMA ranking of its matching path.
fn oma_best(
    state: &AgentState,
    r: &Request,
    pool: &[usize],
    opts: &AllocOptions,
) -> Option<Target> {
    let ls = state.licenses();
    pool.iter()
        .filter_map(|&l| matching_target(state, l, r))
        .reduce(|best, t| {
            if compare_paths(ls, t, best, opts.datetime_tiebreak).is_lt() {
                t
            } else {
                best
            }
        })
}

/// The baseline: only currently valid rights, ranked by the best
/// constraint governing them; ties broken by license order.
pub fn oma_allocate(state: &AgentState, r: &Request, opts: &AllocOptions) -> Decision {
    match oma_best(state, r, &candidates(state, r), opts) {
        Some(t) => Decision::Chosen(t),
        None => Decision::NoMatch,
    }
}

/// Candidate sets of the label-filtered allocator.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProposedSteps {
    /// Licenses that can serve the request.
    pub matching: Vec<usize>,
    /// ... through a sublicense not labeled `Once × Complex`.
    pub sublicense_ok: Vec<usize>,
    /// ... where the CP is not labeled `Once × Complex` either.
    pub cp_ok: Vec<usize>,
}

pub fn proposed_steps(state: &AgentState, r: &Request) -> ProposedSteps {
    let matching = candidates(state, r);
    let sublicense_ok: Vec<usize> = matching
        .iter()
        .copied()
        .filter(|&l| {
            state
                .valid_matching_paths(l, r)
                .any(|t| !state.sub_label(t).is_once_complex())
        })
        .collect();
    let cp_ok = sublicense_ok
        .iter()
        .copied()
        .filter(|&l| {
            state
                .valid_matching_paths(l, r)
                .any(|t| path_is_safe(state, t))
        })
        .collect();
    ProposedSteps {
        matching,
        sublicense_ok,
        cp_ok,
    }
}

/// Label-filtered allocation.
///
/// A single matching license is returned as is. Otherwise licenses whose
/// matching sublicense, then CP, is labeled `Once × Complex` are dropped and
/// the OMA ordering picks among the rest. When nothing is left the user
/// decides: `chooser` resolves the prompt, or it is returned unresolved.
pub fn proposed_allocate(
    state: &AgentState,
    r: &Request,
    opts: &AllocOptions,
    chooser: Option<&mut dyn Chooser>,
) -> Result<Decision, EngineError> {
    let steps = proposed_steps(state, r);
    let target = |l: usize| {
        matching_target(state, l, r).ok_or_else(|| EngineError::NotFound {
            what: "valid path",
            request: r.to_string(),
        })
    };
    match steps.matching.as_slice() {
        [] => return Ok(Decision::NoMatch),
        [only] => return Ok(Decision::Chosen(target(*only)?)),
        _ => {}
    }
    if !steps.cp_ok.is_empty() {
        let mut pool = steps.cp_ok;
        if opts.prefer_undepleted {
            let undepleted: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&l| matching_target(state, l, r).is_some_and(|t| !path_depletes(state, t)))
                .collect();
            if !undepleted.is_empty() {
                pool = undepleted;
            }
        }
        let t = oma_best(state, r, &pool, opts).ok_or_else(|| EngineError::NotFound {
            what: "valid path",
            request: r.to_string(),
        })?;
        return Ok(Decision::Chosen(t));
    }
    let offered = steps
        .matching
        .iter()
        .map(|&l| {
            Ok(Candidate {
                license: l,
                id: state.licenses().license(l).id.clone(),
                loss: rights::loss(state, l, r)?,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    let Some(chooser) = chooser else {
        return Ok(Decision::PromptRequired(offered));
    };
    let picked = chooser.choose(r, &offered);
    let cand = offered
        .iter()
        .find(|c| c.id == picked)
        .ok_or(EngineError::ChooserContract(picked))?;
    Ok(Decision::Chosen(target(cand.license)?))
}

pub fn allocate(
    state: &AgentState,
    r: &Request,
    algorithm: Algorithm,
    opts: &AllocOptions,
    chooser: Option<&mut dyn Chooser>,
) -> Result<Decision, EngineError> {
    match algorithm {
        Algorithm::Oma => Ok(oma_allocate(state, r, opts)),
        Algorithm::Proposed => proposed_allocate(state, r, opts, chooser),
    }
}

/// Allocates and, when a path was chosen, consumes it.
pub fn allocate_and_execute(
    state: &AgentState,
    r: &Request,
    algorithm: Algorithm,
    opts: &AllocOptions,
    chooser: Option<&mut dyn Chooser>,
) -> Result<(Decision, AgentState), EngineError> {
    let decision = allocate(state, r, algorithm, opts, chooser)?;
    let next = match decision {
        Decision::Chosen(t) => state.consume(t, r)?,
        _ => state.clone(),
    };
    Ok((decision, next))
}

/// Whether a (sublicense, CP) label pair is one a filtered selection can
/// produce: the sublicense is `Many` or `Simple`, and so is the CP.
pub fn is_allowed_pair(sub: &Label, cp: &Label) -> bool {
    let left_many = sub.times == Times::Many;
    let left_simple = sub.complexity == Complexity::Simple;
    let right_many = cp.times == Times::Many;
    let right_simple = cp.complexity == Complexity::Simple;
    (left_many && right_simple)
        || (left_many && right_many)
        || (left_simple && right_simple)
        || (left_simple && right_many)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;
    use crate::model::{Action, Cp, License, Permission, SubLicense};

    fn lic(id: &str, sub: Vec<Constraint>, cps: Vec<(Vec<Constraint>, Vec<&str>)>) -> License {
        let cps = cps
            .into_iter()
            .enumerate()
            .map(|(i, (cs, perms))| {
                Cp::new(
                    format!("cp{i}"),
                    cs,
                    perms
                        .iter()
                        .map(|c| Permission::of(Action::Play, c))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        License::new(id, vec![SubLicense::new("s", sub, cps).unwrap()]).unwrap()
    }

    fn state(ls: Vec<License>) -> AgentState {
        AgentState::new(LicenseSet::new(ls).unwrap())
    }

    #[test]
    fn constraint_ranking() {
        let un = rank_constraint(&Constraint::Unconstrained);
        let dt = rank_constraint(&Constraint::DateTime {
            start: None,
            end: Some(10),
        });
        let iv = rank_constraint(&Constraint::Interval { duration: 5 });
        let tc = rank_constraint(&Constraint::TimedCount {
            initial: 1,
            timer: 1,
        });
        let ct = rank_constraint(&Constraint::Count { initial: 1 });
        assert_eq!(un.ordinal, 0);
        let e = DateTimeTiebreak::Earliest;
        assert!(un.compare(&dt, e).is_lt());
        assert!(dt.compare(&iv, e).is_lt());
        assert!(iv.compare(&tc, e).is_lt());
        assert!(tc.compare(&ct, e).is_lt());
    }

    #[test]
    fn datetime_tiebreak_directions() {
        let near = rank_constraint(&Constraint::DateTime {
            start: None,
            end: Some(10),
        });
        let far = rank_constraint(&Constraint::DateTime {
            start: None,
            end: Some(20),
        });
        let open = rank_constraint(&Constraint::DateTime {
            start: Some(0),
            end: None,
        });
        assert!(near.compare(&far, DateTimeTiebreak::Earliest).is_lt());
        assert!(far.compare(&near, DateTimeTiebreak::Furthest).is_lt());
        assert!(far.compare(&open, DateTimeTiebreak::Earliest).is_lt());
        assert!(open.compare(&far, DateTimeTiebreak::Furthest).is_lt());
    }

    #[test]
    fn label_comparator() {
        let l = |s: &str| s.parse::<Label>().unwrap();
        assert!(compare_labels(&l("Complex×Many×Count"), &l("Simple×Once×True")).is_lt());
        assert_eq!(
            compare_labels(&l("Simple×Once×Count"), &l("Simple×Once×Count")),
            Ordering::Equal
        );
        assert!(compare_labels(&l("Simple×Once×Count"), &l("Complex×Once×Count")).is_lt());
        assert!(compare_labels(&l("Simple×Many×DateTime"), &l("Simple×Many×Count")).is_lt());
    }

    #[test]
    fn oma_prefers_unconstrained_then_datetime_ends() {
        let s = state(vec![
            lic(
                "count",
                vec![Constraint::Count { initial: 5 }],
                vec![(vec![], vec!["A"])],
            ),
            lic(
                "late",
                vec![Constraint::DateTime {
                    start: None,
                    end: Some(200),
                }],
                vec![(vec![], vec!["A"])],
            ),
            lic(
                "soon",
                vec![Constraint::DateTime {
                    start: None,
                    end: Some(100),
                }],
                vec![(vec![], vec!["A"])],
            ),
        ]);
        let r = Request::of(Action::Play, "A", 0);
        let pick = |o: AllocOptions| oma_allocate(&s, &r, &o).chosen().unwrap().license;
        assert_eq!(pick(AllocOptions::default()), 2);
        assert_eq!(
            pick(AllocOptions {
                datetime_tiebreak: DateTimeTiebreak::Furthest,
                ..Default::default()
            }),
            1
        );
        let with_free = state(vec![
            lic(
                "count",
                vec![Constraint::Count { initial: 5 }],
                vec![(vec![], vec!["A"])],
            ),
            lic("free", vec![], vec![(vec![], vec!["A"])]),
        ]);
        assert_eq!(
            oma_allocate(&with_free, &r, &AllocOptions::default())
                .chosen()
                .unwrap()
                .license,
            1
        );
    }

    #[test]
    fn expired_rights_are_not_candidates() {
        let s = state(vec![lic(
            "old",
            vec![Constraint::DateTime {
                start: None,
                end: Some(5),
            }],
            vec![(vec![], vec!["A"])],
        )]);
        let r = Request::of(Action::Play, "A", 6);
        assert_eq!(
            oma_allocate(&s, &r, &AllocOptions::default()),
            Decision::NoMatch
        );
        assert_eq!(
            proposed_allocate(&s, &r, &AllocOptions::default(), None).unwrap(),
            Decision::NoMatch
        );
    }

    #[test]
    fn prompt_and_chooser_contract() {
        // A or B once / A or C or D once
        let s = state(vec![
            lic(
                "L1",
                vec![Constraint::Count { initial: 1 }],
                vec![(vec![], vec!["A"]), (vec![], vec!["B"])],
            ),
            lic(
                "L2",
                vec![Constraint::Count { initial: 1 }],
                vec![
                    (vec![], vec!["A"]),
                    (vec![], vec!["C"]),
                    (vec![], vec!["D"]),
                ],
            ),
        ]);
        let r = Request::of(Action::Play, "A", 0);
        let opts = AllocOptions::default();
        let Decision::PromptRequired(c) = proposed_allocate(&s, &r, &opts, None).unwrap() else {
            panic!("expected a prompt");
        };
        assert_eq!(
            c.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
            ["L1", "L2"]
        );
        assert_eq!(c[0].loss.total(), 2);
        assert_eq!(c[1].loss.total(), 3);
        let mut pick_l2 = |_: &Request, _: &[Candidate]| "L2".to_string();
        let d = proposed_allocate(&s, &r, &opts, Some(&mut pick_l2)).unwrap();
        assert_eq!(d.chosen().unwrap().license, 1);
        let mut bogus = |_: &Request, _: &[Candidate]| "L9".to_string();
        assert_eq!(
            proposed_allocate(&s, &r, &opts, Some(&mut bogus)),
            Err(EngineError::ChooserContract("L9".into()))
        );
        let d = proposed_allocate(&s, &r, &opts, Some(&mut MinimalLossChooser)).unwrap();
        assert_eq!(d.chosen().unwrap().license, 0);
    }

    #[test]
    fn single_candidate_is_returned_even_if_lossy() {
        let s = state(vec![lic(
            "L1",
            vec![Constraint::Count { initial: 1 }],
            vec![(vec![], vec!["A"]), (vec![], vec!["B"])],
        )]);
        let r = Request::of(Action::Play, "A", 0);
        let d = proposed_allocate(&s, &r, &AllocOptions::default(), None).unwrap();
        assert_eq!(d.chosen().unwrap().license, 0);
    }

    #[test]
    fn within_license_prefers_safe_and_unspent_paths() {
        let l = License::new(
            "L",
            vec![
                SubLicense::new(
                    "risky",
                    vec![Constraint::Count { initial: 1 }],
                    vec![
                        Cp::new("a", vec![], vec![Permission::of(Action::Play, "A")]).unwrap(),
                        Cp::new("b", vec![], vec![Permission::of(Action::Play, "B")]).unwrap(),
                    ],
                )
                .unwrap(),
                SubLicense::new(
                    "spent",
                    vec![Constraint::Count { initial: 1 }],
                    vec![Cp::new("a", vec![], vec![Permission::of(Action::Play, "A")]).unwrap()],
                )
                .unwrap(),
                SubLicense::new(
                    "roomy",
                    vec![Constraint::Count { initial: 4 }],
                    vec![Cp::new("a", vec![], vec![Permission::of(Action::Play, "A")]).unwrap()],
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let s = state(vec![l]);
        let t = matching_target(&s, 0, &Request::of(Action::Play, "A", 0)).unwrap();
        assert_eq!(t.sublicense, 2);
    }

    #[test]
    fn allowed_pairs_are_exactly_the_non_once_complex_ones() {
        use crate::constraint::ConstraintKind as K;
        let all: Vec<Label> = [Complexity::Simple, Complexity::Complex]
            .into_iter()
            .flat_map(|c| [Times::Once, Times::Many].map(move |t| Label::new(c, t, K::Count)))
            .collect();
        for a in &all {
            for b in &all {
                assert_eq!(
                    is_allowed_pair(a, b),
                    !a.is_once_complex() && !b.is_once_complex(),
                    "{a} / {b}"
                );
            }
        }
    }

    #[test]
    fn execute_applies_consumption_only_on_choice() {
        let s = state(vec![lic(
            "L",
            vec![Constraint::Count { initial: 2 }],
            vec![(vec![], vec!["A"])],
        )]);
        let opts = AllocOptions::default();
        let (d, next) = allocate_and_execute(
            &s,
            &Request::of(Action::Play, "Z", 0),
            Algorithm::Proposed,
            &opts,
            None,
        )
        .unwrap();
        assert_eq!(d, Decision::NoMatch);
        assert_eq!(next, s);
        let (_, next) = allocate_and_execute(
            &s,
            &Request::of(Action::Play, "A", 0),
            Algorithm::Oma,
            &opts,
            None,
        )
        .unwrap();
        assert_ne!(next, s);
    }
}
