//! Per-request oracles, computed by enumerating every candidate.

use serde::{Deserialize, Serialize};

use crate::allocate::{
    candidates, oma_allocate, path_is_safe, proposed_allocate, AllocOptions, Decision,
};
use crate::constraint::AgentState;
use crate::error::EngineError;
use crate::model::{Request, Target};
use crate::rights::{self, loses_rights, RightsMultiset};

/// What one candidate license would cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub license: String,
    pub loss: RightsMultiset,
    pub lossy: bool,
    pub remnants: RightsMultiset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub request: Request,
    pub decision: Decision,
    pub reason: String,
    pub candidates: Vec<CandidateReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Holds because the premise does not apply.
    Vacuous,
    /// The check does not apply to this trial and is not counted.
    Gated,
    Fail(Box<Finding>),
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail(_))
    }
}

pub fn candidate_reports(
    state: &AgentState,
    r: &Request,
) -> Result<Vec<CandidateReport>, EngineError> {
    candidates(state, r)
        .into_iter()
        .map(|l| {
            let loss = rights::loss(state, l, r)?;
            Ok(CandidateReport {
                license: state.licenses().license(l).id.clone(),
                lossy: loses_rights(&loss, r),
                remnants: rights::remnants(state, l, r)?,
                loss,
            })
        })
        .collect()
}

/// Rights left after serving `r` through exactly `t`.
pub fn remnants_via(
    state: &AgentState,
    t: Target,
    r: &Request,
) -> Result<RightsMultiset, EngineError> {
    Ok(rights::rights(&state.consume(t, r)?, r.at))
}

pub fn loss_via(state: &AgentState, t: Target, r: &Request) -> Result<RightsMultiset, EngineError> {
    Ok(rights::rights(state, r.at).difference(&remnants_via(state, t, r)?))
}

fn fail(r: &Request, decision: &Decision, reason: String, cands: Vec<CandidateReport>) -> Verdict {
    Verdict::Fail(Box::new(Finding {
        request: r.clone(),
        decision: decision.clone(),
        reason,
        candidates: cands,
    }))
}

/// Passes when the decision is one of: the only candidate; a prompt when
/// every candidate is lossy; a choice losing nothing beyond the request.
pub fn check_property3(
    state: &AgentState,
    r: &Request,
    decision: &Decision,
) -> Result<Verdict, EngineError> {
    let s2 = candidates(state, r);
    if s2.is_empty() {
        return Ok(match decision {
            Decision::NoMatch => Verdict::Vacuous,
            _ => fail(r, decision, "decision without any candidate".into(), vec![]),
        });
    }
    let cands = candidate_reports(state, r)?;
    let ok = match decision {
        Decision::NoMatch => false,
        Decision::PromptRequired(_) => cands.iter().all(|c| c.lossy),
        Decision::Chosen(t) => {
            s2.contains(&t.license) && (s2.len() == 1 || !loses_rights(&loss_via(state, *t, r)?, r))
        }
    };
    if ok {
        return Ok(Verdict::Pass);
    }
    let reason = match decision {
        Decision::NoMatch => "no match although candidates exist".to_string(),
        Decision::PromptRequired(_) => "prompted although a candidate loses nothing".to_string(),
        Decision::Chosen(t) => format!(
            "chose lossy `{}` among {} candidates",
            state.licenses().license(t.license).id,
            s2.len()
        ),
    };
    Ok(fail(r, decision, reason, cands))
}

/// When some candidate loses nothing, the chosen license must leave at
/// least the remnants of every other candidate.
pub fn check_weak_minimal_loss(
    state: &AgentState,
    r: &Request,
    decision: &Decision,
) -> Result<Verdict, EngineError> {
    let Decision::Chosen(t) = decision else {
        return Ok(Verdict::Vacuous);
    };
    let cands = candidate_reports(state, r)?;
    if cands.iter().all(|c| c.lossy) {
        return Ok(Verdict::Vacuous);
    }
    let mine = remnants_via(state, *t, r)?;
    match cands.iter().find(|c| !c.remnants.is_subset(&mine)) {
        None => Ok(Verdict::Pass),
        Some(better) => {
            let reason = format!(
                "remnants via `{}` {} are not included in remnants via `{}` {}",
                better.license,
                better.remnants,
                state.licenses().license(t.license).id,
                mine
            );
            Ok(fail(r, decision, reason, cands))
        }
    }
}

/// When no candidate path carries a `Once × Complex` node, both allocators
/// must agree. Gated otherwise.
pub fn check_filter_neutrality(
    state: &AgentState,
    r: &Request,
    opts: &AllocOptions,
) -> Result<Verdict, EngineError> {
    let s2 = candidates(state, r);
    let clean = s2.iter().all(|&l| {
        state
            .valid_matching_paths(l, r)
            .all(|t| path_is_safe(state, t))
    });
    if !clean {
        return Ok(Verdict::Gated);
    }
    let proposed = proposed_allocate(state, r, opts, None)?;
    let oma = oma_allocate(state, r, opts);
    if proposed == oma {
        return Ok(Verdict::Pass);
    }
    let reason = format!("proposed {proposed:?} differs from oma {oma:?}");
    Ok(fail(r, &proposed, reason, candidate_reports(state, r)?))
}
