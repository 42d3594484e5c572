//! Allocation with a full account of what happened: candidates and their
//! losses, depletions, relabelings and the rights left afterwards.

use serde::{Deserialize, Serialize};

use crate::allocate::{
    allocate, matching_target, Algorithm, AllocOptions, Chooser, Decision, MinimalLossChooser,
};
use crate::constraint::{AgentState, Depletion};
use crate::corpus::CorpusDocument;
use crate::error::EngineError;
use crate::harness::coloring::{color_step, Color, Coloring};
use crate::harness::oracle::{candidate_reports, CandidateReport};
use crate::label::Label;
use crate::model::{Permission, Request, Target, TargetIds, Timestamp};
use crate::rights::{self, RightsMultiset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Chosen,
    /// A prompt, answered by the chooser.
    Prompted,
    /// A prompt nobody answered; nothing was executed.
    Unresolved,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelChange {
    pub node: String,
    pub before: Label,
    pub after: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub request: Request,
    pub algorithm: Algorithm,
    pub outcome: Outcome,
    pub candidates: Vec<CandidateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<TargetIds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depletion: Option<Depletion>,
    pub label_changes: Vec<LabelChange>,
    pub rights_after: RightsMultiset,
}

fn label_changes(before: &AgentState, after: &AgentState, license: usize) -> Vec<LabelChange> {
    let ls = before.licenses();
    let lic = ls.license(license);
    let mut out = Vec::new();
    for (s, sl) in lic.sublicenses.iter().enumerate() {
        let t = |cp| Target {
            license,
            sublicense: s,
            cp,
        };
        let (b, a) = (before.sub_label(t(0)), after.sub_label(t(0)));
        if a != b {
            out.push(LabelChange {
                node: format!("{}/{}", lic.id, sl.id),
                before: b,
                after: a,
            });
        }
        for (c, cp) in sl.cps.iter().enumerate() {
            let (b, a) = (before.cp_label(t(c)), after.cp_label(t(c)));
            if a != b {
                out.push(LabelChange {
                    node: format!("{}/{}/{}", lic.id, sl.id, cp.id),
                    before: b,
                    after: a,
                });
            }
        }
    }
    out
}

/// Allocates `r` and executes the result. Prompts go to `chooser` when
/// one is given and stay unresolved otherwise.
pub fn run_request(
    state: &AgentState,
    r: &Request,
    algorithm: Algorithm,
    opts: &AllocOptions,
    chooser: Option<&mut dyn Chooser>,
) -> Result<(AllocationReport, AgentState), EngineError> {
    let candidates = candidate_reports(state, r)?;
    let decision = allocate(state, r, algorithm, opts, None)?;
    let (outcome, target) = match &decision {
        Decision::Chosen(t) => (Outcome::Chosen, Some(*t)),
        Decision::NoMatch => (Outcome::NoMatch, None),
        Decision::PromptRequired(cands) => match chooser {
            None => (Outcome::Unresolved, None),
            Some(ch) => {
                let picked = ch.choose(r, cands);
                let c = cands
                    .iter()
                    .find(|c| c.id == picked)
                    .ok_or(EngineError::ChooserContract(picked))?;
                let t =
                    matching_target(state, c.license, r).ok_or_else(|| EngineError::NotFound {
                        what: "valid path",
                        request: r.to_string(),
                    })?;
                (Outcome::Prompted, Some(t))
            }
        },
    };
    let (next, depletion, changes) = match target {
        Some(t) => {
            let depletion = state.is_depleting(t, r)?;
            let next = state.consume(t, r)?;
            let changes = label_changes(state, &next, t.license);
            (next, Some(depletion), changes)
        }
        None => (state.clone(), None, vec![]),
    };
    let report = AllocationReport {
        request: r.clone(),
        algorithm,
        outcome,
        candidates,
        path: target.map(|t| state.licenses().target_ids(t)),
        depletion,
        label_changes: changes,
        rights_after: rights::rights(&next, r.at),
    };
    Ok((report, next))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub allocation: AllocationReport,
    /// Permissions Black after this step.
    pub black: Vec<Permission>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub algorithm: Algorithm,
    pub initial_rights: RightsMultiset,
    pub steps: Vec<StepReport>,
    pub final_rights: RightsMultiset,
    /// Requests that no license could serve.
    pub unserved: usize,
}

/// Replays `requests` in order. `time` overrides every request's timestamp.
/// Prompts go to `chooser`, or to [`MinimalLossChooser`] when none is given.
pub fn simulate(
    doc: &CorpusDocument,
    requests: &[Request],
    algorithm: Algorithm,
    opts: &AllocOptions,
    time: Option<Timestamp>,
    mut chooser: Option<&mut dyn Chooser>,
) -> Result<SimulationReport, EngineError> {
    let requests: Vec<Request> = requests
        .iter()
        .map(|r| Request {
            at: time.unwrap_or(r.at),
            ..r.clone()
        })
        .collect();
    let at0 = requests.first().map_or(time.unwrap_or(0), |r| r.at);
    let mut state = AgentState::new(doc.licenses.clone());
    let initial_rights = rights::rights(&state, at0);
    let mut coloring = Coloring::new(&state, at0);
    let mut steps = Vec::with_capacity(requests.len());
    let mut fallback = MinimalLossChooser;
    for (index, r) in requests.iter().enumerate() {
        let ch: &mut dyn Chooser = match chooser.as_deref_mut() {
            Some(c) => c,
            None => &mut fallback,
        };
        let (report, next) = run_request(&state, r, algorithm, opts, Some(ch))?;
        if let Some(ids) = &report.path {
            let t = state
                .licenses()
                .resolve(&ids.license, &ids.sublicense, &ids.cp)
                .expect("path ids come from this license set");
            coloring = color_step(&coloring, &state, t, r)?;
        }
        state = next;
        steps.push(StepReport {
            index,
            black: coloring
                .iter()
                .filter(|(_, c)| *c == Color::Black)
                .map(|(p, _)| p.clone())
                .collect(),
            allocation: report,
        });
    }
    let final_at = requests.last().map_or(at0, |r| r.at);
    Ok(SimulationReport {
        algorithm,
        initial_rights,
        unserved: steps
            .iter()
            .filter(|s| s.allocation.outcome == Outcome::NoMatch)
            .count(),
        steps,
        final_rights: rights::rights(&state, final_at),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::bundled_document;
    use crate::model::Action;

    #[test]
    fn row1_script_under_both_allocators() {
        let doc = bundled_document("case1.json").unwrap();
        let reqs = doc.requests.clone().unwrap();
        let opts = AllocOptions::default();
        let p = simulate(&doc, &reqs, Algorithm::Proposed, &opts, None, None).unwrap();
        assert_eq!(p.unserved, 0);
        assert_eq!(
            p.steps[0].allocation.path.as_ref().unwrap().license,
            "License 2"
        );
        assert_eq!(
            p.steps[1].allocation.path.as_ref().unwrap().license,
            "License 1"
        );
        let o = simulate(&doc, &reqs, Algorithm::Oma, &opts, None, None).unwrap();
        assert_eq!(
            o.steps[0].allocation.path.as_ref().unwrap().license,
            "License 1"
        );
        assert_eq!(
            o.steps[0].allocation.depletion,
            Some(Depletion::SublicenseDepletes)
        );
        assert_eq!(o.steps[1].allocation.outcome, Outcome::NoMatch);
        assert_eq!(o.unserved, 1);
        // B was lost while License 2 lost nothing, so it is never blackened
        assert!(!o.steps[1]
            .black
            .contains(&Permission::of(Action::Play, "B")));
    }

    #[test]
    fn prompts_are_flagged() {
        let doc = bundled_document("loss_inevitable.json").unwrap();
        let reqs = doc.requests.clone().unwrap();
        let rep = simulate(
            &doc,
            &reqs,
            Algorithm::Proposed,
            &AllocOptions::default(),
            None,
            None,
        )
        .unwrap();
        let a = &rep.steps[0].allocation;
        assert_eq!(a.outcome, Outcome::Prompted);
        assert_eq!(a.path.as_ref().unwrap().license, "License 1");
        assert!(rep.steps[0]
            .black
            .contains(&Permission::of(Action::Play, "B")));
        let state = AgentState::new(doc.licenses.clone());
        let (un, _) = run_request(
            &state,
            &reqs[0],
            Algorithm::Proposed,
            &AllocOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(un.outcome, Outcome::Unresolved);
        assert!(un.path.is_none());
    }

    #[test]
    fn time_override_and_empty_script() {
        let doc = bundled_document("case1.json").unwrap();
        let rep = simulate(
            &doc,
            &[],
            Algorithm::Proposed,
            &AllocOptions::default(),
            Some(5),
            None,
        )
        .unwrap();
        assert!(rep.steps.is_empty());
        assert_eq!(rep.initial_rights.total(), 4);
        let late = simulate(
            &doc,
            doc.requests.as_ref().unwrap(),
            Algorithm::Oma,
            &AllocOptions::default(),
            Some(1_320_105_600),
            None,
        )
        .unwrap();
        // after the end of the month only License 2 serves A
        assert_eq!(
            late.steps[0].allocation.path.as_ref().unwrap().license,
            "License 2"
        );
    }
}
