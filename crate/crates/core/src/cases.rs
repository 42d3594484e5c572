//! The four bundled case studies, each run under both allocators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocate::{allocate, Algorithm, AllocOptions, Decision};
use crate::constraint::AgentState;
use crate::corpus::{parse_corpus, CorpusDocument, ParseOptions};
use crate::model::{Action, Request};

/// Request time shared by all case studies, before every expiry.
pub const CASE_TIME: u64 = 1_318_680_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSpec {
    pub row: usize,
    pub fixture: &'static str,
    pub action: Action,
    pub content: &'static str,
    pub proposed: &'static str,
    pub oma: &'static str,
}

impl CaseSpec {
    pub fn request(&self) -> Request {
        Request::of(self.action, self.content, CASE_TIME)
    }
}

pub const CASES: [CaseSpec; 4] = [
    CaseSpec {
        row: 1,
        fixture: "case1.json",
        action: Action::Play,
        content: "A",
        proposed: "License 2",
        oma: "License 1",
    },
    CaseSpec {
        row: 2,
        fixture: "case2.json",
        action: Action::Display,
        content: "content1",
        proposed: "License 2",
        oma: "License 2",
    },
    CaseSpec {
        row: 3,
        fixture: "case3.json",
        action: Action::Play,
        content: "content2",
        proposed: "License 2",
        oma: "License 2",
    },
    CaseSpec {
        row: 4,
        fixture: "case4.json",
        action: Action::Play,
        content: "content2",
        proposed: "License 1",
        oma: "License 3",
    },
];

/// Fixtures compiled into the library, by file name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("case1.json", include_str!("../fixtures/case1.json")),
    ("case2.json", include_str!("../fixtures/case2.json")),
    ("case3.json", include_str!("../fixtures/case3.json")),
    ("case4.json", include_str!("../fixtures/case4.json")),
    (
        "loss_inevitable.json",
        include_str!("../fixtures/loss_inevitable.json"),
    ),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn bundled_document(name: &str) -> Option<CorpusDocument> {
    parse_corpus(bundled(name)?.as_bytes(), ParseOptions::default()).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub expected: String,
    pub actual: String,
    pub matches: bool,
}

impl Cell {
    fn new(expected: &str, actual: String) -> Self {
        Cell {
            matches: actual == expected,
            expected: expected.to_string(),
            actual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRow {
    pub row: usize,
    pub fixture: String,
    pub request: Request,
    pub proposed: Cell,
    pub oma: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasesReport {
    pub rows: Vec<CaseRow>,
    pub all_match: bool,
}

impl CasesReport {
    /// `row N / algorithm` for every cell that does not match.
    pub fn mismatches(&self) -> Vec<String> {
        self.rows
            .iter()
            .flat_map(|r| {
                [("proposed", &r.proposed), ("oma", &r.oma)]
                    .into_iter()
                    .filter(|(_, c)| !c.matches)
                    .map(move |(a, c)| {
                        format!(
                            "row {} / {a}: expected {}, got {}",
                            r.row, c.expected, c.actual
                        )
                    })
            })
            .collect()
    }
}

fn outcome(doc: &CorpusDocument, r: &Request, algorithm: Algorithm, opts: &AllocOptions) -> String {
    let state = AgentState::new(doc.licenses.clone());
    match allocate(&state, r, algorithm, opts, None) {
        Ok(Decision::Chosen(t)) => doc.licenses.license(t.license).id.clone(),
        Ok(Decision::PromptRequired(_)) => "prompt".to_string(),
        Ok(Decision::NoMatch) => "no match".to_string(),
        Err(e) => format!("error: {e}"),
    }
}

/// Runs every case. `load` returns the fixture text for a file name.
pub fn run_cases_with(
    mut load: impl FnMut(&str) -> Result<String, String>,
    parse: ParseOptions,
    opts: &AllocOptions,
) -> CasesReport {
    let rows: Vec<CaseRow> = CASES
        .iter()
        .map(|spec| {
            let r = spec.request();
            let (p, o) = match load(spec.fixture)
                .and_then(|text| parse_corpus(text.as_bytes(), parse).map_err(|e| e.to_string()))
            {
                Ok(doc) => (
                    outcome(&doc, &r, Algorithm::Proposed, opts),
                    outcome(&doc, &r, Algorithm::Oma, opts),
                ),
                Err(e) => (format!("error: {e}"), format!("error: {e}")),
            };
            CaseRow {
                row: spec.row,
                fixture: spec.fixture.to_string(),
                request: r,
                proposed: Cell::new(spec.proposed, p),
                oma: Cell::new(spec.oma, o),
            }
        })
        .collect();
    let all_match = rows.iter().all(|r| r.proposed.matches && r.oma.matches);
    CasesReport { rows, all_match }
}

/// Runs the bundled fixtures, or those in `dir` when given.
pub fn run_cases(dir: Option<&Path>, parse: ParseOptions, opts: &AllocOptions) -> CasesReport {
    run_cases_with(
        |name| match dir {
            Some(d) => std::fs::read_to_string(d.join(name))
                .map_err(|e| format!("{}: {e}", d.join(name).display())),
            None => bundled(name)
                .map(str::to_string)
                .ok_or_else(|| format!("no bundled fixture {name}")),
        },
        parse,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cases_match() {
        let rep = run_cases(None, ParseOptions::default(), &AllocOptions::default());
        assert!(rep.all_match, "{:?}", rep.mismatches());
        assert_eq!(rep.rows.len(), 4);
    }

    #[test]
    fn swapped_ids_are_reported() {
        let rep = run_cases_with(
            |name| {
                let text = bundled(name).unwrap();
                Ok(if name == "case1.json" {
                    text.replace("License 1", "TMP")
                        .replace("License 2", "License 1")
                        .replace("TMP", "License 2")
                } else {
                    text.to_string()
                })
            },
            ParseOptions::default(),
            &AllocOptions::default(),
        );
        assert!(!rep.all_match);
        let m = rep.mismatches();
        assert_eq!(m.len(), 2);
        assert!(m[0].starts_with("row 1 / proposed"));
    }

    #[test]
    fn every_bundled_fixture_parses() {
        for (name, _) in BUNDLED {
            assert!(bundled_document(name).is_some(), "{name}");
        }
    }
}
