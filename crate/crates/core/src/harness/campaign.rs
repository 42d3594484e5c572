//! Fuzz campaigns: many generated instances, each check replayed over the
//! instance's request script, failures shrunk to small corpora.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocate::{
    allocate, matching_target, Algorithm, AllocOptions, Chooser, Decision, MinimalLossChooser,
};
use crate::constraint::{AgentState, Constraint};
use crate::corpus::{corpus_to_value, CorpusDocument};
use crate::error::EngineError;
use crate::harness::gen::{GeneratorCaps, GeneratorMode, InstanceGenerator, USAGE, WINDOW_START};
use crate::harness::liveness::{run_bounded_liveness, LivenessBound, LivenessVerdict};
use crate::harness::oracle::{
    check_filter_neutrality, check_property3, check_weak_minimal_loss, Finding, Verdict,
};
use crate::model::{Cp, License, LicenseSet, Request, SubLicense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Property3,
    WeakMinimalLoss,
    FilterNeutrality,
    Liveness,
}

impl Check {
    pub const ALL: [Check; 4] = [
        Check::Property3,
        Check::WeakMinimalLoss,
        Check::FilterNeutrality,
        Check::Liveness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Property3 => "property3",
            Check::WeakMinimalLoss => "weak_minimal_loss",
            Check::FilterNeutrality => "filter_neutrality",
            Check::Liveness => "liveness",
        }
    }
}

impl std::str::FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Check::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| format!("unknown check `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub generator: InstanceGenerator,
    pub n: u64,
    pub algorithm: Algorithm,
    pub opts: AllocOptions,
    pub checks: Vec<Check>,
    pub max_counterexamples: usize,
    pub shrink: bool,
}

impl CampaignConfig {
    pub fn new(caps: GeneratorCaps, seed: u64, n: u64) -> Self {
        CampaignConfig {
            generator: InstanceGenerator::new(caps, seed),
            n,
            algorithm: Algorithm::Proposed,
            opts: AllocOptions::default(),
            checks: vec![Check::Property3, Check::WeakMinimalLoss],
            max_counterexamples: 3,
            shrink: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub instance: u64,
    /// Index of the failing request in `corpus.requests`.
    pub step: usize,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finding: Option<Finding>,
    /// Corpus document replaying the failure.
    pub corpus: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: Option<Check>,
    pub instances: u64,
    /// Instances where at least one trial was counted.
    pub instances_counted: u64,
    pub trials: u64,
    pub passed: u64,
    pub vacuous: u64,
    pub gated: u64,
    pub failed: u64,
    pub failing_instances: u64,
    pub counterexamples: Vec<Counterexample>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub n: u64,
    pub caps: GeneratorCaps,
    pub mode: GeneratorMode,
    pub algorithm: Algorithm,
    pub opts: AllocOptions,
    pub checks: Vec<CheckReport>,
}

impl CampaignReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(CheckReport::ok)
    }

    pub fn check(&self, c: Check) -> Option<&CheckReport> {
        self.checks.iter().find(|r| r.check == Some(c))
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    trials: u64,
    passed: u64,
    vacuous: u64,
    gated: u64,
    failed: u64,
    first_failure: Option<Failure>,
}

#[derive(Debug, Clone)]
struct Failure {
    step: usize,
    reason: String,
    finding: Option<Finding>,
    /// Requests reproducing the failure, when they differ from the script.
    requests: Option<Vec<Request>>,
}

impl Tally {
    fn record(&mut self, step: usize, v: Verdict) {
        match v {
            Verdict::Gated => {
                self.gated += 1;
                return;
            }
            Verdict::Pass => self.passed += 1,
            Verdict::Vacuous => self.vacuous += 1,
            Verdict::Fail(f) => {
                self.failed += 1;
                if self.first_failure.is_none() {
                    self.first_failure = Some(Failure {
                        step,
                        reason: f.reason.clone(),
                        finding: Some(*f),
                        requests: None,
                    });
                }
            }
        }
        self.trials += 1;
    }

    fn engine_failure(&mut self, step: usize, e: EngineError) {
        self.trials += 1;
        self.failed += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(Failure {
                step,
                reason: format!("engine error: {e}"),
                finding: None,
                requests: None,
            });
        }
    }
}

/// The path a resolved decision executes; prompts go to the test chooser.
fn resolve(state: &AgentState, r: &Request, decision: &Decision) -> Option<crate::model::Target> {
    match decision {
        Decision::Chosen(t) => Some(*t),
        Decision::NoMatch => None,
        Decision::PromptRequired(cands) => {
            let id = MinimalLossChooser.choose(r, cands);
            let c = cands.iter().find(|c| c.id == id)?;
            matching_target(state, c.license, r)
        }
    }
}

fn liveness_bound(cfg: &CampaignConfig, index: u64, requests: &[Request]) -> LivenessBound {
    let mut b = LivenessBound::at(requests.first().map_or(WINDOW_START, |r| r.at), USAGE);
    b.seed = cfg.generator.seed ^ index.rotate_left(32);
    b.algorithm = cfg.algorithm;
    b.opts = cfg.opts;
    b
}

fn evaluate(
    cfg: &CampaignConfig,
    check: Check,
    index: u64,
    ls: &LicenseSet,
    requests: &[Request],
) -> Tally {
    let mut tally = Tally::default();
    if check == Check::Liveness {
        match run_bounded_liveness(ls, &liveness_bound(cfg, index, requests)) {
            Err(_) => tally.gated += 1,
            Ok(LivenessVerdict::Pass { .. }) => {
                tally.trials += 1;
                tally.passed += 1;
            }
            Ok(LivenessVerdict::Fail {
                schedule,
                step,
                permission,
            }) => {
                tally.trials += 1;
                tally.failed += 1;
                tally.first_failure = Some(Failure {
                    step,
                    reason: format!("{permission} can no longer be served but is still White"),
                    finding: None,
                    requests: Some(schedule.requests),
                });
            }
        }
        return tally;
    }
    let mut state = AgentState::new(ls.clone());
    for (i, r) in requests.iter().enumerate() {
        let step = || -> Result<(Verdict, Decision), EngineError> {
            let decision = allocate(&state, r, cfg.algorithm, &cfg.opts, None)?;
            let v = match check {
                Check::Property3 => check_property3(&state, r, &decision)?,
                Check::WeakMinimalLoss => check_weak_minimal_loss(&state, r, &decision)?,
                Check::FilterNeutrality => check_filter_neutrality(&state, r, &cfg.opts)?,
                Check::Liveness => unreachable!("handled above"),
            };
            Ok((v, decision))
        };
        match step() {
            Ok((v, decision)) => {
                tally.record(i, v);
                if let Some(t) = resolve(&state, r, &decision) {
                    match state.consume(t, r) {
                        Ok(next) => state = next,
                        Err(e) => {
                            tally.engine_failure(i, e);
                            break;
                        }
                    }
                }
            }
            Err(e) => {
                tally.engine_failure(i, e);
                break;
            }
        }
    }
    tally
}

/// Whether `check` fails somewhere on this instance.
pub fn fails(
    cfg: &CampaignConfig,
    check: Check,
    index: u64,
    ls: &LicenseSet,
    requests: &[Request],
) -> bool {
    evaluate(cfg, check, index, ls, requests)
        .first_failure
        .is_some()
}

fn rebuild(licenses: Vec<License>) -> Option<LicenseSet> {
    LicenseSet::new(licenses).ok()
}

fn with_sublicense(
    ls: &LicenseSet,
    li: usize,
    si: usize,
    f: impl FnOnce(&SubLicense) -> Option<SubLicense>,
) -> Option<LicenseSet> {
    let mut licenses = ls.licenses.clone();
    let sl = f(&licenses[li].sublicenses[si])?;
    licenses[li].sublicenses[si] = sl;
    rebuild(licenses)
}

fn rebuilt_sub(sl: &SubLicense, constraints: Vec<Constraint>, cps: Vec<Cp>) -> Option<SubLicense> {
    SubLicense::new(sl.id.clone(), constraints, cps).ok()
}

/// Strictly smaller variants of an instance, largest reductions first.
fn reductions(ls: &LicenseSet, requests: &[Request]) -> Vec<(LicenseSet, Vec<Request>)> {
    let mut out = Vec::new();
    let reqs = || requests.to_vec();
    if ls.len() > 1 {
        for li in 0..ls.len() {
            let mut l = ls.licenses.clone();
            l.remove(li);
            out.extend(rebuild(l).map(|s| (s, reqs())));
        }
    }
    for i in 0..requests.len() {
        if requests.len() > 1 {
            let mut r = reqs();
            r.remove(i);
            out.push((ls.clone(), r));
        }
    }
    for (li, l) in ls.licenses.iter().enumerate() {
        if l.sublicenses.len() > 1 {
            for si in 0..l.sublicenses.len() {
                let mut licenses = ls.licenses.clone();
                licenses[li].sublicenses.remove(si);
                out.extend(rebuild(licenses).map(|s| (s, reqs())));
            }
        }
        for (si, sl) in l.sublicenses.iter().enumerate() {
            if sl.cps.len() > 1 {
                for ci in 0..sl.cps.len() {
                    let mut cps = sl.cps.clone();
                    cps.remove(ci);
                    out.extend(
                        with_sublicense(ls, li, si, |sl| {
                            rebuilt_sub(sl, sl.constraints.clone(), cps)
                        })
                        .map(|s| (s, reqs())),
                    );
                }
            }
            for k in 0..sl.constraints.len() {
                let mut cs = sl.constraints.clone();
                cs.remove(k);
                out.extend(
                    with_sublicense(ls, li, si, |sl| rebuilt_sub(sl, cs, sl.cps.clone()))
                        .map(|s| (s, reqs())),
                );
            }
            for (ci, cp) in sl.cps.iter().enumerate() {
                let mut variants = Vec::new();
                for k in 0..cp.constraints.len() {
                    let mut cs = cp.constraints.clone();
                    cs.remove(k);
                    variants.push(Cp::new(cp.id.clone(), cs, cp.permissions.clone()));
                }
                if cp.permissions.len() > 1 {
                    for k in 0..cp.permissions.len() {
                        let mut ps = cp.permissions.clone();
                        ps.remove(k);
                        variants.push(Cp::new(cp.id.clone(), cp.constraints.clone(), ps));
                    }
                }
                for v in variants.into_iter().flatten() {
                    let mut cps = sl.cps.clone();
                    cps[ci] = v;
                    out.extend(
                        with_sublicense(ls, li, si, |sl| {
                            rebuilt_sub(sl, sl.constraints.clone(), cps)
                        })
                        .map(|s| (s, reqs())),
                    );
                }
            }
        }
    }
    out
}

const SHRINK_ROUNDS: usize = 500;

/// Greedy shrinking; the result still fails `check`.
pub fn shrink(
    cfg: &CampaignConfig,
    check: Check,
    index: u64,
    ls: &LicenseSet,
    requests: &[Request],
) -> (LicenseSet, Vec<Request>) {
    let mut cur = (ls.clone(), requests.to_vec());
    'outer: for _ in 0..SHRINK_ROUNDS {
        for cand in reductions(&cur.0, &cur.1) {
            if fails(cfg, check, index, &cand.0, &cand.1) {
                cur = cand;
                continue 'outer;
            }
        }
        break;
    }
    cur
}

fn counterexample(
    cfg: &CampaignConfig,
    check: Check,
    index: u64,
    ls: &LicenseSet,
    requests: &[Request],
) -> Option<Counterexample> {
    let (ls, requests) = if cfg.shrink {
        shrink(cfg, check, index, ls, requests)
    } else {
        (ls.clone(), requests.to_vec())
    };
    let failure = evaluate(cfg, check, index, &ls, &requests).first_failure?;
    let script = failure
        .requests
        .unwrap_or_else(|| requests[..=failure.step].to_vec());
    let doc = CorpusDocument::new(ls).with_requests(script);
    Some(Counterexample {
        instance: index,
        step: failure.step,
        reason: failure.reason,
        finding: failure.finding,
        corpus: corpus_to_value(&doc),
    })
}

/// Runs the campaign. Instances are evaluated in parallel; the report only
/// depends on the configuration.
pub fn fuzz_campaign(cfg: &CampaignConfig) -> CampaignReport {
    let per_instance: Vec<Vec<Tally>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let inst = cfg.generator.instance(i);
            cfg.checks
                .iter()
                .map(|&c| evaluate(cfg, c, i, &inst.licenses, &inst.requests))
                .collect()
        })
        .collect();
    let checks = cfg
        .checks
        .iter()
        .enumerate()
        .map(|(ci, &check)| {
            let mut rep = CheckReport {
                check: Some(check),
                instances: cfg.n,
                ..CheckReport::default()
            };
            let mut failing = Vec::new();
            for (i, tallies) in per_instance.iter().enumerate() {
                let t = &tallies[ci];
                rep.trials += t.trials;
                rep.passed += t.passed;
                rep.vacuous += t.vacuous;
                rep.gated += t.gated;
                rep.failed += t.failed;
                rep.instances_counted += u64::from(t.trials > 0);
                if t.first_failure.is_some() {
                    rep.failing_instances += 1;
                    if failing.len() < cfg.max_counterexamples {
                        failing.push(i as u64);
                    }
                }
            }
            rep.counterexamples = failing
                .par_iter()
                .filter_map(|&i| {
                    let inst = cfg.generator.instance(i);
                    counterexample(cfg, check, i, &inst.licenses, &inst.requests)
                })
                .collect();
            rep
        })
        .collect();
    CampaignReport {
        seed: cfg.generator.seed,
        n: cfg.n,
        caps: cfg.generator.caps,
        mode: cfg.generator.mode,
        algorithm: cfg.algorithm,
        opts: cfg.opts,
        checks,
    }
}
