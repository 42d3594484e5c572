use proptest::prelude::*;

use rightsalloc::allocate::{
    allocate, candidates, Algorithm, AllocOptions, Decision, MinimalLossChooser,
};
use rightsalloc::cases::bundled_document;
use rightsalloc::constraint::{AgentState, Constraint};
use rightsalloc::corpus::{corpus_from_value, ParseOptions};
use rightsalloc::harness::campaign::fails;
use rightsalloc::harness::gen::{GeneratorCaps, GeneratorMode, InstanceGenerator, WINDOW_START};
use rightsalloc::harness::liveness::{
    run_bounded_liveness, AssumptionViolation, LivenessBound, LivenessVerdict,
};
use rightsalloc::harness::{
    check_filter_neutrality, check_property3, check_weak_minimal_loss, color_step, fuzz_campaign,
    CampaignConfig, Check, Color, Coloring, Verdict,
};
use rightsalloc::model::{
    find_matching_cp, find_matching_sublicense, sat_set, Action, Cp, License, LicenseSet,
    Permission, Request, SubLicense,
};
use rightsalloc::rights::{is_lossy, loss, remnants, rights, RightsMultiset};

fn p(a: Action, c: &str) -> Permission {
    Permission::of(a, c)
}

fn ms(items: &[(Action, &str, usize)]) -> RightsMultiset {
    let mut m = RightsMultiset::new();
    for (a, c, n) in items {
        m.insert_n(p(*a, c), *n);
    }
    m
}

type CpSpec<'a> = (Vec<Constraint>, Vec<(Action, &'a str)>);

fn license(id: &str, sub: Vec<Constraint>, cps: Vec<CpSpec>) -> License {
    let cps = cps
        .into_iter()
        .enumerate()
        .map(|(i, (cs, ps))| {
            Cp::new(
                format!("c{}", i + 1),
                cs,
                ps.into_iter().map(|(a, c)| p(a, c)).collect(),
            )
            .unwrap()
        })
        .collect();
    License::new(id, vec![SubLicense::new("s1", sub, cps).unwrap()]).unwrap()
}

fn play(c: &str) -> Request {
    Request::of(Action::Play, c, WINDOW_START)
}

fn state_of(name: &str) -> AgentState {
    AgentState::new(bundled_document(name).unwrap().licenses)
}

use Action::Play;

#[test]
fn row1_rights_remnants_and_loss() {
    let s = state_of("case1.json");
    let r = play("A");
    // one occurrence per CP on a valid path
    assert_eq!(
        rights(&s, r.at),
        ms(&[(Play, "A", 2), (Play, "B", 1), (Play, "C", 1)])
    );
    assert_eq!(
        remnants(&s, 0, &r).unwrap(),
        ms(&[(Play, "A", 1), (Play, "C", 1)])
    );
    // License 2 only goes from 10 to 9 uses; nothing disappears
    assert_eq!(
        remnants(&s, 1, &r).unwrap(),
        ms(&[(Play, "A", 2), (Play, "B", 1), (Play, "C", 1)])
    );
    assert_eq!(
        loss(&s, 0, &r).unwrap(),
        ms(&[(Play, "A", 1), (Play, "B", 1)])
    );
    assert!(loss(&s, 1, &r).unwrap().is_empty());
    assert!(is_lossy(&s, 0, &r).unwrap());
    assert!(!is_lossy(&s, 1, &r).unwrap());
}

#[test]
fn inevitable_loss_rights() {
    let s = state_of("loss_inevitable.json");
    let r = play("A");
    assert_eq!(
        rights(&s, r.at),
        ms(&[
            (Play, "A", 2),
            (Play, "B", 1),
            (Play, "C", 1),
            (Play, "D", 1)
        ])
    );
    assert!(is_lossy(&s, 0, &r).unwrap() && is_lossy(&s, 1, &r).unwrap());
    let d = allocate(&s, &r, Algorithm::Proposed, &AllocOptions::default(), None).unwrap();
    assert!(matches!(d, Decision::PromptRequired(ref c) if c.len() == 2));
    assert_eq!(check_property3(&s, &r, &d).unwrap(), Verdict::Pass);
    assert_eq!(
        check_weak_minimal_loss(&s, &r, &d).unwrap(),
        Verdict::Vacuous
    );
    // depleting everything leaves nothing
    let t = allocate(&s, &r, Algorithm::Oma, &AllocOptions::default(), None)
        .unwrap()
        .chosen()
        .unwrap();
    let s1 = s.consume(t, &r).unwrap();
    let t2 = allocate(&s1, &r, Algorithm::Oma, &AllocOptions::default(), None)
        .unwrap()
        .chosen()
        .unwrap();
    assert!(rights(&s1.consume(t2, &r).unwrap(), r.at).is_empty());
}

#[test]
fn property3_verdicts_on_cases() {
    for name in ["case1.json", "case2.json", "case3.json", "case4.json"] {
        let doc = bundled_document(name).unwrap();
        let s = AgentState::new(doc.licenses.clone());
        let r = doc.requests.unwrap()[0].clone();
        let d = allocate(&s, &r, Algorithm::Proposed, &AllocOptions::default(), None).unwrap();
        assert_eq!(
            check_property3(&s, &r, &d).unwrap(),
            Verdict::Pass,
            "{name}"
        );
    }
    let s = state_of("case1.json");
    let r = play("A");
    let oma = allocate(&s, &r, Algorithm::Oma, &AllocOptions::default(), None).unwrap();
    let Verdict::Fail(f) = check_property3(&s, &r, &oma).unwrap() else {
        panic!("oma must fail on row 1");
    };
    assert_eq!(f.candidates.len(), 2);
    assert!(f.candidates[0].lossy && !f.candidates[1].lossy);
    let proposed = allocate(&s, &r, Algorithm::Proposed, &AllocOptions::default(), None).unwrap();
    assert_eq!(
        check_weak_minimal_loss(&s, &r, &proposed).unwrap(),
        Verdict::Pass
    );
    assert_eq!(
        check_weak_minimal_loss(&s, &play("Z"), &Decision::NoMatch).unwrap(),
        Verdict::Vacuous
    );

    let single = AgentState::new(
        LicenseSet::new(vec![license(
            "L",
            vec![Constraint::Count { initial: 1 }],
            vec![(vec![], vec![(Play, "A"), (Play, "B")])],
        )])
        .unwrap(),
    );
    let d = allocate(
        &single,
        &r,
        Algorithm::Proposed,
        &AllocOptions::default(),
        None,
    )
    .unwrap();
    assert!(is_lossy(&single, 0, &r).unwrap());
    assert_eq!(check_property3(&single, &r, &d).unwrap(), Verdict::Pass);
}

#[test]
fn weak_minimal_loss_with_one_clean_candidate() {
    let once = || vec![Constraint::Count { initial: 1 }];
    let ls = LicenseSet::new(vec![
        license(
            "L1",
            once(),
            vec![(vec![], vec![(Play, "A")]), (vec![], vec![(Play, "B")])],
        ),
        license(
            "L2",
            vec![Constraint::Count { initial: 4 }],
            vec![(vec![], vec![(Play, "A")])],
        ),
        license(
            "L3",
            once(),
            vec![(vec![], vec![(Play, "A")]), (vec![], vec![(Play, "C")])],
        ),
    ])
    .unwrap();
    let s = AgentState::new(ls);
    let r = play("A");
    let lossy: Vec<bool> = (0..3).map(|l| is_lossy(&s, l, &r).unwrap()).collect();
    assert_eq!(lossy, [true, false, true]);
    for l in 0..3 {
        let t = rightsalloc::allocate::matching_target(&s, l, &r).unwrap();
        let v = check_weak_minimal_loss(&s, &r, &Decision::Chosen(t)).unwrap();
        assert_eq!(v == Verdict::Pass, l == 1, "license {l}");
    }
    let d = allocate(&s, &r, Algorithm::Proposed, &AllocOptions::default(), None).unwrap();
    assert_eq!(d.chosen().unwrap().license, 1);
}

#[test]
fn coloring_examples() {
    let s = state_of("case1.json");
    let r = play("A");
    let c0 = Coloring::new(&s, r.at);
    assert_eq!(c0.len(), 3);
    let oma = allocate(&s, &r, Algorithm::Oma, &AllocOptions::default(), None)
        .unwrap()
        .chosen()
        .unwrap();
    let c1 = color_step(&c0, &s, oma, &r).unwrap();
    assert_eq!(c1.get(&p(Play, "B")), Some(Color::White));
    assert_eq!(c1.get(&p(Play, "A")), Some(Color::Black));
    let prop = allocate(&s, &r, Algorithm::Proposed, &AllocOptions::default(), None)
        .unwrap()
        .chosen()
        .unwrap();
    assert_eq!(color_step(&c0, &s, prop, &r).unwrap(), c0);

    let s = state_of("loss_inevitable.json");
    let c0 = Coloring::new(&s, r.at);
    let mut chooser = MinimalLossChooser;
    let t = allocate(
        &s,
        &r,
        Algorithm::Proposed,
        &AllocOptions::default(),
        Some(&mut chooser),
    )
    .unwrap()
    .chosen()
    .unwrap();
    assert_eq!(s.licenses().license(t.license).id, "License 1");
    let c1 = color_step(&c0, &s, t, &r).unwrap();
    assert_eq!(c1.get(&p(Play, "B")), Some(Color::Black));
    assert_eq!(c1.get(&p(Play, "C")), Some(Color::White));
}

fn resolve(s: &AgentState, r: &Request, alg: Algorithm) -> Option<rightsalloc::Target> {
    let mut chooser = MinimalLossChooser;
    allocate(s, r, alg, &AllocOptions::default(), Some(&mut chooser))
        .unwrap()
        .chosen()
}

#[test]
fn generated_invariants() {
    let g = InstanceGenerator::new(GeneratorCaps::default(), 21);
    for inst in g.instances(1500) {
        let mut s = AgentState::new(inst.licenses.clone());
        let mut c = Coloring::new(&s, WINDOW_START);
        for r in &inst.requests {
            // existential consistency
            let occurs = inst
                .licenses
                .paths()
                .any(|t| inst.licenses.cp(t).permissions.contains(&r.permission()));
            assert_eq!(sat_set(&inst.licenses, r), occurs);
            for l in &inst.licenses.licenses {
                match find_matching_sublicense(l, r) {
                    Ok(sl) => assert!(find_matching_cp(sl, r).is_ok()),
                    Err(_) => assert!(!l.sat(r)),
                }
            }
            let all = rights(&s, r.at);
            for l in candidates(&s, r) {
                assert!(remnants(&s, l, r).unwrap().is_subset(&all));
            }
            for alg in [Algorithm::Oma, Algorithm::Proposed] {
                let a = allocate(&s, r, alg, &AllocOptions::default(), None).unwrap();
                let b = allocate(&s, r, alg, &AllocOptions::default(), None).unwrap();
                assert_eq!(a, b);
            }
            if let Some(t) = resolve(&s, r, Algorithm::Oma) {
                let next = color_step(&c, &s, t, r).unwrap();
                assert!(next.refines(&c));
                c = next;
                s = s.consume(t, r).unwrap();
            }
        }
    }
}

/// A date-time right used once against a plain counter: nothing is
/// `Once × Complex`, so the filters change nothing and OMA's choice stands,
/// which leaves fewer rights than the counter would.
fn ranking_vs_remnants() -> (AgentState, Request) {
    let ls = LicenseSet::new(vec![
        license(
            "L1",
            vec![Constraint::DateTime {
                start: None,
                end: Some(WINDOW_START + 86_400),
            }],
            vec![(vec![Constraint::Count { initial: 1 }], vec![(Play, "B")])],
        ),
        license(
            "L2",
            vec![Constraint::Count { initial: 3 }],
            vec![(vec![], vec![(Play, "B")])],
        ),
    ])
    .unwrap();
    (AgentState::new(ls), play("B"))
}

#[test]
fn prefer_undepleted_trades_neutrality_for_minimal_loss() {
    let (s, r) = ranking_vs_remnants();
    let default = AllocOptions::default();
    let d = allocate(&s, &r, Algorithm::Proposed, &default, None).unwrap();
    assert_eq!(d.chosen().unwrap().license, 0);
    assert_eq!(
        check_filter_neutrality(&s, &r, &default).unwrap(),
        Verdict::Pass
    );
    assert!(check_weak_minimal_loss(&s, &r, &d).unwrap().is_fail());
    assert_eq!(check_property3(&s, &r, &d).unwrap(), Verdict::Pass);

    let prefer = AllocOptions {
        prefer_undepleted: true,
        ..AllocOptions::default()
    };
    let d = allocate(&s, &r, Algorithm::Proposed, &prefer, None).unwrap();
    assert_eq!(d.chosen().unwrap().license, 1);
    assert_eq!(check_weak_minimal_loss(&s, &r, &d).unwrap(), Verdict::Pass);
    assert!(check_filter_neutrality(&s, &r, &prefer).unwrap().is_fail());
}

#[test]
fn campaign_tradeoff_holds_at_scale() {
    let mut cfg = CampaignConfig::new(GeneratorCaps::default(), 5, 1500);
    cfg.checks = vec![
        Check::Property3,
        Check::WeakMinimalLoss,
        Check::FilterNeutrality,
    ];
    cfg.shrink = false;
    let rep = fuzz_campaign(&cfg);
    assert_eq!(rep.check(Check::Property3).unwrap().failed, 0);
    assert_eq!(rep.check(Check::FilterNeutrality).unwrap().failed, 0);
    assert!(rep.check(Check::WeakMinimalLoss).unwrap().failed > 0);
    cfg.opts.prefer_undepleted = true;
    let rep = fuzz_campaign(&cfg);
    assert_eq!(rep.check(Check::Property3).unwrap().failed, 0);
    assert_eq!(rep.check(Check::WeakMinimalLoss).unwrap().failed, 0);
    assert!(rep.check(Check::FilterNeutrality).unwrap().failed > 0);
}

#[test]
fn shrunk_counterexamples_still_fail() {
    let mut cfg = CampaignConfig::new(GeneratorCaps::default(), 9, 600);
    cfg.algorithm = Algorithm::Oma;
    cfg.checks = vec![Check::Property3, Check::WeakMinimalLoss];
    let rep = fuzz_campaign(&cfg);
    for c in &rep.checks {
        assert!(!c.counterexamples.is_empty());
        assert!(c.counterexamples.len() <= 3);
        for cx in &c.counterexamples {
            let doc = corpus_from_value(cx.corpus.clone(), ParseOptions::default()).unwrap();
            let requests = doc.requests.clone().unwrap();
            assert!(fails(
                &cfg,
                c.check.unwrap(),
                cx.instance,
                &doc.licenses,
                &requests
            ));
            let orig = cfg.generator.instance(cx.instance);
            assert!(doc.licenses.paths().count() <= orig.licenses.paths().count());
            assert!(requests.len() <= orig.requests.len());
        }
    }
    let empty = fuzz_campaign(&CampaignConfig::new(GeneratorCaps::default(), 9, 0));
    assert!(empty.ok());
    assert!(empty
        .checks
        .iter()
        .all(|c| c.trials == 0 && c.counterexamples.is_empty()));
}

#[test]
fn liveness_examples() {
    let doc = bundled_document("loss_inevitable.json").unwrap();
    let mut bound = LivenessBound::at(WINDOW_START, 0);
    bound.depth = Some(2);
    match run_bounded_liveness(&doc.licenses, &bound) {
        Err(AssumptionViolation::ShortDepth {
            depth: 2,
            permissions: 4,
        }) => {}
        other => panic!("{other:?}"),
    }
    bound.depth = None;
    match run_bounded_liveness(&doc.licenses, &bound).unwrap() {
        LivenessVerdict::Pass {
            exhaustive,
            schedules,
            all_black,
        } => {
            assert!(exhaustive);
            assert_eq!(schedules, 24 * 24);
            assert_eq!(all_black, schedules);
        }
        v => panic!("{v:?}"),
    }

    let one = LicenseSet::new(vec![license(
        "L",
        vec![Constraint::Count { initial: 1 }],
        vec![(vec![], vec![(Play, "A")])],
    )])
    .unwrap();
    assert!(matches!(
        run_bounded_liveness(&one, &bound).unwrap(),
        LivenessVerdict::Pass {
            schedules: 1,
            all_black: 1,
            ..
        }
    ));

    let many = LicenseSet::new(vec![license(
        "L",
        vec![Constraint::Count { initial: 5 }],
        vec![(vec![], vec![(Play, "A")])],
    )])
    .unwrap();
    assert!(matches!(
        run_bounded_liveness(&many, &bound),
        Err(AssumptionViolation::NotDepleting { .. })
    ));
    let expiring = LicenseSet::new(vec![license(
        "L",
        vec![
            Constraint::Count { initial: 1 },
            Constraint::DateTime {
                start: None,
                end: Some(WINDOW_START),
            },
        ],
        vec![(vec![], vec![(Play, "A")])],
    )])
    .unwrap();
    assert!(matches!(
        run_bounded_liveness(&expiring, &bound),
        Err(AssumptionViolation::Expiring { .. })
    ));
}

#[test]
fn liveness_separates_the_allocators() {
    // reading A through License 1 needlessly destroys B
    let ls = LicenseSet::new(vec![
        license(
            "L1",
            vec![Constraint::Count { initial: 1 }],
            vec![(vec![], vec![(Play, "A"), (Play, "B")])],
        ),
        license(
            "L2",
            vec![],
            vec![(vec![Constraint::Count { initial: 1 }], vec![(Play, "A")])],
        ),
    ])
    .unwrap();
    let mut bound = LivenessBound::at(WINDOW_START, 0);
    assert!(!run_bounded_liveness(&ls, &bound).unwrap().is_fail());
    bound.algorithm = Algorithm::Oma;
    match run_bounded_liveness(&ls, &bound).unwrap() {
        LivenessVerdict::Fail {
            permission,
            schedule,
            ..
        } => {
            assert_eq!(permission, p(Play, "B"));
            assert!(schedule.is_fair(&[p(Play, "A"), p(Play, "B")]) || schedule.requests.len() < 2);
        }
        v => panic!("{v:?}"),
    }
}

#[test]
fn depleting_generator_is_never_gated() {
    let g = InstanceGenerator::new(GeneratorCaps::default(), 2).with_mode(GeneratorMode::Depleting);
    for inst in g.instances(200) {
        let bound = LivenessBound::at(WINDOW_START, rightsalloc::harness::gen::USAGE);
        assert!(run_bounded_liveness(&inst.licenses, &bound).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_seed_deterministic(seed in any::<u64>(), index in 0u64..1000) {
        let g = InstanceGenerator::new(GeneratorCaps::default(), seed);
        prop_assert_eq!(g.instance(index), g.instance(index));
    }

    #[test]
    fn coloring_is_monotone(seed in 0u64..500) {
        let g = InstanceGenerator::new(GeneratorCaps::default(), seed);
        let inst = g.instance(0);
        let mut s = AgentState::new(inst.licenses.clone());
        let mut c = Coloring::new(&s, WINDOW_START);
        for r in &inst.requests {
            if let Some(t) = resolve(&s, r, Algorithm::Proposed) {
                let next = color_step(&c, &s, t, r).unwrap();
                prop_assert!(next.refines(&c));
                c = next;
                s = s.consume(t, r).unwrap();
            }
        }
    }
}
