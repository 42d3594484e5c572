//! Seeded random license sets and request scripts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{AgentState, Constraint};
use crate::label::Times;
use crate::model::{Action, Cp, License, LicenseSet, Permission, Request, SubLicense, Timestamp};

/// Start of the request window.
pub const WINDOW_START: Timestamp = 1_318_680_000;
/// Seconds between consecutive generated requests.
pub const REQUEST_SPACING: u64 = 60;
/// Usage duration of generated requests; no generated timer exceeds it.
pub const USAGE: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorCaps {
    pub licenses: usize,
    pub sublicenses: usize,
    pub cps: usize,
    pub permissions: usize,
    /// Largest initial count of count and timed-count constraints.
    pub count: u32,
    pub requests: usize,
}

impl Default for GeneratorCaps {
    fn default() -> Self {
        GeneratorCaps {
            licenses: 4,
            sublicenses: 3,
            cps: 3,
            permissions: 4,
            count: 3,
            requests: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Standard,
    /// Rejection-samples until no node is labeled `Once × Complex`.
    NoOnceComplex,
    /// Every path spends a counter that reaches zero: a sublicense that is
    /// not `Once` only holds `Once` CPs. No date-time or interval
    /// constraints; all requests share one timestamp.
    Depleting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub index: u64,
    pub licenses: LicenseSet,
    pub requests: Vec<Request>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceGenerator {
    pub caps: GeneratorCaps,
    pub seed: u64,
    pub mode: GeneratorMode,
}

const STANDARD_POOL: [(Action, &str); 6] = [
    (Action::Play, "A"),
    (Action::Play, "B"),
    (Action::Play, "C"),
    (Action::Play, "D"),
    (Action::Display, "A"),
    (Action::Print, "E"),
];

const DEPLETING_POOL: [(Action, &str); 4] = [
    (Action::Play, "A"),
    (Action::Play, "B"),
    (Action::Play, "C"),
    (Action::Display, "A"),
];

const REJECTION_LIMIT: usize = 256;

impl InstanceGenerator {
    pub fn new(caps: GeneratorCaps, seed: u64) -> Self {
        InstanceGenerator {
            caps,
            seed,
            mode: GeneratorMode::Standard,
        }
    }

    pub fn with_mode(mut self, mode: GeneratorMode) -> Self {
        self.mode = mode;
        self
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// The `index`-th instance of this generator's stream. Independent of
    /// every other index.
    pub fn instance(&self, index: u64) -> Instance {
        let mut rng = self.rng(index);
        let licenses = match self.mode {
            GeneratorMode::Standard => self.license_set(&mut rng, false),
            GeneratorMode::Depleting => self.license_set(&mut rng, true),
            GeneratorMode::NoOnceComplex => {
                let mut ls = self.license_set(&mut rng, false);
                for _ in 0..REJECTION_LIMIT {
                    if !has_once_complex(&ls) {
                        break;
                    }
                    ls = self.license_set(&mut rng, false);
                }
                if has_once_complex(&ls) {
                    ls = self.unconstrained_set(&mut rng);
                }
                ls
            }
        };
        let requests = self.requests(&mut rng, &licenses);
        Instance {
            index,
            licenses,
            requests,
        }
    }

    pub fn instances(&self, n: u64) -> impl Iterator<Item = Instance> + '_ {
        (0..n).map(move |i| self.instance(i))
    }

    fn pool(&self) -> &'static [(Action, &'static str)] {
        match self.mode {
            GeneratorMode::Depleting => &DEPLETING_POOL,
            _ => &STANDARD_POOL,
        }
    }

    fn permissions(&self, rng: &mut ChaCha8Rng) -> Vec<Permission> {
        let n = rng.gen_range(1..=self.caps.permissions.max(1));
        self.pool()
            .choose_multiple(rng, n.min(self.pool().len()))
            .map(|(a, c)| Permission::of(*a, c))
            .collect()
    }

    fn counter(&self, rng: &mut ChaCha8Rng, max: u32) -> Constraint {
        let n = rng.gen_range(1..=max.max(1));
        if rng.gen_bool(0.25) {
            Constraint::TimedCount {
                initial: n,
                timer: rng.gen_range(1..=USAGE),
            }
        } else {
            Constraint::Count { initial: n }
        }
    }

    fn constraint(&self, rng: &mut ChaCha8Rng) -> Constraint {
        match rng.gen_range(0..10) {
            0..=4 => self.counter(rng, self.caps.count),
            5..=6 => {
                let end = WINDOW_START + 86_400 * rng.gen_range(1..=30);
                let start = rng
                    .gen_bool(0.3)
                    .then(|| WINDOW_START - 86_400 * rng.gen_range(1..=30));
                Constraint::DateTime {
                    start,
                    end: Some(end),
                }
            }
            7 => Constraint::DateTime {
                start: Some(WINDOW_START - 86_400),
                end: None,
            },
            8 => Constraint::Interval {
                duration: 86_400 * rng.gen_range(1..=30),
            },
            _ => Constraint::Unconstrained,
        }
    }

    fn constraints(&self, rng: &mut ChaCha8Rng) -> Vec<Constraint> {
        let n = rng.gen_range(0..=2);
        (0..n).map(|_| self.constraint(rng)).collect()
    }

    fn license_set(&self, rng: &mut ChaCha8Rng, depleting: bool) -> LicenseSet {
        let nl = rng.gen_range(1..=self.caps.licenses.max(1));
        let licenses = (0..nl)
            .map(|li| {
                let ns = rng.gen_range(1..=self.caps.sublicenses.max(1));
                let subs = (0..ns)
                    .map(|si| {
                        if depleting {
                            self.depleting_sublicense(rng, si)
                        } else {
                            let nc = rng.gen_range(1..=self.caps.cps.max(1));
                            let cps = (0..nc)
                                .map(|ci| {
                                    Cp::new(
                                        format!("c{}", ci + 1),
                                        self.constraints(rng),
                                        self.permissions(rng),
                                    )
                                    .expect("generated cp is valid")
                                })
                                .collect();
                            SubLicense::new(format!("s{}", si + 1), self.constraints(rng), cps)
                                .expect("generated sublicense is valid")
                        }
                    })
                    .collect();
                License::new(format!("L{}", li + 1), subs).expect("generated license is valid")
            })
            .collect();
        LicenseSet::new(licenses).expect("generated license ids are unique")
    }

    fn depleting_sublicense(&self, rng: &mut ChaCha8Rng, si: usize) -> SubLicense {
        let nc = rng.gen_range(1..=self.caps.cps.max(1));
        let once_sub = rng.gen_bool(0.5);
        let sub_constraints = if once_sub {
            vec![Constraint::Count { initial: 1 }]
        } else if rng.gen_bool(0.5) {
            vec![self.counter(rng, self.caps.count)]
        } else {
            vec![]
        };
        let cps = (0..nc)
            .map(|ci| {
                let constraints = if once_sub {
                    if rng.gen_bool(0.5) {
                        vec![self.counter(rng, self.caps.count)]
                    } else {
                        vec![]
                    }
                } else {
                    vec![Constraint::Count { initial: 1 }]
                };
                Cp::new(format!("c{}", ci + 1), constraints, self.permissions(rng))
                    .expect("generated cp is valid")
            })
            .collect();
        let sl = SubLicense::new(format!("s{}", si + 1), sub_constraints, cps)
            .expect("generated sublicense is valid");
        debug_assert!(
            sl.label.times == Times::Once || sl.cps.iter().all(|c| c.label.times == Times::Once)
        );
        sl
    }

    fn unconstrained_set(&self, rng: &mut ChaCha8Rng) -> LicenseSet {
        let perms = self.permissions(rng);
        let cp = Cp::new("c1", vec![], perms).expect("generated cp is valid");
        let sl = SubLicense::new("s1", vec![], vec![cp]).expect("generated sublicense is valid");
        LicenseSet::new(vec![
            License::new("L1", vec![sl]).expect("generated license is valid")
        ])
        .expect("single license")
    }

    fn requests(&self, rng: &mut ChaCha8Rng, ls: &LicenseSet) -> Vec<Request> {
        let present: Vec<Permission> = {
            let mut v: Vec<Permission> = ls
                .paths()
                .flat_map(|t| ls.cp(t).permissions.iter().cloned())
                .collect();
            v.sort();
            v.dedup();
            v
        };
        let n = rng.gen_range(1..=self.caps.requests.max(1));
        (0..n as u64)
            .map(|i| {
                let p = if rng.gen_bool(0.9) {
                    present
                        .choose(rng)
                        .cloned()
                        .expect("every cp has a permission")
                } else {
                    let (a, c) = STANDARD_POOL.choose(rng).expect("pool is non-empty");
                    Permission::of(*a, c)
                };
                let at = match self.mode {
                    GeneratorMode::Depleting => WINDOW_START,
                    _ => WINDOW_START + i * REQUEST_SPACING,
                };
                Request::new(p.action, p.content, at).with_usage(USAGE)
            })
            .collect()
    }
}

/// Whether some sublicense or CP currently carries a `Once × Complex` label.
pub fn has_once_complex(ls: &LicenseSet) -> bool {
    let state = AgentState::new(ls.clone());
    state_has_once_complex(&state)
}

pub fn state_has_once_complex(state: &AgentState) -> bool {
    state
        .licenses()
        .paths()
        .any(|t| state.sub_label(t).is_once_complex() || state.cp_label(t).is_once_complex())
}
