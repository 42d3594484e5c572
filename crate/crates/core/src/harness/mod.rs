//! Executable versions of the allocation guarantees: per-request oracles,
//! the permission coloring, fair-schedule exploration and fuzz campaigns.

pub mod campaign;
pub mod coloring;
pub mod gen;
pub mod liveness;
pub mod oracle;

pub use campaign::{
    fuzz_campaign, shrink, CampaignConfig, CampaignReport, Check, CheckReport, Counterexample,
};
pub use coloring::{color_step, Color, Coloring};
pub use gen::{GeneratorCaps, GeneratorMode, Instance, InstanceGenerator};
pub use liveness::{
    run_bounded_liveness, AssumptionViolation, LivenessBound, LivenessVerdict, Schedule,
};
pub use oracle::{
    check_filter_neutrality, check_property3, check_weak_minimal_loss, Finding, Verdict,
};
