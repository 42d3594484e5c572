//! OMA DRM style license evaluation and allocation.
//!
//! A [`LicenseSet`] is a forest of licenses, sublicenses and constraint
//! points (CPs). Each node carries constraints and a label. Given a usage
//! request, the allocator picks which license (and path inside it) to
//! spend, either with the standard rank-based rule or with the label-aware
//! rule that avoids consuming shared counters needlessly.

pub mod allocate;
pub mod cases;
pub mod constraint;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod label;
pub mod model;
pub mod rights;
pub mod session;

pub use allocate::{
    allocate, allocate_and_execute, oma_allocate, proposed_allocate, Algorithm, AllocOptions,
    Candidate, Chooser, DateTimeTiebreak, Decision, MinimalLossChooser,
};
pub use constraint::{AgentState, Constraint, ConstraintKind};
pub use corpus::{parse_corpus, serialize_corpus, CorpusDocument, CorpusError, ParseOptions};
pub use error::{EngineError, ModelError};
pub use label::{Complexity, Label, Times};
pub use model::{
    Action, Content, Cp, License, LicenseSet, Permission, Request, SubLicense, Target, Timestamp,
};
pub use rights::{is_lossy, loss, remnants, rights, RightsMultiset};
