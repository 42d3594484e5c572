//! JSON corpus files: license sets plus optional request scripts.
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "licenses": [
//!     { "id": "L1", "sublicenses": [
//!       { "id": "s1", "constraints": [{"count": 1}, {"datetime": {"end": 1320105599}}],
//!         "cps": [{ "id": "c1", "constraints": [], "permissions": [{"action": "play", "content": "A"}] }] }
//!     ] }
//!   ],
//!   "requests": [{"action": "play", "content": "A", "at": 1318680000}]
//! }
//! ```
//!
//! Labels may appear on sublicenses and CPs as `"label": "Complex×Once×DateTime"`.
//! They are always recomputed; in strict mode a stale one is an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::Constraint;
use crate::error::ModelError;
use crate::label::Label;
use crate::model::{
    Action, Content, Cp, License, LicenseSet, Permission, Request, SubLicense, Timestamp,
};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("label mismatch at {location}: file says {found}, computed {expected}")]
    LabelMismatch {
        location: String,
        expected: Label,
        found: Label,
    },
}

impl CorpusError {
    fn schema(location: impl Into<String>, message: impl ToString) -> Self {
        CorpusError::Schema {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDocument {
    pub schema_version: String,
    pub licenses: LicenseSet,
    pub requests: Option<Vec<Request>>,
}

impl CorpusDocument {
    pub fn new(licenses: LicenseSet) -> Self {
        CorpusDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            licenses,
            requests: None,
        }
    }

    pub fn with_requests(mut self, requests: Vec<Request>) -> Self {
        self.requests = Some(requests);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub strict_labels: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            strict_labels: true,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocWire {
    schema_version: String,
    licenses: Vec<LicenseWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    requests: Option<Vec<RequestWire>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LicenseWire {
    id: String,
    sublicenses: Vec<SubWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubWire {
    id: String,
    #[serde(default)]
    constraints: Vec<ConstraintWire>,
    cps: Vec<CpWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CpWire {
    id: String,
    #[serde(default)]
    constraints: Vec<ConstraintWire>,
    permissions: Vec<PermissionWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PermissionWire {
    action: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestWire {
    action: String,
    content: String,
    at: TimeWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    usage_duration: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ConstraintWire {
    Count(u32),
    TimedCount {
        n: u32,
        timer: u64,
    },
    #[serde(rename = "datetime")]
    DateTime {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<TimeWire>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<TimeWire>,
    },
    Interval(u64),
    #[serde(rename = "true")]
    True(()),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeWire {
    Seconds(u64),
    Text(String),
}

/// Integer seconds, or an RFC 3339 / ISO-8601 date-time (UTC when no
/// offset is given), or a bare `YYYY-MM-DD` date at midnight UTC.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let secs = if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        dt.timestamp()
    } else if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        dt.and_utc().timestamp()
    } else if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp()
    } else {
        return Err(format!(
            "`{s}` is neither integer seconds nor an ISO-8601 date-time"
        ));
    };
    u64::try_from(secs).map_err(|_| format!("`{s}` is before the epoch"))
}

impl TimeWire {
    fn resolve(&self, location: &str) -> Result<Timestamp, CorpusError> {
        match self {
            TimeWire::Seconds(n) => Ok(*n),
            TimeWire::Text(s) => parse_timestamp(s).map_err(|m| CorpusError::schema(location, m)),
        }
    }
}

pub fn parse_corpus(bytes: &[u8], opts: ParseOptions) -> Result<CorpusDocument, CorpusError> {
    let wire: DocWire = serde_json::from_slice(bytes).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => CorpusError::Schema {
                location: format!("line {}, column {}", e.line(), e.column()),
                message: e.to_string(),
            },
            _ => CorpusError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })?;
    wire.into_document(opts)
}

pub fn parse_corpus_str(text: &str, opts: ParseOptions) -> Result<CorpusDocument, CorpusError> {
    parse_corpus(text.as_bytes(), opts)
}

/// Canonical form: 2-space indent, fixed key order, recomputed labels and
/// a trailing newline.
pub fn serialize_corpus(doc: &CorpusDocument) -> String {
    let wire = DocWire::from_document(doc);
    let mut out = serde_json::to_string_pretty(&wire).expect("corpus documents always serialize");
    out.push('\n');
    out
}

/// The canonical document as a JSON value, for embedding in reports.
pub fn corpus_to_value(doc: &CorpusDocument) -> serde_json::Value {
    serde_json::to_value(DocWire::from_document(doc)).expect("corpus documents always serialize")
}

pub fn corpus_from_value(
    value: serde_json::Value,
    opts: ParseOptions,
) -> Result<CorpusDocument, CorpusError> {
    let wire: DocWire =
        serde_json::from_value(value).map_err(|e| CorpusError::schema("document", e))?;
    wire.into_document(opts)
}

fn model_err(location: &str, e: ModelError) -> CorpusError {
    CorpusError::schema(location, e)
}

fn check_label(
    location: &str,
    found: Option<&str>,
    expected: Label,
    opts: ParseOptions,
) -> Result<(), CorpusError> {
    let Some(text) = found else {
        return Ok(());
    };
    let found: Label = text
        .parse()
        .map_err(|e| CorpusError::schema(format!("{location}.label"), e))?;
    if found != expected && opts.strict_labels {
        return Err(CorpusError::LabelMismatch {
            location: format!("{location}.label"),
            expected,
            found,
        });
    }
    Ok(())
}

fn permission(w: &PermissionWire, location: &str) -> Result<Permission, CorpusError> {
    let action: Action = w
        .action
        .parse()
        .map_err(|e| model_err(&format!("{location}.action"), e))?;
    let content = Content::new(w.content.clone())
        .map_err(|e| model_err(&format!("{location}.content"), e))?;
    Ok(Permission::new(action, content))
}

fn constraints(ws: &[ConstraintWire], location: &str) -> Result<Vec<Constraint>, CorpusError> {
    ws.iter()
        .enumerate()
        .map(|(i, w)| {
            let loc = format!("{location}.constraints[{i}]");
            let c = match w {
                ConstraintWire::Count(n) => Constraint::Count { initial: *n },
                ConstraintWire::TimedCount { n, timer } => Constraint::TimedCount {
                    initial: *n,
                    timer: *timer,
                },
                ConstraintWire::DateTime { start, end } => Constraint::DateTime {
                    start: start.as_ref().map(|t| t.resolve(&loc)).transpose()?,
                    end: end.as_ref().map(|t| t.resolve(&loc)).transpose()?,
                },
                ConstraintWire::Interval(d) => Constraint::Interval { duration: *d },
                ConstraintWire::True(()) => Constraint::Unconstrained,
            };
            c.validate().map_err(|e| model_err(&loc, e))?;
            Ok(c)
        })
        .collect()
}

impl DocWire {
    fn into_document(self, opts: ParseOptions) -> Result<CorpusDocument, CorpusError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::schema(
                "schema_version",
                format!("unsupported version `{}`", self.schema_version),
            ));
        }
        if self.licenses.is_empty() {
            return Err(CorpusError::schema(
                "licenses",
                "at least one license is required",
            ));
        }
        let mut licenses = Vec::with_capacity(self.licenses.len());
        for (li, lw) in self.licenses.iter().enumerate() {
            let lloc = format!("licenses[{li}]");
            let mut subs = Vec::with_capacity(lw.sublicenses.len());
            for (si, sw) in lw.sublicenses.iter().enumerate() {
                let sloc = format!("{lloc}.sublicenses[{si}]");
                let mut cps = Vec::with_capacity(sw.cps.len());
                for (ci, cw) in sw.cps.iter().enumerate() {
                    let cloc = format!("{sloc}.cps[{ci}]");
                    let perms = cw
                        .permissions
                        .iter()
                        .enumerate()
                        .map(|(pi, pw)| permission(pw, &format!("{cloc}.permissions[{pi}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    let cp = Cp::new(cw.id.clone(), constraints(&cw.constraints, &cloc)?, perms)
                        .map_err(|e| model_err(&cloc, e))?;
                    check_label(&cloc, cw.label.as_deref(), cp.label, opts)?;
                    cps.push(cp);
                }
                let sl = SubLicense::new(sw.id.clone(), constraints(&sw.constraints, &sloc)?, cps)
                    .map_err(|e| model_err(&sloc, e))?;
                check_label(&sloc, sw.label.as_deref(), sl.label, opts)?;
                subs.push(sl);
            }
            licenses.push(License::new(lw.id.clone(), subs).map_err(|e| model_err(&lloc, e))?);
        }
        let licenses = LicenseSet::new(licenses).map_err(|e| model_err("licenses", e))?;
        let requests = self
            .requests
            .map(|rs| {
                rs.iter()
                    .enumerate()
                    .map(|(i, rw)| {
                        let loc = format!("requests[{i}]");
                        let p = permission(
                            &PermissionWire {
                                action: rw.action.clone(),
                                content: rw.content.clone(),
                            },
                            &loc,
                        )?;
                        Ok(Request {
                            action: p.action,
                            content: p.content,
                            at: rw.at.resolve(&format!("{loc}.at"))?,
                            usage_duration: rw.usage_duration.unwrap_or(0),
                        })
                    })
                    .collect::<Result<Vec<_>, CorpusError>>()
            })
            .transpose()?;
        Ok(CorpusDocument {
            schema_version: self.schema_version,
            licenses,
            requests,
        })
    }

    fn from_document(doc: &CorpusDocument) -> Self {
        let cw = |cs: &[Constraint]| -> Vec<ConstraintWire> {
            cs.iter()
                .map(|c| match *c {
                    Constraint::Count { initial } => ConstraintWire::Count(initial),
                    Constraint::TimedCount { initial, timer } => {
                        ConstraintWire::TimedCount { n: initial, timer }
                    }
                    Constraint::DateTime { start, end } => ConstraintWire::DateTime {
                        start: start.map(TimeWire::Seconds),
                        end: end.map(TimeWire::Seconds),
                    },
                    Constraint::Interval { duration } => ConstraintWire::Interval(duration),
                    Constraint::Unconstrained => ConstraintWire::True(()),
                })
                .collect()
        };
        let pw = |p: &Permission| PermissionWire {
            action: p.action.to_string(),
            content: p.content.to_string(),
        };
        DocWire {
            schema_version: doc.schema_version.clone(),
            licenses: doc
                .licenses
                .licenses
                .iter()
                .map(|l| LicenseWire {
                    id: l.id.clone(),
                    sublicenses: l
                        .sublicenses
                        .iter()
                        .map(|sl| SubWire {
                            id: sl.id.clone(),
                            constraints: cw(&sl.constraints),
                            cps: sl
                                .cps
                                .iter()
                                .map(|cp| CpWire {
                                    id: cp.id.clone(),
                                    constraints: cw(&cp.constraints),
                                    permissions: cp.permissions.iter().map(pw).collect(),
                                    label: Some(cp.label.to_string()),
                                })
                                .collect(),
                            label: Some(sl.label.to_string()),
                        })
                        .collect(),
                })
                .collect(),
            requests: doc.requests.as_ref().map(|rs| {
                rs.iter()
                    .map(|r| RequestWire {
                        action: r.action.to_string(),
                        content: r.content.to_string(),
                        at: TimeWire::Seconds(r.at),
                        usage_duration: (r.usage_duration > 0).then_some(r.usage_duration),
                    })
                    .collect()
            }),
        }
    }
}
