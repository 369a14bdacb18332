//! Keystroke-log PII redaction and within-user cross-platform language analysis.
//!
//! * [`detect`]: PII detector suite (common formats, gazetteer entities).
//! * [`keystroke`]: streaming redactor with two-stage rollback over snapshots.
//! * [`features`]: tokenizer, n-gram and dictionary features.
//! * [`stats`]: effect sizes, paired t, logistic screening, BH-FDR, bootstrap.
//! * [`modeling`]: lexicon scoring, ridge/LOOCV, NMF, cross-domain evaluation.

pub mod detect;
pub mod error;
pub mod features;
pub mod keystroke;
pub mod modeling;
pub mod stats;
pub mod synth;

pub use detect::{redact_string, DetectorSuite, RedactionSpan};
pub use error::{Error, Result};
pub use keystroke::{KeystrokeEvent, Redactor, RedactorConfig, SanitizedEntry};

