//! Everything computed from a finished event log: participation metrics,
//! significance tests, coder agreement and key-term extraction.

mod anova;
mod kappa;
mod keyterms;
mod labels;
mod metrics;
mod report;

pub use anova::{one_way_anova, AnovaResult};
pub use kappa::{cohen_kappa, kappa_from_table, merge_labels, AgreementTable};
pub use keyterms::{mann_whitney_keyterms, mann_whitney_rho, tokenize, GroupTerms, KeyTermReport, TermScore};
pub use labels::{final_labels, read_labels, simulated_labels, write_labels, FINAL_CODER, SIM_CODER};
pub use metrics::{arm_order, compute_metrics, AnovaSet, ArmMetrics, MetricsReport, OnTopic};
pub use report::{render_json_lines, render_table};

use thiserror::Error;

use crate::eventlog::LogError;
use crate::model::UserId;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("malformed log: {0}")]
    MalformedLog(#[from] LogError),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no observations")]
    EmptyInput,
    #[error("chance agreement is 1 but observed agreement is not")]
    DegenerateMarginals,
    #[error("coders labeled different users: {0}")]
    LabelMismatch(String),
    #[error("user {user} has more than one label from coder {coder}")]
    DuplicateLabel { user: UserId, coder: String },
    #[error("no terms in either corpus")]
    EmptyVocabulary,
    #[error("label file line {line}: {reason}")]
    LabelFile { line: usize, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
