//! Ground-truth comparison of run verdicts: confusion counts and detection
//! rate per scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::model::HostId;
use crate::pipeline::{load_summary, PipelineError, RunSummary};
use crate::sim::{Labels, SimError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Summary(#[from] PipelineError),
    #[error(transparent)]
    Labels(#[from] SimError),
    #[error("report host {0} does not appear in the labeled trace")]
    UnknownHost(HostId),
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub detection_rate: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub first_detection_window: BTreeMap<HostId, u64>,
}

/// Compares a run summary against ground-truth labels. Every host the
/// report mentions must be labeled; an unlabeled host is an evaluation
/// error.
pub fn evaluate_summary(summary: &RunSummary, labels: &Labels) -> Result<EvalReport, EvalError> {
    let bots: BTreeSet<HostId> = labels.bot_hosts.iter().copied().collect();
    let normals: BTreeSet<HostId> = labels.normal_hosts.iter().copied().collect();

    let mut flagged: BTreeSet<HostId> = BTreeSet::new();
    let mut first_detection_window = BTreeMap::new();
    for verdict in &summary.hosts {
        if !bots.contains(&verdict.host) && !normals.contains(&verdict.host) {
            return Err(EvalError::UnknownHost(verdict.host));
        }
        if verdict.flagged {
            flagged.insert(verdict.host);
            if let Some(w) = verdict.first_flagged_window {
                first_detection_window.insert(verdict.host, w);
            }
        }
    }

    let true_positives = flagged.intersection(&bots).count() as u64;
    let false_positives = flagged.intersection(&normals).count() as u64;
    let false_negatives = bots.len() as u64 - true_positives;
    let true_negatives = normals.len() as u64 - false_positives;
    let detection_rate = if bots.is_empty() {
        1.0
    } else {
        true_positives as f64 / bots.len() as f64
    };
    Ok(EvalReport {
        detection_rate,
        true_positives,
        false_positives,
        false_negatives,
        true_negatives,
        first_detection_window,
    })
}

/// File-based wrapper: `report` is a run output directory or a summary.json
/// path, `labels` the generator's label file.
pub fn evaluate(report: &Path, labels: &Path) -> Result<EvalReport, EvalError> {
    let summary = load_summary(report)?;
    let labels = Labels::load(labels)?;
    evaluate_summary(&summary, &labels)
}
