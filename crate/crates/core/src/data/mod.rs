//! File formats and synthetic motion.
//!
//! * `.lmjsonl` landmark files: one JSON object per frame and line.
//! * Annotation, correction-ledger and prediction CSVs.
//! * [`synthesize`]: stick-figure repetitions with known counts.

mod landmarks;
mod tables;
mod synth;

use std::io;

use thiserror::Error;

use crate::metrics::CorrectionLedger;

pub use landmarks::{parse_landmarks, write_landmarks, LandmarkSequence};
pub use synth::{body_landmarks, synthesize, IncompleteRep, SynthOutput, SynthSpec, SynthTemplate, YawChange};
pub use tables::{
    parse_annotations, parse_ledger, parse_predictions, write_annotations, write_ledger, write_predictions,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: expected 33 landmarks, found {found}")]
    WrongLandmarkCount { line: usize, found: usize },
    #[error("line {line}: frame index {found} does not follow {previous}")]
    NonMonotonicFrameIndex { line: usize, previous: u64, found: u64 },
    #[error("line {line}: duplicate video id '{video_id}'")]
    DuplicateVideoId { line: usize, video_id: String },
    #[error("invalid synthesis spec: {0}")]
    BadSpec(String),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// The correction ledger shipped with the crate (`data/corrections.csv`).
pub fn known_corrections() -> CorrectionLedger {
    parse_ledger(include_str!("../../data/corrections.csv").as_bytes(), "known_errata")
        .expect("bundled ledger parses")
}

impl DataError {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        DataError::Parse {
            line,
            reason: reason.into(),
        }
    }

    /// Line number for parse-type errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Parse { line, .. }
            | DataError::WrongLandmarkCount { line, .. }
            | DataError::NonMonotonicFrameIndex { line, .. }
            | DataError::DuplicateVideoId { line, .. } => Some(*line),
            _ => None,
        }
    }
}
