//! Counting metrics: mean absolute error normalized by the ground-truth count
//! (MAE) and off-by-one accuracy (OBO), ground-truth errata and feature-mode
//! comparison tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::FeatureMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no prediction for video '{0}'")]
    MissingPrediction(String),
    #[error("more than one prediction for video '{0}'")]
    DuplicatePrediction(String),
    #[error("prediction for unannotated video '{0}'")]
    UnexpectedPrediction(String),
    #[error("video '{0}' has ground-truth count 0")]
    ZeroGroundTruth(String),
    #[error("nothing to evaluate")]
    EmptyDataset,
    #[error("correction for '{video_id}' expects count {expected} but annotation has {actual}")]
    StaleCorrection {
        video_id: String,
        expected: u32,
        actual: u32,
    },
    #[error("correction ledger lists '{0}' twice")]
    DuplicateCorrection(String),
    #[error("correction for unknown video '{0}'")]
    UnknownCorrectionTarget(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub ground_truth_count: u32,
    pub action: String,
    #[serde(default)]
    pub salient_i_frames: Vec<u64>,
    #[serde(default)]
    pub salient_ii_frames: Vec<u64>,
}

impl VideoAnnotation {
    pub fn new(video_id: impl Into<String>, ground_truth_count: u32, action: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            ground_truth_count,
            action: action.into(),
            salient_i_frames: Vec::new(),
            salient_ii_frames: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub predicted_count: u32,
}

impl Prediction {
    pub fn new(video_id: impl Into<String>, predicted_count: u32) -> Self {
        Self {
            video_id: video_id.into(),
            predicted_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub video_id: String,
    pub ground_truth: u32,
    pub predicted: u32,
    pub abs_err_normalized: f64,
    pub within_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_videos: usize,
    pub mae: f64,
    pub obo: f64,
    pub per_video: Vec<VideoResult>,
    /// Description of the correction ledger applied to the annotations.
    pub ledger: String,
}

impl EvalReport {
    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            mae: self.mae,
            obo: self.obo,
            n_videos: self.n_videos,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "n_videos={} mae={:.6} obo={:.6} ledger={}",
            self.n_videos, self.mae, self.obo, self.ledger
        )
    }

    /// `video_id,gt,pred,norm_err,within_one` rows in annotation order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,gt,pred,norm_err,within_one\n");
        for v in &self.per_video {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{}",
                v.video_id, v.ground_truth, v.predicted, v.abs_err_normalized, v.within_one
            );
        }
        out
    }
}

/// MAE and OBO over the annotated videos, in annotation order.
pub fn evaluate(annotations: &[VideoAnnotation], predictions: &[Prediction]) -> Result<EvalReport, EvalError> {
    if annotations.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut by_id: HashMap<&str, u32> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.video_id.as_str(), p.predicted_count).is_some() {
            return Err(EvalError::DuplicatePrediction(p.video_id.clone()));
        }
    }
    let annotated: HashSet<&str> = annotations.iter().map(|a| a.video_id.as_str()).collect();
    if let Some(extra) = predictions.iter().find(|p| !annotated.contains(p.video_id.as_str())) {
        return Err(EvalError::UnexpectedPrediction(extra.video_id.clone()));
    }

    let mut per_video = Vec::with_capacity(annotations.len());
    for a in annotations {
        if a.ground_truth_count == 0 {
            return Err(EvalError::ZeroGroundTruth(a.video_id.clone()));
        }
        let predicted = *by_id
            .get(a.video_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(a.video_id.clone()))?;
        let diff = a.ground_truth_count.abs_diff(predicted);
        per_video.push(VideoResult {
            video_id: a.video_id.clone(),
            ground_truth: a.ground_truth_count,
            predicted,
            abs_err_normalized: diff as f64 / a.ground_truth_count as f64,
            within_one: diff <= 1,
        });
    }
    let n = per_video.len() as f64;
    let mae = per_video.iter().map(|v| v.abs_err_normalized).sum::<f64>() / n;
    let obo = per_video.iter().filter(|v| v.within_one).count() as f64 / n;
    Ok(EvalReport {
        n_videos: per_video.len(),
        mae,
        obo,
        per_video,
        ledger: "none".to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub video_id: String,
    pub wrong_count: u32,
    pub corrected_count: u32,
    pub reason: String,
}

/// Known ground-truth errata, applied before evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionLedger {
    pub name: String,
    pub entries: Vec<Correction>,
}

impl CorrectionLedger {
    pub fn new(name: impl Into<String>, entries: Vec<Correction>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(EvalError::DuplicateCorrection(e.video_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            entries,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn describe(&self) -> String {
        if self.entries.is_empty() {
            "none".to_string()
        } else {
            format!("{}({} entries)", self.name, self.entries.len())
        }
    }
}

/// Substitutes corrected counts. Every entry must still see its `wrong_count`,
/// so a ledger cannot be applied twice.
pub fn apply_corrections(annotations: &[VideoAnnotation], ledger: &CorrectionLedger) -> Result<Vec<VideoAnnotation>, EvalError> {
    let mut out = annotations.to_vec();
    for entry in &ledger.entries {
        let target = out
            .iter_mut()
            .find(|a| a.video_id == entry.video_id)
            .ok_or_else(|| EvalError::UnknownCorrectionTarget(entry.video_id.clone()))?;
        if target.ground_truth_count != entry.wrong_count {
            return Err(EvalError::StaleCorrection {
                video_id: entry.video_id.clone(),
                expected: entry.wrong_count,
                actual: target.ground_truth_count,
            });
        }
        target.ground_truth_count = entry.corrected_count;
    }
    Ok(out)
}

/// Corrects annotations, then evaluates, recording the ledger in the report.
pub fn evaluate_with_ledger(
    annotations: &[VideoAnnotation],
    predictions: &[Prediction],
    ledger: &CorrectionLedger,
) -> Result<EvalReport, EvalError> {
    let corrected = apply_corrections(annotations, ledger)?;
    let mut report = evaluate(&corrected, predictions)?;
    report.ledger = ledger.describe();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mae: f64,
    pub obo: f64,
    pub n_videos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub rank: usize,
    pub mode: FeatureMode,
    pub summary: ModeSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub rows: Vec<RankedRow>,
}

impl ModeComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,mode,mae,obo,n_videos\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{}", r.rank, r.mode, r.summary.mae, r.summary.obo, r.summary.n_videos);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<4}  {:<10}  {:>8}  {:>8}  {:>8}\n", "rank", "mode", "MAE", "OBO", "videos");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<4}  {:<10}  {:>8.3}  {:>8.3}  {:>8}",
                r.rank, r.mode, r.summary.mae, r.summary.obo, r.summary.n_videos
            );
        }
        out
    }

    pub fn modes(&self) -> Vec<FeatureMode> {
        self.rows.iter().map(|r| r.mode).collect()
    }
}

/// Ranks modes by ascending MAE, then descending OBO.
pub fn compare_modes(reports: &BTreeMap<FeatureMode, ModeSummary>) -> ModeComparison {
    let mut rows: Vec<(FeatureMode, ModeSummary)> = reports.iter().map(|(m, s)| (*m, *s)).collect();
    rows.sort_by(|(ma, a), (mb, b)| {
        a.mae
            .total_cmp(&b.mae)
            .then_with(|| b.obo.total_cmp(&a.obo))
            .then_with(|| ma.cmp(mb))
    });
    ModeComparison {
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(i, (mode, summary))| RankedRow { rank: i + 1, mode, summary })
            .collect(),
    }
}
