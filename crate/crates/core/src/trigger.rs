//! Density maps and the two-limit action trigger.
//!
//! A density map holds one score per frame: values near 1 look like salient
//! pose I, values near 0 like salient pose II. The trigger is a hysteresis
//! machine over the (smoothed) scores; a repetition is emitted only after one
//! salient pose is reached past its limit and then the other one is.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriggerError {
    #[error("smoothing window must be odd and between 1 and {len}, got {window}")]
    BadWindow { window: usize, len: usize },
    #[error("invalid trigger limits: need 0 <= lower < upper <= 1 (lower={lower}, upper={upper})")]
    BadLimits { lower: f64, upper: f64 },
    #[error("scores and validity mask differ in length ({scores} vs {mask})")]
    LengthMismatch { scores: usize, mask: usize },
    #[error("score {value} at frame {frame} is outside [0, 1]")]
    ScoreOutOfRange { frame: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub video_id: String,
    pub action: String,
    pub scores: Vec<f64>,
    pub valid_mask: Vec<bool>,
}

impl DensityMap {
    pub fn new(video_id: impl Into<String>, action: impl Into<String>, scores: Vec<f64>, valid_mask: Vec<bool>) -> Result<Self, TriggerError> {
        if scores.len() != valid_mask.len() {
            return Err(TriggerError::LengthMismatch {
                scores: scores.len(),
                mask: valid_mask.len(),
            });
        }
        if let Some((frame, &value)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(TriggerError::ScoreOutOfRange { frame, value });
        }
        Ok(Self {
            video_id: video_id.into(),
            action: action.into(),
            scores,
            valid_mask,
        })
    }

    /// A map with every frame valid.
    pub fn from_scores(video_id: impl Into<String>, action: impl Into<String>, scores: Vec<f64>) -> Result<Self, TriggerError> {
        let mask = vec![true; scores.len()];
        Self::new(video_id, action, scores, mask)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Which salient pose opens a repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RepOrder {
    /// Pose I (score >= upper) then pose II (score <= lower).
    #[default]
    PoseIThenII,
    PoseIIThenI,
}

impl RepOrder {
    pub fn name(self) -> &'static str {
        match self {
            RepOrder::PoseIThenII => "i_then_ii",
            RepOrder::PoseIIThenI => "ii_then_i",
        }
    }
}

impl std::str::FromStr for RepOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "i_then_ii" => Ok(RepOrder::PoseIThenII),
            "ii_then_i" => Ok(RepOrder::PoseIIThenI),
            _ => Err(format!("unknown repetition order '{s}' (expected i_then_ii|ii_then_i)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub upper: f64,
    pub lower: f64,
    pub smoothing_window: usize,
    #[serde(default)]
    pub order: RepOrder,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            upper: 0.8,
            lower: 0.2,
            smoothing_window: 5,
            order: RepOrder::PoseIThenII,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), TriggerError> {
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= 1.0) {
            return Err(TriggerError::BadLimits {
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(TriggerError::BadWindow {
                window: self.smoothing_window,
                len: usize::MAX,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerState {
    Neutral,
    SeenPoseI,
    /// Only reachable with [`RepOrder::PoseIIThenI`].
    SeenPoseII,
}

impl TriggerState {
    pub fn name(self) -> &'static str {
        match self {
            TriggerState::Neutral => "NEUTRAL",
            TriggerState::SeenPoseI => "SEEN_I",
            TriggerState::SeenPoseII => "SEEN_II",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepEvent {
    pub rep_index: usize,
    pub pose_i_frame: usize,
    pub pose_ii_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResult {
    pub count: usize,
    pub events: Vec<RepEvent>,
    pub final_state: TriggerState,
}

/// Centered moving average; windows are clipped at the sequence ends.
pub fn smooth(scores: &[f64], window: usize) -> Result<Vec<f64>, TriggerError> {
    if window == 0 || window.is_multiple_of(2) || window > scores.len().max(1) {
        return Err(TriggerError::BadWindow {
            window,
            len: scores.len(),
        });
    }
    let half = window / 2;
    let n = scores.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            // Summed per window (not as a running sum) so exact inputs stay exact.
            scores[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Largest usable odd window for a sequence of `len` frames.
fn effective_window(window: usize, len: usize) -> usize {
    let w = window.min(len).max(1);
    if w.is_multiple_of(2) {
        w - 1
    } else {
        w
    }
}

/// Counts repetitions in a density map.
///
/// Scores strictly between the limits and frames whose mask is false never
/// change the state. A limit reached exactly counts as crossed. If the map is
/// shorter than the smoothing window, the window shrinks to fit.
pub fn count_reps(density: &DensityMap, config: &TriggerConfig) -> Result<CountResult, TriggerError> {
    config.validate()?;
    if density.scores.len() != density.valid_mask.len() {
        return Err(TriggerError::LengthMismatch {
            scores: density.scores.len(),
            mask: density.valid_mask.len(),
        });
    }
    if density.is_empty() {
        return Ok(CountResult {
            count: 0,
            events: Vec::new(),
            final_state: TriggerState::Neutral,
        });
    }
    let smoothed = smooth(&density.scores, effective_window(config.smoothing_window, density.len()))?;

    let mut state = TriggerState::Neutral;
    let mut opened_at = 0;
    let mut events = Vec::new();
    for (frame, (&score, &valid)) in smoothed.iter().zip(&density.valid_mask).enumerate() {
        if !valid {
            continue;
        }
        let at_i = score >= config.upper;
        let at_ii = score <= config.lower;
        match (config.order, state) {
            (RepOrder::PoseIThenII, TriggerState::Neutral) if at_i => {
                state = TriggerState::SeenPoseI;
                opened_at = frame;
            }
            (RepOrder::PoseIThenII, TriggerState::SeenPoseI) if at_ii => {
                events.push(RepEvent {
                    rep_index: events.len(),
                    pose_i_frame: opened_at,
                    pose_ii_frame: frame,
                });
                state = TriggerState::Neutral;
            }
            (RepOrder::PoseIIThenI, TriggerState::Neutral) if at_ii => {
                state = TriggerState::SeenPoseII;
                opened_at = frame;
            }
            (RepOrder::PoseIIThenI, TriggerState::SeenPoseII) if at_i => {
                events.push(RepEvent {
                    rep_index: events.len(),
                    pose_i_frame: frame,
                    pose_ii_frame: opened_at,
                });
                state = TriggerState::Neutral;
            }
            _ => {}
        }
    }
    Ok(CountResult {
        count: events.len(),
        events,
        final_state: state,
    })
}

/// Renders the map as `frame,score,valid` CSV with 6-decimal scores.
pub fn density_csv(density: &DensityMap) -> String {
    let mut out = String::with_capacity(24 * (density.len() + 1));
    out.push_str("frame,score,valid\n");
    for (i, (score, valid)) in density.scores.iter().zip(&density.valid_mask).enumerate() {
        let _ = writeln!(out, "{i},{score:.6},{valid}");
    }
    out
}

pub fn write_density_csv<W: Write>(density: &DensityMap, mut writer: W) -> io::Result<()> {
    writer.write_all(density_csv(density).as_bytes())
}

/// Parses CSV produced by [`density_csv`] back into scores and mask.
pub fn parse_density_csv(text: &str) -> Result<(Vec<f64>, Vec<bool>), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("frame,score,valid") => {}
        other => return Err(format!("bad density header: {other:?}")),
    }
    let mut scores = Vec::new();
    let mut mask = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [frame, score, valid] = fields[..] else {
            return Err(format!("line {}: expected 3 fields", n + 2));
        };
        if frame.parse::<usize>().ok() != Some(n) {
            return Err(format!("line {}: frame index out of sequence", n + 2));
        }
        scores.push(score.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 2))?);
        mask.push(valid.parse::<bool>().map_err(|e| format!("line {}: {e}", n + 2))?);
    }
    Ok((scores, mask))
}
