//! Per-video processing: frames → density map → count, and the extraction
//! of labeled training poses from annotated videos.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{
    assemble_features, bilateral_angles, five_joint_angles, FeatureMode, GeometryConfig, LandmarkFrame, Side,
};
use crate::metrics::VideoAnnotation;
use crate::scorer::{geometric_score, score_frame, GeometricRule, LabeledPose, ScorerError, ScorerModel};
use crate::trigger::{count_reps, CountResult, DensityMap, TriggerConfig, TriggerError};

/// Score assumed before the first valid frame.
pub const NEUTRAL_SCORE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error("model was trained on '{model}' coordinates but the pipeline uses '{pipeline}'")]
    ChannelMismatch { model: &'static str, pipeline: &'static str },
}

/// Source of per-frame saliency.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    /// Linear ramp on one joint angle. Left-only modes read the left side;
    /// every other mode reads the left/right average.
    Geometric(GeometricRule),
    Trained(ScorerModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub mode: FeatureMode,
    pub geometry: GeometryConfig,
    pub trigger: TriggerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoCount {
    pub density: DensityMap,
    pub result: CountResult,
}

impl Pipeline {
    pub fn new(mode: FeatureMode) -> Self {
        Self {
            mode,
            geometry: GeometryConfig::default(),
            trigger: TriggerConfig::default(),
        }
    }

    fn check_scorer(&self, scorer: &Scorer) -> Result<(), PipelineError> {
        if let Scorer::Trained(model) = scorer {
            if model.mode != self.mode {
                return Err(ScorerError::ModeMismatch {
                    expected: model.mode,
                    actual: self.mode,
                }
                .into());
            }
            if model.channels != self.geometry.channels {
                return Err(PipelineError::ChannelMismatch {
                    model: model.channels.name(),
                    pipeline: self.geometry.channels.name(),
                });
            }
        }
        Ok(())
    }

    /// Saliency of one frame, or `None` when the frame is unusable
    /// (landmarks below the visibility threshold or a collapsed segment).
    fn frame_score(&self, frame: &LandmarkFrame, scorer: &Scorer, action: &str) -> Result<Option<f64>, ScorerError> {
        if !self.geometry.frame_is_valid(frame, self.mode) {
            return Ok(None);
        }
        match scorer {
            Scorer::Geometric(rule) => {
                let angles = match self.mode {
                    FeatureMode::LandmarksLeft5 => five_joint_angles(frame, Side::Left, &self.geometry),
                    _ => bilateral_angles(frame, &self.geometry).map(|(_, _, avg)| avg),
                };
                match angles {
                    Ok(a) => geometric_score(&a, rule).map(Some),
                    Err(_) => Ok(None),
                }
            }
            Scorer::Trained(model) => match assemble_features(frame, self.mode, &self.geometry) {
                Ok(features) => score_frame(model, &features, action).map(Some),
                Err(_) => Ok(None),
            },
        }
    }

    /// Per-frame scores. Invalid frames carry the last valid score forward
    /// (or [`NEUTRAL_SCORE`] before the first one) and are masked out.
    pub fn density_map(
        &self,
        video_id: &str,
        frames: &[LandmarkFrame],
        scorer: &Scorer,
        action: &str,
    ) -> Result<DensityMap, PipelineError> {
        self.check_scorer(scorer)?;
        if let Scorer::Trained(model) = scorer {
            model.action_index(action)?;
        }
        let mut scores = Vec::with_capacity(frames.len());
        let mut mask = Vec::with_capacity(frames.len());
        let mut last = NEUTRAL_SCORE;
        for frame in frames {
            match self.frame_score(frame, scorer, action)? {
                Some(s) => {
                    last = s;
                    scores.push(s);
                    mask.push(true);
                }
                None => {
                    scores.push(last);
                    mask.push(false);
                }
            }
        }
        Ok(DensityMap::new(video_id, action, scores, mask)?)
    }

    pub fn count(
        &self,
        video_id: &str,
        frames: &[LandmarkFrame],
        scorer: &Scorer,
        action: &str,
    ) -> Result<VideoCount, PipelineError> {
        let density = self.density_map(video_id, frames, scorer, action)?;
        let result = count_reps(&density, &self.trigger)?;
        Ok(VideoCount { density, result })
    }

    /// Training examples from the annotated salient frames of one video.
    /// Annotated frames that are missing or invalid are skipped.
    pub fn labeled_poses(&self, frames: &[LandmarkFrame], annotation: &VideoAnnotation) -> Vec<LabeledPose> {
        let by_index: HashMap<u64, &LandmarkFrame> = frames.iter().map(|f| (f.frame_index, f)).collect();
        let mut out = Vec::with_capacity(annotation.salient_i_frames.len() + annotation.salient_ii_frames.len());
        let labeled = annotation
            .salient_i_frames
            .iter()
            .map(|&i| (i, 1.0))
            .chain(annotation.salient_ii_frames.iter().map(|&i| (i, 0.0)));
        for (index, label) in labeled {
            let Some(frame) = by_index.get(&index) else { continue };
            if !self.geometry.frame_is_valid(frame, self.mode) {
                continue;
            }
            if let Ok(features) = assemble_features(frame, self.mode, &self.geometry) {
                out.push(LabeledPose {
                    features,
                    action: annotation.action.clone(),
                    saliency_label: label,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SynthSpec, SynthTemplate};
    use crate::geometry::landmark;
    use crate::scorer::{train, TrainConfig};
    use crate::trigger::TriggerState;

    fn squat(n: usize, period: usize) -> Vec<LandmarkFrame> {
        synthesize(&SynthSpec::new(SynthTemplate::Squat, n, period)).unwrap().frames
    }

    #[test]
    fn geometric_count_on_synthetic_squats() {
        let p = Pipeline::new(FeatureMode::LandmarksAvg5);
        let scorer = Scorer::Geometric(SynthTemplate::Squat.default_rule());
        let out = p.count("v", &squat(3, 30), &scorer, "squat").unwrap();
        assert_eq!(out.result.count, 3);
        assert_eq!(out.result.final_state, TriggerState::Neutral);
        assert!(out.density.valid_mask.iter().all(|&v| v));
    }

    #[test]
    fn invisible_frames_carry_the_last_score() {
        let p = Pipeline::new(FeatureMode::LandmarksAvg5);
        let scorer = Scorer::Geometric(SynthTemplate::Squat.default_rule());
        let mut frames = squat(1, 20);
        frames[0].landmarks[landmark::RIGHT_KNEE].visibility = 0.1;
        frames[12].landmarks[landmark::LEFT_HIP].visibility = 0.29;
        let d = p.density_map("v", &frames, &scorer, "squat").unwrap();
        assert!(!d.valid_mask[0] && !d.valid_mask[12]);
        assert_eq!(d.scores[0], NEUTRAL_SCORE);
        assert_eq!(d.scores[12], d.scores[11]);

        // Left-only mode ignores the right side.
        let left = Pipeline::new(FeatureMode::LandmarksLeft5);
        let d = left.density_map("v", &frames, &scorer, "squat").unwrap();
        assert!(d.valid_mask[0] && !d.valid_mask[12]);
    }

    #[test]
    fn collapsed_segment_marks_frame_invalid() {
        let p = Pipeline::new(FeatureMode::LandmarksAvg5);
        let scorer = Scorer::Geometric(SynthTemplate::Squat.default_rule());
        let mut frames = squat(1, 10);
        frames[3].landmarks[landmark::LEFT_KNEE] = frames[3].landmarks[landmark::LEFT_HIP];
        let d = p.density_map("v", &frames, &scorer, "squat").unwrap();
        assert!(!d.valid_mask[3]);
        assert_eq!(d.valid_mask.iter().filter(|&&v| !v).count(), 1);
    }

    #[test]
    fn labeled_poses_follow_annotation() {
        let out = synthesize(&SynthSpec::new(SynthTemplate::JumpJack, 2, 20)).unwrap();
        let p = Pipeline::new(FeatureMode::LandmarksLr10);
        let poses = p.labeled_poses(&out.frames, &out.annotation);
        let ones = poses.iter().filter(|x| x.saliency_label == 1.0).count();
        assert_eq!(ones, out.annotation.salient_i_frames.len());
        assert_eq!(poses.len() - ones, out.annotation.salient_ii_frames.len());
        assert!(poses.iter().all(|x| x.features.dim() == 109 && x.action == "jump_jack"));
    }

    #[test]
    fn trained_scorer_must_match_mode() {
        let out = synthesize(&SynthSpec::new(SynthTemplate::Squat, 2, 16)).unwrap();
        let p = Pipeline::new(FeatureMode::LandmarksAvg5);
        let data = p.labeled_poses(&out.frames, &out.annotation);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let model = train(&data, &cfg).unwrap();
        let scorer = Scorer::Trained(model);
        assert!(p.count("v", &out.frames, &scorer, "squat").is_ok());
        assert!(matches!(
            p.count("v", &out.frames, &scorer, "pull_up"),
            Err(PipelineError::Scorer(ScorerError::UnknownAction(_)))
        ));
        let other = Pipeline::new(FeatureMode::LandmarksOnly);
        assert!(matches!(
            other.count("v", &out.frames, &scorer, "squat"),
            Err(PipelineError::Scorer(ScorerError::ModeMismatch { .. }))
        ));
    }
}
