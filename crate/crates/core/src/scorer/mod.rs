//! Per-frame saliency scoring.
//!
//! A score near 1 means the frame resembles salient pose I of an action, near
//! 0 salient pose II. Two scorers are provided: a trainable feed-forward
//! network over [`FeatureVector`]s and a deterministic linear ramp on one joint
//! angle ([`GeometricRule`]).

mod checkpoint;
mod mlp;
mod rule;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CoordinateChannels, FeatureMode, FeatureVector};

pub use checkpoint::{parse_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use mlp::{bce_with_logit, gradient_check, param_count, sigmoid, Mlp, Sample, GRADIENT_ABS_FLOOR};
pub use rule::{geometric_score, GeometricRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("feature mode {actual} does not match model mode {expected}")]
    ModeMismatch { expected: FeatureMode, actual: FeatureMode },
    #[error("feature dimension {actual} does not match model input {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set mixes feature modes or dimensions")]
    MixedModes,
    #[error("action '{action}' has no example labeled {label}")]
    MissingLabel { action: String, label: f64 },
    #[error("saliency label must be 0 or 1, got {0}")]
    BadLabel(f64),
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("geometric rule needs distinct calibration angles (both {0})")]
    BadRule(f64),
    #[error("action name '{0}' must be non-empty and free of whitespace, ',' and ';'")]
    BadActionName(String),
}

/// A frame's features with its salient-pose label for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPose {
    pub features: FeatureVector,
    pub action: String,
    /// 1.0 for salient pose I, 0.0 for salient pose II.
    pub saliency_label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            hidden_layers: vec![64, 32],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.epochs == 0 {
            return Err(ScorerError::BadConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ScorerError::BadConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ScorerError::BadConfig("batch size must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(ScorerError::BadConfig("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

/// A trained network together with the feature layout it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub mode: FeatureMode,
    pub channels: CoordinateChannels,
    pub action_names: Vec<String>,
    pub seed: u64,
    pub network: Mlp,
}

pub(crate) fn check_action_name(name: &str) -> Result<(), ScorerError> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ',' || c == ';' || c == '=') {
        return Err(ScorerError::BadActionName(name.to_string()));
    }
    Ok(())
}

impl ScorerModel {
    pub fn layer_sizes(&self) -> &[usize] {
        self.network.layer_sizes()
    }

    pub fn weights(&self) -> &[f64] {
        self.network.params()
    }

    pub fn action_index(&self, action: &str) -> Result<usize, ScorerError> {
        self.action_names
            .iter()
            .position(|a| a == action)
            .ok_or_else(|| ScorerError::UnknownAction(action.to_string()))
    }

    fn check_features(&self, features: &FeatureVector) -> Result<(), ScorerError> {
        if features.mode != self.mode {
            return Err(ScorerError::ModeMismatch {
                expected: self.mode,
                actual: features.mode,
            });
        }
        if features.dim() != self.network.input_dim() {
            return Err(ScorerError::DimensionMismatch {
                expected: self.network.input_dim(),
                actual: features.dim(),
            });
        }
        Ok(())
    }

    fn samples<'a>(&self, batch: &'a [LabeledPose]) -> Result<Vec<Sample<'a>>, ScorerError> {
        batch
            .iter()
            .map(|p| {
                self.check_features(&p.features)?;
                Ok(Sample {
                    input: &p.features.values,
                    output: self.action_index(&p.action)?,
                    target: p.saliency_label,
                })
            })
            .collect()
    }

    /// Mean binary cross-entropy over a labeled batch.
    pub fn loss(&self, batch: &[LabeledPose]) -> Result<f64, ScorerError> {
        Ok(self.network.loss(&self.samples(batch)?))
    }

    /// Finite-difference check of the loss gradient over every weight.
    pub fn gradient_check(&self, batch: &[LabeledPose], epsilon: f64) -> Result<f64, ScorerError> {
        assert!(epsilon > 0.0 && epsilon <= 1e-2, "epsilon must be in (0, 1e-2]");
        Ok(gradient_check(&self.network, &self.samples(batch)?, epsilon))
    }
}

/// Saliency of one frame for `action`, in `[0, 1]`.
pub fn score_frame(model: &ScorerModel, features: &FeatureVector, action: &str) -> Result<f64, ScorerError> {
    model.check_features(features)?;
    let idx = model.action_index(action)?;
    Ok(model.network.predict(&features.values, idx))
}

pub fn train(data: &[LabeledPose], config: &TrainConfig) -> Result<ScorerModel, ScorerError> {
    train_with_history(data, config).map(|(model, _)| model)
}

/// Trains a scorer and returns the full-dataset loss after every epoch.
///
/// Plain SGD with a fixed step. Mini-batches are drawn from a per-epoch
/// shuffle seeded by `config.seed`; with `batch_size >= data.len()` every step
/// is a full-batch gradient step in data order.
pub fn train_with_history(data: &[LabeledPose], config: &TrainConfig) -> Result<(ScorerModel, Vec<f64>), ScorerError> {
    config.validate()?;
    let first = data.first().ok_or(ScorerError::EmptyDataset)?;
    let mode = first.features.mode;
    let dim = first.features.dim();
    if data.iter().any(|p| p.features.mode != mode || p.features.dim() != dim) {
        return Err(ScorerError::MixedModes);
    }
    let mut labels: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for p in data {
        check_action_name(&p.action)?;
        let entry = labels.entry(p.action.as_str()).or_default();
        if p.saliency_label == 1.0 {
            entry.0 = true;
        } else if p.saliency_label == 0.0 {
            entry.1 = true;
        } else {
            return Err(ScorerError::BadLabel(p.saliency_label));
        }
    }
    for (action, (has_i, has_ii)) in &labels {
        if !has_i || !has_ii {
            return Err(ScorerError::MissingLabel {
                action: action.to_string(),
                label: if *has_i { 0.0 } else { 1.0 },
            });
        }
    }
    let action_names: Vec<String> = labels.keys().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();

    let mut layer_sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    layer_sizes.push(dim);
    layer_sizes.extend(&config.hidden_layers);
    layer_sizes.push(action_names.len());

    let channels = channels_for(mode, dim);
    let mut model = ScorerModel {
        mode,
        channels,
        action_names,
        seed: config.seed,
        network: Mlp::init_uniform(layer_sizes, config.seed),
    };
    let samples = model.samples(data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let full_batch = config.batch_size >= samples.len();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size.min(samples.len()));
    for epoch in 0..config.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let (loss, grad) = model.network.loss_and_grad(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ScorerError::NonFiniteLoss { epoch });
            }
            model.network.sgd_step(&grad, config.learning_rate);
        }
        let loss = model.network.loss(&samples);
        if !loss.is_finite() || model.network.params().iter().any(|p| !p.is_finite()) {
            return Err(ScorerError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }
    Ok((model, history))
}

/// Infers the coordinate channels from a feature dimension.
fn channels_for(mode: FeatureMode, dim: usize) -> CoordinateChannels {
    let coords = dim.saturating_sub(mode.angle_count());
    [CoordinateChannels::Xyz, CoordinateChannels::Xy, CoordinateChannels::XyzVisibility]
        .into_iter()
        .find(|c| c.width() * crate::geometry::NUM_LANDMARKS == coords)
        .unwrap_or(CoordinateChannels::Xyz)
}
