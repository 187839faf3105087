//! Plain-text model checkpoints.
//!
//! ```text
//! repcount-model v1 mode=avg5 channels=xyz layers=104,64,32,3 actions=jump_jack;pull_up;squat seed=7
//! -1.2345678901234567e-1
//! ...
//! ```
//!
//! One parameter per line, 17 significant digits, so every `f64` survives a
//! write/parse cycle bit for bit.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{check_action_name, param_count, Mlp, ScorerModel};
use crate::geometry::{CoordinateChannels, FeatureMode, NUM_LANDMARKS};

pub const CHECKPOINT_MAGIC: &str = "repcount-model";
const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn format_err(line: usize, reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Format {
        line,
        reason: reason.into(),
    }
}

pub fn write_checkpoint<W: Write>(model: &ScorerModel, mut writer: W) -> Result<(), CheckpointError> {
    let layers: Vec<String> = model.layer_sizes().iter().map(|n| n.to_string()).collect();
    writeln!(
        writer,
        "{CHECKPOINT_MAGIC} {VERSION} mode={} channels={} layers={} actions={} seed={}",
        model.mode,
        model.channels.name(),
        layers.join(","),
        model.action_names.join(";"),
        model.seed
    )?;
    for w in model.weights() {
        writeln!(writer, "{w:.16e}")?;
    }
    Ok(())
}

pub fn parse_checkpoint<R: BufRead>(reader: R) -> Result<ScorerModel, CheckpointError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty checkpoint"))??;
    let mut fields = header.split(' ');
    if fields.next() != Some(CHECKPOINT_MAGIC) {
        return Err(format_err(1, "not a repcount model checkpoint"));
    }
    if fields.next() != Some(VERSION) {
        return Err(format_err(1, format!("unsupported checkpoint version (expected {VERSION})")));
    }

    let mut mode = None;
    let mut channels = None;
    let mut layers = None;
    let mut actions = None;
    let mut seed = None;
    for field in fields {
        let (key, value) = field.split_once('=').ok_or_else(|| format_err(1, format!("malformed header field '{field}'")))?;
        match key {
            "mode" => mode = Some(value.parse::<FeatureMode>().map_err(|e| format_err(1, e))?),
            "channels" => channels = Some(value.parse::<CoordinateChannels>().map_err(|e| format_err(1, e))?),
            "layers" => {
                let sizes = value
                    .split(',')
                    .map(|s| s.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format_err(1, format!("bad layer sizes: {e}")))?;
                layers = Some(sizes);
            }
            "actions" => {
                let names: Vec<String> = value.split(';').map(str::to_string).collect();
                for n in &names {
                    check_action_name(n).map_err(|e| format_err(1, e.to_string()))?;
                }
                actions = Some(names);
            }
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| format_err(1, format!("bad seed: {e}")))?),
            other => return Err(format_err(1, format!("unknown header field '{other}'"))),
        }
    }
    let missing = |name: &str| format_err(1, format!("header lacks '{name}'"));
    let mode = mode.ok_or_else(|| missing("mode"))?;
    let channels = channels.ok_or_else(|| missing("channels"))?;
    let layers = layers.ok_or_else(|| missing("layers"))?;
    let action_names = actions.ok_or_else(|| missing("actions"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;

    if layers.len() < 2 || layers.contains(&0) {
        return Err(format_err(1, "need at least two non-empty layers"));
    }
    let expected_input = NUM_LANDMARKS * channels.width() + mode.angle_count();
    if layers[0] != expected_input {
        return Err(format_err(1, format!("input layer {} does not match mode {mode} ({expected_input})", layers[0])));
    }
    if *layers.last().unwrap() != action_names.len() {
        return Err(format_err(1, "output layer width differs from the number of actions"));
    }

    let expected = param_count(&layers);
    let mut weights = Vec::with_capacity(expected);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let w: f64 = line.trim_end().parse().map_err(|e| format_err(lineno, format!("bad weight '{line}': {e}")))?;
        if !w.is_finite() {
            return Err(format_err(lineno, "weight is not finite"));
        }
        weights.push(w);
    }
    if weights.len() != expected {
        return Err(format_err(
            weights.len() + 2,
            format!("expected {expected} weights, found {}", weights.len()),
        ));
    }
    Ok(ScorerModel {
        mode,
        channels,
        action_names,
        seed,
        network: Mlp::from_params(layers, weights),
    })
}
