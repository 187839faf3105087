use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::Deserialize;

use super::DataError;
use crate::geometry::{Landmark, LandmarkFrame, NUM_LANDMARKS};

/// Frames of one video, as stored in a `.lmjsonl` file.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    pub video_id: String,
    pub frames: Vec<LandmarkFrame>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: u64,
    ts_ms: f64,
    lm: Vec<[f64; 4]>,
}

/// Parses a landmark file. Blank lines are skipped; every other line must be
/// one frame record.
pub fn parse_landmarks<R: BufRead>(reader: R, video_id: &str) -> Result<LandmarkSequence, DataError> {
    let mut frames: Vec<LandmarkFrame> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::parse(lineno, format!("unreadable line: {e}")))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| DataError::parse(lineno, e.to_string()))?;
        if rec.lm.len() != NUM_LANDMARKS {
            return Err(DataError::WrongLandmarkCount {
                line: lineno,
                found: rec.lm.len(),
            });
        }
        if let Some(prev) = frames.last() {
            if rec.frame <= prev.frame_index {
                return Err(DataError::NonMonotonicFrameIndex {
                    line: lineno,
                    previous: prev.frame_index,
                    found: rec.frame,
                });
            }
        }
        let timestamp_ms = if rec.ts_ms == -1.0 {
            None
        } else if rec.ts_ms >= 0.0 && rec.ts_ms.is_finite() {
            Some(rec.ts_ms)
        } else {
            return Err(DataError::parse(lineno, format!("ts_ms must be -1 or non-negative, got {}", rec.ts_ms)));
        };
        let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
        for (k, (slot, [x, y, z, v])) in landmarks.iter_mut().zip(rec.lm).enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::parse(lineno, format!("landmark {k}: visibility {v} outside [0, 1]")));
            }
            *slot = Landmark::new(x, y, z, v);
        }
        frames.push(LandmarkFrame::new(rec.frame, timestamp_ms, landmarks));
    }
    if frames.is_empty() {
        return Err(DataError::parse(0, "no frames"));
    }
    Ok(LandmarkSequence {
        video_id: video_id.to_string(),
        frames,
    })
}

fn format_frame(out: &mut String, frame: &LandmarkFrame) {
    out.push_str("{\"frame\": ");
    let _ = write!(out, "{}", frame.frame_index);
    out.push_str(", \"ts_ms\": ");
    match frame.timestamp_ms {
        Some(ts) => {
            let _ = write!(out, "{ts:.3}");
        }
        None => out.push_str("-1"),
    }
    out.push_str(", \"lm\": [");
    for (k, lm) in frame.landmarks.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "[{:.6},{:.6},{:.6},{:.6}]", lm.x, lm.y, lm.z, lm.visibility);
    }
    out.push_str("]}\n");
}

/// Writes the canonical form: fixed field order, 6-decimal coordinates and
/// visibility, 3-decimal timestamps (`-1` when absent), LF line endings.
pub fn write_landmarks<W: Write>(frames: &[LandmarkFrame], mut writer: W) -> Result<(), DataError> {
    let mut line = String::with_capacity(1400);
    for frame in frames {
        line.clear();
        format_frame(&mut line, frame);
        writer.write_all(line.as_bytes())?;
    }
    writer.flush()?;
    Ok(())
}
