//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use repcount::geometry::{Landmark, LandmarkFrame, NUM_LANDMARKS};
use repcount::metrics::{Prediction, VideoAnnotation};
use repcount::trigger::RepOrder;

pub fn random_frame<R: Rng>(rng: &mut R, index: u64) -> LandmarkFrame {
    let mut lm = [Landmark::default(); NUM_LANDMARKS];
    for l in lm.iter_mut() {
        *l = Landmark::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            1.0,
        );
    }
    LandmarkFrame::new(index, None, lm)
}

/// Random rotation, translation and scale in `[0.1, 10]`.
pub fn random_similarity<R: Rng>(rng: &mut R) -> (Rotation3<f64>, Vector3<f64>, f64) {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ));
    let t = Vector3::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    );
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    (q.to_rotation_matrix(), t, scale)
}

/// Textbook interior angle via arccos of the clamped cosine.
pub fn arccos_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let u = a - b;
    let v = c - b;
    (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Moving average computed window by window with explicit loops.
pub fn naive_smooth(scores: &[f64], window: usize) -> Vec<f64> {
    let n = scores.len() as i64;
    let half = (window / 2) as i64;
    let mut out = Vec::with_capacity(scores.len());
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in (i - half)..=(i + half) {
            if j >= 0 && j < n {
                sum += scores[j as usize];
                count += 1;
            }
        }
        out.push(sum / count as f64);
    }
    out
}

/// Counts repetitions by labeling valid frames as High (>= upper) or Low
/// (<= lower), dropping everything else, collapsing runs, and counting
/// adjacent opening/closing pairs left to right without overlap.
pub fn oracle_count(scores: &[f64], mask: &[bool], upper: f64, lower: f64, window: usize, order: RepOrder) -> usize {
    if scores.is_empty() {
        return 0;
    }
    let mut w = window.min(scores.len());
    if w.is_multiple_of(2) {
        w -= 1;
    }
    let smoothed = naive_smooth(scores, w);
    let mut labels: Vec<bool> = Vec::new(); // true = High
    for (s, &valid) in smoothed.iter().zip(mask) {
        if !valid {
            continue;
        }
        let label = if *s >= upper {
            Some(true)
        } else if *s <= lower {
            Some(false)
        } else {
            None
        };
        if let Some(l) = label {
            if labels.last() != Some(&l) {
                labels.push(l);
            }
        }
    }
    let opener = matches!(order, RepOrder::PoseIThenII);
    let mut count = 0;
    let mut i = 0;
    while i + 1 < labels.len() {
        if labels[i] == opener && labels[i + 1] != opener {
            count += 1;
            i += 2;
        } else {
            i += 1;
        }
    }
    count
}

/// Number of valid frames where the smoothed score enters `>= upper` from
/// below (first valid frame counts if it starts there).
pub fn upward_crossings(smoothed: &[f64], mask: &[bool], upper: f64) -> usize {
    let mut above = false;
    let mut n = 0;
    for (s, &v) in smoothed.iter().zip(mask) {
        if !v {
            continue;
        }
        let now = *s >= upper;
        if now && !above {
            n += 1;
        }
        above = now;
    }
    n
}

pub fn downward_crossings(smoothed: &[f64], mask: &[bool], lower: f64) -> usize {
    let mut below = false;
    let mut n = 0;
    for (s, &v) in smoothed.iter().zip(mask) {
        if !v {
            continue;
        }
        let now = *s <= lower;
        if now && !below {
            n += 1;
        }
        below = now;
    }
    n
}

/// Two-pass MAE and OBO straight from the definitions.
pub fn naive_mae_obo(gt: &[u32], pred: &[u32]) -> (f64, f64) {
    let errors: Vec<f64> = gt
        .iter()
        .zip(pred)
        .map(|(&g, &p)| (g as f64 - p as f64).abs() / g as f64)
        .collect();
    let within: Vec<f64> = gt
        .iter()
        .zip(pred)
        .map(|(&g, &p)| if (g as i64 - p as i64).abs() <= 1 { 1.0 } else { 0.0 })
        .collect();
    let n = gt.len() as f64;
    (errors.iter().sum::<f64>() / n, within.iter().sum::<f64>() / n)
}

pub fn dataset(gt: &[u32], pred: &[u32]) -> (Vec<VideoAnnotation>, Vec<Prediction>) {
    let anns = gt
        .iter()
        .enumerate()
        .map(|(i, &g)| VideoAnnotation::new(format!("v{i}"), g, "squat"))
        .collect();
    let preds = pred
        .iter()
        .enumerate()
        .map(|(i, &p)| Prediction::new(format!("v{i}"), p))
        .collect();
    (anns, preds)
}
