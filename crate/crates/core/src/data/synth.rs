//! Stick-figure motion with known repetition counts.
//!
//! Each template defines two salient poses by their five joint angles. A
//! period moves from pose II to pose I and back with a raised-cosine profile;
//! landmarks are built by forward kinematics so the joint angles recovered
//! from them equal the interpolated angles up to rounding. Frames are sampled
//! at half-frame offsets inside each period.
//!
//! Layout of a sequence: a hold at pose II, the repetitions, an optional
//! distractor movement, and a closing hold at pose II.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::geometry::{landmark as lm, Joint, Landmark, LandmarkFrame, Point3, NUM_LANDMARKS};
use crate::metrics::VideoAnnotation;
use crate::scorer::GeometricRule;

const FPS: f64 = 30.0;

// Segment lengths in torso units.
const SHOULDER_HALF_WIDTH: f64 = 0.2;
const HIP_HALF_WIDTH: f64 = 0.2;
const UPPER_ARM: f64 = 0.55;
const FOREARM: f64 = 0.5;
const THIGH: f64 = 0.8;
const SHIN: f64 = 0.8;
const FOOT: f64 = 0.25;
const PULL_UP_BAR_HEIGHT: f64 = 2.6;

/// Excursion thresholds used when labeling salient frames.
const SALIENT_I_MIN: f64 = 0.9;
const SALIENT_II_MAX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SynthTemplate {
    Squat,
    JumpJack,
    PullUp,
}

impl SynthTemplate {
    pub const ALL: [SynthTemplate; 3] = [SynthTemplate::Squat, SynthTemplate::JumpJack, SynthTemplate::PullUp];

    pub fn name(self) -> &'static str {
        match self {
            SynthTemplate::Squat => "squat",
            SynthTemplate::JumpJack => "jump_jack",
            SynthTemplate::PullUp => "pull_up",
        }
    }

    /// Joint angles (elbow, shoulder, hip, knee, ankle) of salient pose I.
    pub fn pose_i(self) -> [f64; 5] {
        match self {
            SynthTemplate::Squat => [180.0, 90.0, 180.0, 180.0, 90.0],
            SynthTemplate::JumpJack => [170.0, 165.0, 160.0, 178.0, 90.0],
            SynthTemplate::PullUp => [50.0, 50.0, 170.0, 150.0, 120.0],
        }
    }

    /// Joint angles of salient pose II.
    pub fn pose_ii(self) -> [f64; 5] {
        match self {
            SynthTemplate::Squat => [170.0, 95.0, 85.0, 90.0, 75.0],
            SynthTemplate::JumpJack => [170.0, 15.0, 178.0, 178.0, 90.0],
            SynthTemplate::PullUp => [175.0, 170.0, 175.0, 170.0, 120.0],
        }
    }

    /// The joint whose angle best separates the two salient poses.
    pub fn tracked_joint(self) -> Joint {
        match self {
            SynthTemplate::Squat => Joint::Knee,
            SynthTemplate::JumpJack => Joint::Shoulder,
            SynthTemplate::PullUp => Joint::Elbow,
        }
    }

    /// Ramp on the tracked joint calibrated at one and two thirds of its
    /// excursion, so both salient poses saturate the score.
    pub fn default_rule(self) -> GeometricRule {
        let j = Joint::ALL.iter().position(|&j| j == self.tracked_joint()).unwrap();
        let (hi, lo) = (self.pose_i()[j], self.pose_ii()[j]);
        GeometricRule {
            joint: self.tracked_joint(),
            theta_pose_i: lo + 2.0 * (hi - lo) / 3.0,
            theta_pose_ii: lo + (hi - lo) / 3.0,
        }
    }

    /// Distractor pose: tracked joint held half way, other joints moved.
    fn distractor(self) -> ([f64; 5], f64) {
        let (i, ii) = (self.pose_i(), self.pose_ii());
        let mut mid = [0.0; 5];
        for k in 0..5 {
            mid[k] = (i[k] + ii[k]) / 2.0;
        }
        match self {
            // Crouch and jump with the arms swinging overhead.
            SynthTemplate::Squat => ([mid[0], 160.0, mid[2], mid[3], 100.0], 0.4),
            // Arms held level, tucked hop.
            SynthTemplate::JumpJack => ([150.0, mid[1], 150.0, 110.0, 110.0], 0.35),
            // Hanging leg raise with half-bent arms.
            SynthTemplate::PullUp => ([mid[0], mid[1], 95.0, 120.0, 120.0], 0.0),
        }
    }
}

impl fmt::Display for SynthTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthTemplate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SynthTemplate::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template '{s}' (expected squat|jump_jack|pull_up)"))
    }
}

/// From `start_frame` on, the body is rotated by `yaw_degrees` about the
/// vertical axis (until the next change).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawChange {
    pub start_frame: u64,
    pub yaw_degrees: f64,
}

/// Replaces repetition `rep_index` with a partial excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncompleteRep {
    pub rep_index: usize,
    pub completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub video_id: String,
    pub action_template: SynthTemplate,
    pub n_reps: usize,
    pub period_frames: usize,
    pub noise_std: f64,
    pub camera_yaw_schedule: Vec<YawChange>,
    pub incomplete_rep_at: Option<IncompleteRep>,
    pub sub_action_at_end: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(template: SynthTemplate, n_reps: usize, period_frames: usize) -> Self {
        Self {
            video_id: format!("{}_{n_reps}x{period_frames}", template.name()),
            action_template: template,
            n_reps,
            period_frames,
            noise_std: 0.0,
            camera_yaw_schedule: Vec::new(),
            incomplete_rep_at: None,
            sub_action_at_end: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.period_frames < 4 {
            return Err(DataError::BadSpec(format!("period must be at least 4 frames, got {}", self.period_frames)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::BadSpec(format!("noise_std must be finite and >= 0, got {}", self.noise_std)));
        }
        if let Some(inc) = self.incomplete_rep_at {
            if inc.rep_index >= self.n_reps {
                return Err(DataError::BadSpec(format!(
                    "incomplete rep {} out of range for {} reps",
                    inc.rep_index, self.n_reps
                )));
            }
            if !(inc.completion > 0.0 && inc.completion < 1.0) {
                return Err(DataError::BadSpec(format!("completion must be in (0, 1), got {}", inc.completion)));
            }
        }
        if self.camera_yaw_schedule.iter().any(|y| !y.yaw_degrees.is_finite()) {
            return Err(DataError::BadSpec("yaw must be finite".into()));
        }
        if self.camera_yaw_schedule.windows(2).any(|w| w[0].start_frame >= w[1].start_frame) {
            return Err(DataError::BadSpec("yaw schedule start frames must be strictly increasing".into()));
        }
        if self.video_id.is_empty() {
            return Err(DataError::BadSpec("video_id must not be empty".into()));
        }
        Ok(())
    }

    fn hold_frames(&self) -> usize {
        (self.period_frames / 2).max(6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub frames: Vec<LandmarkFrame>,
    pub true_count: usize,
    pub annotation: VideoAnnotation,
}

fn rotate(v: &Point3, axis: &Point3, degrees: f64) -> Point3 {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), degrees.to_radians()) * v
}

/// Rotation axis that turns `v` toward `toward`.
fn bend_axis(v: &Point3, toward: &Point3) -> Point3 {
    v.cross(toward)
}

/// Left-side limb directions for one template and angle set.
struct LimbDirections {
    upper_arm: Point3,
    forearm: Point3,
    thigh: Point3,
    shin: Point3,
    foot: Point3,
}

fn limb_directions(template: SynthTemplate, angles: &[f64; 5]) -> LimbDirections {
    let [elbow, shoulder, hip, knee, ankle] = *angles;
    let x = Point3::x();
    let y = Point3::y();
    let z = Point3::z();
    let down = -y;
    let (arm_axis, elbow_axis, hip_axis, knee_axis) = match template {
        // Sagittal arms and legs.
        SynthTemplate::Squat => (-x, -x, x, -x),
        // Frontal arms and legs.
        SynthTemplate::JumpJack => (z, z, -z, -z),
        // Frontal arms, sagittal legs.
        SynthTemplate::PullUp => (z, -z, x, -x),
    };
    // The shoulder angle is measured against the shoulder→hip line (straight
    // down), the hip angle against hip→shoulder (straight up).
    let upper_arm = rotate(&down, &arm_axis, shoulder);
    let forearm = rotate(&-upper_arm, &elbow_axis, elbow);
    let thigh = rotate(&y, &hip_axis, hip);
    let shin = rotate(&-thigh, &knee_axis, knee);
    let foot_axis = match template {
        SynthTemplate::Squat => x,
        _ => bend_axis(&-shin, &z),
    };
    let foot = rotate(&-shin, &foot_axis, ankle);
    LimbDirections {
        upper_arm,
        forearm,
        thigh,
        shin,
        foot,
    }
}

/// All 33 landmark positions for a template posed at `angles` (both sides
/// identical), with the hip midpoint at the origin lifted by `lift`.
pub fn body_landmarks(template: SynthTemplate, angles: &[f64; 5], lift: f64) -> [Point3; NUM_LANDMARKS] {
    let d = limb_directions(template, angles);
    let mut left = [Point3::zeros(); NUM_LANDMARKS];

    let hip = Point3::new(HIP_HALF_WIDTH, 0.0, 0.0);
    let shoulder = Point3::new(SHOULDER_HALF_WIDTH, 1.0, 0.0);
    let elbow = shoulder + UPPER_ARM * d.upper_arm;
    let wrist = elbow + FOREARM * d.forearm;
    let knee = hip + THIGH * d.thigh;
    let ankle = knee + SHIN * d.shin;
    let toe = ankle + FOOT * d.foot;
    let heel = ankle - 0.06 * d.foot - 0.04 * d.shin;

    let head = Point3::new(0.0, 1.3, 0.0);
    // Face: index 0 is the nose, odd 1..=9 are left-side points.
    left[0] = head + Point3::new(0.0, 0.0, 0.1);
    left[1] = head + Point3::new(0.03, 0.04, 0.09);
    left[3] = head + Point3::new(0.05, 0.04, 0.085);
    left[5] = head + Point3::new(0.07, 0.04, 0.08);
    left[7] = head + Point3::new(0.1, 0.02, 0.0);
    left[9] = head + Point3::new(0.03, -0.05, 0.09);
    left[lm::LEFT_SHOULDER] = shoulder;
    left[lm::LEFT_ELBOW] = elbow;
    left[lm::LEFT_WRIST] = wrist;
    let side = d.forearm.cross(&Point3::z());
    let side = if side.norm() > 1e-6 { side.normalize() } else { Point3::x() };
    left[17] = wrist + 0.08 * d.forearm + 0.03 * side;
    left[19] = wrist + 0.09 * d.forearm;
    left[21] = wrist + 0.05 * d.forearm - 0.03 * side + Point3::new(0.0, 0.0, 0.02);
    left[lm::LEFT_HIP] = hip;
    left[lm::LEFT_KNEE] = knee;
    left[lm::LEFT_ANKLE] = ankle;
    left[lm::LEFT_HEEL] = heel;
    left[lm::LEFT_FOOT_INDEX] = toe;

    // BlazePose numbers face points 1..=10 differently from limbs: left eye
    // inner/eye/outer are 1,2,3 and right 4,5,6; ears 7,8; mouth 9,10.
    let mut out = [Point3::zeros(); NUM_LANDMARKS];
    out[0] = left[0];
    let face_left = [(1, left[1]), (2, left[3]), (3, left[5]), (7, left[7]), (9, left[9])];
    let face_right_index = [4, 5, 6, 8, 10];
    for ((idx, p), ridx) in face_left.into_iter().zip(face_right_index) {
        out[idx] = p;
        out[ridx] = mirror_x(&p);
    }
    for idx in (11..NUM_LANDMARKS).step_by(2) {
        out[idx] = left[idx];
        out[idx + 1] = mirror_x(&left[idx]);
    }

    let lift = match template {
        // Hands stay on the bar.
        SynthTemplate::PullUp => lift + PULL_UP_BAR_HEIGHT - wrist.y,
        _ => lift,
    };
    for p in out.iter_mut() {
        p.y += lift;
    }
    out
}

fn mirror_x(p: &Point3) -> Point3 {
    Point3::new(-p.x, p.y, p.z)
}

/// Raised-cosine excursion in `[0, 1]` at sample `t` of a `period`-frame cycle.
fn excursion(t: usize, period: usize) -> f64 {
    let u = (t as f64 + 0.5) / period as f64;
    0.5 * (1.0 - (2.0 * PI * u).cos())
}

fn lerp(a: &[f64; 5], b: &[f64; 5], w: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = a[k] + w * (b[k] - a[k]);
    }
    out
}

enum Segment {
    Hold,
    Rep { complete: bool },
    Distractor,
}

pub fn synthesize(spec: &SynthSpec) -> Result<SynthOutput, DataError> {
    spec.validate()?;
    let template = spec.action_template;
    let (pose_i, pose_ii) = (template.pose_i(), template.pose_ii());
    let (distractor_pose, hop) = template.distractor();
    let period = spec.period_frames;
    let hold = spec.hold_frames();

    // (angles, lift, excursion, segment) per frame
    let mut timeline: Vec<([f64; 5], f64, f64, Segment)> = Vec::new();
    for _ in 0..hold {
        timeline.push((pose_ii, 0.0, 0.0, Segment::Hold));
    }
    for rep in 0..spec.n_reps {
        let scale = match spec.incomplete_rep_at {
            Some(inc) if inc.rep_index == rep => inc.completion,
            _ => 1.0,
        };
        for t in 0..period {
            let r = scale * excursion(t, period);
            timeline.push((lerp(&pose_ii, &pose_i, r), 0.0, r, Segment::Rep { complete: scale == 1.0 }));
        }
    }
    if spec.sub_action_at_end {
        for t in 0..period {
            let e = (PI * (t as f64 + 0.5) / period as f64).sin().powi(2);
            timeline.push((lerp(&pose_ii, &distractor_pose, e), hop * e, f64::NAN, Segment::Distractor));
        }
    }
    for _ in 0..hold {
        timeline.push((pose_ii, 0.0, 0.0, Segment::Hold));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| DataError::BadSpec(e.to_string()))?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(timeline.len());
    let mut salient_i = Vec::new();
    let mut salient_ii = Vec::new();
    for (i, (angles, lift, r, segment)) in timeline.iter().enumerate() {
        let frame_index = i as u64;
        let yaw = spec
            .camera_yaw_schedule
            .iter()
            .rev()
            .find(|y| y.start_frame <= frame_index)
            .map_or(0.0, |y| y.yaw_degrees);
        let rotation = Rotation3::from_axis_angle(&Point3::y_axis(), yaw.to_radians());
        let points = body_landmarks(template, angles, *lift);
        let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
        for (slot, p) in landmarks.iter_mut().zip(points.iter()) {
            let mut q = if yaw == 0.0 { *p } else { rotation * p };
            if let Some(n) = &noise {
                q.x += n.sample(&mut rng);
                q.y += n.sample(&mut rng);
                q.z += n.sample(&mut rng);
            }
            *slot = Landmark::from_point(&q, 1.0);
        }
        let ts = (frame_index as f64 * 1000.0 / FPS * 1000.0).round() / 1000.0;
        frames.push(LandmarkFrame::new(frame_index, Some(ts), landmarks));

        match segment {
            Segment::Hold => salient_ii.push(frame_index),
            Segment::Rep { complete: true } if *r >= SALIENT_I_MIN => salient_i.push(frame_index),
            Segment::Rep { complete: true } if *r <= SALIENT_II_MAX => salient_ii.push(frame_index),
            _ => {}
        }
    }

    let true_count = spec.n_reps - usize::from(spec.incomplete_rep_at.is_some());
    let annotation = VideoAnnotation {
        video_id: spec.video_id.clone(),
        ground_truth_count: true_count as u32,
        action: template.name().to_string(),
        salient_i_frames: salient_i,
        salient_ii_frames: salient_ii,
    };
    Ok(SynthOutput {
        frames,
        true_count,
        annotation,
    })
}
