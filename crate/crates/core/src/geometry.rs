//! Joint-angle geometry and feature assembly.
//!
//! Landmarks follow the 33-point BlazePose topology. Five interior joint
//! angles (elbow, shoulder, hip, knee, ankle) are computed per body side from
//! fixed landmark triplets and appended, scaled to `[0, 1]`, to the flattened
//! landmark coordinates according to a [`FeatureMode`].

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = Vector3<f64>;

/// Number of landmarks in one frame.
pub const NUM_LANDMARKS: usize = 33;

/// Segments shorter than this cannot define a direction.
pub const DEGENERATE_SEGMENT_EPS: f64 = 1e-9;

/// Default visibility below which a landmark is treated as missing.
pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.3;

/// BlazePose landmark indices used by the angle triplets.
pub mod landmark {
    pub const NOSE: usize = 0;
    pub const LEFT_SHOULDER: usize = 11;
    pub const RIGHT_SHOULDER: usize = 12;
    pub const LEFT_ELBOW: usize = 13;
    pub const RIGHT_ELBOW: usize = 14;
    pub const LEFT_WRIST: usize = 15;
    pub const RIGHT_WRIST: usize = 16;
    pub const LEFT_HIP: usize = 23;
    pub const RIGHT_HIP: usize = 24;
    pub const LEFT_KNEE: usize = 25;
    pub const RIGHT_KNEE: usize = 26;
    pub const LEFT_ANKLE: usize = 27;
    pub const RIGHT_ANKLE: usize = 28;
    pub const LEFT_HEEL: usize = 29;
    pub const RIGHT_HEEL: usize = 30;
    pub const LEFT_FOOT_INDEX: usize = 31;
    pub const RIGHT_FOOT_INDEX: usize = 32;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate segment at {joint} joint (segment length below {DEGENERATE_SEGMENT_EPS:e})")]
    DegenerateSegment { joint: Joint },
    #[error("degenerate segment (segment length below {DEGENERATE_SEGMENT_EPS:e})")]
    DegenerateTriplet,
    #[error("side mismatch: expected {expected} angles, got {actual}")]
    SideMismatch { expected: Side, actual: Side },
    #[error("feature dimension {actual} does not match {mode} (expected {expected})")]
    DimensionMismatch {
        mode: FeatureMode,
        expected: usize,
        actual: usize,
    },
}

/// One estimated body keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub fn new(x: f64, y: f64, z: f64, visibility: f64) -> Self {
        Self { x, y, z, visibility }
    }

    pub fn from_point(p: &Point3, visibility: f64) -> Self {
        Self::new(p.x, p.y, p.z, visibility)
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }
}

impl Default for Landmark {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// All 33 landmarks of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub frame_index: u64,
    /// Milliseconds from the start of the video, if known.
    pub timestamp_ms: Option<f64>,
    pub landmarks: [Landmark; NUM_LANDMARKS],
}

impl LandmarkFrame {
    pub fn new(frame_index: u64, timestamp_ms: Option<f64>, landmarks: [Landmark; NUM_LANDMARKS]) -> Self {
        Self {
            frame_index,
            timestamp_ms,
            landmarks,
        }
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.landmarks[index].point()
    }

    /// Applies `f` to every landmark position, leaving visibility alone.
    pub fn map_points(&self, mut f: impl FnMut(Point3) -> Point3) -> Self {
        let mut out = self.clone();
        for lm in out.landmarks.iter_mut() {
            let p = f(lm.point());
            lm.x = p.x;
            lm.y = p.y;
            lm.z = p.z;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Average,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Average => "average",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Joint {
    Elbow,
    Shoulder,
    Hip,
    Knee,
    Ankle,
}

impl Joint {
    pub const ALL: [Joint; 5] = [Joint::Elbow, Joint::Shoulder, Joint::Hip, Joint::Knee, Joint::Ankle];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Elbow => "elbow",
            Joint::Shoulder => "shoulder",
            Joint::Hip => "hip",
            Joint::Knee => "knee",
            Joint::Ankle => "ankle",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Joint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Joint::ALL
            .into_iter()
            .find(|j| j.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown joint '{s}'"))
    }
}

/// The five joint angles of one side (or their left/right average), degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub elbow_deg: f64,
    pub shoulder_deg: f64,
    pub hip_deg: f64,
    pub knee_deg: f64,
    pub ankle_deg: f64,
    pub side: Side,
}

impl AngleSet {
    pub fn from_array(values: [f64; 5], side: Side) -> Self {
        let [elbow_deg, shoulder_deg, hip_deg, knee_deg, ankle_deg] = values;
        Self {
            elbow_deg,
            shoulder_deg,
            hip_deg,
            knee_deg,
            ankle_deg,
            side,
        }
    }

    /// Angles in joint order: elbow, shoulder, hip, knee, ankle.
    pub fn to_array(&self) -> [f64; 5] {
        [self.elbow_deg, self.shoulder_deg, self.hip_deg, self.knee_deg, self.ankle_deg]
    }

    pub fn get(&self, joint: Joint) -> f64 {
        match joint {
            Joint::Elbow => self.elbow_deg,
            Joint::Shoulder => self.shoulder_deg,
            Joint::Hip => self.hip_deg,
            Joint::Knee => self.knee_deg,
            Joint::Ankle => self.ankle_deg,
        }
    }
}

/// Which landmark closes the ankle angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnkleDistal {
    FootIndex,
    Heel,
}

impl FromStr for AnkleDistal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "foot_index" => Ok(AnkleDistal::FootIndex),
            "heel" => Ok(AnkleDistal::Heel),
            _ => Err(format!("unknown ankle landmark '{s}' (expected foot_index|heel)")),
        }
    }
}

/// Which coordinate channels of each landmark enter the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoordinateChannels {
    Xyz,
    Xy,
    XyzVisibility,
}

impl CoordinateChannels {
    pub fn width(self) -> usize {
        match self {
            CoordinateChannels::Xyz => 3,
            CoordinateChannels::Xy => 2,
            CoordinateChannels::XyzVisibility => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoordinateChannels::Xyz => "xyz",
            CoordinateChannels::Xy => "xy",
            CoordinateChannels::XyzVisibility => "xyzv",
        }
    }
}

impl FromStr for CoordinateChannels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xyz" => Ok(CoordinateChannels::Xyz),
            "xy" => Ok(CoordinateChannels::Xy),
            "xyzv" => Ok(CoordinateChannels::XyzVisibility),
            _ => Err(format!("unknown coordinate channels '{s}'")),
        }
    }
}

/// Landmark triplet `(a, vertex, c)` defining one joint angle.
pub type Triplet = (usize, usize, usize);

/// Landmark triplets and validity gating used when turning frames into angles
/// and features. The defaults reproduce the standard elbow/shoulder/hip/knee/
/// ankle triplets on the left side; right-side indices are the left ones + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Left-side triplets in joint order: elbow, shoulder, hip, knee, ankle.
    pub left_triplets: [Triplet; 5],
    pub visibility_threshold: f64,
    pub channels: CoordinateChannels,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self::with_ankle_distal(AnkleDistal::FootIndex)
    }
}

impl GeometryConfig {
    pub fn with_ankle_distal(distal: AnkleDistal) -> Self {
        use landmark::*;
        let toe = match distal {
            AnkleDistal::FootIndex => LEFT_FOOT_INDEX,
            AnkleDistal::Heel => LEFT_HEEL,
        };
        Self {
            left_triplets: [
                (LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST),
                (LEFT_ELBOW, LEFT_SHOULDER, LEFT_HIP),
                (LEFT_SHOULDER, LEFT_HIP, LEFT_KNEE),
                (LEFT_HIP, LEFT_KNEE, LEFT_ANKLE),
                (LEFT_KNEE, LEFT_ANKLE, toe),
            ],
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
            channels: CoordinateChannels::Xyz,
        }
    }

    pub fn triplets(&self, side: Side) -> [Triplet; 5] {
        match side {
            Side::Right => self.left_triplets.map(|(a, b, c)| (mirror(a), mirror(b), mirror(c))),
            _ => self.left_triplets,
        }
    }

    /// Distinct landmark indices needed for the given sides' angles.
    pub fn required_landmarks(&self, sides: &[Side]) -> Vec<usize> {
        let mut out: Vec<usize> = sides
            .iter()
            .flat_map(|&s| self.triplets(s))
            .flat_map(|(a, b, c)| [a, b, c])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// A frame is valid when every landmark the mode's angles rely on is
    /// visible enough. Landmarks-only features still gate on both sides.
    pub fn frame_is_valid(&self, frame: &LandmarkFrame, mode: FeatureMode) -> bool {
        let sides: &[Side] = match mode {
            FeatureMode::LandmarksLeft5 => &[Side::Left],
            _ => &[Side::Left, Side::Right],
        };
        self.required_landmarks(sides)
            .into_iter()
            .all(|i| frame.landmarks[i].visibility >= self.visibility_threshold)
    }

    pub fn feature_dim(&self, mode: FeatureMode) -> usize {
        NUM_LANDMARKS * self.channels.width() + mode.angle_count()
    }
}

/// BlazePose pairs left/right landmarks as (odd, even) from index 1 upward.
fn mirror(index: usize) -> usize {
    match index {
        0 => 0,
        i if i % 2 == 1 => i + 1,
        i => i - 1,
    }
}

/// The four feature scenarios: landmarks alone or with left, left+right, or
/// averaged joint angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    LandmarksOnly,
    LandmarksLeft5,
    LandmarksLr10,
    LandmarksAvg5,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::LandmarksOnly,
        FeatureMode::LandmarksLeft5,
        FeatureMode::LandmarksLr10,
        FeatureMode::LandmarksAvg5,
    ];

    pub fn angle_count(self) -> usize {
        match self {
            FeatureMode::LandmarksOnly => 0,
            FeatureMode::LandmarksLeft5 | FeatureMode::LandmarksAvg5 => 5,
            FeatureMode::LandmarksLr10 => 10,
        }
    }

    /// Feature dimension with the default x,y,z channels: 99, 104, 109, 104.
    pub fn dim(self) -> usize {
        NUM_LANDMARKS * 3 + self.angle_count()
    }

    /// Short name used on the command line and in file headers.
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::LandmarksOnly => "landmarks",
            FeatureMode::LandmarksLeft5 => "left5",
            FeatureMode::LandmarksLr10 => "lr10",
            FeatureMode::LandmarksAvg5 => "avg5",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown feature mode '{s}' (expected landmarks|left5|lr10|avg5)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Interior angle at `b` between rays `b→a` and `b→c`, in degrees.
///
/// Evaluated as `atan2(|u×v|, u·v)`, which equals the arccos of the clamped
/// normalized dot product but keeps full precision near 0° and 180°.
pub fn compute_joint_angle(a: &Point3, b: &Point3, c: &Point3) -> Result<f64, GeometryError> {
    let u = a - b;
    let v = c - b;
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu >= DEGENERATE_SEGMENT_EPS && nv >= DEGENERATE_SEGMENT_EPS) {
        return Err(GeometryError::DegenerateTriplet);
    }
    let u = u / nu;
    let v = v / nv;
    let cos = u.dot(&v).clamp(-1.0, 1.0);
    let sin = u.cross(&v).norm().min(1.0);
    Ok(sin.atan2(cos).to_degrees().clamp(0.0, 180.0))
}

pub fn five_joint_angles(frame: &LandmarkFrame, side: Side, config: &GeometryConfig) -> Result<AngleSet, GeometryError> {
    assert!(side != Side::Average, "five_joint_angles takes a concrete side");
    let mut values = [0.0; 5];
    for ((joint, (a, b, c)), slot) in Joint::ALL.iter().zip(config.triplets(side)).zip(values.iter_mut()) {
        *slot = compute_joint_angle(&frame.point(a), &frame.point(b), &frame.point(c))
            .map_err(|_| GeometryError::DegenerateSegment { joint: *joint })?;
    }
    Ok(AngleSet::from_array(values, side))
}

pub fn average_angles(left: &AngleSet, right: &AngleSet) -> Result<AngleSet, GeometryError> {
    if left.side != Side::Left {
        return Err(GeometryError::SideMismatch {
            expected: Side::Left,
            actual: left.side,
        });
    }
    if right.side != Side::Right {
        return Err(GeometryError::SideMismatch {
            expected: Side::Right,
            actual: right.side,
        });
    }
    let (l, r) = (left.to_array(), right.to_array());
    let mut avg = [0.0; 5];
    for i in 0..5 {
        avg[i] = (l[i] + r[i]) / 2.0;
    }
    Ok(AngleSet::from_array(avg, Side::Average))
}

/// Left, right and averaged angle sets of one frame.
pub fn bilateral_angles(frame: &LandmarkFrame, config: &GeometryConfig) -> Result<(AngleSet, AngleSet, AngleSet), GeometryError> {
    let left = five_joint_angles(frame, Side::Left, config)?;
    let right = five_joint_angles(frame, Side::Right, config)?;
    let avg = average_angles(&left, &right)?;
    Ok((left, right, avg))
}

/// Flattened landmark coordinates followed by the mode's angles / 180.
pub fn assemble_features(frame: &LandmarkFrame, mode: FeatureMode, config: &GeometryConfig) -> Result<FeatureVector, GeometryError> {
    let expected = config.feature_dim(mode);
    let mut values = Vec::with_capacity(expected);
    for lm in &frame.landmarks {
        match config.channels {
            CoordinateChannels::Xyz => values.extend([lm.x, lm.y, lm.z]),
            CoordinateChannels::Xy => values.extend([lm.x, lm.y]),
            CoordinateChannels::XyzVisibility => values.extend([lm.x, lm.y, lm.z, lm.visibility]),
        }
    }
    let normalized = |set: AngleSet| set.to_array().map(|deg| deg / 180.0);
    match mode {
        FeatureMode::LandmarksOnly => {}
        FeatureMode::LandmarksLeft5 => {
            values.extend(normalized(five_joint_angles(frame, Side::Left, config)?));
        }
        FeatureMode::LandmarksLr10 => {
            values.extend(normalized(five_joint_angles(frame, Side::Left, config)?));
            values.extend(normalized(five_joint_angles(frame, Side::Right, config)?));
        }
        FeatureMode::LandmarksAvg5 => {
            let (_, _, avg) = bilateral_angles(frame, config)?;
            values.extend(normalized(avg));
        }
    }
    if values.len() != expected {
        return Err(GeometryError::DimensionMismatch {
            mode,
            expected,
            actual: values.len(),
        });
    }
    Ok(FeatureVector { mode, values })
}
