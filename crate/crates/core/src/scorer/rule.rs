use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ScorerError;
use crate::geometry::{AngleSet, Joint};

/// Linear ramp on one joint angle: 1 at `theta_pose_i`, 0 at `theta_pose_ii`,
/// clamped outside. Works in either direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricRule {
    pub joint: Joint,
    pub theta_pose_i: f64,
    pub theta_pose_ii: f64,
}

impl GeometricRule {
    pub fn new(joint: Joint, theta_pose_i: f64, theta_pose_ii: f64) -> Result<Self, ScorerError> {
        if theta_pose_i == theta_pose_ii || !theta_pose_i.is_finite() || !theta_pose_ii.is_finite() {
            return Err(ScorerError::BadRule(theta_pose_i));
        }
        Ok(Self {
            joint,
            theta_pose_i,
            theta_pose_ii,
        })
    }
}

impl fmt::Display for GeometricRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.joint, self.theta_pose_i, self.theta_pose_ii)
    }
}

/// Parses `joint:theta_i:theta_ii`, e.g. `knee:150:120`.
impl FromStr for GeometricRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [joint, hi, lo] = parts[..] else {
            return Err(format!("expected joint:theta_i:theta_ii, got '{s}'"));
        };
        let joint: Joint = joint.parse()?;
        let hi: f64 = hi.parse().map_err(|e| format!("bad angle '{hi}': {e}"))?;
        let lo: f64 = lo.parse().map_err(|e| format!("bad angle '{lo}': {e}"))?;
        GeometricRule::new(joint, hi, lo).map_err(|e| e.to_string())
    }
}

pub fn geometric_score(angles: &AngleSet, rule: &GeometricRule) -> Result<f64, ScorerError> {
    if rule.theta_pose_i == rule.theta_pose_ii {
        return Err(ScorerError::BadRule(rule.theta_pose_i));
    }
    let theta = angles.get(rule.joint);
    Ok(((theta - rule.theta_pose_ii) / (rule.theta_pose_i - rule.theta_pose_ii)).clamp(0.0, 1.0))
}
