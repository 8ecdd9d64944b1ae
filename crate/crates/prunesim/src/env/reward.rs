//! The shaped reward: reaching, pointing, and perpendicularity terms as
//! per-step changes, collision penalties, terminal and slack rewards.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{perpendicular_offset, EnvError};
use crate::robot::CutterFrame;

/// Weighting coefficients and fixed reward constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Reaching weight.
    pub alpha_m: f64,
    /// Perpendicularity weight.
    pub alpha_p1: f64,
    /// Pointing weight.
    pub alpha_p2: f64,
    /// Terminal reward on success.
    pub r_term: f64,
    /// Constant per-step slack reward.
    pub r_slack: f64,
    /// Penalty for contacting a small (tertiary) branch.
    pub c_small: f64,
    /// Penalty for contacting rigid structure (trunks, supports, posts,
    /// wires, ground, or the robot itself).
    pub c_rigid: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha_m: 5.0,
            alpha_p1: 6.0,
            alpha_p2: 2.0,
            r_term: 2.0,
            r_slack: -0.1,
            c_small: -0.01,
            c_rigid: -0.1,
        }
    }
}

/// Per-term reward decomposition; `total` is the exact weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_reach: f64,
    pub r_point: f64,
    pub r_perp: f64,
    pub r_col: f64,
    pub r_term: f64,
    pub r_slack: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn assemble(
        weights: &RewardWeights,
        r_reach: f64,
        r_point: f64,
        r_perp: f64,
        r_col: f64,
        r_term: f64,
    ) -> Self {
        let r_slack = weights.r_slack;
        Self {
            r_reach,
            r_point,
            r_perp,
            r_col,
            r_term,
            r_slack,
            total: weights.alpha_m * r_reach
                + weights.alpha_p1 * r_perp
                + weights.alpha_p2 * r_point
                + r_term
                + r_slack
                + r_col,
        }
    }
}

/// Cosine similarity clamped to `[-1, 1]`; errors for near-zero norms
/// (callers must guard).
pub fn cosine_similarity(v1: &Vector3<f64>, v2: &Vector3<f64>) -> Result<f64, EnvError> {
    let (n1, n2) = (v1.norm(), v2.norm());
    if n1 <= 1e-3 || n2 <= 1e-3 {
        return Err(EnvError::DegenerateNorm(n1.min(n2)));
    }
    Ok((v1.dot(v2) / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Change in distance to the cut point: positive when the cutter moved
/// closer.
pub fn r_reach(p_e_prev: &Point3<f64>, p_e_cur: &Point3<f64>, p_g: &Point3<f64>) -> f64 {
    (p_e_prev - p_g).norm() - (p_e_cur - p_g).norm()
}

/// Pointing cosine for a single frame: alignment of the pointing vector
/// with the perpendicular offset to the branch axis; defined as 1 when the
/// offset is degenerate (at contact the criterion is vacuous).
pub fn pointing_cosine(frame: &CutterFrame, p_g: &Point3<f64>, b: &Vector3<f64>) -> f64 {
    let u = perpendicular_offset(&frame.jaw_center(), p_g, b);
    if u.norm() < 1e-3 {
        return 1.0;
    }
    cosine_similarity(&u, &frame.pointing()).expect("guarded norms")
}

/// Change in pointing cosine between consecutive frames.
pub fn r_point(
    frame_prev: &CutterFrame,
    frame_cur: &CutterFrame,
    p_g: &Point3<f64>,
    b: &Vector3<f64>,
) -> f64 {
    pointing_cosine(frame_cur, p_g, b) - pointing_cosine(frame_prev, p_g, b)
}

/// Absolute perpendicularity cosine for a single frame.
pub fn perpendicular_cosine(frame: &CutterFrame, b: &Vector3<f64>) -> f64 {
    cosine_similarity(&frame.left_right(), b).expect("unit inputs").abs()
}

/// Change in absolute perpendicularity cosine between consecutive frames.
pub fn r_perp(frame_prev: &CutterFrame, frame_cur: &CutterFrame, b: &Vector3<f64>) -> f64 {
    perpendicular_cosine(frame_cur, b) - perpendicular_cosine(frame_prev, b)
}
