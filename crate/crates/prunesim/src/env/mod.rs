//! The pruning-reach MDP: velocity actions resolved through the damped
//! inverse Jacobian and integrated over 0.5 s with per-substep collision
//! checks, the full shaped reward, success evaluation, and termination.

mod reward;
mod sim;

pub use reward::{cosine_similarity, r_perp, r_point, r_reach, RewardBreakdown, RewardWeights};
pub use sim::{base_pose_with_noise, camera_noise, EnvConfig, Observation, PruneEnv, StepInfo, StepResult};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::robot::CutterFrame;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("degenerate vector norm {0}")]
    DegenerateNorm(f64),
    #[error("step() called on a finished episode")]
    StepAfterDone,
    #[error("robot start configuration is in collision")]
    InfeasibleStart,
}

/// A pruning target: cut point, unit branch direction, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutpoint {
    /// Cut point, meters.
    pub p_g: [f64; 3],
    /// Unit branch direction (sign-insensitive for rewards and success).
    pub b: [f64; 3],
    pub branch: usize,
    pub tree: usize,
}

impl Cutpoint {
    pub fn point(&self) -> Point3<f64> {
        Point3::new(self.p_g[0], self.p_g[1], self.p_g[2])
    }

    pub fn direction(&self) -> Vector3<f64> {
        Vector3::new(self.b[0], self.b[1], self.b[2])
    }
}

/// Cutter geometry relevant to success checking.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SuccessCriteria {
    /// Jaw center must be within this distance of the cut point, meters.
    pub max_distance: f64,
    /// Pointing and perpendicularity tolerance, radians.
    pub max_angle: f64,
    /// Branch axis must pass within this distance of the jaw axis, meters.
    pub jaw_half_gap: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self {
            max_distance: 0.05,
            max_angle: 30f64.to_radians(),
            jaw_half_gap: 0.02,
        }
    }
}

/// Success decision with the per-criterion measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub pass: bool,
    pub distance: f64,
    /// Angle between the pointing vector and the perpendicular offset to
    /// the branch axis, radians (0 when the offset is degenerate).
    pub pointing_angle: f64,
    /// Angle to the nearest aligned solution, radians.
    pub perpendicular_angle: f64,
    /// Distance between the branch axis line and the jaw axis line, meters.
    pub mouth_distance: f64,
    pub distance_ok: bool,
    pub pointing_ok: bool,
    pub perpendicular_ok: bool,
    pub mouth_ok: bool,
}

/// Perpendicular component of `p_g - p_e` with respect to the branch axis.
pub fn perpendicular_offset(
    p_e: &Point3<f64>,
    p_g: &Point3<f64>,
    b: &Vector3<f64>,
) -> Vector3<f64> {
    let to_goal = p_g - p_e;
    to_goal - b * to_goal.dot(b)
}

/// Distance between two 3D lines (point + direction each).
fn line_line_distance(
    p1: &Point3<f64>,
    d1: &Vector3<f64>,
    p2: &Point3<f64>,
    d2: &Vector3<f64>,
) -> f64 {
    let n = d1.cross(d2);
    let w = p2 - p1;
    if n.norm() < 1e-9 {
        // parallel: perpendicular distance from p2 to line 1
        let d1n = d1.normalize();
        return (w - d1n * w.dot(&d1n)).norm();
    }
    (w.dot(&n) / n.norm()).abs()
}

/// Evaluate the success criteria for a cutter pose against a cutpoint:
/// reached (jaw center within range), pointing at the branch, jaws
/// perpendicular to it, and the branch axis inside the cutter mouth.
pub fn check_success(
    frame: &CutterFrame,
    cutpoint: &Cutpoint,
    criteria: &SuccessCriteria,
) -> SuccessReport {
    let p_e = frame.jaw_center();
    let p_g = cutpoint.point();
    let b = cutpoint.direction();
    let v_p = frame.pointing();
    let v_u = frame.left_right();

    let distance = (p_e - p_g).norm();
    let u = perpendicular_offset(&p_e, &p_g, &b);
    let pointing_angle = if u.norm() < 1e-3 {
        0.0
    } else {
        v_p.dot(&u.normalize()).clamp(-1.0, 1.0).acos()
    };
    let perpendicular_angle = v_u.dot(&b).abs().clamp(0.0, 1.0).acos();
    // branch-in-mouth: the branch axis must pass within the jaw half-gap of
    // the cutter's central axis (the line through the jaw center along v_p)
    let mouth_distance = line_line_distance(&p_e, &v_p, &p_g, &b);

    let distance_ok = distance <= criteria.max_distance;
    let pointing_ok = pointing_angle <= criteria.max_angle;
    let perpendicular_ok = perpendicular_angle <= criteria.max_angle;
    let mouth_ok = mouth_distance <= criteria.jaw_half_gap;
    SuccessReport {
        pass: distance_ok && pointing_ok && perpendicular_ok && mouth_ok,
        distance,
        pointing_angle,
        perpendicular_angle,
        mouth_distance,
        distance_ok,
        pointing_ok,
        perpendicular_ok,
        mouth_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion};

    fn frame_at(p: Point3<f64>, rot: Rotation3<f64>) -> CutterFrame {
        CutterFrame {
            iso: Isometry3::from_parts(
                Translation3::new(p.x, p.y, p.z),
                UnitQuaternion::from_rotation_matrix(&rot),
            ),
        }
    }

    /// Canonical aligned pose: jaw center at the cutpoint, pointing +x at a
    /// branch along y.
    fn aligned_case() -> (CutterFrame, Cutpoint) {
        let cp = Cutpoint { p_g: [0.5, 0.0, 0.3], b: [0.0, 1.0, 0.0], branch: 0, tree: 0 };
        // v_p = R*z must be +x; v_u = R*y stays +y
        let rot = Rotation3::from_axis_angle(&nalgebra::Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        (frame_at(Point3::new(0.5, 0.0, 0.3), rot), cp)
    }

    #[test]
    fn aligned_pose_passes_with_full_margins() {
        let (frame, cp) = aligned_case();
        let report = check_success(&frame, &cp, &SuccessCriteria::default());
        assert!(report.pass, "{report:?}");
        assert!(report.distance < 1e-12);
        assert!(report.pointing_angle.abs() < 1e-9); // degenerate offset rule
        assert!(report.perpendicular_angle < 1e-9);
        assert!(report.mouth_distance < 1e-12);
    }

    #[test]
    fn distance_threshold_is_five_centimeters() {
        let (frame, cp) = aligned_case();
        // back the cutter 0.06 m away from the branch along -x
        let mut moved = frame.clone();
        moved.iso.translation.x -= 0.06;
        let report = check_success(&moved, &cp, &SuccessCriteria::default());
        assert!(!report.pass);
        assert!(!report.distance_ok);
        assert!(report.pointing_ok, "pointing at the branch from 6 cm away");
        assert!(report.perpendicular_ok);
        // at 0.05 exactly it passes
        let mut at_edge = frame.clone();
        at_edge.iso.translation.x -= 0.05 - 1e-12;
        assert!(check_success(&at_edge, &cp, &SuccessCriteria::default()).pass);
    }

    #[test]
    fn perpendicularity_threshold_is_thirty_degrees() {
        let (frame, cp) = aligned_case();
        // yaw v_u away from b by 35 degrees about the pointing axis
        let spin = Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(frame.pointing()),
            35f64.to_radians(),
        );
        let rotated = frame_at(frame.jaw_center(), spin * frame.rotation());
        let report = check_success(&rotated, &cp, &SuccessCriteria::default());
        assert!(!report.pass);
        assert!(!report.perpendicular_ok);
        assert!(report.distance_ok);
        assert!((report.perpendicular_angle.to_degrees() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn success_is_invariant_under_branch_flip() {
        let (frame, mut cp) = aligned_case();
        let a = check_success(&frame, &cp, &SuccessCriteria::default());
        cp.b = [0.0, -1.0, 0.0];
        let b = check_success(&frame, &cp, &SuccessCriteria::default());
        assert_eq!(a.pass, b.pass);
        assert!((a.perpendicular_angle - b.perpendicular_angle).abs() < 1e-12);
    }

    #[test]
    fn mouth_criterion_catches_offset_branch() {
        let (frame, mut cp) = aligned_case();
        // shift the branch axis 3 cm along z: still within 5 cm reach and
        // aligned, but outside the 2 cm jaw half-gap
        cp.p_g = [0.5, 0.0, 0.33];
        let report = check_success(&frame, &cp, &SuccessCriteria::default());
        assert!(report.distance_ok);
        assert!(report.perpendicular_ok);
        assert!(!report.mouth_ok, "mouth distance {}", report.mouth_distance);
        assert!(!report.pass);
    }
}
