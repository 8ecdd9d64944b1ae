//! 6-DOF serial arm kinematics: forward kinematics over a standard DH
//! table, geometric Jacobian at the jaw center, damped-least-squares
//! velocity resolution, link collision capsules, and the 27-dimensional
//! proprioception encoding.

use nalgebra::{
    Isometry3, Matrix3, Matrix6, Point3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3,
    Vector6,
};
use serde::{Deserialize, Serialize};

use crate::scene::Capsule;

/// One standard Denavit-Hartenberg row:
/// `A = RotZ(theta) TransZ(d) TransX(a) RotX(alpha)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
}

/// Joint angles and velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; 6],
    pub qdot: [f64; 6],
}

impl JointState {
    /// Wrap each angle into `[-2*pi, 2*pi]`.
    pub fn wrapped(q: [f64; 6]) -> [f64; 6] {
        q.map(|v| {
            let mut v = v % (4.0 * std::f64::consts::PI);
            while v > 2.0 * std::f64::consts::PI {
                v -= 2.0 * std::f64::consts::PI;
            }
            while v < -2.0 * std::f64::consts::PI {
                v += 2.0 * std::f64::consts::PI;
            }
            v
        })
    }
}

/// End-effector pose with the cutter frame vectors: the jaw-center point,
/// the pointing direction `v_p = R*z`, and the left-right direction
/// `v_u = R*y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutterFrame {
    pub iso: Isometry3<f64>,
}

impl CutterFrame {
    pub fn jaw_center(&self) -> Point3<f64> {
        Point3::from(self.iso.translation.vector)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.iso.rotation.to_rotation_matrix()
    }

    pub fn pointing(&self) -> Vector3<f64> {
        self.iso.rotation * Vector3::z()
    }

    pub fn left_right(&self) -> Vector3<f64> {
        self.iso.rotation * Vector3::y()
    }
}

/// Kinematic description: DH table, tool transform, link capsules, limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinematicModel {
    pub dh: [DhRow; 6],
    /// Jaw center offset along the flange z axis, meters.
    pub tool_offset: f64,
    /// Capsule radii for the six links and the cutter.
    pub link_radii: [f64; 7],
    /// Per-joint position limit (symmetric), radians.
    pub joint_limit: f64,
    /// Per-joint velocity limit, rad/s.
    pub velocity_limit: f64,
}

impl Default for KinematicModel {
    fn default() -> Self {
        Self::ur5()
    }
}

impl KinematicModel {
    /// Published UR5 dimensions with a 0.15 m cutter along the flange z.
    pub fn ur5() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Self {
            dh: [
                DhRow { a: 0.0, alpha: FRAC_PI_2, d: 0.089159 },
                DhRow { a: -0.425, alpha: 0.0, d: 0.0 },
                DhRow { a: -0.39225, alpha: 0.0, d: 0.0 },
                DhRow { a: 0.0, alpha: FRAC_PI_2, d: 0.10915 },
                DhRow { a: 0.0, alpha: -FRAC_PI_2, d: 0.09465 },
                DhRow { a: 0.0, alpha: 0.0, d: 0.0823 },
            ],
            tool_offset: 0.15,
            link_radii: [0.06, 0.05, 0.045, 0.04, 0.04, 0.04, 0.04],
            joint_limit: 2.0 * std::f64::consts::PI,
            velocity_limit: std::f64::consts::PI,
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    fn joint_transform(&self, i: usize, theta: f64) -> Isometry3<f64> {
        let row = &self.dh[i];
        let rot_z = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        let rot_x = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), row.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, row.d), rot_z)
            * Isometry3::from_parts(Translation3::new(row.a, 0.0, 0.0), rot_x)
    }

    /// Frames after each joint: `chain[i]` is base-from-frame-i for
    /// `i = 0..=6` (`chain[0]` is the identity base frame).
    pub fn frame_chain(&self, q: &[f64; 6]) -> [Isometry3<f64>; 7] {
        let mut chain = [Isometry3::identity(); 7];
        for i in 0..6 {
            chain[i + 1] = chain[i] * self.joint_transform(i, q[i]);
        }
        chain
    }

    /// Flange pose (frame 6).
    pub fn flange(&self, q: &[f64; 6]) -> Isometry3<f64> {
        self.frame_chain(q)[6]
    }
}

/// Jaw-center cutter frame for a joint configuration.
pub fn forward_kinematics(model: &KinematicModel, q: &[f64; 6]) -> CutterFrame {
    let tool = Isometry3::from_parts(
        Translation3::new(0.0, 0.0, model.tool_offset),
        UnitQuaternion::identity(),
    );
    CutterFrame { iso: model.flange(q) * tool }
}

/// Geometric Jacobian at the jaw center, base frame: linear rows then
/// angular rows; column `i` is `(z_i x (p_e - o_i); z_i)`.
pub fn jacobian(model: &KinematicModel, q: &[f64; 6]) -> Matrix6<f64> {
    let chain = model.frame_chain(q);
    let p_e = forward_kinematics(model, q).jaw_center();
    let mut j = Matrix6::zeros();
    for i in 0..6 {
        let origin = Point3::from(chain[i].translation.vector);
        let axis = chain[i].rotation * Vector3::z();
        let linear = axis.cross(&(p_e - origin));
        for r in 0..3 {
            j[(r, i)] = linear[r];
            j[(r + 3, i)] = axis[r];
        }
    }
    j
}

/// Damped-least-squares velocity resolution:
/// `qdot = J^T (J J^T + lambda^2 I)^{-1} twist`.
pub fn solve_joint_velocities(
    model: &KinematicModel,
    q: &[f64; 6],
    twist: &Vector6<f64>,
    damping: f64,
) -> [f64; 6] {
    let j = jacobian(model, q);
    let jjt = j * j.transpose() + Matrix6::identity() * (damping * damping);
    let y = jjt.cholesky().map(|ch| ch.solve(twist)).unwrap_or_else(|| {
        jjt.svd(true, true).solve(twist, 1e-12).unwrap_or_else(|_| Vector6::zeros())
    });
    let qdot = j.transpose() * y;
    [qdot[0], qdot[1], qdot[2], qdot[3], qdot[4], qdot[5]]
}

/// Link collision capsules at a configuration: one capsule between
/// consecutive joint frame origins plus the cutter capsule.
pub fn robot_capsules(model: &KinematicModel, q: &[f64; 6]) -> Vec<Capsule> {
    let chain = model.frame_chain(q);
    let mut out = Vec::with_capacity(7);
    for i in 0..6 {
        out.push(Capsule::new(
            Point3::from(chain[i].translation.vector),
            Point3::from(chain[i + 1].translation.vector),
            model.link_radii[i],
        ));
    }
    let frame = forward_kinematics(model, q);
    out.push(Capsule::new(
        Point3::from(chain[6].translation.vector),
        frame.jaw_center(),
        model.link_radii[6],
    ));
    out
}

/// Link index pairs checked for self-collision: all pairs at least two
/// apart, skipping pairs inside the short wrist/cutter cluster (links 3+),
/// which sit within each other's radii by construction.
pub fn self_collision_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..3 {
        for j in (i + 2)..7 {
            pairs.push((i, j));
        }
    }
    pairs
}

/// True when any checked link pair overlaps.
pub fn in_self_collision(capsules: &[Capsule]) -> bool {
    self_collision_pairs()
        .iter()
        .any(|&(i, j)| crate::scene::capsule_gap(&capsules[i], &capsules[j]) < 0.0)
}

/// 27-dimensional proprioception vector:
/// `[p_e(3) | first two rotation columns, column-major (6) | twist (6) |
/// interleaved (sin q_i, cos q_i) (12)]`.
pub fn proprioception(frame: &CutterFrame, twist: &Vector6<f64>, q: &[f64; 6]) -> [f64; 27] {
    let mut out = [0.0; 27];
    let p = frame.jaw_center();
    out[..3].copy_from_slice(&[p.x, p.y, p.z]);
    let r = frame.rotation();
    for col in 0..2 {
        for row in 0..3 {
            out[3 + col * 3 + row] = r[(row, col)];
        }
    }
    for i in 0..6 {
        out[9 + i] = twist[i];
    }
    for i in 0..6 {
        out[15 + 2 * i] = q[i].sin();
        out[15 + 2 * i + 1] = q[i].cos();
    }
    out
}

/// Axis-angle log of a rotation, robust near the identity (the direct
/// trace/acos route produces NaN when rounding pushes the trace above 3).
pub fn rotation_log(r: &Rotation3<f64>) -> Vector3<f64> {
    UnitQuaternion::from_rotation_matrix(r).scaled_axis()
}

/// Recover a rotation from the 6D (two-column) encoding by Gram–Schmidt.
pub fn rotation_from_6d(cols: &[f64; 6]) -> Rotation3<f64> {
    let a = Vector3::new(cols[0], cols[1], cols[2]);
    let b = Vector3::new(cols[3], cols[4], cols[5]);
    let x = Unit::new_normalize(a).into_inner();
    let y = Unit::new_normalize(b - x * x.dot(&b)).into_inner();
    let z = x.cross(&y);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

#[cfg(test)]
#[path = "robot_tests.rs"]
mod tests;
