//! Deterministic step semantics of the pruning-reach environment.

use nalgebra::{Isometry3, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};

use crate::perception::{
    compute_flow, render_cutpoint_image, CameraModel, CutpointImage, FlowImage,
};
use crate::robot::{
    forward_kinematics, in_self_collision, jacobian, proprioception, robot_capsules, CutterFrame,
    KinematicModel,
};
use crate::scene::{Capsule, CollisionCategory, Scene};

use super::reward::{
    perpendicular_cosine, pointing_cosine, r_perp, r_point, r_reach, RewardBreakdown,
    RewardWeights,
};
use super::{check_success, Cutpoint, EnvError, SuccessCriteria, SuccessReport};

/// Environment parameters; defaults follow the published task constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub weights: RewardWeights,
    pub criteria: SuccessCriteria,
    /// Linear velocity scale for action components 0..3, m/s.
    pub lin_scale: f64,
    /// Angular velocity scale for action components 3..6, rad/s.
    pub ang_scale: f64,
    /// Wall-clock duration of one step, seconds (2 Hz control).
    pub step_duration: f64,
    /// Collision-checked integration substeps per step.
    pub substeps: usize,
    /// Damped-least-squares damping.
    pub damping: f64,
    /// Step budget per episode.
    pub horizon: usize,
    /// Nominal ready configuration facing the tree row.
    pub start_q: [f64; 6],
    /// Render flow/cutpoint images each step (rollouts that ignore imagery
    /// can turn this off; image fields are zero-filled then).
    pub render_images: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            criteria: SuccessCriteria::default(),
            lin_scale: 0.1,
            ang_scale: 0.1,
            step_duration: 0.5,
            substeps: 10,
            damping: 0.01,
            horizon: 100,
            start_q: [0.461, -1.084, -2.242, -2.899, -1.077, 1.433],
            render_images: true,
        }
    }
}

/// What the policy sees after reset or a step.
#[derive(Debug, Clone)]
pub struct Observation {
    pub flow: FlowImage,
    pub cutpoint_img: CutpointImage,
    pub proprio: [f64; 27],
    /// Cut point in the (noisy) robot base frame.
    pub cutpoint_base: [f64; 3],
    /// Cut point in the end-effector frame.
    pub cutpoint_ee: [f64; 3],
}

/// Privileged per-step scalars for critics, logging, and analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub pointing_cosine: f64,
    pub perpendicular_cosine: f64,
    pub distance: f64,
    /// Collision categories contacted during the step (deduplicated).
    pub collisions: Vec<CollisionCategory>,
    /// Motion stopped early on rigid contact.
    pub halted: bool,
    pub velocity_clamped: bool,
    pub joint_limit_hit: bool,
    pub success: SuccessReport,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// One environment instance: an assembled scene, a robot, and a cutpoint.
pub struct PruneEnv {
    pub scene: Scene,
    pub model: KinematicModel,
    pub camera: CameraModel,
    /// Cut point and branch direction in world coordinates.
    pub cutpoint: Cutpoint,
    /// World-from-base transform (episode noise already applied).
    pub base_pose: Isometry3<f64>,
    /// Camera mount perturbation (pan/tilt noise).
    pub cam_noise: UnitQuaternion<f64>,
    pub cfg: EnvConfig,

    q: [f64; 6],
    steps: usize,
    done: bool,
    prev_cam_pose: Isometry3<f64>,
}

impl PruneEnv {
    /// Build an environment around an assembled scene. Fails when the start
    /// configuration is already in collision.
    pub fn new(
        scene: Scene,
        cutpoint_world: Cutpoint,
        base_pose: Isometry3<f64>,
        cam_noise: UnitQuaternion<f64>,
        model: KinematicModel,
        camera: CameraModel,
        cfg: EnvConfig,
    ) -> Result<Self, EnvError> {
        let mut env = Self {
            scene,
            model,
            camera,
            cutpoint: cutpoint_world,
            base_pose,
            cam_noise,
            cfg,
            q: [0.0; 6],
            steps: 0,
            done: false,
            prev_cam_pose: Isometry3::identity(),
        };
        env.q = env.cfg.start_q;
        let caps = env.world_capsules();
        if !env.contacts(&caps).is_empty() || in_self_collision(&caps) {
            return Err(EnvError::InfeasibleStart);
        }
        Ok(env)
    }

    /// Re-arm the episode and return the first observation (zero flow).
    pub fn reset(&mut self) -> Observation {
        self.q = self.cfg.start_q;
        self.steps = 0;
        self.done = false;
        self.prev_cam_pose = self.camera_pose();
        let mut obs = self.observe(&Vector6::zeros());
        obs.flow = FlowImage::zeros(self.camera.width, self.camera.height);
        obs
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn joint_angles(&self) -> [f64; 6] {
        self.q
    }

    /// Cutter frame in world coordinates.
    pub fn cutter_frame(&self) -> CutterFrame {
        let base_frame = forward_kinematics(&self.model, &self.q);
        CutterFrame { iso: self.base_pose * base_frame.iso }
    }

    /// World-from-camera pose: flange, mount, then pan/tilt noise.
    pub fn camera_pose(&self) -> Isometry3<f64> {
        let flange = self.base_pose * self.model.flange(&self.q);
        flange
            * self.camera.mount
            * Isometry3::from_parts(nalgebra::Translation3::identity(), self.cam_noise)
    }

    fn world_capsules(&self) -> Vec<Capsule> {
        robot_capsules(&self.model, &self.q)
            .into_iter()
            .map(|c| Capsule::new(self.base_pose * c.a, self.base_pose * c.b, c.radius))
            .collect()
    }

    /// Scene contact categories for the given robot capsules, plus `Robot`
    /// on self-collision.
    fn contacts(&self, caps: &[Capsule]) -> Vec<CollisionCategory> {
        let mut cats: Vec<CollisionCategory> =
            self.scene.collision_query(caps).iter().map(|h| h.category).collect();
        if in_self_collision(caps) {
            cats.push(CollisionCategory::Robot);
        }
        cats.sort();
        cats.dedup();
        cats
    }

    fn success_report(&self, frame: &CutterFrame) -> SuccessReport {
        check_success(frame, &self.cutpoint, &self.cfg.criteria)
    }

    fn observe(&self, twist: &Vector6<f64>) -> Observation {
        let cam_pose = self.camera_pose();
        let (flow, cutpoint_img) = if self.cfg.render_images {
            (
                compute_flow(&self.scene, &self.prev_cam_pose, &cam_pose, &self.camera),
                render_cutpoint_image(&self.cutpoint.point(), &cam_pose, &self.camera),
            )
        } else {
            (
                FlowImage::zeros(self.camera.width, self.camera.height),
                CutpointImage::zeros(self.camera.width, self.camera.height),
            )
        };
        // proprioception reports the base-frame cutter pose
        let base_frame = forward_kinematics(&self.model, &self.q);
        let proprio = proprioception(&base_frame, twist, &self.q);
        let p_g_base = self.base_pose.inverse() * self.cutpoint.point();
        let p_g_ee = self.cutter_frame().iso.inverse() * self.cutpoint.point();
        Observation {
            flow,
            cutpoint_img,
            proprio,
            cutpoint_base: [p_g_base.x, p_g_base.y, p_g_base.z],
            cutpoint_ee: [p_g_ee.x, p_g_ee.y, p_g_ee.z],
        }
    }

    /// Apply one velocity action for `step_duration` seconds.
    pub fn step(&mut self, action: [f64; 6]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = action.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 });
        let twist = Vector6::new(
            a[0] * self.cfg.lin_scale,
            a[1] * self.cfg.lin_scale,
            a[2] * self.cfg.lin_scale,
            a[3] * self.cfg.ang_scale,
            a[4] * self.cfg.ang_scale,
            a[5] * self.cfg.ang_scale,
        );
        let mut qdot = crate::robot::solve_joint_velocities(&self.model, &self.q, &twist, self.cfg.damping);
        let mut velocity_clamped = false;
        for v in &mut qdot {
            if v.abs() > self.model.velocity_limit {
                *v = v.signum() * self.model.velocity_limit;
                velocity_clamped = true;
            }
        }

        let prev_frame = self.cutter_frame();
        let prev_cam = self.camera_pose();
        let dt = self.cfg.step_duration / self.cfg.substeps as f64;
        let mut collisions: Vec<CollisionCategory> = Vec::new();
        let mut halted = false;
        let mut joint_limit_hit = false;
        let mut success = self.success_report(&prev_frame);

        for _ in 0..self.cfg.substeps {
            let mut q_try = self.q;
            for i in 0..6 {
                q_try[i] += qdot[i] * dt;
                if q_try[i].abs() > self.model.joint_limit {
                    q_try[i] = q_try[i].signum() * self.model.joint_limit;
                    joint_limit_hit = true;
                }
            }
            let caps: Vec<Capsule> = robot_capsules(&self.model, &q_try)
                .into_iter()
                .map(|c| Capsule::new(self.base_pose * c.a, self.base_pose * c.b, c.radius))
                .collect();
            let cats = self.contacts(&caps);
            let rigid = cats.iter().any(|c| {
                matches!(
                    c,
                    CollisionCategory::RigidStructure
                        | CollisionCategory::Ground
                        | CollisionCategory::Robot
                )
            });
            collisions.extend(cats.iter().copied());
            if rigid {
                // motion stops against rigid structure; penalties recorded
                halted = true;
                break;
            }
            self.q = q_try;
            // success is checked at substep resolution
            success = self.success_report(&self.cutter_frame());
            if success.pass {
                break;
            }
        }
        collisions.sort();
        collisions.dedup();

        let cur_frame = self.cutter_frame();
        let p_g = self.cutpoint.point();
        let b = self.cutpoint.direction();
        let mut r_col = 0.0;
        for cat in &collisions {
            r_col += match cat {
                CollisionCategory::SmallBranch => self.cfg.weights.c_small,
                _ => self.cfg.weights.c_rigid,
            };
        }
        let terminated = success.pass;
        let reward = RewardBreakdown::assemble(
            &self.cfg.weights,
            r_reach(&prev_frame.jaw_center(), &cur_frame.jaw_center(), &p_g),
            r_point(&prev_frame, &cur_frame, &p_g, &b),
            r_perp(&prev_frame, &cur_frame, &b),
            r_col,
            if terminated { self.cfg.weights.r_term } else { 0.0 },
        );

        self.steps += 1;
        let truncated = self.steps >= self.cfg.horizon;
        self.done = terminated || truncated;

        let effective_twist = if halted {
            Vector6::zeros()
        } else {
            jacobian(&self.model, &self.q) * Vector6::from_row_slice(&qdot)
        };
        self.prev_cam_pose = prev_cam;
        let observation = self.observe(&effective_twist);
        self.prev_cam_pose = self.camera_pose();

        let info = StepInfo {
            pointing_cosine: pointing_cosine(&cur_frame, &p_g, &b),
            perpendicular_cosine: perpendicular_cosine(&cur_frame, &b),
            distance: (cur_frame.jaw_center() - p_g).norm(),
            collisions,
            halted,
            velocity_clamped,
            joint_limit_hit,
            success: success.clone(),
        };
        Ok(StepResult { observation, reward, terminated, truncated, info })
    }
}

/// Build a base pose at the given height with yaw/pitch/roll noise.
pub fn base_pose_with_noise(height: f64, yaw: f64, pitch: f64, roll: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        nalgebra::Translation3::new(0.0, 0.0, height),
        UnitQuaternion::from_euler_angles(roll, pitch, yaw),
    )
}

/// Camera pan/tilt noise rotation (pan about the camera y axis, tilt about
/// x).
pub fn camera_noise(pan: f64, tilt: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), pan)
        * UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), tilt)
}

#[cfg(test)]
#[path = "sim_tests.rs"]
mod tests;
