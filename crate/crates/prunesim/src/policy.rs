//! Controller interface, the scripted privileged-servo baseline, and the
//! rollout runner producing result records.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Isometry3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::env::{Cutpoint, EnvConfig, Observation, PruneEnv};
use crate::episodes::{env_from_episode, Episode, EpisodeError};
use crate::perception::CameraModel;
use crate::robot::{CutterFrame, KinematicModel};
use crate::scene::SceneConfig;
use crate::treegen::{TreeModel, TrellisSpec};

/// Everything a controller may look at. Scripted baselines use the
/// privileged fields; learned policies attached over the wire only ever see
/// the observation.
pub struct ControlContext<'a> {
    pub observation: &'a Observation,
    /// Privileged: current cutter frame, world coordinates.
    pub frame: CutterFrame,
    /// Privileged: ground-truth cutpoint, world coordinates.
    pub cutpoint: &'a Cutpoint,
    pub base_pose: &'a Isometry3<f64>,
    pub step: usize,
}

pub trait Controller {
    fn name(&self) -> &str;
    fn begin_episode(&mut self);
    fn act(&mut self, ctx: &ControlContext) -> [f64; 6];
}

/// Always-zero action; useful as a null baseline.
#[derive(Debug, Default)]
pub struct ZeroPolicy;

impl Controller for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn begin_episode(&mut self) {}

    fn act(&mut self, _ctx: &ControlContext) -> [f64; 6] {
        [0.0; 6]
    }
}

/// Proportional servo on privileged state: drive to a standoff point back
/// along the perpendicular approach direction, then to the cutpoint, while
/// aligning the pointing vector with the approach and the left-right vector
/// with the branch.
#[derive(Debug, Clone)]
pub struct PrivilegedServo {
    /// Standoff distance back along the approach direction, meters.
    pub standoff: f64,
    pub lin_gain: f64,
    pub ang_gain: f64,
    approaching: bool,
}

impl Default for PrivilegedServo {
    fn default() -> Self {
        Self { standoff: 0.15, lin_gain: 3.0, ang_gain: 2.0, approaching: false }
    }
}

impl PrivilegedServo {
    /// Jump straight to the final-approach phase.
    pub fn skip_standoff(&mut self) {
        self.approaching = true;
    }

    /// Approach direction: unit perpendicular offset from the cutter to the
    /// branch axis (stable fallback when on the axis).
    fn approach_dir(frame: &CutterFrame, cutpoint: &Cutpoint) -> Vector3<f64> {
        let b = cutpoint.direction();
        let u = crate::env::perpendicular_offset(&frame.jaw_center(), &cutpoint.point(), &b);
        if u.norm() > 1e-6 {
            u.normalize()
        } else {
            // any direction perpendicular to the branch
            let probe = if b.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            b.cross(&probe).normalize()
        }
    }
}

impl Controller for PrivilegedServo {
    fn name(&self) -> &str {
        "privileged-servo"
    }

    fn begin_episode(&mut self) {
        self.approaching = false;
    }

    fn act(&mut self, ctx: &ControlContext) -> [f64; 6] {
        let frame = &ctx.frame;
        let p_e = frame.jaw_center();
        let p_g = ctx.cutpoint.point();
        let b = ctx.cutpoint.direction();
        let u_hat = Self::approach_dir(frame, ctx.cutpoint);

        let standoff_point = p_g - u_hat * self.standoff;
        if !self.approaching && (p_e - standoff_point).norm() < 0.05 {
            self.approaching = true;
        }
        let target = if self.approaching { p_g } else { standoff_point };

        // orientation target: point along the approach, jaws along the branch
        let z_t = u_hat;
        let b_sign = if frame.left_right().dot(&b) >= 0.0 { 1.0 } else { -1.0 };
        let y_raw = b * b_sign;
        let y_t = (y_raw - z_t * y_raw.dot(&z_t)).normalize();
        let x_t = y_t.cross(&z_t);
        let r_t = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x_t, y_t, z_t]));
        let omega_world = crate::robot::rotation_log(&(r_t * frame.rotation().inverse())) * self.ang_gain;
        let v_world = (target - p_e) * self.lin_gain;

        // actions are expressed in the robot base frame
        let rot_inv = ctx.base_pose.rotation.inverse();
        let v = rot_inv * v_world;
        let w = rot_inv * omega_world;
        let mut a = [0.0; 6];
        for i in 0..3 {
            a[i] = (v[i] / 0.1).clamp(-1.0, 1.0);
            a[i + 3] = (w[i] / 0.1).clamp(-1.0, 1.0);
        }
        a
    }
}

/// One rollout outcome; schema-complete even for episodes that failed to
/// build (`error` set, metric fields null).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub episode: u64,
    pub method: String,
    pub steps: usize,
    pub success: bool,
    pub final_distance: Option<f64>,
    pub pointing_error_deg: Option<f64>,
    pub perpendicular_error_deg: Option<f64>,
    /// Per-category contact step counts.
    pub collisions: BTreeMap<String, usize>,
    pub reward_sum: f64,
    pub error: Option<String>,
}

/// Shared environment construction bundle for rollouts and planning.
pub struct RolloutSetup<'a> {
    pub bank: &'a [TreeModel],
    pub spec: &'a TrellisSpec,
    pub scene_cfg: &'a SceneConfig,
    pub model: KinematicModel,
    pub camera: CameraModel,
    pub env_cfg: EnvConfig,
}

fn final_metrics(env: &PruneEnv) -> (f64, f64, f64) {
    let report = crate::env::check_success(&env.cutter_frame(), &env.cutpoint, &env.cfg.criteria);
    (
        report.distance,
        report.pointing_angle.to_degrees(),
        report.perpendicular_angle.to_degrees(),
    )
}

/// Run a controller over an episode list; one record per episode, optional
/// JSON-lines step trace. Per-episode failures are recorded and never abort
/// the batch.
pub fn run_rollouts(
    setup: &RolloutSetup,
    episodes: &[Episode],
    controller: &mut dyn Controller,
    mut trace: Option<&mut dyn Write>,
) -> Vec<RolloutRecord> {
    let mut records = Vec::with_capacity(episodes.len());
    for episode in episodes {
        let sink: Option<&mut dyn Write> = trace.as_mut().map(|w| &mut **w as &mut dyn Write);
        match run_one(setup, episode, controller, sink) {
            Ok(record) => records.push(record),
            Err(e) => records.push(RolloutRecord {
                episode: episode.id,
                method: controller.name().to_string(),
                steps: 0,
                success: false,
                final_distance: None,
                pointing_error_deg: None,
                perpendicular_error_deg: None,
                collisions: BTreeMap::new(),
                reward_sum: 0.0,
                error: Some(e.to_string()),
            }),
        }
    }
    records
}

fn run_one(
    setup: &RolloutSetup,
    episode: &Episode,
    controller: &mut dyn Controller,
    mut trace: Option<&mut dyn Write>,
) -> Result<RolloutRecord, EpisodeError> {
    let _ = &mut trace;
    let mut env = env_from_episode(
        setup.bank,
        episode,
        setup.spec,
        setup.scene_cfg,
        setup.model.clone(),
        setup.camera.clone(),
        setup.env_cfg.clone(),
    )?;
    let mut obs = env.reset();
    controller.begin_episode();
    let mut reward_sum = 0.0;
    let mut collisions: BTreeMap<String, usize> = BTreeMap::new();
    let mut steps = 0;
    let mut success = false;
    for step in 0..env.cfg.horizon {
        let ctx = ControlContext {
            observation: &obs,
            frame: env.cutter_frame(),
            cutpoint: &env.cutpoint,
            base_pose: &env.base_pose,
            step,
        };
        let action = controller.act(&ctx);
        let result = env.step(action).expect("stepping an unfinished episode");
        steps += 1;
        reward_sum += result.reward.total;
        for cat in &result.info.collisions {
            *collisions.entry(format!("{cat:?}")).or_insert(0) += 1;
        }
        if let Some(w) = trace.as_deref_mut() {
            let line = serde_json::json!({
                "episode": episode.id,
                "step": step,
                "action": action,
                "reward": result.reward,
                "info": result.info,
                "terminated": result.terminated,
                "truncated": result.truncated,
            });
            let _ = writeln!(w, "{line}");
        }
        success = result.terminated;
        let done = result.terminated || result.truncated;
        obs = result.observation;
        if done {
            break;
        }
    }
    let (distance, pointing, perpendicular) = final_metrics(&env);
    Ok(RolloutRecord {
        episode: episode.id,
        method: controller.name().to_string(),
        steps,
        success,
        final_distance: Some(distance),
        pointing_error_deg: Some(pointing),
        perpendicular_error_deg: Some(perpendicular),
        collisions,
        reward_sum,
        error: None,
    })
}

/// Write records as JSON lines.
pub fn write_records(records: &[RolloutRecord], path: &std::path::Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_records(path: &std::path::Path) -> std::io::Result<Vec<RolloutRecord>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("valid record line"))
        .collect())
}

#[cfg(test)]
#[path = "policy_tests.rs"]
mod tests;
