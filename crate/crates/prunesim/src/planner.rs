//! Oracle RRT-Connect over ground-truth scene geometry: success-region
//! goal-pose sampling, damped-least-squares IK seeding, bidirectional
//! search in joint space, shortcut smoothing, and independent path
//! validation.

use std::time::Instant;

use nalgebra::{Isometry3, Rotation3, Unit, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_success, Cutpoint, SuccessCriteria};
use crate::robot::{
    forward_kinematics, in_self_collision, robot_capsules, CutterFrame, KinematicModel,
};
use crate::scene::{Capsule, Scene};

/// Planning parameters; the published protocol fixes the goal count (100)
/// and budget (60 s), the rest are standard RRT-Connect practice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRequest {
    pub n_goal_samples: usize,
    /// Wall-clock budget, seconds.
    pub time_budget: f64,
    /// Joint-space extension step (L2), radians.
    pub step_size: f64,
    /// Edge densification resolution per joint, radians.
    pub edge_resolution: f64,
    /// Per-joint tolerance for snapping onto a goal configuration.
    pub goal_tolerance: f64,
    /// Probability of sampling a goal configuration instead of uniform.
    pub goal_bias: f64,
    /// Deterministic iteration cap (the time budget is a secondary cap).
    pub max_iterations: usize,
    pub shortcut_iters: usize,
    pub seed: u64,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            n_goal_samples: 100,
            time_budget: 60.0,
            step_size: 0.2,
            edge_resolution: 0.02,
            goal_tolerance: 0.02,
            goal_bias: 0.1,
            max_iterations: 60_000,
            shortcut_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Success,
    NoGoalFound,
    Timeout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub nodes: usize,
    pub wall_time_s: f64,
    /// Collision-free goal configurations available to the search.
    pub goal_configs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub path: Vec<[f64; 6]>,
    pub stats: PlanStats,
}

/// Configuration validity: the robot at `q` must not overlap the scene
/// (except the cutter capsule against the target branch) or itself, and
/// must respect joint limits.
pub struct CollisionChecker<'a> {
    pub scene: &'a Scene,
    pub model: &'a KinematicModel,
    pub base_pose: Isometry3<f64>,
    /// `(tree, branch)` whose contacts with the cutter capsule are ignored
    /// (the mouth must close around the target branch).
    pub ignore_cutter_on: Option<(usize, usize)>,
}

const CUTTER_INDEX: usize = 6;

impl<'a> CollisionChecker<'a> {
    pub fn config_free(&self, q: &[f64; 6]) -> bool {
        if q.iter().any(|v| v.abs() > self.model.joint_limit) {
            return false;
        }
        let caps: Vec<Capsule> = robot_capsules(self.model, q)
            .into_iter()
            .map(|c| Capsule::new(self.base_pose * c.a, self.base_pose * c.b, c.radius))
            .collect();
        if in_self_collision(&caps) {
            return false;
        }
        self.scene.collision_query(&caps).iter().all(|hit| {
            self.ignore_cutter_on
                .map(|(tree, branch)| {
                    hit.probe == CUTTER_INDEX
                        && hit.tree == Some(tree)
                        && hit.branch == Some(branch)
                })
                .unwrap_or(false)
        })
    }
}

fn joint_distance(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sample cutter poses uniformly within the success set around a cutpoint;
/// every returned pose passes [`check_success`].
pub fn sample_goal_poses<R: Rng>(
    cutpoint: &Cutpoint,
    n: usize,
    criteria: &SuccessCriteria,
    rng: &mut R,
) -> Vec<CutterFrame> {
    let p_g = cutpoint.point();
    let b = cutpoint.direction();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < 400 * n.max(1) {
        attempts += 1;
        // a point on the branch axis inside the mouth window
        let along = rng.gen_range(-0.6..0.6) * criteria.jaw_half_gap;
        let anchor = p_g + b * along;
        // approach direction perpendicular to the branch
        let raw = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let perp = raw - b * raw.dot(&b);
        if perp.norm() < 1e-6 {
            continue;
        }
        let approach = perp.normalize();
        // jaw center: backed off along the approach, jittered laterally
        let backoff = rng.gen_range(0.0..criteria.max_distance * 0.85);
        let lateral = b * (rng.gen_range(-0.5..0.5) * criteria.jaw_half_gap);
        let p_e = anchor - approach * backoff + lateral;
        // pointing vector: the approach tilted within the cone
        let tilt_axis = Unit::new_normalize(approach.cross(&b));
        let tilt = Rotation3::from_axis_angle(&tilt_axis, rng.gen_range(-0.4..0.4) * criteria.max_angle);
        let spin = Rotation3::from_axis_angle(&Unit::new_normalize(approach), rng.gen_range(0.0..std::f64::consts::TAU));
        let v_p = (spin * tilt * approach).normalize();
        // left-right vector: near +-b, re-orthogonalized against v_p
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let wobble_axis = Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let wobble = Rotation3::from_axis_angle(&wobble_axis, rng.gen_range(0.0..0.4) * criteria.max_angle);
        let v_u_raw = wobble * (b * sign);
        let y = (v_u_raw - v_p * v_u_raw.dot(&v_p)).normalize();
        let x = y.cross(&v_p);
        let rot = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, y, v_p]));
        let frame = CutterFrame {
            iso: Isometry3::from_parts(
                nalgebra::Translation3::new(p_e.x, p_e.y, p_e.z),
                UnitQuaternion::from_rotation_matrix(&rot),
            ),
        };
        if check_success(&frame, cutpoint, criteria).pass {
            out.push(frame);
        }
    }
    out
}

/// Damped-least-squares IK with multi-restart. On success the returned
/// configuration reaches the target within `pos_tol` meters and `rot_tol`
/// radians.
#[allow(clippy::too_many_arguments)]
pub fn ik_solve<R: Rng>(
    model: &KinematicModel,
    target: &CutterFrame,
    seed_q: &[f64; 6],
    iters: usize,
    pos_tol: f64,
    rot_tol: f64,
    restarts: usize,
    rng: &mut R,
) -> Option<[f64; 6]> {
    let target_p = target.jaw_center();
    let target_r = target.rotation();
    for attempt in 0..=restarts {
        let mut q = if attempt == 0 {
            *seed_q
        } else {
            [(); 6].map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        };
        for _ in 0..iters {
            let frame = forward_kinematics(model, &q);
            let dp = target_p - frame.jaw_center();
            let dr = crate::robot::rotation_log(&(target_r * frame.rotation().inverse()));
            if dp.norm() <= pos_tol && dr.norm() <= rot_tol {
                let q = q.map(|v| v.clamp(-model.joint_limit, model.joint_limit));
                let f = forward_kinematics(model, &q);
                let ok = (target_p - f.jaw_center()).norm() <= pos_tol
                    && crate::robot::rotation_log(&(target_r * f.rotation().inverse())).norm() <= rot_tol;
                if ok {
                    return Some(q);
                }
                break;
            }
            let err = Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z);
            let qdot = crate::robot::solve_joint_velocities(model, &q, &err, 0.05);
            for i in 0..6 {
                q[i] += qdot[i].clamp(-0.3, 0.3);
            }
        }
    }
    None
}

struct Tree {
    nodes: Vec<([f64; 6], Option<usize>)>,
}

impl Tree {
    fn nearest(&self, q: &[f64; 6]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, (node, _)) in self.nodes.iter().enumerate() {
            let d = joint_distance(node, q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn path_to_root(&self, mut i: usize) -> Vec<[f64; 6]> {
        let mut path = vec![self.nodes[i].0];
        while let Some(p) = self.nodes[i].1 {
            i = p;
            path.push(self.nodes[i].0);
        }
        path
    }
}

fn step_toward(from: &[f64; 6], to: &[f64; 6], step: f64) -> ([f64; 6], bool) {
    let d = joint_distance(from, to);
    if d <= step {
        return (*to, true);
    }
    let mut q = [0.0; 6];
    for i in 0..6 {
        q[i] = from[i] + (to[i] - from[i]) * step / d;
    }
    (q, false)
}

/// Collision-check the straight joint-space edge at the request resolution
/// (endpoint included, start assumed valid).
fn edge_free(checker: &CollisionChecker, from: &[f64; 6], to: &[f64; 6], resolution: f64) -> bool {
    let max_delta = from.iter().zip(to).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let steps = (max_delta / resolution).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let mut q = [0.0; 6];
        for i in 0..6 {
            q[i] = from[i] + (to[i] - from[i]) * t;
        }
        if !checker.config_free(&q) {
            return false;
        }
    }
    true
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(
    tree: &mut Tree,
    target: &[f64; 6],
    checker: &CollisionChecker,
    request: &PlanRequest,
) -> Extend {
    let near = tree.nearest(target);
    let near_q = tree.nodes[near].0;
    let (q_new, reached) = step_toward(&near_q, target, request.step_size);
    if !edge_free(checker, &near_q, &q_new, request.edge_resolution) {
        return Extend::Trapped;
    }
    tree.nodes.push((q_new, Some(near)));
    let idx = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

/// Bidirectional RRT-Connect from `start` to any of `goal_configs`.
pub fn rrt_connect(
    start: &[f64; 6],
    goal_configs: &[[f64; 6]],
    checker: &CollisionChecker,
    request: &PlanRequest,
) -> PlanResult {
    let t0 = Instant::now();
    let mut rng = crate::rng::rng_from_seed(request.seed);

    let free_goals: Vec<[f64; 6]> =
        goal_configs.iter().copied().filter(|g| checker.config_free(g)).collect();
    let mut stats = PlanStats {
        iterations: 0,
        nodes: 0,
        wall_time_s: 0.0,
        goal_configs: free_goals.len(),
    };
    if free_goals.is_empty() {
        stats.wall_time_s = t0.elapsed().as_secs_f64();
        return PlanResult { status: PlanStatus::NoGoalFound, path: vec![], stats };
    }
    if !checker.config_free(start) {
        stats.wall_time_s = t0.elapsed().as_secs_f64();
        return PlanResult { status: PlanStatus::NoGoalFound, path: vec![], stats };
    }

    // tree A grows from the start; tree B holds every goal as a root
    let mut tree_a = Tree { nodes: vec![(*start, None)] };
    let mut tree_b = Tree { nodes: free_goals.iter().map(|g| (*g, None)).collect() };
    let mut a_is_start = true;

    let finish = |status: PlanStatus,
                  path: Vec<[f64; 6]>,
                  mut stats: PlanStats,
                  t0: &Instant,
                  nodes: usize| {
        stats.wall_time_s = t0.elapsed().as_secs_f64();
        stats.nodes = nodes;
        PlanResult { status, path, stats }
    };

    for iteration in 0..request.max_iterations {
        stats.iterations = iteration + 1;
        if t0.elapsed().as_secs_f64() > request.time_budget {
            let nodes = tree_a.nodes.len() + tree_b.nodes.len();
            return finish(PlanStatus::Timeout, vec![], stats, &t0, nodes);
        }
        // sample: goal-biased when growing the start tree
        let q_rand: [f64; 6] = if a_is_start && rng.gen::<f64>() < request.goal_bias {
            free_goals[rng.gen_range(0..free_goals.len())]
        } else {
            [(); 6].map(|_| rng.gen_range(-self::SAMPLE_RANGE..self::SAMPLE_RANGE))
        };

        if let Extend::Advanced(new_idx) | Extend::Reached(new_idx) =
            extend(&mut tree_a, &q_rand, checker, request)
        {
            let q_new = tree_a.nodes[new_idx].0;
            // CONNECT: drive the other tree toward q_new until blocked
            let mut last = None;
            loop {
                match extend(&mut tree_b, &q_new, checker, request) {
                    Extend::Trapped => break,
                    Extend::Advanced(i) => last = Some(i),
                    Extend::Reached(i) => {
                        last = Some(i);
                        break;
                    }
                }
            }
            if let Some(meet_b) = last {
                if joint_distance(&tree_b.nodes[meet_b].0, &q_new) <= request.goal_tolerance * 6.0 {
                    // meeting point reached: assemble start -> goal path
                    let (start_tree, start_idx, goal_tree, goal_idx) = if a_is_start {
                        (&tree_a, new_idx, &tree_b, meet_b)
                    } else {
                        (&tree_b, meet_b, &tree_a, new_idx)
                    };
                    let mut path: Vec<[f64; 6]> = start_tree.path_to_root(start_idx);
                    path.reverse();
                    path.extend(goal_tree.path_to_root(goal_idx));
                    let path = shortcut(path, checker, request, &mut rng);
                    let nodes = tree_a.nodes.len() + tree_b.nodes.len();
                    return finish(PlanStatus::Success, path, stats, &t0, nodes);
                }
            }
        }
        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }
    let nodes = tree_a.nodes.len() + tree_b.nodes.len();
    finish(PlanStatus::Timeout, vec![], stats, &t0, nodes)
}

const SAMPLE_RANGE: f64 = 2.0 * std::f64::consts::PI;

/// Random shortcut smoothing: try to replace path spans with straight
/// collision-free edges.
fn shortcut<R: Rng>(
    mut path: Vec<[f64; 6]>,
    checker: &CollisionChecker,
    request: &PlanRequest,
    rng: &mut R,
) -> Vec<[f64; 6]> {
    for _ in 0..request.shortcut_iters {
        if path.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..path.len() - 2);
        let j = rng.gen_range(i + 2..path.len());
        if edge_free(checker, &path[i], &path[j], request.edge_resolution) {
            path.drain(i + 1..j);
        }
    }
    path
}

/// First edge of the path that fails re-validation, if any.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathViolation {
    pub edge: usize,
    pub q: [f64; 6],
}

/// Independent path check: re-densifies every edge with its own stepping
/// loop (finer than the planner's by default) and re-checks each
/// configuration against the scene.
pub fn validate_path(
    path: &[[f64; 6]],
    checker: &CollisionChecker,
    resolution: f64,
) -> Result<(), PathViolation> {
    if path.is_empty() {
        return Ok(());
    }
    if !checker.config_free(&path[0]) {
        return Err(PathViolation { edge: 0, q: path[0] });
    }
    for (edge, pair) in path.windows(2).enumerate() {
        let (from, to) = (&pair[0], &pair[1]);
        let span = from.iter().zip(to).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let samples = (span / resolution).ceil().max(1.0) as usize;
        for k in 1..=samples {
            let t = k as f64 / samples as f64;
            let mut q = [0.0; 6];
            for i in 0..6 {
                q[i] = from[i] + (to[i] - from[i]) * t;
            }
            if !checker.config_free(&q) {
                return Err(PathViolation { edge, q });
            }
        }
    }
    Ok(())
}

/// Full oracle pipeline for one cutpoint: sample goal poses, solve IK for
/// each, keep collision-free configurations that still satisfy the success
/// criteria, then search.
#[allow(clippy::too_many_arguments)]
pub fn plan_to_cutpoint(
    scene: &Scene,
    model: &KinematicModel,
    base_pose: Isometry3<f64>,
    cutpoint: &Cutpoint,
    criteria: &SuccessCriteria,
    start_q: &[f64; 6],
    request: &PlanRequest,
) -> PlanResult {
    let mut rng = crate::rng::rng_from_seed(crate::rng::derive_seed(request.seed, 0x6f41));
    let checker = CollisionChecker {
        scene,
        model,
        base_pose,
        ignore_cutter_on: Some((cutpoint.tree, cutpoint.branch)),
    };
    // goal poses are sampled in the base frame so IK can use them directly
    let base_cut = Cutpoint {
        p_g: {
            let p = base_pose.inverse() * cutpoint.point();
            [p.x, p.y, p.z]
        },
        b: {
            let b = base_pose.inverse() * cutpoint.direction();
            [b.x, b.y, b.z]
        },
        ..cutpoint.clone()
    };
    let poses = sample_goal_poses(&base_cut, request.n_goal_samples, criteria, &mut rng);
    let mut goals = Vec::new();
    for pose in &poses {
        if let Some(q) = ik_solve(model, pose, start_q, 120, 1e-3, 1e-2, 8, &mut rng) {
            let frame = forward_kinematics(model, &q);
            if check_success(&frame, &base_cut, criteria).pass {
                goals.push(q);
            }
        }
    }
    // a sampled edge check can graze past thin geometry; re-validate at
    // twice the resolution and re-seed the search when it disagrees
    let mut last = None;
    for attempt in 0..3 {
        let req = PlanRequest {
            seed: crate::rng::derive_seed(request.seed, attempt),
            ..request.clone()
        };
        let result = rrt_connect(start_q, &goals, &checker, &req);
        if result.status != PlanStatus::Success {
            return result;
        }
        if validate_path(&result.path, &checker, req.edge_resolution / 2.0).is_ok() {
            return result;
        }
        last = Some(result);
    }
    let mut result = last.expect("at least one attempt ran");
    result.status = PlanStatus::Timeout;
    result.path.clear();
    result
}

#[cfg(test)]
#[path = "planner_tests.rs"]
mod tests;
