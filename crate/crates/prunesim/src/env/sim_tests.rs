use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;

use super::*;
use crate::env::Cutpoint;
use crate::rng::rng_from_seed;
use crate::scene::{Capsule, CollisionCategory, Scene, SceneConfig, ScenePrimitive};

fn base_pose() -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(0.0, 0.0, 0.6), UnitQuaternion::identity())
}

fn empty_scene() -> Scene {
    Scene::from_parts(vec![], 5.0, &SceneConfig::default(), base_pose())
}

fn far_cutpoint() -> Cutpoint {
    // in front of the robot, out of immediate reach (world frame)
    Cutpoint { p_g: [1.3, 0.1, 1.2], b: [0.0, 1.0, 0.0], branch: 0, tree: 0 }
}

fn make_env(scene: Scene, cutpoint: Cutpoint, render: bool) -> PruneEnv {
    let cfg = EnvConfig { render_images: render, ..EnvConfig::default() };
    PruneEnv::new(
        scene,
        cutpoint,
        base_pose(),
        UnitQuaternion::identity(),
        crate::robot::KinematicModel::ur5(),
        crate::perception::CameraModel::default(),
        cfg,
    )
    .unwrap()
}

#[test]
fn zero_action_yields_slack_reward_only() {
    let mut env = make_env(empty_scene(), far_cutpoint(), true);
    let _ = env.reset();
    let before = env.cutter_frame().jaw_center();
    let result = env.step([0.0; 6]).unwrap();
    let after = env.cutter_frame().jaw_center();
    assert!((after - before).norm() < 1e-12, "cutter moved {:?}", after - before);
    assert_eq!(result.reward.total, -0.1);
    assert_eq!(result.reward.r_reach, 0.0);
    assert_eq!(result.reward.r_point, 0.0);
    assert_eq!(result.reward.r_perp, 0.0);
    assert_eq!(result.reward.r_col, 0.0);
    assert!(!result.terminated);
    assert!(!result.truncated);
    // stationary camera: zero flow
    assert!(result.observation.flow.du.iter().all(|v| *v == 0.0));
}

#[test]
fn reset_is_deterministic_and_first_flow_zero() {
    let mut env1 = make_env(empty_scene(), far_cutpoint(), true);
    let mut env2 = make_env(empty_scene(), far_cutpoint(), true);
    let o1 = env1.reset();
    let o2 = env2.reset();
    assert_eq!(o1.proprio, o2.proprio);
    assert_eq!(o1.cutpoint_base, o2.cutpoint_base);
    assert_eq!(o1.cutpoint_ee, o2.cutpoint_ee);
    assert!(o1.flow.du.iter().all(|v| *v == 0.0));
    assert!(o1.flow.dv.iter().all(|v| *v == 0.0));
    // proprio tail holds interleaved sin/cos of the start configuration
    let q = env1.joint_angles();
    for i in 0..6 {
        assert_eq!(o1.proprio[15 + 2 * i], q[i].sin());
        assert_eq!(o1.proprio[15 + 2 * i + 1], q[i].cos());
    }
}

#[test]
fn step_streams_are_bit_identical_for_identical_action_sequences() {
    let mut env1 = make_env(empty_scene(), far_cutpoint(), false);
    let mut env2 = make_env(empty_scene(), far_cutpoint(), false);
    let _ = env1.reset();
    let _ = env2.reset();
    let mut rng = rng_from_seed(4);
    for _ in 0..20 {
        let a: [f64; 6] = [(); 6].map(|_| rng.gen_range(-1.0..1.0));
        let r1 = env1.step(a).unwrap();
        let r2 = env2.step(a).unwrap();
        assert_eq!(r1.reward, r2.reward);
        assert_eq!(r1.observation.proprio, r2.observation.proprio);
        assert_eq!(r1.info.distance, r2.info.distance);
    }
}

#[test]
fn step_after_done_is_a_protocol_error() {
    let mut env = make_env(empty_scene(), far_cutpoint(), false);
    let _ = env.reset();
    for _ in 0..100 {
        let r = env.step([0.0; 6]).unwrap();
        if r.truncated {
            break;
        }
    }
    assert!(env.is_done());
    assert!(matches!(env.step([0.0; 6]), Err(EnvError::StepAfterDone)));
}

#[test]
fn rigid_post_halts_motion_and_costs_a_tenth() {
    // a rigid vertical post 12 cm in front of the start cutter position
    let mut env0 = make_env(empty_scene(), far_cutpoint(), false);
    let _ = env0.reset();
    let start = env0.cutter_frame().jaw_center();
    let post_x = start.x + 0.12;
    let post = ScenePrimitive {
        capsule: Capsule::new(
            Point3::new(post_x, start.y, 0.0),
            Point3::new(post_x, start.y, 3.0),
            0.03,
        ),
        category: CollisionCategory::RigidStructure,
        tree: None,
        branch: None,
        segment: None,
    };
    let scene = Scene::from_parts(vec![post], 5.0, &SceneConfig::default(), base_pose());
    let mut env = make_env(scene, far_cutpoint(), false);
    let _ = env.reset();
    // drive straight at the post: 0.05 m per step
    let mut hit_step = None;
    for step in 0..8 {
        let r = env.step([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        if !r.info.collisions.is_empty() {
            assert!(r.info.collisions.contains(&CollisionCategory::RigidStructure));
            assert_eq!(r.reward.r_col, -0.1);
            assert!(r.info.halted);
            hit_step = Some(step);
            break;
        }
    }
    assert!(hit_step.is_some(), "never reached the post");
    // once halted against the post, further pushes make no progress
    let x_before = env.cutter_frame().jaw_center().x;
    let r = env.step([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let x_after = env.cutter_frame().jaw_center().x;
    assert!(r.info.halted);
    assert!(x_after - x_before < 5e-3, "advanced {}", x_after - x_before);
    // jaw center stays short of the post surface
    assert!(x_after < post_x - 0.03 + 1e-6);
}

#[test]
fn small_branch_is_pass_through_with_small_penalty() {
    let mut env0 = make_env(empty_scene(), far_cutpoint(), false);
    let _ = env0.reset();
    let start = env0.cutter_frame().jaw_center();
    let twig = ScenePrimitive {
        capsule: Capsule::new(
            Point3::new(start.x + 0.10, start.y - 0.3, start.z),
            Point3::new(start.x + 0.10, start.y + 0.3, start.z),
            0.006,
        ),
        category: CollisionCategory::SmallBranch,
        tree: Some(0),
        branch: Some(0),
        segment: Some(0),
    };
    let scene = Scene::from_parts(vec![twig], 5.0, &SceneConfig::default(), base_pose());
    let mut env = make_env(scene, far_cutpoint(), false);
    let _ = env.reset();
    let mut saw_contact = false;
    let mut x0 = env.cutter_frame().jaw_center().x;
    for _ in 0..6 {
        let r = env.step([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let x1 = env.cutter_frame().jaw_center().x;
        if r.info.collisions.contains(&CollisionCategory::SmallBranch) {
            saw_contact = true;
            assert_eq!(r.reward.r_col, -0.01);
            assert!(!r.info.halted, "small branches must not stop motion");
            assert!(x1 > x0, "kept moving through the twig");
        }
        x0 = x1;
    }
    assert!(saw_contact);
}

#[test]
fn success_at_cutpoint_terminates_with_bonus() {
    // place the cutpoint exactly at the start jaw center, branch parallel
    // to the left-right vector: all criteria pass immediately
    let mut probe = make_env(empty_scene(), far_cutpoint(), false);
    let _ = probe.reset();
    let frame = probe.cutter_frame();
    let p = frame.jaw_center();
    let b = frame.left_right();
    let cp = Cutpoint { p_g: [p.x, p.y, p.z], b: [b.x, b.y, b.z], branch: 0, tree: 0 };
    let mut env = make_env(empty_scene(), cp, false);
    let _ = env.reset();
    let r = env.step([0.0; 6]).unwrap();
    assert!(r.terminated);
    assert!(r.info.success.pass);
    assert_eq!(r.reward.r_term, 2.0);
    assert_eq!(r.reward.total, 2.0 - 0.1);
    assert!(env.is_done());
}

#[test]
fn reach_telescopes_and_respects_the_step_bound() {
    let mut env = make_env(empty_scene(), far_cutpoint(), false);
    let first = env.reset();
    let _ = first;
    let p_g = env.cutpoint.point();
    let d0 = (env.cutter_frame().jaw_center() - p_g).norm();
    let mut rng = rng_from_seed(9);
    let mut sum = 0.0;
    let bound = 0.05 + 0.1 * 0.5 * 0.15 + 1e-9;
    for _ in 0..30 {
        let a: [f64; 6] = [(); 6].map(|_| rng.gen_range(-1.0..1.0));
        let r = env.step(a).unwrap();
        assert!(r.reward.r_reach.abs() <= bound, "r_reach {}", r.reward.r_reach);
        assert!(r.reward.r_point >= -2.0 && r.reward.r_point <= 2.0);
        assert!(r.reward.r_perp >= -1.0 && r.reward.r_perp <= 1.0);
        sum += r.reward.r_reach;
    }
    let d_final = (env.cutter_frame().jaw_center() - p_g).norm();
    assert!((sum - (d0 - d_final)).abs() <= 1e-9);
}

#[test]
fn out_of_range_actions_are_clamped() {
    let mut env1 = make_env(empty_scene(), far_cutpoint(), false);
    let mut env2 = make_env(empty_scene(), far_cutpoint(), false);
    let _ = env1.reset();
    let _ = env2.reset();
    let r1 = env1.step([5.0, -3.0, 0.0, 0.0, 0.0, f64::NAN]).unwrap();
    let r2 = env2.step([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(r1.reward, r2.reward);
}

#[test]
fn infeasible_start_is_rejected() {
    // a block right on top of the robot base
    let block = ScenePrimitive {
        capsule: Capsule::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 2.0), 0.5),
        category: CollisionCategory::RigidStructure,
        tree: None,
        branch: None,
        segment: None,
    };
    let scene = Scene::from_parts(vec![block], 5.0, &SceneConfig::default(), base_pose());
    let err = PruneEnv::new(
        scene,
        far_cutpoint(),
        base_pose(),
        UnitQuaternion::identity(),
        crate::robot::KinematicModel::ur5(),
        crate::perception::CameraModel::default(),
        EnvConfig { render_images: false, ..EnvConfig::default() },
    );
    assert!(matches!(err, Err(EnvError::InfeasibleStart)));
}

#[test]
fn moving_camera_produces_nonzero_flow_against_backdrop() {
    let mut env = make_env(empty_scene(), far_cutpoint(), true);
    let _ = env.reset();
    let r = env.step([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let nonzero = r.observation.flow.du.iter().filter(|v| **v != 0.0).count();
    assert!(nonzero > 1000, "only {nonzero} nonzero flow pixels");
    let _ = Vector3::<f64>::zeros();
}
