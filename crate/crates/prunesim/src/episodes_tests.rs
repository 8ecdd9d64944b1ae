use nalgebra::{Point3, Vector3};

use super::*;
use crate::rng::rng_from_seed;
use crate::treegen::{default_grammar, generate_bank, TrellisSpec};

fn small_bank() -> Vec<crate::treegen::TreeModel> {
    generate_bank(&TrellisSpec::default(), &default_grammar(), 4, 4, 77).unwrap()
}

#[test]
fn region_samples_satisfy_all_constraints() {
    let region = ReachableRegion::default();
    let mut rng = rng_from_seed(1);
    for _ in 0..5000 {
        let p = sample_reachable_point(&region, &mut rng);
        let r = p.coords.norm();
        assert!(r >= 0.70 && r <= 0.95);
        assert!(p.x >= 0.0);
        assert!(p.z >= 0.0);
        assert!(region.contains(&p));
    }
    assert!(!region.contains(&Point3::new(0.6, 0.0, 0.0)));
}

#[test]
fn radial_distribution_follows_cubic_law() {
    let region = ReachableRegion::default();
    let mut rng = rng_from_seed(2);
    let n = 100_000;
    let mut radii: Vec<f64> = (0..n)
        .map(|_| sample_reachable_point(&region, &mut rng).coords.norm())
        .collect();
    radii.sort_by(f64::total_cmp);
    let (a3, b3) = (region.r_min.powi(3), region.r_max.powi(3));
    let cdf = |r: f64| (r.powi(3) - a3) / (b3 - a3);
    let mut ks: f64 = 0.0;
    for (i, r) in radii.iter().enumerate() {
        let empirical_hi = (i + 1) as f64 / n as f64;
        let empirical_lo = i as f64 / n as f64;
        let f = cdf(*r);
        ks = ks.max((empirical_hi - f).abs()).max((f - empirical_lo).abs());
    }
    assert!(ks <= 0.01, "KS distance {ks}");
}

#[test]
fn shoemake_formula_endpoints() {
    // u = (0, 0, 0) -> (x, y, z, w) = (0, 1, 0, 0)
    let q = quaternion_from_uniforms(0.0, 0.0, 0.0);
    assert!((q.i - 0.0).abs() < 1e-15);
    assert!((q.j - 1.0).abs() < 1e-15);
    assert!((q.k - 0.0).abs() < 1e-15);
    assert!((q.w - 0.0).abs() < 1e-15);
    // u = (1, anything, 0) -> (0, 0, 0, 1)
    let q = quaternion_from_uniforms(1.0, 0.37, 0.0);
    assert!((q.i).abs() < 1e-15);
    assert!((q.j).abs() < 1e-15);
    assert!((q.k).abs() < 1e-15);
    assert!((q.w - 1.0).abs() < 1e-15);
    // unit norm in general
    let q = quaternion_from_uniforms(0.3, 0.8, 0.45);
    assert!((q.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn random_rotations_spread_uniformly_over_octants() {
    let mut rng = rng_from_seed(3);
    let n = 100_000usize;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let v = random_orientation(&mut rng) * Vector3::x();
        let idx = ((v.x > 0.0) as usize) << 2 | ((v.y > 0.0) as usize) << 1 | (v.z > 0.0) as usize;
        counts[idx] += 1;
    }
    // per-octant counts within 3 sigma of n/8
    let expect = n as f64 / 8.0;
    let sigma = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
    for (i, c) in counts.iter().enumerate() {
        assert!(
            (*c as f64 - expect).abs() <= 3.0 * sigma,
            "octant {i}: {c} vs {expect} +- {sigma}"
        );
    }
}

#[test]
fn fibonacci_directions_basics_and_spacing() {
    let one = fibonacci_directions(1);
    assert!((one[0] - Vector3::x()).norm() < 1e-12);

    let dirs = fibonacci_directions(1000);
    for d in &dirs {
        assert!((d.norm() - 1.0).abs() <= 1e-12);
    }
    // nearest-neighbor angular spacing within [3, 8] degrees for every point
    for (i, a) in dirs.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for (j, b) in dirs.iter().enumerate() {
            if i != j {
                nearest = nearest.min(a.dot(b).clamp(-1.0, 1.0).acos());
            }
        }
        let deg = nearest.to_degrees();
        assert!((3.0..=8.0).contains(&deg), "point {i}: spacing {deg}");
    }
}

#[test]
fn match_branch_is_sign_agnostic_and_sorted() {
    let bank = small_bank();
    let tol = 10f64.to_radians();
    // use an actual branch direction: exact match comes first with error 0
    let d = bank[0]
        .branches
        .iter()
        .find(|b| b.prunable)
        .map(|b| b.direction_vec())
        .expect("bank has prunable branches");
    let matches = match_branch(&bank, &d, tol);
    assert!(!matches.is_empty());
    assert!(matches[0].error <= 1e-12);
    assert!(matches.windows(2).all(|w| w[0].error <= w[1].error));

    let flipped = match_branch(&bank, &(-d), tol);
    assert_eq!(matches.len(), flipped.len());
    for (a, b) in matches.iter().zip(flipped.iter()) {
        assert_eq!((a.tree, a.branch), (b.tree, b.branch));
        assert!((a.error - b.error).abs() <= 1e-12);
    }

    // brute-force oracle: scan everything
    let mut brute = Vec::new();
    for (ti, tree) in bank.iter().enumerate() {
        for (bi, branch) in tree.branches.iter().enumerate() {
            if branch.prunable {
                let err = branch.direction_vec().dot(&d.normalize()).abs().clamp(0.0, 1.0).acos();
                if err <= tol {
                    brute.push((ti, bi));
                }
            }
        }
    }
    let got: Vec<(usize, usize)> = matches.iter().map(|m| (m.tree, m.branch)).collect();
    let mut brute_sorted = brute.clone();
    brute_sorted.sort();
    let mut got_sorted = got.clone();
    got_sorted.sort();
    assert_eq!(got_sorted, brute_sorted);
}

#[test]
fn training_episodes_respect_region_and_noise_bounds() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let mut made = 0;
    for k in 0..200u64 {
        let Ok(ep) = make_training_episode(&bank, &region, &cfg, &scene_cfg, &feas, k, crate::rng::derive_seed(11, k))
        else {
            continue;
        };
        made += 1;
        assert!(region.contains(&ep.cutpoint.point()), "cutpoint outside region");
        for v in ep.robot_noise {
            assert!(v.abs() <= cfg.robot_noise + 1e-12);
        }
        for v in ep.camera_noise {
            assert!(v.abs() <= cfg.camera_noise + 1e-12);
        }
        // matched branch direction within tolerance of the cutpoint's b
        let b = ep.cutpoint.direction();
        let stored = bank[ep.tree].branches[ep.cutpoint.branch].direction_vec();
        assert!(b.dot(&stored).abs() > (cfg.match_tolerance).cos() - 1e-9);
    }
    assert!(made > 100, "only {made}/200 training episodes placed");
}

#[test]
fn training_episode_is_deterministic_per_seed() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let a = make_training_episode(&bank, &region, &cfg, &scene_cfg, &feas, 0, 99).unwrap();
    let b = make_training_episode(&bank, &region, &cfg, &scene_cfg, &feas, 0, 99).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn eval_set_covers_and_reports() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let (eps, report) = make_eval_set(&bank, 50, 3, &region, &cfg, &scene_cfg, &feas, 5);
    assert!(eps.len() <= 150);
    assert_eq!(report.orientations, 50);
    assert_eq!(report.matched + report.unmatched.len(), 50);
    assert_eq!(report.episodes, eps.len());
    for ep in &eps {
        assert!(region.contains(&ep.cutpoint.point()));
        assert_eq!(ep.robot_noise, [0.0; 3]);
    }
    // single orientation, single position
    let (eps1, _) = make_eval_set(&bank, 1, 1, &region, &cfg, &scene_cfg, &feas, 5);
    assert!(eps1.len() <= 1);
}

#[test]
fn eval_set_serializes_identically_across_runs() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let (a, _) = make_eval_set(&bank, 20, 2, &region, &cfg, &scene_cfg, &feas, 123);
    let (b, _) = make_eval_set(&bank, 20, 2, &region, &cfg, &scene_cfg, &feas, 123);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn episode_file_round_trips() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let (eps, _) = make_eval_set(&bank, 10, 2, &region, &cfg, &scene_cfg, &feas, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.jsonl");
    write_episode_file(&eps, "bankhash123", &path).unwrap();
    let (hash, back) = read_episode_file(&path).unwrap();
    assert_eq!(hash, "bankhash123");
    assert_eq!(back.len(), eps.len());
    assert_eq!(
        serde_json::to_string(&back).unwrap(),
        serde_json::to_string(&eps).unwrap()
    );
}

#[test]
fn episode_environment_builds_and_steps() {
    let bank = small_bank();
    let region = ReachableRegion::default();
    let cfg = EpisodeConfig::default();
    let scene_cfg = crate::scene::SceneConfig::default();
    let feas = StartFeasibility::defaults();
    let mut built = 0;
    for k in 0..20u64 {
        let Ok(ep) = make_training_episode(&bank, &region, &cfg, &scene_cfg, &feas, k, crate::rng::derive_seed(31, k))
        else {
            continue;
        };
        let env = env_from_episode(
            &bank,
            &ep,
            &TrellisSpec::default(),
            &scene_cfg,
            crate::robot::KinematicModel::ur5(),
            crate::perception::CameraModel::default(),
            crate::env::EnvConfig { render_images: false, ..Default::default() },
        );
        if let Ok(mut env) = env {
            let _ = env.reset();
            let r = env.step([0.2, 0.0, 0.1, 0.0, 0.0, 0.0]).unwrap();
            assert!(r.reward.total.is_finite());
            built += 1;
        }
    }
    assert!(built >= 10, "only {built}/20 environments feasible");
}
