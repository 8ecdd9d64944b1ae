use prunesim::planner::*;
use prunesim::episodes::*;
use prunesim::env::{check_success, EnvConfig, Cutpoint};
use prunesim::treegen::*;
use prunesim::scene::SceneConfig;
use prunesim::robot::*;
use prunesim::perception::CameraModel;

fn main() {
    let (_, bank) = load_bank(std::path::Path::new("/tmp/smoke/bank")).unwrap();
    let (_, eps) = read_episode_file(std::path::Path::new("/tmp/smoke/eval.jsonl")).unwrap();
    let cfg_env = EnvConfig { render_images: false, ..Default::default() };
    let model = KinematicModel::ur5();
    let ep = &eps[std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0usize)];
    let env = env_from_episode(&bank, ep, &TrellisSpec::default(), &SceneConfig::default(),
        model.clone(), CameraModel::default(), cfg_env.clone()).unwrap();
    let base_inv = env.base_pose.inverse();
    let p = base_inv * env.cutpoint.point();
    let b = base_inv * env.cutpoint.direction();
    let base_cut = Cutpoint { p_g: [p.x, p.y, p.z], b: [b.x, b.y, b.z], branch: env.cutpoint.branch, tree: env.cutpoint.tree };
    let mut rng = prunesim::rng_from_seed_pub(42);
    let poses = sample_goal_poses(&base_cut, 100, &cfg_env.criteria, &mut rng);
    println!("poses: {} cutpoint base frame {:?} dist {:.3}", poses.len(), base_cut.p_g, p.coords.norm());
    let mut ik_ok = 0; let mut success_ok = 0; let mut free_ok = 0;
    let checker = CollisionChecker { scene: &env.scene, model: &model, base_pose: env.base_pose,
        ignore_cutter_on: Some((env.cutpoint.tree, env.cutpoint.branch)) };
    for pose in &poses {
        if let Some(q) = ik_solve(&model, pose, &cfg_env.start_q, 120, 1e-3, 1e-2, 8, &mut rng) {
            ik_ok += 1;
            let f = forward_kinematics(&model, &q);
            if check_success(&f, &base_cut, &cfg_env.criteria).pass {
                success_ok += 1;
                if checker.config_free(&q) { free_ok += 1; }
            }
        }
    }
    println!("ik {ik_ok}/100, success {success_ok}, collision-free {free_ok}");
    println!("start free: {}", checker.config_free(&cfg_env.start_q));
    // inspect the first few colliding goal configs
    let mut rng = prunesim::rng_from_seed_pub(42);
    let poses = sample_goal_poses(&base_cut, 100, &cfg_env.criteria, &mut rng);
    let mut shown = 0;
    for pose in &poses {
        if shown >= 5 { break; }
        if let Some(q) = ik_solve(&model, pose, &cfg_env.start_q, 120, 1e-3, 1e-2, 8, &mut rng) {
            let f = forward_kinematics(&model, &q);
            if check_success(&f, &base_cut, &cfg_env.criteria).pass && !checker.config_free(&q) {
                shown += 1;
                let caps: Vec<prunesim::scene::Capsule> = robot_capsules(&model, &q).into_iter()
                    .map(|c| prunesim::scene::Capsule::new(env.base_pose * c.a, env.base_pose * c.b, c.radius)).collect();
                let selfc = in_self_collision(&caps);
                let hits = env.scene.collision_query(&caps);
                let summary: Vec<String> = hits.iter().map(|h| format!("probe{} {:?} tree{:?} branch{:?} seg{:?}", h.probe, h.category, h.tree, h.branch, h.primitive)).collect();
                println!("q self={selfc} hits: {:?}", summary);
            }
        }
    }
    println!("target branch: tree {} branch {}", env.cutpoint.tree, env.cutpoint.branch);
}
