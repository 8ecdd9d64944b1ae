//! Training and evaluation episode generation: likely-reachable region
//! sampling, uniform orientation sampling, branch matching against a tree
//! bank, tree translation, and pose noise.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Cutpoint, EnvConfig, EnvError, PruneEnv};
use crate::perception::CameraModel;
use crate::robot::KinematicModel;
use crate::scene::{assemble_scene, SceneConfig, SceneError};
use crate::treegen::{TreeModel, TrellisSpec};

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("no branch in the bank matches the sampled orientation")]
    NoMatch,
    #[error("{tries} consecutive rejections while placing an episode: {last}")]
    TooManyRejections { tries: usize, last: String },
    #[error("episode references tree {0} outside the bank")]
    UnknownTree(usize),
    #[error("scene error: {0}")]
    Scene(#[from] SceneError),
    #[error("environment error: {0}")]
    Env(#[from] EnvError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("bad episode file: {0}")]
    BadFile(String),
}

/// Likely-reachable region: a spherical shell around the robot base,
/// restricted to points above the base's horizontal plane and in front of
/// its vertical plane (base frame, x forward).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReachableRegion {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ReachableRegion {
    fn default() -> Self {
        Self { r_min: 0.70, r_max: 0.95 }
    }
}

impl ReachableRegion {
    /// Exact membership check, usable independently of the sampler.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let r = p.coords.norm();
        r >= self.r_min && r <= self.r_max && p.x >= 0.0 && p.z >= 0.0
    }
}

/// Uniform-by-volume sample of the region via rejection from the bounding
/// box of the shell.
pub fn sample_reachable_point<R: Rng>(region: &ReachableRegion, rng: &mut R) -> Point3<f64> {
    loop {
        let p = Point3::new(
            rng.gen_range(0.0..region.r_max),
            rng.gen_range(-region.r_max..region.r_max),
            rng.gen_range(0.0..region.r_max),
        );
        if region.contains(&p) {
            return p;
        }
    }
}

/// Uniform random rotation (subgroup algorithm): from three uniforms
/// `(u1, u2, u3)` the quaternion components are
/// `(sqrt(1-u1) sin 2pi u2, sqrt(1-u1) cos 2pi u2, sqrt(u1) sin 2pi u3,
/// sqrt(u1) cos 2pi u3)` in `(x, y, z, w)` order.
pub fn random_orientation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    quaternion_from_uniforms(u1, u2, u3)
}

/// The subgroup-algorithm formula, exposed for direct checks.
pub fn quaternion_from_uniforms(u1: f64, u2: f64, u3: f64) -> UnitQuaternion<f64> {
    use std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y) = (a * (TAU * u2).sin(), a * (TAU * u2).cos());
    let (z, w) = (b * (TAU * u3).sin(), b * (TAU * u3).cos());
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
}

/// `n` unit vectors from the Fibonacci sphere:
/// `z_i = 1 - 2(i+0.5)/n`, `phi_i = pi (3 - sqrt 5) i`.
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let phi = golden * i as f64;
            let rho = (1.0 - z * z).sqrt();
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// A matched prunable branch: bank tree index, branch index, and the
/// sign-agnostic angular error to the requested direction (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMatch {
    pub tree: usize,
    pub branch: usize,
    pub error: f64,
}

/// All prunable branches whose direction lies within `tolerance` of
/// `direction` or its negation, sorted by angular error.
pub fn match_branch(
    bank: &[TreeModel],
    direction: &Vector3<f64>,
    tolerance: f64,
) -> Vec<BranchMatch> {
    let d = direction.normalize();
    let mut out = Vec::new();
    for (ti, tree) in bank.iter().enumerate() {
        for (bi, branch) in tree.branches.iter().enumerate() {
            if !branch.prunable {
                continue;
            }
            let error = branch.direction_vec().dot(&d).abs().clamp(0.0, 1.0).acos();
            if error <= tolerance {
                out.push(BranchMatch { tree: ti, branch: bi, error });
            }
        }
    }
    out.sort_by(|a, b| a.error.total_cmp(&b.error).then((a.tree, a.branch).cmp(&(b.tree, b.branch))));
    out
}

/// Generation knobs; defaults follow the published episode recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Branch-direction matching tolerance, radians (10 degrees).
    pub match_tolerance: f64,
    /// Cut point location along the branch, fraction of its length.
    pub cutpoint_fraction: f64,
    /// Robot yaw/pitch/roll noise bound, radians (5 degrees).
    pub robot_noise: f64,
    /// Camera pan/tilt noise bound, radians (2 degrees).
    pub camera_noise: f64,
    /// Robot base height above ground.
    pub base_height: f64,
    /// Placement attempts before giving up.
    pub max_tries: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            match_tolerance: 10f64.to_radians(),
            cutpoint_fraction: 0.25,
            robot_noise: 5f64.to_radians(),
            camera_noise: 2f64.to_radians(),
            base_height: 0.6,
            max_tries: 100,
        }
    }
}

/// A fully deterministic replay unit: tree placement, cutpoint, noise, and
/// the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    /// Bank tree index.
    pub tree: usize,
    /// World-from-tree rigid placement (pure translation).
    pub transform: Isometry3<f64>,
    /// Cut point in the nominal (noise-free) base frame.
    pub cutpoint: Cutpoint,
    /// Yaw, pitch, roll noise on the robot base, radians.
    pub robot_noise: [f64; 3],
    /// Pan, tilt noise on the camera mount, radians.
    pub camera_noise: [f64; 2],
    pub seed: u64,
}

fn nominal_base(cfg: &EpisodeConfig) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(0.0, 0.0, cfg.base_height),
        UnitQuaternion::identity(),
    )
}

/// Cut point (tree frame) and chord direction of a matched branch.
fn cutpoint_on_branch(
    tree: &TreeModel,
    branch: usize,
    fraction: f64,
) -> (Point3<f64>, Vector3<f64>) {
    let b = &tree.branches[branch];
    let arc = tree.branch_length(b) * fraction;
    let (point, _tangent) = tree.point_on_branch(b, arc);
    (point, b.direction_vec())
}

fn lowest_skeleton_z(tree: &TreeModel) -> f64 {
    tree.skeleton
        .segments
        .iter()
        .flat_map(|s| [s.start[2], s.end[2]])
        .fold(f64::INFINITY, f64::min)
}

/// Robot start-pose capsules at the nominal base, used to pre-reject
/// placements that would put scenery inside the parked robot.
pub struct StartFeasibility {
    capsules: Vec<crate::scene::Capsule>,
    pub spec: TrellisSpec,
}

impl StartFeasibility {
    pub fn new(
        model: &KinematicModel,
        start_q: &[f64; 6],
        cfg: &EpisodeConfig,
        spec: &TrellisSpec,
    ) -> Self {
        let base = nominal_base(cfg);
        let capsules = crate::robot::robot_capsules(model, start_q)
            .into_iter()
            .map(|c| crate::scene::Capsule::new(base * c.a, base * c.b, c.radius))
            .collect();
        Self { capsules, spec: spec.clone() }
    }

    pub fn defaults() -> Self {
        Self::new(
            &KinematicModel::ur5(),
            &EnvConfig::default().start_q,
            &EpisodeConfig::default(),
            &TrellisSpec::default(),
        )
    }

    fn clear_of(&self, scene: &crate::scene::Scene) -> bool {
        scene.collision_query(&self.capsules).is_empty()
    }
}

/// Try to translate `(tree, branch)` so its cutpoint lands on `p_base`
/// (nominal base frame); checks the base-height band, the ground plane, and
/// the robot start pose.
pub fn try_place_branch(
    bank: &[TreeModel],
    tree_index: usize,
    branch_index: usize,
    p_base: Point3<f64>,
    cfg: &EpisodeConfig,
    scene_cfg: &SceneConfig,
    feasibility: &StartFeasibility,
) -> Result<(Isometry3<f64>, Cutpoint), String> {
    let tree = &bank[tree_index];
    let (cp_tree, b) = cutpoint_on_branch(tree, branch_index, cfg.cutpoint_fraction);
    let p_world = nominal_base(cfg) * p_base;
    let offset = p_world - cp_tree;
    let base_z = offset.z;
    let lo = scene_cfg.base_z_min.max(-0.01 - lowest_skeleton_z(tree));
    if base_z < lo || base_z > scene_cfg.base_z_max {
        return Err(format!("tree base height {base_z:.3} outside allowed band"));
    }
    let transform = Isometry3::from_parts(
        Translation3::new(offset.x, offset.y, offset.z),
        UnitQuaternion::identity(),
    );
    let scene = assemble_scene(&[(tree, transform)], &feasibility.spec, scene_cfg, nominal_base(cfg))
        .map_err(|e| e.to_string())?;
    if !feasibility.clear_of(&scene) {
        return Err("placement collides with the robot start pose".into());
    }
    let cutpoint = Cutpoint {
        p_g: [p_base.x, p_base.y, p_base.z],
        b: [b.x, b.y, b.z],
        branch: branch_index,
        tree: tree_index,
    };
    Ok((transform, cutpoint))
}

fn place_episode<R: Rng>(
    bank: &[TreeModel],
    matches: &[BranchMatch],
    region: &ReachableRegion,
    cfg: &EpisodeConfig,
    scene_cfg: &SceneConfig,
    feasibility: &StartFeasibility,
    rng: &mut R,
) -> Result<(usize, Isometry3<f64>, Cutpoint), String> {
    let p_base = sample_reachable_point(region, rng);
    let p_world = nominal_base(cfg) * p_base;
    // keep only candidates whose tree can reach the sampled height without
    // leaving the allowed base band or sinking below ground
    let feasible: Vec<(&BranchMatch, Point3<f64>, Vector3<f64>)> = matches
        .iter()
        .map(|m| {
            let (cp_tree, b) = cutpoint_on_branch(&bank[m.tree], m.branch, cfg.cutpoint_fraction);
            (m, cp_tree, b)
        })
        .filter(|(m, cp_tree, _)| {
            let base_z = p_world.z - cp_tree.z;
            let lo = scene_cfg.base_z_min.max(-0.01 - lowest_skeleton_z(&bank[m.tree]));
            base_z >= lo && base_z <= scene_cfg.base_z_max
        })
        .collect();
    if feasible.is_empty() {
        return Err("no matched branch sits at a placeable height".into());
    }
    let (pick, cp_tree, b) = feasible[rng.gen_range(0..feasible.len())].clone();
    let tree = &bank[pick.tree];
    let offset = p_world - cp_tree;
    let transform = Isometry3::from_parts(
        Translation3::new(offset.x, offset.y, offset.z),
        UnitQuaternion::identity(),
    );
    // the parked robot must not start inside the placed tree or trellis
    let scene = assemble_scene(&[(tree, transform)], &feasibility.spec, scene_cfg, nominal_base(cfg))
        .map_err(|e| e.to_string())?;
    if !feasibility.clear_of(&scene) {
        return Err("placement collides with the robot start pose".into());
    }
    let cutpoint = Cutpoint {
        p_g: [p_base.x, p_base.y, p_base.z],
        b: [b.x, b.y, b.z],
        branch: pick.branch,
        tree: pick.tree,
    };
    Ok((pick.tree, transform, cutpoint))
}

/// Sample one training episode: position uniform in the region, orientation
/// uniform over rotations, branch matched within tolerance, tree translated
/// so the cutpoint lands on the sampled position, uniform robot and camera
/// noise.
pub fn make_training_episode(
    bank: &[TreeModel],
    region: &ReachableRegion,
    cfg: &EpisodeConfig,
    scene_cfg: &SceneConfig,
    feasibility: &StartFeasibility,
    id: u64,
    seed: u64,
) -> Result<Episode, EpisodeError> {
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut last = String::from("no attempt");
    for _ in 0..cfg.max_tries {
        let quat = random_orientation(&mut rng);
        let direction = quat * Vector3::x();
        let matches = match_branch(bank, &direction, cfg.match_tolerance);
        if matches.is_empty() {
            last = "no branch matched the sampled orientation".into();
            continue;
        }
        match place_episode(bank, &matches, region, cfg, scene_cfg, feasibility, &mut rng) {
            Ok((tree, transform, cutpoint)) => {
                let robot_noise =
                    [(); 3].map(|_| rng.gen_range(-cfg.robot_noise..=cfg.robot_noise));
                let camera_noise =
                    [(); 2].map(|_| rng.gen_range(-cfg.camera_noise..=cfg.camera_noise));
                return Ok(Episode {
                    id,
                    tree,
                    transform,
                    cutpoint,
                    robot_noise,
                    camera_noise,
                    seed,
                });
            }
            Err(e) => last = e,
        }
    }
    Err(EpisodeError::TooManyRejections { tries: cfg.max_tries, last })
}

/// Which Fibonacci orientations found a branch, and which did not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub orientations: usize,
    pub matched: usize,
    pub unmatched: Vec<usize>,
    pub episodes: usize,
}

/// Build an evaluation set: `n_orientations` Fibonacci directions, each
/// matched against the bank and translated to `positions_per` sampled
/// locations. Evaluation episodes carry no pose noise. Unmatched
/// orientations are reported, not silently dropped.
pub fn make_eval_set(
    bank: &[TreeModel],
    n_orientations: usize,
    positions_per: usize,
    region: &ReachableRegion,
    cfg: &EpisodeConfig,
    scene_cfg: &SceneConfig,
    feasibility: &StartFeasibility,
    base_seed: u64,
) -> (Vec<Episode>, CoverageReport) {
    let directions = fibonacci_directions(n_orientations);
    let mut episodes = Vec::new();
    let mut unmatched = Vec::new();
    for (i, direction) in directions.iter().enumerate() {
        let matches = match_branch(bank, direction, cfg.match_tolerance);
        if matches.is_empty() {
            unmatched.push(i);
            continue;
        }
        for j in 0..positions_per {
            let id = (i * positions_per + j) as u64;
            let seed = crate::rng::derive_seed(base_seed, id);
            let mut rng = crate::rng::rng_from_seed(seed);
            for _ in 0..cfg.max_tries {
                if let Ok((tree, transform, cutpoint)) =
                    place_episode(bank, &matches, region, cfg, scene_cfg, feasibility, &mut rng)
                {
                    episodes.push(Episode {
                        id,
                        tree,
                        transform,
                        cutpoint,
                        robot_noise: [0.0; 3],
                        camera_noise: [0.0; 2],
                        seed,
                    });
                    break;
                }
            }
        }
    }
    let report = CoverageReport {
        orientations: n_orientations,
        matched: n_orientations - unmatched.len(),
        unmatched,
        episodes: episodes.len(),
    };
    (episodes, report)
}

/// Assemble the environment for an episode over a shared bank.
pub fn env_from_episode(
    bank: &[TreeModel],
    episode: &Episode,
    spec: &TrellisSpec,
    scene_cfg: &SceneConfig,
    model: KinematicModel,
    camera: CameraModel,
    env_cfg: EnvConfig,
) -> Result<PruneEnv, EpisodeError> {
    let tree = bank.get(episode.tree).ok_or(EpisodeError::UnknownTree(episode.tree))?;
    let ep_cfg = EpisodeConfig { base_height: scene_cfg.base_height, ..EpisodeConfig::default() };
    let base = nominal_base(&ep_cfg);
    let [yaw, pitch, roll] = episode.robot_noise;
    let base_pose = Isometry3::from_parts(
        base.translation,
        UnitQuaternion::from_euler_angles(roll, pitch, yaw),
    );
    let scene = assemble_scene(&[(tree, episode.transform)], spec, scene_cfg, base_pose)?;
    let p_world = base * episode.cutpoint.point();
    // inside the environment the cutpoint's tree refers to the scene
    // placement (single-tree scenes place the episode's tree at index 0)
    let cut_world = Cutpoint {
        p_g: [p_world.x, p_world.y, p_world.z],
        tree: 0,
        ..episode.cutpoint.clone()
    };
    let cam_noise = crate::env::camera_noise(episode.camera_noise[0], episode.camera_noise[1]);
    Ok(PruneEnv::new(scene, cut_world, base_pose, cam_noise, model, camera, env_cfg)?)
}

/// Build an obstacle-free environment with a single branch floating at a
/// reachable cutpoint: the sanity setting for controller baselines. The
/// branch is a thin pass-through capsule; the scene holds nothing else.
pub fn floated_branch_env(
    region: &ReachableRegion,
    cfg: &EpisodeConfig,
    env_cfg: EnvConfig,
    seed: u64,
) -> PruneEnv {
    use crate::scene::{Capsule, CollisionCategory, Scene, SceneConfig, ScenePrimitive};
    let mut rng = crate::rng::rng_from_seed(seed);
    let base = nominal_base(cfg);
    let p_base = sample_reachable_point(region, &mut rng);
    let p_world = base * p_base;
    let b = (random_orientation(&mut rng) * Vector3::x()).normalize();
    // cutpoint at 25% of a 0.3 m shoot
    let length = 0.3;
    let start = p_world - b * (length * cfg.cutpoint_fraction);
    let primitive = ScenePrimitive {
        capsule: Capsule::new(start, start + b * length, 0.006),
        category: CollisionCategory::SmallBranch,
        tree: Some(0),
        branch: Some(0),
        segment: Some(0),
    };
    let scene = Scene::from_parts(
        vec![primitive],
        p_world.x + 1.5,
        &SceneConfig::default(),
        base,
    );
    let cutpoint = Cutpoint {
        p_g: [p_world.x, p_world.y, p_world.z],
        b: [b.x, b.y, b.z],
        branch: 0,
        tree: 0,
    };
    PruneEnv::new(
        scene,
        cutpoint,
        base,
        nalgebra::UnitQuaternion::identity(),
        KinematicModel::ur5(),
        CameraModel::default(),
        env_cfg,
    )
    .expect("empty scene start is feasible")
}

/// Write an episode set as JSON lines with a header carrying the bank hash.
pub fn write_episode_file(
    episodes: &[Episode],
    bank_hash: &str,
    path: &std::path::Path,
) -> Result<(), EpisodeError> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    let header = serde_json::json!({
        "schema_version": 1,
        "bank_hash": bank_hash,
        "generator": concat!("prunesim-", env!("CARGO_PKG_VERSION")),
        "count": episodes.len(),
    });
    writeln!(f, "{header}")?;
    for ep in episodes {
        writeln!(f, "{}", serde_json::to_string(ep)?)?;
    }
    Ok(())
}

/// Read an episode set; returns the header's bank hash and the episodes.
pub fn read_episode_file(path: &std::path::Path) -> Result<(String, Vec<Episode>), EpisodeError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(
        lines.next().ok_or_else(|| EpisodeError::BadFile("empty file".into()))?,
    )?;
    let bank_hash = header
        .get("bank_hash")
        .and_then(|v| v.as_str())
        .ok_or_else(|| EpisodeError::BadFile("missing bank_hash".into()))?
        .to_string();
    let mut episodes = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        episodes.push(serde_json::from_str(line)?);
    }
    Ok((bank_hash, episodes))
}

#[cfg(test)]
#[path = "episodes_tests.rs"]
mod tests;
