//! Orchard scene assembly and the category-labeled capsule collision world.
//!
//! A scene owns every collision primitive (tree segments, posts, wires) plus
//! the ground and backdrop planes, with a uniform-grid index for
//! capsule-overlap and raycast queries. Scenes are immutable after assembly;
//! `translate_tree` produces a new scene.

mod geom;
mod grid;

pub use geom::{capsule_gap, ray_capsule, segment_segment_closest, Capsule, Plane};

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::treegen::{BranchClass, TreeModel, TrellisSpec};
use grid::UniformGrid;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("tree {tree} placed below ground (lowest point z = {z:.3})")]
    BelowGround { tree: usize, z: f64 },
    #[error("tree base height {z:.3} outside [{lo}, {hi}]")]
    BaseHeightConstraint { z: f64, lo: f64, hi: f64 },
    #[error("unknown tree id {0}")]
    UnknownTree(usize),
}

/// Collision category, deciding reward penalties and contact behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollisionCategory {
    SmallBranch,
    RigidStructure,
    Ground,
    Robot,
}

/// One collision capsule with its provenance labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenePrimitive {
    pub capsule: Capsule,
    pub category: CollisionCategory,
    /// Index of the placed tree this primitive belongs to, if any.
    pub tree: Option<usize>,
    /// Branch index within that tree's `branches`, if any.
    pub branch: Option<usize>,
    /// Segment index within the tree skeleton, if any.
    pub segment: Option<usize>,
}

/// Query result: either an overlap (distance 0) or a ray hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub point: Point3<f64>,
    pub distance: f64,
    /// Index into `Scene::primitives`, or `PLANE_GROUND` / `PLANE_BACKDROP`.
    pub primitive: usize,
    pub category: CollisionCategory,
    pub tree: Option<usize>,
    pub branch: Option<usize>,
    /// Probe index for collision queries (0 for raycasts).
    pub probe: usize,
}

pub const PLANE_GROUND: usize = usize::MAX;
pub const PLANE_BACKDROP: usize = usize::MAX - 1;

/// Scene assembly parameters beyond the trellis itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Robot base height above ground (mobile platform).
    pub base_height: f64,
    /// Backdrop plane distance behind the farthest tree base.
    pub backdrop_offset: f64,
    pub post_radius: f64,
    pub wire_radius: f64,
    /// Uniform grid cell edge, meters.
    pub grid_cell: f64,
    /// Allowed band for a placed tree's base height.
    pub base_z_min: f64,
    pub base_z_max: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            base_height: 0.6,
            backdrop_offset: 1.0,
            post_radius: 0.04,
            wire_radius: 0.002,
            grid_cell: 0.25,
            base_z_min: -0.2,
            base_z_max: 0.05,
        }
    }
}

/// Serializable scene recipe: bank tree ids plus rigid placements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDescription {
    pub schema_version: u32,
    /// `(bank tree id, world-from-tree transform)` per placed tree.
    pub placements: Vec<(usize, Isometry3<f64>)>,
    pub base_pose: Isometry3<f64>,
}

/// Assembled orchard scene with its collision world.
#[derive(Debug, Clone)]
pub struct Scene {
    pub primitives: Vec<ScenePrimitive>,
    pub ground: Plane,
    pub backdrop: Plane,
    /// World-from-base transform of the robot.
    pub base_pose: Isometry3<f64>,
    pub placements: Vec<(usize, Isometry3<f64>)>,
    config: SceneConfig,
    spec: TrellisSpec,
    index: UniformGrid,
}

fn tree_primitives(
    out: &mut Vec<ScenePrimitive>,
    tree_index: usize,
    tree: &TreeModel,
    transform: &Isometry3<f64>,
    spec: &TrellisSpec,
    config: &SceneConfig,
) {
    // innermost branch whose range contains the segment (branch ranges
    // nest: a tertiary lies inside its support's range)
    let branch_of_segment = |seg: usize| -> Option<usize> {
        tree.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| seg >= b.first_segment && seg <= b.last_segment)
            .min_by_key(|(_, b)| b.last_segment - b.first_segment)
            .map(|(i, _)| i)
    };
    for (i, seg) in tree.skeleton.segments.iter().enumerate() {
        let category = match tree.classes[i] {
            BranchClass::Tertiary => CollisionCategory::SmallBranch,
            BranchClass::Trunk | BranchClass::Support => CollisionCategory::RigidStructure,
        };
        out.push(ScenePrimitive {
            capsule: Capsule::new(
                transform * seg.start_point(),
                transform * seg.end_point(),
                0.5 * (seg.start_radius + seg.end_radius),
            ),
            category,
            tree: Some(tree_index),
            branch: branch_of_segment(i),
            segment: Some(i),
        });
    }
    // trellis unit: two posts and the wires, rigidly attached to the tree
    let top = spec.wire_height(spec.wire_count) + 0.1;
    let tilt_x = spec.trunk_tilt.tan();
    let half = spec.tree_spacing / 2.0;
    for side in [-1.0, 1.0] {
        out.push(ScenePrimitive {
            capsule: Capsule::new(
                transform * Point3::new(0.0, side * half, 0.0),
                transform * Point3::new(top * tilt_x, side * half, top),
                config.post_radius,
            ),
            category: CollisionCategory::RigidStructure,
            tree: Some(tree_index),
            branch: None,
            segment: None,
        });
    }
    for wire in 1..=spec.wire_count {
        let p = spec.wire_point(wire);
        out.push(ScenePrimitive {
            capsule: Capsule::new(
                transform * Point3::new(p.x, -half, p.z),
                transform * Point3::new(p.x, half, p.z),
                config.wire_radius,
            ),
            category: CollisionCategory::RigidStructure,
            tree: Some(tree_index),
            branch: None,
            segment: None,
        });
    }
}

/// Assemble a scene from placed trees. The backdrop plane sits
/// `backdrop_offset` behind the farthest tree base (or the robot base when
/// the scene has no trees).
pub fn assemble_scene(
    trees: &[(&TreeModel, Isometry3<f64>)],
    spec: &TrellisSpec,
    config: &SceneConfig,
    base_pose: Isometry3<f64>,
) -> Result<Scene, SceneError> {
    let mut primitives = Vec::new();
    let mut max_base_x: f64 = base_pose.translation.x;
    for (tree_index, (tree, transform)) in trees.iter().enumerate() {
        let mut lowest = f64::INFINITY;
        for seg in &tree.skeleton.segments {
            lowest = lowest.min((transform * seg.start_point()).z);
            lowest = lowest.min((transform * seg.end_point()).z);
        }
        if !tree.skeleton.segments.is_empty() && lowest < -0.01 {
            return Err(SceneError::BelowGround { tree: tree_index, z: lowest });
        }
        tree_primitives(&mut primitives, tree_index, tree, transform, spec, config);
        max_base_x = max_base_x.max((transform * Point3::origin()).x);
    }
    let capsules: Vec<Capsule> = primitives.iter().map(|p| p.capsule.clone()).collect();
    let index = UniformGrid::build(&capsules, config.grid_cell);
    Ok(Scene {
        primitives,
        ground: Plane { point: Point3::origin(), normal: Vector3::z() },
        backdrop: Plane {
            point: Point3::new(max_base_x + config.backdrop_offset, 0.0, 0.0),
            normal: -Vector3::x(),
        },
        base_pose,
        placements: Vec::new(),
        config: config.clone(),
        spec: spec.clone(),
        index,
    })
}

impl Scene {
    /// Build a scene from explicit primitives (used for floated-branch
    /// setups and controlled tests). The backdrop sits at `backdrop_x`.
    pub fn from_parts(
        primitives: Vec<ScenePrimitive>,
        backdrop_x: f64,
        config: &SceneConfig,
        base_pose: Isometry3<f64>,
    ) -> Scene {
        let capsules: Vec<Capsule> = primitives.iter().map(|p| p.capsule.clone()).collect();
        let index = UniformGrid::build(&capsules, config.grid_cell);
        Scene {
            primitives,
            ground: Plane { point: Point3::origin(), normal: Vector3::z() },
            backdrop: Plane { point: Point3::new(backdrop_x, 0.0, 0.0), normal: -Vector3::x() },
            base_pose,
            placements: Vec::new(),
            config: config.clone(),
            spec: TrellisSpec::default(),
            index,
        }
    }

    /// Rebuild the scene with one tree rigidly translated. The post-move
    /// base height must stay within the configured band.
    pub fn translate_tree(
        &self,
        trees: &[(&TreeModel, Isometry3<f64>)],
        tree_id: usize,
        offset: Vector3<f64>,
    ) -> Result<Scene, SceneError> {
        if tree_id >= trees.len() {
            return Err(SceneError::UnknownTree(tree_id));
        }
        let mut placed: Vec<(&TreeModel, Isometry3<f64>)> = trees.to_vec();
        let mut t = placed[tree_id].1;
        t.translation.vector += offset;
        let base_z = t.translation.z;
        if base_z < self.config.base_z_min || base_z > self.config.base_z_max {
            return Err(SceneError::BaseHeightConstraint {
                z: base_z,
                lo: self.config.base_z_min,
                hi: self.config.base_z_max,
            });
        }
        placed[tree_id].1 = t;
        assemble_scene(&placed, &self.spec, &self.config, self.base_pose)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    fn plane_hits(&self, probe_idx: usize, probe: &Capsule, out: &mut Vec<Hit>) {
        for (plane, id, category) in [
            (&self.ground, PLANE_GROUND, CollisionCategory::Ground),
            (&self.backdrop, PLANE_BACKDROP, CollisionCategory::RigidStructure),
        ] {
            let gap = plane.capsule_gap(probe);
            if gap < 0.0 {
                let mid = probe.closest_axis_point(&plane.point);
                let point = mid - plane.normal * (mid - plane.point).dot(&plane.normal);
                out.push(Hit {
                    point,
                    distance: 0.0,
                    primitive: id,
                    category,
                    tree: None,
                    branch: None,
                    probe: probe_idx,
                });
            }
        }
    }

    fn capsule_hit(&self, probe_idx: usize, probe: &Capsule, id: u32) -> Option<Hit> {
        let prim = &self.primitives[id as usize];
        let (pa, pb) = segment_segment_closest(
            probe.a,
            probe.b,
            prim.capsule.a,
            prim.capsule.b,
        );
        let axis_gap = (pb - pa).norm();
        let gap = axis_gap - probe.radius - prim.capsule.radius;
        if gap >= 0.0 {
            return None;
        }
        // surface point on the scene primitive toward the probe axis
        let dir = if axis_gap > 1e-12 { (pa - pb) / axis_gap } else { Vector3::z() };
        Some(Hit {
            point: pb + dir * prim.capsule.radius,
            distance: 0.0,
            primitive: id as usize,
            category: prim.category,
            tree: prim.tree,
            branch: prim.branch,
            probe: probe_idx,
        })
    }

    /// All scene primitives overlapping any probe capsule, deduplicated by
    /// `(probe, primitive)` and sorted.
    pub fn collision_query(&self, probes: &[Capsule]) -> Vec<Hit> {
        let mut hits = Vec::new();
        for (pi, probe) in probes.iter().enumerate() {
            let (mut lo, mut hi) = probe.aabb();
            for i in 0..3 {
                lo[i] -= 1e-9;
                hi[i] += 1e-9;
            }
            for id in self.index.candidates_in_aabb(&lo, &hi) {
                if let Some(hit) = self.capsule_hit(pi, probe, id) {
                    hits.push(hit);
                }
            }
            self.plane_hits(pi, probe, &mut hits);
        }
        hits.sort_by(|a, b| (a.probe, a.primitive).cmp(&(b.probe, b.primitive)));
        hits
    }

    /// Brute-force reference for [`Scene::collision_query`].
    pub fn collision_query_linear(&self, probes: &[Capsule]) -> Vec<Hit> {
        let mut hits = Vec::new();
        for (pi, probe) in probes.iter().enumerate() {
            for id in 0..self.primitives.len() as u32 {
                if let Some(hit) = self.capsule_hit(pi, probe, id) {
                    hits.push(hit);
                }
            }
            self.plane_hits(pi, probe, &mut hits);
        }
        hits.sort_by(|a, b| (a.probe, a.primitive).cmp(&(b.probe, b.primitive)));
        hits
    }

    fn ray_plane_best(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (plane, id) in [(&self.ground, PLANE_GROUND), (&self.backdrop, PLANE_BACKDROP)] {
            if let Some(t) = plane.raycast(origin, dir) {
                if best.map_or(true, |(bt, bid)| t < bt || (t == bt && id < bid)) {
                    best = Some((t, id));
                }
            }
        }
        best
    }

    fn hit_from_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t: f64, id: usize) -> Hit {
        let (category, tree, branch) = if id == PLANE_GROUND {
            (CollisionCategory::Ground, None, None)
        } else if id == PLANE_BACKDROP {
            (CollisionCategory::RigidStructure, None, None)
        } else {
            let p = &self.primitives[id];
            (p.category, p.tree, p.branch)
        };
        Hit { point: origin + dir * t, distance: t, primitive: id, category, tree, branch, probe: 0 }
    }

    /// Nearest intersection along the ray. The returned distance is in
    /// meters regardless of the scale of `direction`.
    pub fn raycast(&self, origin: Point3<f64>, direction: Vector3<f64>) -> Option<Hit> {
        let n = direction.norm();
        if n <= 0.0 {
            return None;
        }
        let dir = direction / n;
        let mut best: Option<(f64, usize)> = self.ray_plane_best(&origin, &dir);
        self.index.traverse_ray(&origin, &dir, |id| {
            if let Some(t) = ray_capsule(&origin, &dir, &self.primitives[id as usize].capsule) {
                let better = best.map_or(true, |(bt, bid)| t < bt || (t == bt && (id as usize) < bid));
                if better {
                    best = Some((t, id as usize));
                }
            }
            best.map_or(f64::INFINITY, |(t, _)| t)
        });
        best.map(|(t, id)| self.hit_from_ray(&origin, &dir, t, id))
    }

    /// Brute-force reference for [`Scene::raycast`].
    pub fn raycast_linear(&self, origin: Point3<f64>, direction: Vector3<f64>) -> Option<Hit> {
        let n = direction.norm();
        if n <= 0.0 {
            return None;
        }
        let dir = direction / n;
        let mut best: Option<(f64, usize)> = self.ray_plane_best(&origin, &dir);
        for (id, prim) in self.primitives.iter().enumerate() {
            if let Some(t) = ray_capsule(&origin, &dir, &prim.capsule) {
                if best.map_or(true, |(bt, bid)| t < bt || (t == bt && id < bid)) {
                    best = Some((t, id));
                }
            }
        }
        best.map(|(t, id)| self.hit_from_ray(&origin, &dir, t, id))
    }
}
