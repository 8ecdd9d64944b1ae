//! Export-only triangle meshes: one open-ended tapered tube per segment.

use nalgebra::{Point3, Unit, Vector3};

use super::{TreegenError, TreeModel};

#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let p = |i: u32| {
                    let v = self.vertices[i as usize];
                    Point3::new(v[0], v[1], v[2])
                };
                let (a, b, c) = (p(t[0]), p(t[1]), p(t[2]));
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn aabb(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = self.vertices.first()?;
        let mut lo = Point3::new(first[0], first[1], first[2]);
        let mut hi = lo;
        for v in &self.vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        Some((lo, hi))
    }

    /// Wavefront OBJ text: right-handed, +z up, meters.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 32);
        out.push_str("# prunesim tree mesh (right-handed, +z up, meters)\n");
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }
}

fn ring_basis(dir: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if dir.x.abs() <= dir.y.abs() && dir.x.abs() <= dir.z.abs() {
        Vector3::x()
    } else if dir.y.abs() <= dir.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = Unit::new_normalize(dir.cross(&axis)).into_inner();
    let v = dir.cross(&u).normalize();
    (u, v)
}

/// Mesh every skeleton segment as an open tapered tube with `sides` facets
/// (`2 * sides` triangles per segment).
pub fn mesh_tree(tree: &TreeModel, sides: usize) -> Result<TriangleMesh, TreegenError> {
    if sides < 3 {
        return Err(TreegenError::Domain("sides must be >= 3".into()));
    }
    let mut mesh = TriangleMesh::default();
    for seg in &tree.skeleton.segments {
        let start = seg.start_point();
        let end = seg.end_point();
        let axis = end - start;
        let len = axis.norm();
        let dir = if len > 1e-12 { axis / len } else { Vector3::z() };
        let (u, v) = ring_basis(dir);
        let base = mesh.vertices.len() as u32;
        for (center, radius) in [(start, seg.start_radius), (end, seg.end_radius)] {
            for k in 0..sides {
                let ang = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                let p = center + (u * ang.cos() + v * ang.sin()) * radius;
                mesh.vertices.push([p.x, p.y, p.z]);
            }
        }
        let s = sides as u32;
        for k in 0..s {
            let k1 = (k + 1) % s;
            let (a0, a1) = (base + k, base + k1);
            let (b0, b1) = (base + s + k, base + s + k1);
            mesh.triangles.push([a0, b0, b1]);
            mesh.triangles.push([a0, b1, a1]);
        }
    }
    Ok(mesh)
}
