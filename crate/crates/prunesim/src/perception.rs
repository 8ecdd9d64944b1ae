//! Pinhole depth rendering over the scene raycaster, analytic ground-truth
//! optical flow between consecutive camera poses, cutpoint-projection
//! images, and the `.flo`/`.pgm` writers.
//!
//! Camera convention: +z optical axis, +x right, +y down. A pixel at
//! `(row v, col u)` samples the ray through image coordinate `(u, v)`, so a
//! point on the optical axis projects exactly to `(cx, cy)`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::scene::Scene;

pub const IMAGE_SIZE: usize = 224;

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad .flo file: {0}")]
    BadFlo(String),
}

/// Pinhole intrinsics plus the flange-to-camera mount transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Eye-in-hand mount: camera pose in the flange frame.
    pub mount: Isometry3<f64>,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 161.7,
            fy: 161.7,
            cx: 112.0,
            cy: 112.0,
            width: IMAGE_SIZE,
            height: IMAGE_SIZE,
            // 5 cm off the flange, aligned with the pointing axis
            mount: Isometry3::from_parts(
                Translation3::new(0.0, -0.05, 0.0),
                UnitQuaternion::identity(),
            ),
        }
    }
}

impl CameraModel {
    /// Ray direction through pixel `(u, v)` in the camera frame (not
    /// normalized).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Project a camera-frame point; `None` when at or behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z <= 1e-9 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Per-pixel ray distances (`+inf` for misses) and hit primitive ids.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub primitive: Vec<Option<usize>>,
}

impl DepthMap {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }
}

/// Two-channel pixel-displacement image, stored as planes: `du` then `dv`,
/// each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowImage {
    pub width: usize,
    pub height: usize,
    pub du: Vec<f32>,
    pub dv: Vec<f32>,
}

impl FlowImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, du: vec![0.0; width * height], dv: vec![0.0; width * height] }
    }

    pub fn at(&self, u: usize, v: usize) -> (f32, f32) {
        let i = v * self.width + u;
        (self.du[i], self.dv[i])
    }

    /// Planar `[2, height, width]` little-endian f32 bytes (wire layout).
    pub fn to_planar_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.width * self.height);
        for plane in [&self.du, &self.dv] {
            for v in plane.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Binary cutpoint marker image, row-major `height x width`, 0 or 255.
#[derive(Debug, Clone, PartialEq)]
pub struct CutpointImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl CutpointImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height] }
    }

    pub fn at(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }

    /// Center of mass of lit pixels, if any.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut su, mut sv) = (0.0, 0.0);
        for v in 0..self.height {
            for u in 0..self.width {
                if self.at(u, v) > 0 {
                    n += 1;
                    su += u as f64;
                    sv += v as f64;
                }
            }
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }
}

/// Render per-pixel nearest-hit depth by raycasting through pixel centers.
pub fn render_depth(scene: &Scene, pose: &Isometry3<f64>, cam: &CameraModel) -> DepthMap {
    let mut depth = vec![f64::INFINITY; cam.width * cam.height];
    let mut primitive = vec![None; cam.width * cam.height];
    let origin = Point3::from(pose.translation.vector);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir_cam = cam.pixel_ray(u as f64, v as f64);
            let dir_world = pose.rotation * dir_cam;
            if let Some(hit) = scene.raycast(origin, dir_world) {
                let i = v * cam.width + u;
                depth[i] = hit.distance;
                primitive[i] = Some(hit.primitive);
            }
        }
    }
    DepthMap { width: cam.width, height: cam.height, depth, primitive }
}

/// Analytic optical flow: back-project each current-frame pixel with finite
/// depth and re-project it into the previous camera; `flow = current pixel -
/// previous pixel`. Pixels that hit nothing (or whose 3D point falls behind
/// the previous camera) get zero flow.
pub fn compute_flow(
    scene: &Scene,
    pose_prev: &Isometry3<f64>,
    pose_cur: &Isometry3<f64>,
    cam: &CameraModel,
) -> FlowImage {
    let mut flow = FlowImage::zeros(cam.width, cam.height);
    let origin = Point3::from(pose_cur.translation.vector);
    let prev_inv = pose_prev.inverse();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir_cam = cam.pixel_ray(u as f64, v as f64);
            let dir_world = pose_cur.rotation * dir_cam;
            let n = dir_world.norm();
            let Some(hit) = scene.raycast(origin, dir_world) else { continue };
            let world = origin + dir_world / n * hit.distance;
            let in_prev = prev_inv * world;
            let Some((pu, pv)) = cam.project(&in_prev) else { continue };
            let i = v * cam.width + u;
            // snap sub-nanopixel displacement to zero so a static camera
            // yields identically zero flow despite pose round-trip rounding
            let snap = |x: f64| if x.abs() < 1e-9 { 0.0 } else { x as f32 };
            flow.du[i] = snap(u as f64 - pu);
            flow.dv[i] = snap(v as f64 - pv);
        }
    }
    flow
}

/// Render the cutpoint as a 5-pixel-wide disc at its projection (clipped at
/// the borders); all-zero when the point is behind the camera or its center
/// projects outside the frame. No occlusion test: the marker is a goal, not
/// a visibility measurement.
pub fn render_cutpoint_image(
    p_g: &Point3<f64>,
    pose: &Isometry3<f64>,
    cam: &CameraModel,
) -> CutpointImage {
    let mut img = CutpointImage::zeros(cam.width, cam.height);
    let in_cam = pose.inverse() * p_g;
    let Some((u, v)) = cam.project(&in_cam) else { return img };
    let (ur, vr) = (u.round(), v.round());
    if ur < 0.0 || vr < 0.0 || ur >= cam.width as f64 || vr >= cam.height as f64 {
        return img;
    }
    let (ur, vr) = (ur as i64, vr as i64);
    for dv in -2i64..=2 {
        for du in -2i64..=2 {
            // disc of diameter 5: offsets within radius 2.5
            if (du * du + dv * dv) as f64 > 6.25 {
                continue;
            }
            let (pu, pv) = (ur + du, vr + dv);
            if pu >= 0 && pv >= 0 && (pu as usize) < cam.width && (pv as usize) < cam.height {
                img.pixels[pv as usize * cam.width + pu as usize] = 255;
            }
        }
    }
    img
}

const FLO_MAGIC: f32 = 202021.25;

/// Write Middlebury `.flo`: magic float ("PIEH"), width and height as
/// little-endian i32, then row-major interleaved `(du, dv)` f32 pairs.
pub fn write_flo(flow: &FlowImage, path: &Path) -> Result<(), PerceptionError> {
    let mut out = Vec::with_capacity(12 + flow.width * flow.height * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for i in 0..flow.width * flow.height {
        out.extend_from_slice(&flow.du[i].to_le_bytes());
        out.extend_from_slice(&flow.dv[i].to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_flo(path: &Path) -> Result<FlowImage, PerceptionError> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(PerceptionError::BadFlo("truncated header".into()));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(PerceptionError::BadFlo(format!("bad magic {magic}")));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let need = 12 + width * height * 8;
    if bytes.len() != need {
        return Err(PerceptionError::BadFlo(format!(
            "expected {need} bytes, found {}",
            bytes.len()
        )));
    }
    let mut flow = FlowImage::zeros(width, height);
    for i in 0..width * height {
        let o = 12 + i * 8;
        flow.du[i] = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        flow.dv[i] = f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap());
    }
    Ok(flow)
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm(pixels: &[u8], width: usize, height: usize, path: &Path) -> Result<(), PerceptionError> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Debug composite PPM: flow channels in red/green (centered at 128),
/// cutpoint marker in blue.
pub fn write_debug_ppm(
    flow: &FlowImage,
    cutpoint: &CutpointImage,
    path: &Path,
) -> Result<(), PerceptionError> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P6\n{} {}\n255\n", flow.width, flow.height)?;
    let mut buf = Vec::with_capacity(flow.width * flow.height * 3);
    for i in 0..flow.width * flow.height {
        let enc = |x: f32| (128.0 + x * 8.0).clamp(0.0, 255.0) as u8;
        buf.push(enc(flow.du[i]));
        buf.push(enc(flow.dv[i]));
        buf.push(cutpoint.pixels[i]);
    }
    f.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
#[path = "perception_tests.rs"]
mod tests;
