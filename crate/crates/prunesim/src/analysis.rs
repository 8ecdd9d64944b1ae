//! Evaluation artifacts: per-orientation success grids, error
//! distributions, and their CSV/SVG emitters.
//!
//! Branch orientation is binned over azimuth (robot forward = 0 degrees,
//! measured in the base frame ground plane) and elevation (-90 at the
//! ground to +90 at the sky) in 10-degree cells: 36 x 18 = 648 bins.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::env::Cutpoint;
use crate::episodes::{
    sample_reachable_point, try_place_branch, Episode, EpisodeConfig, ReachableRegion,
    StartFeasibility,
};
use crate::policy::RolloutRecord;
use crate::robot::CutterFrame;
use crate::scene::SceneConfig;
use crate::treegen::TreeModel;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("record references unknown episode id {0}")]
    UnknownEpisode(u64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad grid csv: {0}")]
    BadCsv(String),
}

pub const AZIMUTH_BINS: usize = 36;
pub const ELEVATION_BINS: usize = 18;
pub const TOTAL_BINS: usize = AZIMUTH_BINS * ELEVATION_BINS;

/// One 10-degree orientation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientationBin {
    /// `0..36`, azimuth from -180 to 180 degrees.
    pub azimuth: usize,
    /// `0..18`, elevation from -90 to 90 degrees.
    pub elevation: usize,
}

impl OrientationBin {
    pub fn flat(&self) -> usize {
        self.elevation * AZIMUTH_BINS + self.azimuth
    }

    pub fn azimuth_range_deg(&self) -> (f64, f64) {
        (-180.0 + 10.0 * self.azimuth as f64, -180.0 + 10.0 * (self.azimuth + 1) as f64)
    }

    pub fn elevation_range_deg(&self) -> (f64, f64) {
        (-90.0 + 10.0 * self.elevation as f64, -90.0 + 10.0 * (self.elevation + 1) as f64)
    }

    /// Unit vector at the cell center.
    pub fn center_direction(&self) -> Vector3<f64> {
        let (a0, a1) = self.azimuth_range_deg();
        let (e0, e1) = self.elevation_range_deg();
        let az = 0.5 * (a0 + a1) * std::f64::consts::PI / 180.0;
        let el = 0.5 * (e0 + e1) * std::f64::consts::PI / 180.0;
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Bin a unit branch direction; total over the sphere (poles clamp to the
/// outermost elevation rows).
pub fn bin_orientation(b: &Vector3<f64>) -> OrientationBin {
    let az_deg = b.y.atan2(b.x).to_degrees();
    let el_deg = b.z.clamp(-1.0, 1.0).asin().to_degrees();
    let azimuth = (((az_deg + 180.0) / 10.0).floor() as i64).clamp(0, AZIMUTH_BINS as i64 - 1);
    let elevation = (((el_deg + 90.0) / 10.0).floor() as i64).clamp(0, ELEVATION_BINS as i64 - 1);
    OrientationBin { azimuth: azimuth as usize, elevation: elevation as usize }
}

/// Final-pose error metrics: distance (m), pointing error and
/// perpendicularity error (degrees, nearest aligned solution).
pub fn error_metrics(frame: &CutterFrame, cutpoint: &Cutpoint) -> (f64, f64, f64) {
    let report = crate::env::check_success(frame, cutpoint, &crate::env::SuccessCriteria::default());
    (
        report.distance,
        report.pointing_angle.to_degrees(),
        report.perpendicular_angle.to_degrees(),
    )
}

/// Per-bin aggregate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    pub successes: usize,
    pub mean_pointing_err_deg: f64,
    pub mean_perpendicular_err_deg: f64,
}

impl BinStats {
    pub fn success_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.successes as f64 / self.count as f64
        }
    }
}

/// Histogram with fixed equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, counts: vec![0; bins] }
    }

    fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let t = ((v - self.lo) / (self.hi - self.lo) * n as f64).floor();
        let idx = (t as i64).clamp(0, n as i64 - 1) as usize;
        self.counts[idx] += 1;
    }
}

/// Quartiles plus a 50-bin histogram for one error metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub histogram: Histogram,
}

fn summarize(mut values: Vec<f64>, lo: f64, hi: f64) -> MetricSummary {
    values.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        let pos = q * (values.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < values.len() {
            values[i] * (1.0 - frac) + values[i + 1] * frac
        } else {
            values[i]
        }
    };
    let mut histogram = Histogram::new(lo, hi, 50);
    for v in &values {
        histogram.add(*v);
    }
    MetricSummary {
        n: values.len(),
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        histogram,
    }
}

/// Per-method grid and distribution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// `elevation * 36 + azimuth` indexing, 648 entries.
    pub bins: Vec<BinStats>,
    pub total: usize,
    pub total_successes: usize,
    pub distance: MetricSummary,
    pub pointing_deg: MetricSummary,
    pub perpendicular_deg: MetricSummary,
}

impl MethodReport {
    pub fn global_success_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.total_successes as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub methods: BTreeMap<String, MethodReport>,
}

/// Aggregate rollout records against their episodes into per-method grids
/// and distribution summaries. A record with an unknown episode id is a
/// data-integrity error.
pub fn aggregate(records: &[RolloutRecord], episodes: &[Episode]) -> Result<GridReport, AnalysisError> {
    let by_id: BTreeMap<u64, &Episode> = episodes.iter().map(|e| (e.id, e)).collect();
    let mut work: BTreeMap<String, (Vec<BinStats>, Vec<f64>, Vec<f64>, Vec<f64>, usize, usize)> =
        BTreeMap::new();
    for record in records {
        let episode =
            by_id.get(&record.episode).ok_or(AnalysisError::UnknownEpisode(record.episode))?;
        let bin = bin_orientation(&episode.cutpoint.direction());
        let entry = work.entry(record.method.clone()).or_insert_with(|| {
            (
                vec![
                    BinStats {
                        count: 0,
                        successes: 0,
                        mean_pointing_err_deg: 0.0,
                        mean_perpendicular_err_deg: 0.0,
                    };
                    TOTAL_BINS
                ],
                Vec::new(),
                Vec::new(),
                Vec::new(),
                0,
                0,
            )
        });
        let stats = &mut entry.0[bin.flat()];
        stats.count += 1;
        entry.4 += 1;
        if record.success {
            stats.successes += 1;
            entry.5 += 1;
        }
        // metric sums accumulate in the mean fields; normalized below
        if let (Some(p), Some(q)) = (record.pointing_error_deg, record.perpendicular_error_deg) {
            stats.mean_pointing_err_deg += p;
            stats.mean_perpendicular_err_deg += q;
            entry.2.push(p);
            entry.3.push(q);
        }
        if let Some(d) = record.final_distance {
            entry.1.push(d);
        }
    }
    let mut methods = BTreeMap::new();
    for (method, (mut bins, distances, pointings, perps, total, total_successes)) in work {
        for b in &mut bins {
            if b.count > 0 {
                b.mean_pointing_err_deg /= b.count as f64;
                b.mean_perpendicular_err_deg /= b.count as f64;
            }
        }
        methods.insert(
            method.clone(),
            MethodReport {
                method,
                bins,
                total,
                total_successes,
                distance: summarize(distances, 0.0, 2.0),
                pointing_deg: summarize(pointings, 0.0, 180.0),
                perpendicular_deg: summarize(perps, 0.0, 90.0),
            },
        );
    }
    Ok(GridReport { methods })
}

/// Episodes with uniform coverage over orientation cells: for each of the
/// 648 bins, up to `per_cell` prunable branches whose direction falls in
/// the cell (either sign), each placed at a random region position.
/// Returns the episodes and the list of unfilled cells.
pub fn build_grid_eval_set(
    bank: &[TreeModel],
    per_cell: usize,
    region: &ReachableRegion,
    cfg: &EpisodeConfig,
    scene_cfg: &SceneConfig,
    feasibility: &StartFeasibility,
    base_seed: u64,
) -> (Vec<Episode>, Vec<OrientationBin>) {
    // index prunable branches by cell, under both direction signs
    let mut cell_members: Vec<Vec<(usize, usize, i8)>> = vec![Vec::new(); TOTAL_BINS];
    for (ti, tree) in bank.iter().enumerate() {
        for (bi, branch) in tree.branches.iter().enumerate() {
            if !branch.prunable {
                continue;
            }
            let d = branch.direction_vec();
            cell_members[bin_orientation(&d).flat()].push((ti, bi, 1));
            cell_members[bin_orientation(&(-d)).flat()].push((ti, bi, -1));
        }
    }
    let mut episodes = Vec::new();
    let mut unfilled = Vec::new();
    let mut id = 0u64;
    for el in 0..ELEVATION_BINS {
        for az in 0..AZIMUTH_BINS {
            let bin = OrientationBin { azimuth: az, elevation: el };
            let members = &cell_members[bin.flat()];
            if members.is_empty() {
                unfilled.push(bin);
                continue;
            }
            let seed = crate::rng::derive_seed(base_seed, bin.flat() as u64);
            let mut rng = crate::rng::rng_from_seed(seed);
            let mut placed_in_cell = 0;
            let mut attempts = 0;
            while placed_in_cell < per_cell && attempts < per_cell * 40 {
                attempts += 1;
                let (ti, bi, sign) = members[rand::Rng::gen_range(&mut rng, 0..members.len())];
                let p = sample_reachable_point(region, &mut rng);
                if let Ok((transform, mut cutpoint)) =
                    try_place_branch(bank, ti, bi, p, cfg, scene_cfg, feasibility)
                {
                    if sign < 0 {
                        cutpoint.b = [-cutpoint.b[0], -cutpoint.b[1], -cutpoint.b[2]];
                    }
                    episodes.push(Episode {
                        id,
                        tree: ti,
                        transform,
                        cutpoint,
                        robot_noise: [0.0; 3],
                        camera_noise: [0.0; 2],
                        seed,
                    });
                    id += 1;
                    placed_in_cell += 1;
                }
            }
            if placed_in_cell == 0 {
                unfilled.push(bin);
            }
        }
    }
    (episodes, unfilled)
}

/// CSV rows: one per bin. Reparsing reproduces the grid statistics exactly.
pub fn emit_csv(report: &MethodReport, path: &Path) -> Result<(), AnalysisError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "# azimuth: robot forward = 0 deg, +90 points down-row (+y); elevation: -90 ground to +90 sky"
    )?;
    writeln!(f, "az_lo,az_hi,el_lo,el_hi,count,success_rate,mean_point_err,mean_perp_err")?;
    for el in 0..ELEVATION_BINS {
        for az in 0..AZIMUTH_BINS {
            let bin = OrientationBin { azimuth: az, elevation: el };
            let stats = &report.bins[bin.flat()];
            let (a0, a1) = bin.azimuth_range_deg();
            let (e0, e1) = bin.elevation_range_deg();
            writeln!(
                f,
                "{a0},{a1},{e0},{e1},{},{},{},{}",
                stats.count,
                stats.success_rate(),
                stats.mean_pointing_err_deg,
                stats.mean_perpendicular_err_deg
            )?;
        }
    }
    Ok(())
}

/// Reparse a grid CSV back into per-bin statistics.
pub fn parse_grid_csv(path: &Path) -> Result<Vec<BinStats>, AnalysisError> {
    let text = std::fs::read_to_string(path)?;
    let mut bins = vec![
        BinStats {
            count: 0,
            successes: 0,
            mean_pointing_err_deg: 0.0,
            mean_perpendicular_err_deg: 0.0
        };
        TOTAL_BINS
    ];
    let mut row = 0usize;
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("az_lo") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(AnalysisError::BadCsv(format!("row {row}: {} fields", fields.len())));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| AnalysisError::BadCsv(e.to_string()));
        let count = fields[4]
            .parse::<usize>()
            .map_err(|e| AnalysisError::BadCsv(e.to_string()))?;
        let rate = parse(fields[5])?;
        let successes = (rate * count as f64).round() as usize;
        bins[row] = BinStats {
            count,
            successes,
            mean_pointing_err_deg: parse(fields[6])?,
            mean_perpendicular_err_deg: parse(fields[7])?,
        };
        row += 1;
    }
    if row != TOTAL_BINS {
        return Err(AnalysisError::BadCsv(format!("{row} rows, expected {TOTAL_BINS}")));
    }
    Ok(bins)
}

/// Success-rate heatmap as a standalone SVG; grayscale fill documented in
/// the header comment (white = rate 1, black = 0, blue = empty cell).
pub fn emit_svg_heatmap(report: &MethodReport, path: &Path) -> Result<(), AnalysisError> {
    let cell = 16usize;
    let (w, h) = (AZIMUTH_BINS * cell, ELEVATION_BINS * cell);
    let mut f = std::fs::File::create(path)?;
    writeln!(f, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#)?;
    writeln!(
        f,
        "<!-- success-rate heatmap for method {}: x = azimuth bin (-180..180 deg, robot forward \
         at center), y = elevation bin (+90 deg sky at top); fill = rgb(k,k,k) with k = \
         round(255 * success_rate); empty bins use #26324c -->",
        report.method
    )?;
    for el in 0..ELEVATION_BINS {
        for az in 0..AZIMUTH_BINS {
            let bin = OrientationBin { azimuth: az, elevation: el };
            let stats = &report.bins[bin.flat()];
            let fill = if stats.count == 0 {
                "#26324c".to_string()
            } else {
                let k = (stats.success_rate() * 255.0).round() as u8;
                format!("rgb({k},{k},{k})")
            };
            // sky (+90) on top
            let y = (ELEVATION_BINS - 1 - el) * cell;
            let x = az * cell;
            writeln!(
                f,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>"#
            )?;
        }
    }
    writeln!(f, "</svg>")?;
    Ok(())
}

#[cfg(test)]
#[path = "analysis_tests.rs"]
mod tests;
