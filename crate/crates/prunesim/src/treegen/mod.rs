//! Synthetic V-trellis tree generation: annual grow → prune → tie-down
//! cycles over an L-system string, cantilever tie-down bending, mesh export,
//! and persistent tree banks.

mod bank;
mod bend;
mod grow;
mod mesh;
mod work;

pub use bank::{generate_bank, load_bank, save_bank, BankEntry, BankIndex};
pub use bend::{beam_deflection, tie_down};
pub use grow::{apply_pruning, default_grammar, grow_tree, PruneOutcome, DEFAULT_GRAMMAR_TEXT};
pub use mesh::{mesh_tree, TriangleMesh};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::grammar::Skeleton;

/// Errors from tree generation and bank persistence.
#[derive(Debug, thiserror::Error)]
pub enum TreegenError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grammar error: {0}")]
    Grammar(#[from] crate::grammar::GrammarError),
    #[error("unknown branch id {0}")]
    UnknownBranch(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("bank schema version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch for {file}")]
    ChecksumMismatch { file: String },
    #[error("missing bank file {0}")]
    MissingFile(String),
}

/// V-trellis geometry parameters. Lengths in meters, angles in radians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrellisSpec {
    /// Vertical spacing between trellis wires (18 in).
    pub wire_spacing: f64,
    pub wire_count: usize,
    /// Spacing between trees along the row (4 ft).
    pub tree_spacing: f64,
    /// Trunk lean off vertical (15 degrees).
    pub trunk_tilt: f64,
    /// Arc-length spacing between tie-down points (6 in).
    pub tie_interval: f64,
    /// Target support branch length (2 ft).
    pub support_branch_target_length: f64,
    /// Maximum tie deflection as a fraction of branch length.
    pub max_strain_ratio: f64,
    /// Candidates farther than this from a wire (in base height) are not
    /// eligible for that wire.
    pub max_candidate_gap: f64,
}

impl Default for TrellisSpec {
    fn default() -> Self {
        Self {
            wire_spacing: 0.4572,
            wire_count: 8,
            tree_spacing: 1.2192,
            trunk_tilt: 15.0_f64.to_radians(),
            tie_interval: 0.1524,
            support_branch_target_length: 0.6096,
            max_strain_ratio: 0.5,
            max_candidate_gap: 0.16,
        }
    }
}

impl TrellisSpec {
    pub fn validate(&self) -> Result<(), TreegenError> {
        let lengths = [
            self.wire_spacing,
            self.tree_spacing,
            self.tie_interval,
            self.support_branch_target_length,
        ];
        if lengths.iter().any(|l| *l <= 0.0) || self.wire_count == 0 {
            return Err(TreegenError::Domain("trellis lengths must be positive".into()));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.trunk_tilt) {
            return Err(TreegenError::Domain("trunk tilt must be in [0, pi/2)".into()));
        }
        Ok(())
    }

    /// Height of wire `k` (1-based) above the tree base.
    pub fn wire_height(&self, wire: usize) -> f64 {
        self.wire_spacing * wire as f64
    }

    /// A point on wire `k` in the tree frame (the wire runs along y and lies
    /// in the tilted trellis plane through the trunk base).
    pub fn wire_point(&self, wire: usize) -> Point3<f64> {
        let h = self.wire_height(wire);
        Point3::new(h * self.trunk_tilt.tan(), 0.0, h)
    }
}

/// Structural class of a skeleton segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchClass {
    Trunk,
    Support,
    Tertiary,
}

/// A non-trunk branch: contiguous segment range plus its annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    /// First segment of the branch subtree (inclusive).
    pub first_segment: usize,
    /// Last segment of the branch subtree (inclusive).
    pub last_segment: usize,
    pub class: BranchClass,
    /// Attachment point on the parent, meters (tree frame).
    pub base: [f64; 3],
    /// Unit chord direction from base to spine tip.
    pub direction: [f64; 3],
    pub prunable: bool,
    /// `(wire index 1-based, side sign)` for tied support branches.
    pub wire: Option<(usize, i8)>,
}

impl Branch {
    pub fn base_point(&self) -> Point3<f64> {
        Point3::new(self.base[0], self.base[1], self.base[2])
    }

    pub fn direction_vec(&self) -> Vector3<f64> {
        Vector3::new(self.direction[0], self.direction[1], self.direction[2])
    }
}

/// One tie-down operation: a branch and the arc positions pinned to targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TieOp {
    pub branch: usize,
    /// `(arc-length position from branch base, target point)`; strictly
    /// increasing arc positions.
    pub ties: Vec<(f64, [f64; 3])>,
}

/// Generation provenance recorded with every tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical grammar text.
    pub grammar_hash: String,
    pub seed: u64,
    pub years: usize,
    pub warnings: Vec<String>,
}

/// A generated trellis tree: geometry plus structural annotations.
///
/// The tree frame has its base at the origin, z up, the row along y, and the
/// trunk leaning toward +x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeModel {
    pub schema_version: u32,
    pub skeleton: Skeleton,
    /// Per-segment class, parallel to `skeleton.segments`.
    pub classes: Vec<BranchClass>,
    pub branches: Vec<Branch>,
    /// Tie-downs applied in the final growth cycle.
    pub ties: Vec<TieOp>,
    pub provenance: Provenance,
}

pub const TREE_SCHEMA_VERSION: u32 = 1;

impl TreeModel {
    /// Spine segments of a branch: segments in its range at the branch's own
    /// nesting depth (that of its first segment), in emission order.
    pub fn branch_spine(&self, branch: &Branch) -> Vec<usize> {
        let depth = self.skeleton.segments[branch.first_segment].depth;
        (branch.first_segment..=branch.last_segment)
            .filter(|&i| self.skeleton.segments[i].depth == depth)
            .collect()
    }

    /// Arc length along a branch spine.
    pub fn branch_length(&self, branch: &Branch) -> f64 {
        self.branch_spine(branch).iter().map(|&i| self.skeleton.segments[i].length()).sum()
    }

    /// Point at `arc` meters from the branch base along its spine, together
    /// with the local unit tangent.
    pub fn point_on_branch(&self, branch: &Branch, arc: f64) -> (Point3<f64>, Vector3<f64>) {
        let spine = self.branch_spine(branch);
        let mut remaining = arc.max(0.0);
        for &i in &spine {
            let seg = &self.skeleton.segments[i];
            let len = seg.length();
            if remaining <= len || i == *spine.last().unwrap() {
                let t = if len > 0.0 { (remaining / len).min(1.0) } else { 0.0 };
                let dir = if len > 0.0 {
                    (seg.end_point() - seg.start_point()) / len
                } else {
                    Vector3::z()
                };
                return (seg.start_point() + dir * (t * len), dir);
            }
            remaining -= len;
        }
        (branch.base_point(), branch.direction_vec())
    }

    /// Trunk chord direction (base of the lowest trunk segment to the tip of
    /// the highest).
    pub fn trunk_chord(&self) -> Option<Vector3<f64>> {
        let trunk: Vec<usize> = (0..self.skeleton.segments.len())
            .filter(|&i| self.classes[i] == BranchClass::Trunk)
            .collect();
        let first = *trunk.first()?;
        let last = *trunk.last()?;
        let chord = self.skeleton.segments[last].end_point() - self.skeleton.segments[first].start_point();
        (chord.norm() > 1e-12).then(|| chord.normalize())
    }

    /// Canonical JSON encoding used for banks and hashing.
    pub fn to_json(&self) -> Result<String, TreegenError> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_matches_published_dimensions() {
        let spec = TrellisSpec::default();
        assert!((spec.wire_spacing - 0.4572).abs() < 1e-12);
        assert!((spec.tree_spacing - 1.2192).abs() < 1e-12);
        assert!((spec.trunk_tilt - 0.2617993877991494).abs() < 1e-12);
        assert!((spec.tie_interval - 0.1524).abs() < 1e-12);
        assert!((spec.support_branch_target_length - 0.6096).abs() < 1e-12);
        spec.validate().unwrap();
    }

    #[test]
    fn wire_points_lie_on_the_tilted_plane() {
        let spec = TrellisSpec::default();
        let p = spec.wire_point(3);
        assert!((p.z - 3.0 * 0.4572).abs() < 1e-12);
        assert!((p.x - p.z * spec.trunk_tilt.tan()).abs() < 1e-12);
    }
}
