//! Hierarchical working form of a tree used by growth, pruning, and
//! tie-down: a trunk chain with attached branch chains. Flattening emits the
//! flat segment skeleton with contiguous per-branch ranges.

use nalgebra::Point3;

use crate::grammar::{interpret_with_map, Segment, Skeleton, SymbolString, TurtleConfig};

use super::{Branch, BranchClass, Provenance, TieOp, TreeModel, TreegenError, TREE_SCHEMA_VERSION};

/// Polyline with per-segment taper radii.
#[derive(Debug, Clone)]
pub(crate) struct WorkChain {
    pub points: Vec<Point3<f64>>,
    /// `(start_radius, end_radius)` per segment; `len = points.len() - 1`.
    pub seg_radii: Vec<(f64, f64)>,
}

impl WorkChain {
    pub fn empty() -> Self {
        Self { points: Vec::new(), seg_radii: Vec::new() }
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn cumulative_arcs(&self) -> Vec<f64> {
        let mut arcs = Vec::with_capacity(self.points.len());
        let mut total = 0.0;
        arcs.push(0.0);
        for w in self.points.windows(2) {
            total += (w[1] - w[0]).norm();
            arcs.push(total);
        }
        arcs
    }

    /// Insert a vertex at arc position `arc` (if no vertex is already within
    /// `1e-9`), returning the vertex index. Returns `None` when `arc` lies
    /// beyond the chain.
    pub fn insert_vertex_at(&mut self, arc: f64) -> Option<usize> {
        let arcs = self.cumulative_arcs();
        if arc < -1e-9 || arc > *arcs.last()? + 1e-9 {
            return None;
        }
        for (i, a) in arcs.iter().enumerate() {
            if (a - arc).abs() <= 1e-9 {
                return Some(i);
            }
            if *a > arc {
                let seg = i - 1;
                let seg_len = arcs[i] - arcs[seg];
                let t = (arc - arcs[seg]) / seg_len;
                let p = self.points[seg] + (self.points[i] - self.points[seg]) * t;
                let (r0, r1) = self.seg_radii[seg];
                let rm = r0 + (r1 - r0) * t;
                self.points.insert(i, p);
                self.seg_radii[seg] = (r0, rm);
                self.seg_radii.insert(i, (rm, r1));
                return Some(i);
            }
        }
        Some(self.points.len() - 1)
    }
}

/// Link back to the symbol string for growth-time structural edits.
#[derive(Debug, Clone)]
pub(crate) struct StringRef {
    pub open: usize,
    pub close: usize,
    /// Index of the `A` apex symbol, when the branch is still a candidate.
    pub apex: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct WorkBranch {
    pub class: BranchClass,
    pub wire: Option<(usize, i8)>,
    /// Vertex index on the parent chain where this branch attaches.
    pub attach_vertex: usize,
    pub spine: WorkChain,
    pub children: Vec<WorkBranch>,
    pub string_ref: Option<StringRef>,
    /// Index into `TreeModel::branches` when built from a model.
    pub model_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct WorkTree {
    pub trunk: WorkChain,
    pub branches: Vec<WorkBranch>,
}

fn chain_from_segments(skeleton: &Skeleton, segs: &[usize]) -> Result<WorkChain, TreegenError> {
    let mut chain = WorkChain::empty();
    for (pos, &i) in segs.iter().enumerate() {
        let seg = &skeleton.segments[i];
        if pos == 0 {
            chain.points.push(seg.start_point());
        } else if (seg.start_point() - *chain.points.last().unwrap()).norm() > 1e-9 {
            return Err(TreegenError::Domain(format!("segment {i} breaks chain continuity")));
        }
        chain.points.push(seg.end_point());
        chain.seg_radii.push((seg.start_radius, seg.end_radius));
    }
    Ok(chain)
}

/// Build the working form from a symbol string via turtle interpretation.
pub(crate) fn build_from_string(
    string: &SymbolString,
    cfg: &TurtleConfig,
) -> Result<WorkTree, TreegenError> {
    let interp = interpret_with_map(string, cfg)?;
    let skeleton = &interp.skeleton;

    let trunk_segs: Vec<usize> =
        (0..skeleton.segments.len()).filter(|&i| skeleton.segments[i].depth == 0).collect();
    let trunk = chain_from_segments(skeleton, &trunk_segs)?;

    // Segment indices per group, restricted to the group's own depth.
    let spine_of = |open: usize, close: usize, depth: usize| -> Vec<usize> {
        (0..skeleton.segments.len())
            .filter(|&i| {
                let sym = interp.segment_symbol[i];
                sym > open && sym < close && skeleton.segments[i].depth == depth
            })
            .collect()
    };

    let apex_of = |open: usize, close: usize| -> (Option<usize>, Option<(usize, i8, f64)>) {
        let mut depth = 0usize;
        let mut apex = None;
        let mut support = None;
        for (idx, sym) in string.0.iter().enumerate().take(close).skip(open + 1) {
            match sym.name.as_str() {
                "[" => depth += 1,
                "]" => depth = depth.saturating_sub(1),
                "A" if depth == 0 => apex = Some(idx),
                "P" if depth == 0 && sym.params.len() >= 3 => {
                    let wire = sym.params[0].round().max(1.0) as usize;
                    let side = if sym.params[1] >= 0.0 { 1 } else { -1 };
                    support = Some((wire, side, sym.params[2]));
                }
                _ => {}
            }
        }
        (apex, support)
    };

    // Vertex on a chain at the end of a given source segment.
    let attach_vertex = |chain_segs: &[usize], parent_segment: Option<usize>| -> Option<usize> {
        let p = parent_segment?;
        chain_segs.iter().position(|&s| s == p).map(|pos| pos + 1)
    };

    let mut branches = Vec::new();
    let top_groups: Vec<&crate::grammar::BracketGroup> =
        interp.groups.iter().filter(|g| g.depth == 1).collect();
    for group in top_groups {
        let spine_segs = spine_of(group.open, group.close, 1);
        if spine_segs.is_empty() {
            continue; // unexpanded bud
        }
        let spine = chain_from_segments(skeleton, &spine_segs)?;
        let (apex, support) = apex_of(group.open, group.close);
        let Some(attach) = attach_vertex(&trunk_segs, group.parent_segment) else {
            continue;
        };
        let (class, wire) = match support {
            Some((w, s, _)) => (BranchClass::Support, Some((w, s))),
            None => (BranchClass::Tertiary, None),
        };

        let mut children = Vec::new();
        for sub in interp.groups.iter().filter(|g| {
            g.depth == 2 && g.open > group.open && g.close < group.close
        }) {
            let sub_spine_segs = spine_of(sub.open, sub.close, 2);
            if sub_spine_segs.is_empty() {
                continue;
            }
            let Some(sub_attach) = attach_vertex(&spine_segs, sub.parent_segment) else {
                continue;
            };
            children.push(WorkBranch {
                class: BranchClass::Tertiary,
                wire: None,
                attach_vertex: sub_attach,
                spine: chain_from_segments(skeleton, &sub_spine_segs)?,
                children: Vec::new(),
                string_ref: Some(StringRef { open: sub.open, close: sub.close, apex: None }),
                model_index: None,
            });
        }

        branches.push(WorkBranch {
            class,
            wire,
            attach_vertex: attach,
            spine,
            children,
            string_ref: Some(StringRef { open: group.open, close: group.close, apex }),
            model_index: None,
        });
    }

    Ok(WorkTree { trunk, branches })
}

/// Rebuild the working form from a flattened model.
pub(crate) fn build_from_model(model: &TreeModel) -> Result<WorkTree, TreegenError> {
    let skeleton = &model.skeleton;
    let trunk_segs: Vec<usize> = (0..skeleton.segments.len())
        .filter(|&i| model.classes[i] == BranchClass::Trunk)
        .collect();
    let trunk = chain_from_segments(skeleton, &trunk_segs)?;

    let contained_in = |inner: &Branch, outer: &Branch| -> bool {
        outer.first_segment < inner.first_segment && inner.last_segment <= outer.last_segment
    };

    let vertex_of_point = |chain: &WorkChain, p: Point3<f64>| -> Option<usize> {
        chain.points.iter().position(|q| (q - p).norm() <= 1e-9)
    };

    let mut branches = Vec::new();
    for (bi, branch) in model.branches.iter().enumerate() {
        let nested = model.branches.iter().any(|other| contained_in(branch, other));
        if nested {
            continue;
        }
        let spine_segs = model.branch_spine(branch);
        let spine = chain_from_segments(skeleton, &spine_segs)?;
        let attach = vertex_of_point(&trunk, branch.base_point())
            .ok_or_else(|| TreegenError::Domain(format!("branch {bi} detached from trunk")))?;

        let mut children = Vec::new();
        for (ci, child) in model.branches.iter().enumerate() {
            if !contained_in(child, branch) {
                continue;
            }
            let child_spine_segs = model.branch_spine(child);
            let child_spine = chain_from_segments(skeleton, &child_spine_segs)?;
            let child_attach = vertex_of_point(&spine, child.base_point())
                .ok_or_else(|| TreegenError::Domain(format!("branch {ci} detached from spine")))?;
            children.push(WorkBranch {
                class: child.class,
                wire: child.wire.clone(),
                attach_vertex: child_attach,
                spine: child_spine,
                children: Vec::new(),
                string_ref: None,
                model_index: Some(ci),
            });
        }

        branches.push(WorkBranch {
            class: branch.class,
            wire: branch.wire.clone(),
            attach_vertex: attach,
            spine,
            children,
            string_ref: None,
            model_index: Some(bi),
        });
    }

    Ok(WorkTree { trunk, branches })
}

fn emit_chain(
    out: &mut Vec<Segment>,
    classes: &mut Vec<BranchClass>,
    chain: &WorkChain,
    depth: usize,
    class: BranchClass,
    attach_parent: Option<usize>,
) -> (usize, usize) {
    let first = out.len();
    for i in 0..chain.seg_radii.len() {
        let parent = if i == 0 { attach_parent } else { Some(out.len() - 1) };
        let (r0, r1) = chain.seg_radii[i];
        out.push(Segment {
            start: [chain.points[i].x, chain.points[i].y, chain.points[i].z],
            end: [chain.points[i + 1].x, chain.points[i + 1].y, chain.points[i + 1].z],
            start_radius: r0,
            end_radius: r1,
            depth,
            parent,
        });
        classes.push(class);
    }
    (first, out.len().saturating_sub(1))
}

fn emit_branch(
    out: &mut Vec<Segment>,
    classes: &mut Vec<BranchClass>,
    branches: &mut Vec<Branch>,
    wb: &WorkBranch,
    depth: usize,
    attach_parent: Option<usize>,
) {
    let (spine_first, spine_last) = emit_chain(out, classes, &wb.spine, depth, wb.class, attach_parent);
    let branch_index = branches.len();
    let base = wb.spine.points[0];
    let tip = *wb.spine.points.last().unwrap();
    let chord = tip - base;
    let direction = if chord.norm() > 1e-9 {
        chord.normalize()
    } else {
        nalgebra::Vector3::z()
    };
    branches.push(Branch {
        first_segment: spine_first,
        last_segment: spine_last, // widened below to cover children
        class: wb.class,
        base: [base.x, base.y, base.z],
        direction: [direction.x, direction.y, direction.z],
        prunable: wb.class == BranchClass::Tertiary,
        wire: wb.wire.clone(),
    });
    for child in &wb.children {
        let parent_seg = if child.attach_vertex == 0 {
            attach_parent
        } else {
            Some(spine_first + child.attach_vertex - 1)
        };
        emit_branch(out, classes, branches, child, depth + 1, parent_seg);
    }
    branches[branch_index].last_segment = out.len() - 1;
}

/// Flatten the working form into a [`TreeModel`].
pub(crate) fn flatten(
    work: &WorkTree,
    ties: Vec<TieOp>,
    provenance: Provenance,
) -> Result<TreeModel, TreegenError> {
    let mut segments = Vec::new();
    let mut classes = Vec::new();
    let mut branches = Vec::new();

    let trunk_range = if work.trunk.points.len() >= 2 {
        Some(emit_chain(&mut segments, &mut classes, &work.trunk, 0, BranchClass::Trunk, None))
    } else {
        None
    };

    for wb in &work.branches {
        let attach_parent = trunk_range.and_then(|(first, _)| {
            (wb.attach_vertex > 0).then(|| first + wb.attach_vertex - 1)
        });
        emit_branch(&mut segments, &mut classes, &mut branches, wb, 1, attach_parent);
    }

    let skeleton = Skeleton { segments };
    skeleton.validate().map_err(TreegenError::Domain)?;
    Ok(TreeModel {
        schema_version: TREE_SCHEMA_VERSION,
        skeleton,
        classes,
        branches,
        ties,
        provenance,
    })
}

/// Resolve a tie op's branch to the work branch, preferring model indices.
pub(crate) fn find_branch_mut<'a>(
    work: &'a mut WorkTree,
    model_index: usize,
) -> Option<&'a mut WorkBranch> {
    for wb in &mut work.branches {
        if wb.model_index == Some(model_index) {
            return Some(wb);
        }
        for child in &mut wb.children {
            if child.model_index == Some(model_index) {
                return Some(child);
            }
        }
    }
    None
}
