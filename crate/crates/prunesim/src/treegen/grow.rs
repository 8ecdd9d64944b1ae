//! Annual grow → prune → tie-down cycles over an L-system string.
//!
//! Pruning edits the symbol string (promoting shoot apices to support
//! apices, deleting unselected shoots) so the next year's rewrite continues
//! from the pruned tree. Tie-down is geometric and re-derived every year
//! from the wire layout.

use std::collections::BTreeSet;

use nalgebra::{Point3, Rotation3, Vector3};
use sha2::{Digest, Sha256};

use crate::grammar::{rewrite_once, Grammar, Symbol, SymbolString, TurtleConfig};
use crate::rng::rng_from_seed;

use super::bend::bend_branch;
use super::work::{build_from_model, build_from_string, flatten, WorkBranch, WorkTree};
use super::{BranchClass, Provenance, TieOp, TreegenError, TreeModel, TrellisSpec};

/// Parse the built-in Envy V-trellis grammar.
pub fn default_grammar() -> Grammar {
    crate::grammar::parse_grammar(DEFAULT_GRAMMAR_TEXT).expect("built-in grammar parses")
}

/// Source text of the built-in grammar.
pub const DEFAULT_GRAMMAR_TEXT: &str = include_str!("../../assets/envy_vtrellis.lsys");

fn turtle_config(spec: &TrellisSpec) -> TurtleConfig {
    TurtleConfig {
        initial_position: Point3::origin(),
        initial_orientation: Rotation3::from_axis_angle(&Vector3::y_axis(), spec.trunk_tilt),
        default_step: 0.1,
        default_angle_deg: 90.0,
        default_radius: 0.05,
    }
}

struct PrunePlan {
    /// `(work branch index, wire, side)`
    promotions: Vec<(usize, usize, i8)>,
    removals: Vec<usize>,
    unfilled: Vec<(usize, i8)>,
}

fn branch_side(b: &WorkBranch) -> i8 {
    let chord = *b.spine.points.last().unwrap() - b.spine.points[0];
    if chord.y >= 0.0 {
        1
    } else {
        -1
    }
}

fn plan_pruning(work: &WorkTree, spec: &TrellisSpec) -> PrunePlan {
    let assigned: BTreeSet<(usize, i8)> =
        work.branches.iter().filter_map(|b| b.wire).collect();
    let candidates: Vec<usize> = work
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.class == BranchClass::Tertiary)
        .map(|(i, _)| i)
        .collect();

    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    let mut promotions = Vec::new();
    let mut unfilled = Vec::new();
    for wire in 1..=spec.wire_count {
        let h = spec.wire_height(wire);
        for side in [1i8, -1] {
            if assigned.contains(&(wire, side)) {
                continue;
            }
            let best = candidates
                .iter()
                .filter(|&&i| !chosen.contains(&i))
                .filter(|&&i| branch_side(&work.branches[i]) == side)
                .map(|&i| {
                    let b = &work.branches[i];
                    let gap = (b.spine.points[0].z - h).abs();
                    (i, gap, b.spine.arc_length())
                })
                .filter(|(_, gap, _)| *gap <= spec.max_candidate_gap)
                .min_by(|a, b| {
                    a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0))
                });
            match best {
                Some((i, _, _)) => {
                    chosen.insert(i);
                    promotions.push((i, wire, side));
                }
                None => unfilled.push((wire, side)),
            }
        }
    }
    let removals = candidates.into_iter().filter(|i| !chosen.contains(i)).collect();
    PrunePlan { promotions, removals, unfilled }
}

fn apply_plan_to_string(string: &mut SymbolString, work: &WorkTree, plan: &PrunePlan) {
    for &(bi, wire, side) in &plan.promotions {
        let b = &work.branches[bi];
        if let Some(sr) = &b.string_ref {
            if let Some(apex) = sr.apex {
                string.0[apex] = Symbol::new(
                    "P",
                    vec![wire as f64, side as f64, b.spine.arc_length()],
                );
            }
        }
    }
    let mut spans: Vec<(usize, usize)> = plan
        .removals
        .iter()
        .filter_map(|&bi| work.branches[bi].string_ref.as_ref().map(|sr| (sr.open, sr.close)))
        .collect();
    spans.sort_by(|a, b| b.0.cmp(&a.0));
    for (open, close) in spans {
        string.0.drain(open..=close);
    }
}

/// Plan tie targets for one support branch: points on its wire, spaced to
/// match the tie arc spacing, with the along-wire advance relaxed until the
/// bent branch preserves arc length.
fn tie_support(
    branch: &mut WorkBranch,
    spec: &TrellisSpec,
    warnings: &mut Vec<String>,
) -> Option<TieOp> {
    let (wire, side) = branch.wire?;
    let length = branch.spine.arc_length();
    let count = (length / spec.tie_interval).floor() as usize;
    if count == 0 {
        warnings.push(format!("support on wire {wire} side {side} too short to tie"));
        return None;
    }
    let arcs: Vec<f64> = (1..=count).map(|j| j as f64 * spec.tie_interval).collect();

    let q = spec.wire_point(wire);
    let dir = Vector3::y() * side as f64;
    let base = branch.spine.points[0];
    let foot = q + Vector3::y() * (base - q).dot(&Vector3::y());
    let offset = (base - foot).norm();

    let s1 = arcs[0];
    let mut g1 = ((0.998 * s1).powi(2) - offset * offset).max((0.05 * s1).powi(2)).sqrt();
    let mut along: Vec<f64> = arcs.iter().map(|s| g1 + (s - s1)).collect();

    // Relax the along-wire advance until bending preserves arc length.
    for _ in 0..8 {
        let targets: Vec<(f64, Point3<f64>)> =
            arcs.iter().zip(along.iter()).map(|(s, g)| (*s, foot + dir * *g)).collect();
        let mut probe = branch.clone();
        let outcome = bend_branch(&mut probe, &targets, spec.max_strain_ratio);
        let drift = outcome.arc_after - outcome.arc_before;
        if drift.abs() <= (2e-4 * length).max(1e-5) {
            break;
        }
        let last = *along.last().unwrap();
        let scale = ((last - drift) / last).clamp(0.5, 1.5);
        for g in &mut along {
            *g *= scale;
        }
        g1 = along[0];
    }
    let _ = g1;

    let targets: Vec<(f64, Point3<f64>)> =
        arcs.iter().zip(along.iter()).map(|(s, g)| (*s, foot + dir * *g)).collect();
    let outcome = bend_branch(branch, &targets, spec.max_strain_ratio);
    for k in &outcome.skipped {
        warnings.push(format!("tie {k} on wire {wire} side {side} unreachable; skipped"));
    }
    let drift = (outcome.arc_after - outcome.arc_before).abs();
    if drift > 0.01 * length {
        warnings.push(format!(
            "tie-down on wire {wire} side {side} changed arc length by {:.2}%",
            100.0 * drift / length
        ));
    }
    Some(TieOp {
        branch: usize::MAX, // resolved after flattening
        ties: targets.iter().map(|(s, t)| (*s, [t.x, t.y, t.z])).collect(),
    })
}

/// Grow a V-trellis tree: per year one rewrite pass, then pruning, then
/// tie-down of the support branches. Deterministic per seed.
pub fn grow_tree(
    spec: &TrellisSpec,
    grammar: &Grammar,
    years: usize,
    seed: u64,
) -> Result<TreeModel, TreegenError> {
    spec.validate()?;
    if years == 0 {
        return Err(TreegenError::Domain("years must be >= 1".into()));
    }
    let cfg = turtle_config(spec);
    let grammar_hash = {
        let mut h = Sha256::new();
        h.update(grammar.print_canonical().as_bytes());
        hex_digest(&h.finalize())
    };
    let mut rng = rng_from_seed(seed);
    let mut string = grammar.axiom.clone();
    let mut warnings: Vec<String> = Vec::new();

    let mut final_model = None;
    for year in 1..=years {
        string = rewrite_once(grammar, &string, &mut rng)?;
        let work = build_from_string(&string, &cfg)?;
        let plan = plan_pruning(&work, spec);
        apply_plan_to_string(&mut string, &work, &plan);

        let mut work = build_from_string(&string, &cfg)?;
        let mut tie_ops: Vec<((usize, i8), TieOp)> = Vec::new();
        let mut tie_warnings = Vec::new();
        for branch in &mut work.branches {
            if branch.wire.is_some() {
                if let Some(op) = tie_support(branch, spec, &mut tie_warnings) {
                    tie_ops.push((branch.wire.unwrap(), op));
                }
            }
        }

        if year == years {
            for (wire, side) in &plan.unfilled {
                warnings.push(format!("no candidate branch for wire {wire} side {side}"));
            }
            warnings.extend(tie_warnings);
            let provenance = Provenance {
                grammar_hash: grammar_hash.clone(),
                seed,
                years,
                warnings: std::mem::take(&mut warnings),
            };
            let mut model = flatten(&work, Vec::new(), provenance)?;
            // resolve tie ops to final branch indices via (wire, side)
            let mut resolved = Vec::with_capacity(tie_ops.len());
            for ((wire, side), mut op) in tie_ops {
                if let Some(idx) =
                    model.branches.iter().position(|b| b.wire == Some((wire, side)))
                {
                    op.branch = idx;
                    resolved.push(op);
                }
            }
            model.ties = resolved;
            final_model = Some(model);
        }
    }
    Ok(final_model.expect("years >= 1"))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Result of a pruning pass on a tree model.
#[derive(Debug)]
pub struct PruneOutcome {
    pub model: TreeModel,
    pub promoted: usize,
    pub removed: usize,
    pub warnings: Vec<String>,
}

/// Select support branches for unassigned wires and remove the remaining
/// trunk shoots. Candidates are trunk-attached shoots scored by the gap
/// between their base height and the wire height (ties broken by longer
/// branch, then lower index).
pub fn apply_pruning(model: &TreeModel, spec: &TrellisSpec) -> Result<PruneOutcome, TreegenError> {
    let mut work = build_from_model(model)?;
    let plan = plan_pruning(&work, spec);
    let promoted = plan.promotions.len();
    let removed = plan.removals.len();
    for &(bi, wire, side) in &plan.promotions {
        work.branches[bi].class = BranchClass::Support;
        work.branches[bi].wire = Some((wire, side));
    }
    let mut removal_set: Vec<usize> = plan.removals.clone();
    removal_set.sort_unstable_by(|a, b| b.cmp(a));
    for bi in removal_set {
        work.branches.remove(bi);
    }

    let warnings: Vec<String> = plan
        .unfilled
        .iter()
        .map(|(w, s)| format!("no candidate branch for wire {w} side {s}"))
        .collect();
    let mut provenance = model.provenance.clone();
    provenance.warnings.extend(warnings.iter().cloned());

    // Remap surviving tie ops to the flattened branch order.
    let mut order: Vec<Option<usize>> = Vec::new();
    for b in &work.branches {
        order.push(b.model_index);
        for c in &b.children {
            order.push(c.model_index);
        }
    }
    let ties = model
        .ties
        .iter()
        .filter_map(|t| {
            order.iter().position(|m| *m == Some(t.branch)).map(|new_idx| TieOp {
                branch: new_idx,
                ties: t.ties.clone(),
            })
        })
        .collect();

    let model = flatten(&work, ties, provenance)?;
    Ok(PruneOutcome { model, promoted, removed, warnings })
}

#[cfg(test)]
#[path = "grow_tests.rs"]
mod tests;
