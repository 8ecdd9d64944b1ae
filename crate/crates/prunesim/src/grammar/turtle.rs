//! Turtle interpretation of symbol strings into branch skeletons.
//!
//! `F` draws a tapered segment along the heading; `+ - & ^ \ /` rotate about
//! the turtle's up, left, and heading axes; `[ ]` push and pop state; `!`
//! sets the drawing radius. Angles in symbol parameters are degrees.

use nalgebra::{Point3, Rotation3, Vector3};

use super::{GrammarError, Segment, Skeleton, SymbolString};

/// Initial turtle state and per-symbol defaults.
#[derive(Debug, Clone)]
pub struct TurtleConfig {
    pub initial_position: Point3<f64>,
    /// Heading is `R * z`, left is `R * x`, up is `R * y`.
    pub initial_orientation: Rotation3<f64>,
    /// Step length for `F` without an argument, meters.
    pub default_step: f64,
    /// Angle for rotations without an argument, degrees.
    pub default_angle_deg: f64,
    /// Radius before any `!`, meters.
    pub default_radius: f64,
}

impl Default for TurtleConfig {
    fn default() -> Self {
        Self {
            initial_position: Point3::origin(),
            initial_orientation: Rotation3::identity(),
            default_step: 0.1,
            default_angle_deg: 90.0,
            default_radius: 0.01,
        }
    }
}

/// A `[ ... ]` span of the symbol string together with its attachment.
#[derive(Debug, Clone)]
pub struct BracketGroup {
    /// Symbol index of the `[`.
    pub open: usize,
    /// Symbol index of the matching `]`.
    pub close: usize,
    /// Segment the group is attached to (last segment drawn before `[`).
    pub parent_segment: Option<usize>,
    /// Bracket nesting depth inside the group.
    pub depth: usize,
}

/// Skeleton plus the symbol-level bookkeeping needed for structural edits.
#[derive(Debug, Clone)]
pub struct Interpretation {
    pub skeleton: Skeleton,
    /// For each segment, the index of the `F` symbol that drew it.
    pub segment_symbol: Vec<usize>,
    pub groups: Vec<BracketGroup>,
}

#[derive(Clone)]
struct TurtleState {
    position: Point3<f64>,
    orientation: Rotation3<f64>,
    radius: f64,
    last_segment: Option<usize>,
}

/// Interpret a bracket-balanced symbol string into a [`Skeleton`].
pub fn interpret(s: &SymbolString, config: &TurtleConfig) -> Result<Skeleton, GrammarError> {
    interpret_with_map(s, config).map(|i| i.skeleton)
}

/// Interpretation that also returns symbol/segment provenance, used by the
/// tree-growth pipeline to prune and retag bracket groups in the string.
pub fn interpret_with_map(
    s: &SymbolString,
    config: &TurtleConfig,
) -> Result<Interpretation, GrammarError> {
    let mut state = TurtleState {
        position: config.initial_position,
        orientation: config.initial_orientation,
        radius: config.default_radius,
        last_segment: None,
    };
    let mut stack: Vec<TurtleState> = Vec::new();
    let mut open_stack: Vec<usize> = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut segment_symbol: Vec<usize> = Vec::new();
    let mut groups: Vec<BracketGroup> = Vec::new();
    let mut group_index_stack: Vec<usize> = Vec::new();

    for (index, sym) in s.0.iter().enumerate() {
        let angle = |k: usize| -> f64 {
            sym.params.get(k).copied().unwrap_or(config.default_angle_deg).to_radians()
        };
        match sym.name.as_str() {
            "F" => {
                let length = sym.params.first().copied().unwrap_or(config.default_step);
                let parent_end_radius =
                    state.last_segment.map(|i| segments[i].end_radius).unwrap_or(f64::INFINITY);
                let start_radius = state.radius.min(parent_end_radius);
                let end_radius =
                    sym.params.get(1).copied().unwrap_or(start_radius).min(start_radius);
                let heading = state.orientation * Vector3::z();
                let end = state.position + heading * length;
                segments.push(Segment {
                    start: [state.position.x, state.position.y, state.position.z],
                    end: [end.x, end.y, end.z],
                    start_radius,
                    end_radius,
                    depth: stack.len(),
                    parent: state.last_segment,
                });
                segment_symbol.push(index);
                state.position = end;
                state.radius = end_radius;
                state.last_segment = Some(segments.len() - 1);
            }
            "!" => {
                if let Some(r) = sym.params.first() {
                    state.radius = *r;
                }
            }
            "+" => state.orientation *= Rotation3::from_axis_angle(&Vector3::y_axis(), angle(0)),
            "-" => state.orientation *= Rotation3::from_axis_angle(&Vector3::y_axis(), -angle(0)),
            "&" => state.orientation *= Rotation3::from_axis_angle(&Vector3::x_axis(), angle(0)),
            "^" => state.orientation *= Rotation3::from_axis_angle(&Vector3::x_axis(), -angle(0)),
            "\\" => state.orientation *= Rotation3::from_axis_angle(&Vector3::z_axis(), angle(0)),
            "/" => state.orientation *= Rotation3::from_axis_angle(&Vector3::z_axis(), -angle(0)),
            "[" => {
                stack.push(state.clone());
                open_stack.push(index);
                groups.push(BracketGroup {
                    open: index,
                    close: usize::MAX,
                    parent_segment: state.last_segment,
                    depth: stack.len(),
                });
                group_index_stack.push(groups.len() - 1);
            }
            "]" => {
                state = stack.pop().ok_or(GrammarError::PopEmptyStack { index })?;
                open_stack.pop();
                let gi = group_index_stack.pop().expect("group stack parallels turtle stack");
                groups[gi].close = index;
            }
            _ => {}
        }
    }
    if !stack.is_empty() {
        let index = open_stack.pop().unwrap_or(0);
        return Err(GrammarError::UnbalancedBrackets { line: 0, col: index });
    }
    Ok(Interpretation { skeleton: Skeleton { segments }, segment_symbol, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Symbol;
    use approx::assert_relative_eq;

    fn sym(name: &str, params: &[f64]) -> Symbol {
        Symbol::new(name, params.to_vec())
    }

    #[test]
    fn single_step_draws_along_z() {
        let s = SymbolString(vec![sym("F", &[1.0])]);
        let sk = interpret(&s, &TurtleConfig::default()).unwrap();
        assert_eq!(sk.segments.len(), 1);
        assert_relative_eq!(sk.segments[0].end_point(), Point3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        sk.validate().unwrap();
    }

    #[test]
    fn empty_string_gives_empty_skeleton() {
        let sk = interpret(&SymbolString::default(), &TurtleConfig::default()).unwrap();
        assert!(sk.segments.is_empty());
    }

    #[test]
    fn bracketed_turn_is_orthogonal_and_depth_tracked() {
        // F(1) [ +(90) F(1) ] F(1)
        let s = SymbolString(vec![
            sym("F", &[1.0]),
            sym("[", &[]),
            sym("+", &[90.0]),
            sym("F", &[1.0]),
            sym("]", &[]),
            sym("F", &[1.0]),
        ]);
        let sk = interpret(&s, &TurtleConfig::default()).unwrap();
        assert_eq!(sk.segments.len(), 3);
        let dir = |i: usize| (sk.segments[i].end_point() - sk.segments[i].start_point()).normalize();
        assert_relative_eq!(dir(0).dot(&dir(1)), 0.0, epsilon = 1e-12);
        assert_relative_eq!(dir(0).dot(&dir(2)), 1.0, epsilon = 1e-12);
        assert_eq!(sk.segments[1].depth, 1);
        assert_eq!(sk.segments[2].depth, 0);
        // middle segment hangs off the first, third continues from first
        assert_eq!(sk.segments[1].parent, Some(0));
        assert_eq!(sk.segments[2].parent, Some(0));
        sk.validate().unwrap();
    }

    #[test]
    fn segment_count_equals_f_count() {
        let s = SymbolString(vec![
            sym("A", &[]),
            sym("F", &[0.5]),
            sym("[", &[]),
            sym("F", &[0.2]),
            sym("F", &[0.2]),
            sym("]", &[]),
            sym("!", &[0.005]),
            sym("F", &[0.1]),
        ]);
        let sk = interpret(&s, &TurtleConfig::default()).unwrap();
        assert_eq!(sk.segments.len(), 4);
    }

    #[test]
    fn pop_from_empty_stack_errors() {
        let s = SymbolString(vec![sym("]", &[])]);
        let err = interpret(&s, &TurtleConfig::default()).unwrap_err();
        assert!(matches!(err, GrammarError::PopEmptyStack { .. }));
    }

    #[test]
    fn radius_taper_and_clamp() {
        let s = SymbolString(vec![
            sym("!", &[0.05]),
            sym("F", &[1.0, 0.03]),
            sym("!", &[0.9]), // larger than parent end; must clamp to 0.03
            sym("F", &[1.0]),
        ]);
        let sk = interpret(&s, &TurtleConfig::default()).unwrap();
        assert_eq!(sk.segments[0].start_radius, 0.05);
        assert_eq!(sk.segments[0].end_radius, 0.03);
        assert_eq!(sk.segments[1].start_radius, 0.03);
        sk.validate().unwrap();
    }

    #[test]
    fn rotating_initial_frame_rotates_all_points() {
        let s = SymbolString(vec![
            sym("F", &[0.6]),
            sym("[", &[]),
            sym("&", &[40.0]),
            sym("F", &[0.3]),
            sym("]", &[]),
            sym("+", &[25.0]),
            sym("F", &[0.4]),
        ]);
        let base = interpret(&s, &TurtleConfig::default()).unwrap();
        let rot = Rotation3::from_euler_angles(0.3, -0.2, 0.9);
        let cfg = TurtleConfig { initial_orientation: rot, ..TurtleConfig::default() };
        let rotated = interpret(&s, &cfg).unwrap();
        for (a, b) in base.segments.iter().zip(rotated.segments.iter()) {
            assert_relative_eq!(rot * a.end_point(), b.end_point(), epsilon = 1e-9);
            assert_relative_eq!(rot * a.start_point(), b.start_point(), epsilon = 1e-9);
        }
    }
}
