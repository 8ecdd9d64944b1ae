//! Stochastic parallel rewriting of symbol strings.

use rand::Rng;

use super::{Grammar, GrammarError, Rule, Symbol, SymbolString};

fn rule_matches(rule: &Rule, sym: &Symbol, g: &Grammar) -> Option<bool> {
    if rule.predecessor != sym.name || rule.params.len() != sym.params.len() {
        return Some(false);
    }
    match &rule.guard {
        None => Some(true),
        Some(guard) => guard.eval(&|name| {
            rule.params
                .iter()
                .position(|p| p == name)
                .map(|i| sym.params[i])
                .or_else(|| g.constants.get(name).copied())
        }),
    }
}

/// Apply `steps` parallel rewrite passes to the grammar's axiom.
///
/// Deterministic given `(g, steps, seed of rng)`. `steps = 0` returns the
/// axiom unchanged. Fails when the produced string would exceed the
/// grammar's symbol budget.
pub fn rewrite<R: Rng>(g: &Grammar, steps: usize, rng: &mut R) -> Result<SymbolString, GrammarError> {
    let mut current = g.axiom.clone();
    for _ in 0..steps {
        current = rewrite_once(g, &current, rng)?;
    }
    Ok(current)
}

/// One parallel rewrite pass over an explicit string (used by tree growth,
/// which interleaves passes with structural edits).
pub fn rewrite_once<R: Rng>(
    g: &Grammar,
    input: &SymbolString,
    rng: &mut R,
) -> Result<SymbolString, GrammarError> {
    let mut out: Vec<Symbol> = Vec::with_capacity(input.0.len());
    for sym in &input.0 {
        let rule = g
            .rules
            .iter()
            .find_map(|r| match rule_matches(r, sym, g) {
                Some(true) => Some(Ok(r)),
                Some(false) => None,
                None => Some(Err(GrammarError::NonFiniteParameter { pred: sym.name.clone() })),
            })
            .transpose()?;
        match rule {
            None => {
                out.push(sym.clone());
            }
            Some(rule) => {
                let body = if rule.successors.len() == 1 {
                    &rule.successors[0].1
                } else {
                    let total: f64 = rule.successors.iter().map(|(w, _)| *w).sum();
                    let mut draw = rng.gen::<f64>() * total;
                    let mut chosen = &rule.successors[rule.successors.len() - 1].1;
                    for (w, body) in &rule.successors {
                        if draw < *w {
                            chosen = body;
                            break;
                        }
                        draw -= *w;
                    }
                    chosen
                };
                for template in body {
                    let mut params = Vec::with_capacity(template.args.len());
                    for arg in &template.args {
                        let v = arg
                            .eval(&|name| {
                                rule.params
                                    .iter()
                                    .position(|p| p == name)
                                    .map(|i| sym.params[i])
                                    .or_else(|| g.constants.get(name).copied())
                            })
                            .filter(|v| v.is_finite())
                            .ok_or(GrammarError::NonFiniteParameter {
                                pred: rule.predecessor.clone(),
                            })?;
                        params.push(v);
                    }
                    out.push(Symbol::new(template.name.clone(), params));
                }
            }
        }
        if out.len() > g.symbol_budget {
            return Err(GrammarError::SymbolBudgetExceeded { budget: g.symbol_budget });
        }
    }
    Ok(SymbolString(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_steps_returns_axiom() {
        let g = parse_grammar("axiom: A(1); A(l) -> A(l) A(l);").unwrap();
        let mut rng = rng_from_seed(1);
        let s = rewrite(&g, 0, &mut rng).unwrap();
        assert_eq!(s, g.axiom);
    }

    #[test]
    fn doubling_rule_grows_exponentially() {
        let g = parse_grammar("axiom: A; A -> A A;").unwrap();
        let mut rng = rng_from_seed(1);
        let s = rewrite(&g, 3, &mut rng).unwrap();
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn guard_blocks_rewrite_below_threshold() {
        let g = parse_grammar("axiom: A(0.04); A(l) : l > 0.05 -> F(l) A(l*0.8);").unwrap();
        let mut rng = rng_from_seed(1);
        let s = rewrite(&g, 1, &mut rng).unwrap();
        assert_eq!(s, g.axiom, "guarded symbol must stay unrewritten");

        let g2 = parse_grammar("axiom: A(0.1); A(l) : l > 0.05 -> F(l) A(l*0.8);").unwrap();
        let s2 = rewrite(&g2, 1, &mut rng_from_seed(1)).unwrap();
        assert_eq!(s2.len(), 2);
        // 0.1 * 0.8
        assert!((s2.0[1].params[0] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn stochastic_rewrite_is_deterministic_per_seed() {
        let g = parse_grammar("axiom: A; A -> 1: F A | 1: [ A ] A;").unwrap();
        let a = rewrite(&g, 6, &mut rng_from_seed(42)).unwrap();
        let b = rewrite(&g, 6, &mut rng_from_seed(42)).unwrap();
        assert_eq!(a.to_string(), b.to_string());
        let c = rewrite(&g, 6, &mut rng_from_seed(43)).unwrap();
        assert_ne!(a.to_string(), c.to_string(), "different seed should diverge");
    }

    #[test]
    fn budget_is_enforced() {
        let mut g = parse_grammar("axiom: A; A -> A A;").unwrap();
        g.symbol_budget = 1000;
        let err = rewrite(&g, 20, &mut rng_from_seed(1)).unwrap_err();
        assert!(matches!(err, GrammarError::SymbolBudgetExceeded { .. }));
    }

    #[test]
    fn non_finite_parameter_is_an_error() {
        let g = parse_grammar("axiom: A(1); A(l) -> A(l / 0);").unwrap();
        let err = rewrite(&g, 1, &mut rng_from_seed(1)).unwrap_err();
        assert!(matches!(err, GrammarError::NonFiniteParameter { .. }));
    }
}
