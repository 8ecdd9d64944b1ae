//! Hand-rolled tokenizer and recursive-descent parser for `.lsys` files.

use std::collections::BTreeMap;

use super::{
    BinOp, CmpOp, Expr, Grammar, GrammarError, Guard, Rule, Symbol, SymbolString, SymbolTemplate,
    DEFAULT_SYMBOL_BUDGET,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    // punctuation
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Arrow,
    Pipe,
    Equals,
    // operators / single-char symbols (context decides)
    Plus,
    Minus,
    Star,
    Slash,
    Backslash,
    Amp,
    Caret,
    Bang,
    LBracket,
    RBracket,
    // comparisons
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, GrammarError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |chars: &mut std::iter::Peekable<std::str::Chars>, line: &mut usize, col: &mut usize| {
            let c = chars.next().unwrap();
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars, &mut line, &mut col);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars, &mut line, &mut col);
            }
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' {
                    text.push(bump(&mut chars, &mut line, &mut col));
                    // exponent sign
                    if (text.ends_with('e') || text.ends_with('E'))
                        && matches!(chars.peek(), Some('+') | Some('-'))
                    {
                        text.push(bump(&mut chars, &mut line, &mut col));
                    }
                } else {
                    break;
                }
            }
            let value: f64 = text.parse().map_err(|_| GrammarError::Syntax {
                line: tline,
                col: tcol,
                msg: format!("invalid number `{text}`"),
            })?;
            toks.push(Spanned { tok: Tok::Num(value), line: tline, col: tcol });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_alphanumeric() || c == '_' {
                    text.push(bump(&mut chars, &mut line, &mut col));
                } else {
                    break;
                }
            }
            toks.push(Spanned { tok: Tok::Ident(text), line: tline, col: tcol });
            continue;
        }
        let c = bump(&mut chars, &mut line, &mut col);
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '|' => Tok::Pipe,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '\\' => Tok::Backslash,
            '&' => Tok::Amp,
            '^' => Tok::Caret,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '+' => Tok::Plus,
            '-' => {
                if chars.peek() == Some(&'>') {
                    bump(&mut chars, &mut line, &mut col);
                    Tok::Arrow
                } else {
                    Tok::Minus
                }
            }
            ':' => Tok::Colon,
            '=' => {
                if chars.peek() == Some(&'=') {
                    bump(&mut chars, &mut line, &mut col);
                    Tok::EqEq
                } else {
                    Tok::Equals
                }
            }
            '!' => {
                if chars.peek() == Some(&'=') {
                    bump(&mut chars, &mut line, &mut col);
                    Tok::Ne
                } else {
                    Tok::Bang
                }
            }
            '<' => {
                if chars.peek() == Some(&'=') {
                    bump(&mut chars, &mut line, &mut col);
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if chars.peek() == Some(&'=') {
                    bump(&mut chars, &mut line, &mut col);
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            other => {
                return Err(GrammarError::Syntax {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        toks.push(Spanned { tok, line: tline, col: tcol });
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> GrammarError {
        let (line, col) = self.here();
        GrammarError::Syntax { line, col, msg: msg.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), GrammarError> {
        match self.next() {
            Some(s) if s.tok == tok => Ok(()),
            Some(s) => Err(GrammarError::Syntax {
                line: s.line,
                col: s.col,
                msg: format!("expected {what}"),
            }),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    /// Token usable as a symbol name in a symbol-string context.
    fn symbol_name(&mut self) -> Option<String> {
        let name = match self.peek()? {
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Amp => "&".into(),
            Tok::Caret => "^".into(),
            Tok::Backslash => "\\".into(),
            Tok::Slash => "/".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Bang => "!".into(),
            _ => return None,
        };
        self.next();
        Some(name)
    }

    fn parse_expr(&mut self) -> Result<Expr, GrammarError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.parse_term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Expr, GrammarError> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.parse_factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_factor(&mut self) -> Result<Expr, GrammarError> {
        match self.peek() {
            Some(Tok::Num(_)) => {
                if let Some(Spanned { tok: Tok::Num(v), .. }) = self.next() {
                    Ok(Expr::Num(v))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Ident(_)) => {
                if let Some(Spanned { tok: Tok::Ident(name), .. }) = self.next() {
                    Ok(Expr::Var(name))
                } else {
                    unreachable!()
                }
            }
            Some(Tok::Minus) => {
                self.next();
                Ok(Expr::Neg(Box::new(self.parse_factor()?)))
            }
            Some(Tok::LParen) => {
                self.next();
                let e = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn parse_guard(&mut self) -> Result<Guard, GrammarError> {
        let lhs = self.parse_expr()?;
        let op = match self.peek() {
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::EqEq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            _ => return Err(self.err("expected comparison operator in guard")),
        };
        self.next();
        let rhs = self.parse_expr()?;
        Ok(Guard { lhs, op, rhs })
    }

    /// Parse a run of symbol templates, stopping at `;`, `|`, or end.
    fn parse_template_string(&mut self) -> Result<Vec<SymbolTemplate>, GrammarError> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Semi) | Some(Tok::Pipe) | None => break,
                _ => {}
            }
            let (line, col) = self.here();
            let name = self
                .symbol_name()
                .ok_or_else(|| GrammarError::Syntax { line, col, msg: "expected symbol".into() })?;
            let mut args = Vec::new();
            if !matches!(name.as_str(), "[" | "]") && self.peek() == Some(&Tok::LParen) {
                self.next();
                loop {
                    args.push(self.parse_expr()?);
                    match self.peek() {
                        Some(Tok::Comma) => {
                            self.next();
                        }
                        Some(Tok::RParen) => {
                            self.next();
                            break;
                        }
                        _ => return Err(self.err("expected `,` or `)` in argument list")),
                    }
                }
            }
            out.push(SymbolTemplate { name, args });
        }
        Ok(out)
    }
}

fn check_balance(templates: &[SymbolTemplate], line: usize, col: usize) -> Result<(), GrammarError> {
    let mut depth: i64 = 0;
    for t in templates {
        match t.name.as_str() {
            "[" => depth += 1,
            "]" => {
                depth -= 1;
                if depth < 0 {
                    return Err(GrammarError::UnbalancedBrackets { line, col });
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(GrammarError::UnbalancedBrackets { line, col });
    }
    Ok(())
}

/// Evaluate successor/guard expressions' variable references against the
/// declared parameters and constants.
fn check_vars(
    exprs: &[&Expr],
    params: &[String],
    constants: &BTreeMap<String, f64>,
    line: usize,
    col: usize,
) -> Result<(), GrammarError> {
    for expr in exprs {
        let mut vars = Vec::new();
        expr.variables(&mut vars);
        for v in vars {
            if !params.iter().any(|p| p == v) && !constants.contains_key(v) {
                return Err(GrammarError::UndeclaredParameter { name: v.to_string(), line, col });
            }
        }
    }
    Ok(())
}

/// Parse a grammar source text into a [`Grammar`].
///
/// The printed canonical form of the result re-parses to a structurally
/// identical grammar.
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let mut constants: BTreeMap<String, f64> = BTreeMap::new();
    let mut axiom: Option<SymbolString> = None;
    let mut rules: Vec<Rule> = Vec::new();

    while let Some(tok) = p.peek() {
        let (line, col) = p.here();
        match tok {
            Tok::Ident(name) if name == "const" => {
                p.next();
                let name = match p.next() {
                    Some(Spanned { tok: Tok::Ident(n), .. }) => n,
                    _ => return Err(p.err("expected constant name")),
                };
                p.expect(Tok::Equals, "`=`")?;
                let value = p.parse_expr()?;
                p.expect(Tok::Semi, "`;`")?;
                let value = value
                    .eval(&|v| constants.get(v).copied())
                    .ok_or(GrammarError::UndeclaredParameter { name: name.clone(), line, col })?;
                if constants.insert(name.clone(), value).is_some() {
                    return Err(GrammarError::DuplicateConstant { name, line, col });
                }
            }
            Tok::Ident(name) if name == "axiom" => {
                p.next();
                p.expect(Tok::Colon, "`:`")?;
                let templates = p.parse_template_string()?;
                p.expect(Tok::Semi, "`;`")?;
                check_balance(&templates, line, col)?;
                let mut symbols = Vec::new();
                for t in &templates {
                    check_vars(&t.args.iter().collect::<Vec<_>>(), &[], &constants, line, col)?;
                    let params = t
                        .args
                        .iter()
                        .map(|a| a.eval(&|v| constants.get(v).copied()).unwrap())
                        .collect();
                    symbols.push(Symbol::new(t.name.clone(), params));
                }
                axiom = Some(SymbolString(symbols));
            }
            _ => {
                // rule: Name [ (params) ] [ : guard ] -> alts ;
                let name = p.symbol_name().ok_or_else(|| GrammarError::Syntax {
                    line,
                    col,
                    msg: "expected rule predecessor".into(),
                })?;
                let mut params = Vec::new();
                if p.peek() == Some(&Tok::LParen) {
                    p.next();
                    loop {
                        match p.next() {
                            Some(Spanned { tok: Tok::Ident(n), .. }) => params.push(n),
                            _ => return Err(p.err("expected parameter name")),
                        }
                        match p.next() {
                            Some(Spanned { tok: Tok::Comma, .. }) => {}
                            Some(Spanned { tok: Tok::RParen, .. }) => break,
                            _ => return Err(p.err("expected `,` or `)` in parameter list")),
                        }
                    }
                }
                if params.iter().collect::<std::collections::BTreeSet<_>>().len() != params.len() {
                    return Err(GrammarError::Syntax {
                        line,
                        col,
                        msg: format!("duplicate parameter in rule for `{name}`"),
                    });
                }
                let guard = if p.peek() == Some(&Tok::Colon) {
                    p.next();
                    Some(p.parse_guard()?)
                } else {
                    None
                };
                p.expect(Tok::Arrow, "`->`")?;
                let mut successors = Vec::new();
                loop {
                    // optional weight prefix `number :`
                    let weight = if let Some(Tok::Num(w)) = p.peek() {
                        let w = *w;
                        // lookahead for `:`
                        if p.toks.get(p.pos + 1).map(|s| &s.tok) == Some(&Tok::Colon) {
                            p.next();
                            p.next();
                            w
                        } else {
                            1.0
                        }
                    } else {
                        1.0
                    };
                    let body = p.parse_template_string()?;
                    check_balance(&body, line, col)?;
                    for t in &body {
                        check_vars(&t.args.iter().collect::<Vec<_>>(), &params, &constants, line, col)?;
                    }
                    successors.push((weight, body));
                    match p.peek() {
                        Some(Tok::Pipe) => {
                            p.next();
                        }
                        Some(Tok::Semi) => {
                            p.next();
                            break;
                        }
                        _ => return Err(p.err("expected `|` or `;` after successor")),
                    }
                }
                if let Some(g) = &guard {
                    check_vars(&[&g.lhs, &g.rhs], &params, &constants, line, col)?;
                }
                let total: f64 = successors.iter().map(|(w, _)| *w).sum();
                if !(total > 0.0) || successors.iter().any(|(w, _)| *w < 0.0) {
                    return Err(GrammarError::NonPositiveWeight { pred: name, line, col });
                }
                rules.push(Rule { predecessor: name, params, guard, successors });
            }
        }
    }

    let axiom = axiom.ok_or_else(|| GrammarError::Syntax {
        line: 1,
        col: 1,
        msg: "grammar has no axiom".into(),
    })?;
    Ok(Grammar { axiom, rules, constants, symbol_budget: DEFAULT_SYMBOL_BUDGET })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_grammar_parses() {
        let g = parse_grammar("axiom: A(1); A(l) -> F(l) A(l*0.9);").unwrap();
        assert_eq!(g.rules.len(), 1);
        assert_eq!(g.axiom.0, vec![Symbol::new("A", vec![1.0])]);
        assert_eq!(g.rules[0].predecessor, "A");
        assert_eq!(g.rules[0].params, vec!["l".to_string()]);
    }

    #[test]
    fn unbalanced_successor_is_rejected() {
        let err = parse_grammar("axiom: A; A -> [;").unwrap_err();
        assert!(matches!(err, GrammarError::UnbalancedBrackets { .. }), "{err}");
    }

    #[test]
    fn undeclared_parameter_is_rejected() {
        let err = parse_grammar("axiom: A; A -> F(q);").unwrap_err();
        assert!(matches!(err, GrammarError::UndeclaredParameter { .. }), "{err}");
    }

    #[test]
    fn duplicate_constant_is_rejected() {
        let err = parse_grammar("const a = 1; const a = 2; axiom: A;").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateConstant { .. }), "{err}");
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_grammar("axiom: A;\nA -> F(;\n").unwrap_err();
        match err {
            GrammarError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn canonical_print_round_trips() {
        let src = "const r = 0.9;\naxiom: !(0.05) A(1);\n\
                   A(l) : l > 0.05 -> 2: F(l) [ +(30) A(l * r) ] A(l * r) | 1: F(l);\n";
        let g1 = parse_grammar(src).unwrap();
        let g2 = parse_grammar(&g1.print_canonical()).unwrap();
        assert_eq!(g1, g2);
        // and printing is a fixed point
        assert_eq!(g1.print_canonical(), g2.print_canonical());
    }

    #[test]
    fn weighted_alternatives_and_guards() {
        let g = parse_grammar("axiom: B(2); B(x) : x >= 2 -> 3: B(x - 1) | 1: F(x);").unwrap();
        assert_eq!(g.rules[0].successors.len(), 2);
        assert_eq!(g.rules[0].successors[0].0, 3.0);
        assert!(g.rules[0].guard.is_some());
    }
}
