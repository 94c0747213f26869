//! Textual string-constraint systems (`minibmc strings file.sc`).
//!
//! A tiny declaration language for unit-testing the solver in isolation:
//!
//! ```text
//! str s;
//! str t;
//! require startswith(s, "ab");
//! require eq(substring(s, 1, 3), t);
//! require len(t) == 2;
//! ```
//!
//! Also hosts the concrete evaluator and the brute-force enumerator the
//! random differential suite uses as its oracle.

use super::{StrOutcome, StringSystem};
use crate::bvflat::CnfFormula;
use crate::expr::{escape_units, BinOp, Expr, ExprRef, StrFn, SymId, Ty};
use crate::interp;
use crate::satcore::Solver;
use crate::symex::SymbolTable;
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScError {
    #[error("string-constraint parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("type error: {0}")]
    Type(String),
}

pub struct ScSystem {
    pub syms: SymbolTable,
    pub str_vars: Vec<(String, SymId)>,
    pub int_vars: Vec<(String, SymId)>,
    pub requires: Vec<ExprRef>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Int(i32),
    Str(usize), // index into string pool
    Punct(&'a str),
}

fn lex(text: &str) -> Result<(Vec<(Tok<'_>, usize)>, Vec<Vec<u16>>), ScError> {
    let mut toks = Vec::new();
    let mut pool = Vec::new();
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '#' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            '(' | ')' | ',' | ';' | '+' | '-' | '*' | '/' | '%' => {
                toks.push((Tok::Punct(&text[i..i + 1]), i));
                i += 1;
            }
            '=' | '!' | '<' | '>' | '&' | '|' => {
                let two = text.get(i..i + 2).unwrap_or("");
                if matches!(two, "==" | "!=" | "<=" | ">=" | "&&" | "||") {
                    toks.push((Tok::Punct(&text[i..i + 2]), i));
                    i += 2;
                } else if matches!(c, '<' | '>' | '!') {
                    toks.push((Tok::Punct(&text[i..i + 1]), i));
                    i += 1;
                } else {
                    return Err(ScError::Parse { pos: i, msg: format!("stray '{c}'") });
                }
            }
            '"' => {
                let start = i;
                i += 1;
                let mut units = Vec::new();
                while i < b.len() && b[i] != b'"' {
                    let ch = text[i..].chars().next().expect("in-bounds");
                    let mut buf = [0u16; 2];
                    units.extend_from_slice(ch.encode_utf16(&mut buf));
                    i += ch.len_utf8();
                }
                if i >= b.len() {
                    return Err(ScError::Parse { pos: start, msg: "unterminated string".into() });
                }
                i += 1;
                pool.push(units);
                toks.push((Tok::Str(pool.len() - 1), start));
            }
            '\'' => {
                let start = i;
                let ch = text[i + 1..]
                    .chars()
                    .next()
                    .ok_or(ScError::Parse { pos: start, msg: "unterminated char".into() })?;
                i += 1 + ch.len_utf8();
                if i >= b.len() || b[i] != b'\'' {
                    return Err(ScError::Parse { pos: start, msg: "unterminated char".into() });
                }
                i += 1;
                toks.push((Tok::Int(ch as i32), start));
            }
            d if d.is_ascii_digit() => {
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let v: i64 = text[start..i].parse().map_err(|_| ScError::Parse {
                    pos: start,
                    msg: "integer out of range".into(),
                })?;
                if v > i32::MAX as i64 {
                    return Err(ScError::Parse { pos: start, msg: "integer out of range".into() });
                }
                toks.push((Tok::Int(v as i32), start));
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(&text[start..i]), start));
            }
            other => {
                return Err(ScError::Parse { pos: i, msg: format!("unexpected '{other}'") });
            }
        }
    }
    Ok((toks, pool))
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    pool: Vec<Vec<u16>>,
    pos: usize,
    syms: SymbolTable,
    vars: HashMap<String, (SymId, Ty)>,
    str_vars: Vec<(String, SymId)>,
    int_vars: Vec<(String, SymId)>,
}

#[derive(Clone)]
struct Typed {
    e: ExprRef,
    ty: Ty,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> ScError {
        let pos = self.toks.get(self.pos).map(|t| t.1).unwrap_or(0);
        ScError::Parse { pos, msg: msg.into() }
    }

    fn peek(&self) -> Option<Tok<'a>> {
        self.toks.get(self.pos).map(|t| t.0)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek() == Some(Tok::Punct(p)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ScError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{p}'")))
        }
    }

    fn file(&mut self) -> Result<Vec<ExprRef>, ScError> {
        let mut requires = Vec::new();
        while self.pos < self.toks.len() {
            match self.peek() {
                Some(Tok::Ident("str")) | Some(Tok::Ident("int")) => {
                    let is_str = matches!(self.peek(), Some(Tok::Ident("str")));
                    self.pos += 1;
                    let Some(Tok::Ident(name)) = self.peek() else {
                        return Err(self.err("expected variable name"));
                    };
                    self.pos += 1;
                    self.expect_punct(";")?;
                    if self.vars.contains_key(name) {
                        return Err(self.err(format!("duplicate variable '{name}'")));
                    }
                    let ty = if is_str { Ty::Str } else { Ty::Int };
                    let sym = self.syms.fresh(name.to_string(), ty);
                    self.vars.insert(name.to_string(), (sym, ty));
                    if is_str {
                        self.str_vars.push((name.to_string(), sym));
                    } else {
                        self.int_vars.push((name.to_string(), sym));
                    }
                }
                Some(Tok::Ident("require")) => {
                    self.pos += 1;
                    let e = self.bool_expr()?;
                    self.expect_punct(";")?;
                    requires.push(e);
                }
                _ => return Err(self.err("expected 'str', 'int' or 'require'")),
            }
        }
        Ok(requires)
    }

    fn bool_expr(&mut self) -> Result<ExprRef, ScError> {
        let mut e = self.and_expr()?;
        while self.eat_punct("||") {
            let r = self.and_expr()?;
            e = Expr::or(e, r);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<ExprRef, ScError> {
        let mut e = self.not_expr()?;
        while self.eat_punct("&&") {
            let r = self.not_expr()?;
            e = Expr::and(e, r);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<ExprRef, ScError> {
        if self.eat_punct("!") {
            let e = self.not_expr()?;
            return Ok(Expr::not(e));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<ExprRef, ScError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Punct(p @ ("==" | "!=" | "<" | "<=" | ">" | ">="))) => {
                self.pos += 1;
                p
            }
            _ => {
                if lhs.ty == Ty::Bool {
                    return Ok(lhs.e);
                }
                return Err(self.err("expected comparison"));
            }
        };
        let rhs = self.sum()?;
        match (lhs.ty, rhs.ty) {
            (Ty::Int, Ty::Int) => {
                let o = match op {
                    "==" => BinOp::Eq,
                    "!=" => BinOp::Ne,
                    "<" => BinOp::Lt,
                    "<=" => BinOp::Le,
                    ">" => BinOp::Gt,
                    _ => BinOp::Ge,
                };
                Ok(Expr::bin(o, lhs.e, rhs.e))
            }
            (Ty::Str, Ty::Str) if op == "==" => {
                Ok(Expr::str_app(StrFn::Equals, vec![lhs.e, rhs.e]))
            }
            (Ty::Str, Ty::Str) if op == "!=" => Ok(Expr::not(Expr::str_app(
                StrFn::Equals,
                vec![lhs.e, rhs.e],
            ))),
            _ => Err(self.err("operands of a comparison must both be int or both string")),
        }
    }

    fn sum(&mut self) -> Result<Typed, ScError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct("+")) => BinOp::Add,
                Some(Tok::Punct("-")) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.product()?;
            if lhs.ty != Ty::Int || rhs.ty != Ty::Int {
                return Err(self.err("arithmetic needs int operands"));
            }
            lhs = Typed { e: Expr::bin(op, lhs.e, rhs.e), ty: Ty::Int };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Typed, ScError> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct("*")) => BinOp::Mul,
                Some(Tok::Punct("/")) => BinOp::Div,
                Some(Tok::Punct("%")) => BinOp::Rem,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.atom()?;
            if lhs.ty != Ty::Int || rhs.ty != Ty::Int {
                return Err(self.err("arithmetic needs int operands"));
            }
            lhs = Typed { e: Expr::bin(op, lhs.e, rhs.e), ty: Ty::Int };
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Typed, ScError> {
        match self.peek() {
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Some(Tok::Punct("-")) => {
                self.pos += 1;
                let e = self.atom()?;
                if e.ty != Ty::Int {
                    return Err(self.err("negation needs an int"));
                }
                Ok(Typed { e: Rc::new(Expr::Neg(e.e)), ty: Ty::Int })
            }
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Typed { e: Expr::int(v), ty: Ty::Int })
            }
            Some(Tok::Str(idx)) => {
                self.pos += 1;
                Ok(Typed { e: Expr::str_const(&self.pool[idx]), ty: Ty::Str })
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat_punct("(") {
                    return self.call(name);
                }
                match self.vars.get(name) {
                    Some((sym, ty)) => Ok(Typed { e: Expr::sym(*sym), ty: *ty }),
                    None => Err(self.err(format!("unknown variable '{name}'"))),
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn call(&mut self, name: &str) -> Result<Typed, ScError> {
        let mut args = Vec::new();
        if self.peek() != Some(Tok::Punct(")")) {
            loop {
                // boolean functions never nest inside arithmetic here
                args.push(self.sum()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let (f, sig): (StrFn, &[Ty]) = match name {
            "len" => (StrFn::Len, &[Ty::Str]),
            "charat" => (StrFn::CharAt, &[Ty::Str, Ty::Int]),
            "indexof" => (StrFn::IndexOf, &[Ty::Str, Ty::Int, Ty::Int]),
            "substring" => (StrFn::Substring, &[Ty::Str, Ty::Int, Ty::Int]),
            "concat" => (StrFn::Concat, &[Ty::Str, Ty::Str]),
            "insert" => (StrFn::Insert, &[Ty::Str, Ty::Int, Ty::Str]),
            "of_int" => (StrFn::OfInt, &[Ty::Int]),
            "eq" => (StrFn::Equals, &[Ty::Str, Ty::Str]),
            "startswith" => (StrFn::StartsWith, &[Ty::Str, Ty::Str]),
            other => return Err(self.err(format!("unknown function '{other}'"))),
        };
        if args.len() != sig.len() || args.iter().zip(sig).any(|(a, t)| a.ty != *t) {
            return Err(self.err(format!("bad arguments for '{name}'")));
        }
        Ok(Typed {
            e: Expr::str_app(f, args.into_iter().map(|a| a.e).collect()),
            ty: f.result_ty(),
        })
    }
}

pub fn parse_sc(text: &str) -> Result<ScSystem, ScError> {
    let (toks, pool) = lex(text)?;
    let mut p = Parser {
        toks,
        pool,
        pos: 0,
        syms: SymbolTable::default(),
        vars: HashMap::new(),
        str_vars: Vec::new(),
        int_vars: Vec::new(),
    };
    let requires = p.file()?;
    Ok(ScSystem {
        syms: p.syms,
        str_vars: p.str_vars,
        int_vars: p.int_vars,
        requires,
    })
}

pub struct ScSolution {
    pub outcome: StrOutcome,
    pub strings: Vec<(String, Vec<u16>)>,
    pub ints: Vec<(String, i64)>,
}

/// Decides a parsed system with the refinement solver.
pub fn solve_sc(sys: &mut ScSystem, max_len: i32) -> ScSolution {
    let mut cnf = CnfFormula::new(1);
    let mut solver = Solver::new();
    let mut strings = StringSystem::new(max_len);
    for r in &sys.requires {
        cnf.assert_expr(r);
    }
    // make sure every declared string exists even if unconstrained
    for (_, sym) in &sys.str_vars {
        strings.ensure_var(&Expr::sym(*sym), &mut sys.syms, &mut cnf);
    }
    let (outcome, model) = strings.solve_strings(&mut sys.syms, &mut cnf, &mut solver);
    let mut out = ScSolution { outcome, strings: Vec::new(), ints: Vec::new() };
    if outcome == StrOutcome::Sat {
        for (name, sym) in &sys.str_vars {
            let v = strings.var_of_sym(*sym).expect("ensured above");
            out.strings.push((name.clone(), strings.complete(v, &cnf, &model)));
        }
        for (name, sym) in &sys.int_vars {
            out.ints.push((name.clone(), cnf.eval_sym(*sym, &model).unwrap_or(0)));
        }
    }
    out
}

/// CLI entry: solve and render.
pub fn run_sc(text: &str, max_len: i32) -> Result<String, ScError> {
    let mut sys = parse_sc(text)?;
    let sol = solve_sc(&mut sys, max_len);
    let mut out = String::new();
    match sol.outcome {
        StrOutcome::Unsat => out.push_str("UNSAT\n"),
        StrOutcome::Sat => {
            out.push_str("SAT\n");
            for (name, units) in &sol.strings {
                out.push_str(&format!("{name} = \"{}\"\n", escape_units(units)));
            }
            for (name, v) in &sol.ints {
                out.push_str(&format!("{name} = {v}\n"));
            }
        }
    }
    Ok(out)
}

/// Concrete value for the enumeration oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum ScVal {
    I(i64),
    S(Vec<u16>),
    B(bool),
}

/// Direct evaluation with the same concrete semantics as the interpreter;
/// the independent check for solver verdicts.
pub fn eval_concrete(e: &ExprRef, env: &HashMap<SymId, ScVal>) -> ScVal {
    use ScVal::*;
    let int = |v: &ScVal| match v {
        I(x) => *x,
        B(b) => *b as i64,
        S(_) => panic!("int expected"),
    };
    match &**e {
        Expr::IntConst(v) => I(*v as i64),
        Expr::BoolConst(v) => B(*v),
        Expr::StrConst(u) => S(u.to_vec()),
        Expr::Sym(s) => env.get(s).expect("free symbol in oracle").clone(),
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval_concrete(a, env), eval_concrete(b, env));
            match op {
                BinOp::And => B(matches!(x, B(true)) && matches!(y, B(true))),
                BinOp::Or => B(matches!(x, B(true)) || matches!(y, B(true))),
                BinOp::Implies => B(!matches!(x, B(true)) || matches!(y, B(true))),
                _ => {
                    let (x, y) = (int(&x) as i32, int(&y) as i32);
                    match op {
                        BinOp::Add => I(x.wrapping_add(y) as i64),
                        BinOp::Sub => I(x.wrapping_sub(y) as i64),
                        BinOp::Mul => I(x.wrapping_mul(y) as i64),
                        BinOp::Div => I(if y == 0 { 0 } else { x.wrapping_div(y) } as i64),
                        BinOp::Rem => I(if y == 0 { 0 } else { x.wrapping_rem(y) } as i64),
                        BinOp::Eq => B(x == y),
                        BinOp::Ne => B(x != y),
                        BinOp::Lt => B(x < y),
                        BinOp::Le => B(x <= y),
                        BinOp::Gt => B(x > y),
                        BinOp::Ge => B(x >= y),
                        _ => unreachable!(),
                    }
                }
            }
        }
        Expr::Neg(a) => I((int(&eval_concrete(a, env)) as i32).wrapping_neg() as i64),
        Expr::Not(a) => B(!matches!(eval_concrete(a, env), B(true))),
        Expr::Ite(c, t, f) => {
            if matches!(eval_concrete(c, env), B(true)) {
                eval_concrete(t, env)
            } else {
                eval_concrete(f, env)
            }
        }
        Expr::StrApp(f, args) => {
            let vals: Vec<ScVal> = args.iter().map(|a| eval_concrete(a, env)).collect();
            let s = |i: usize| match &vals[i] {
                S(u) => u.clone(),
                _ => panic!("string expected"),
            };
            let n = |i: usize| int(&vals[i]) as i32;
            match f {
                StrFn::Len => I(s(0).len() as i64),
                StrFn::CharAt => I(interp::str_charat(&s(0), n(1)) as i64),
                StrFn::IndexOf => I(interp::str_indexof(&s(0), n(1), n(2)) as i64),
                StrFn::Substring => S(interp::str_substring(&s(0), n(1), n(2))),
                StrFn::Concat => S(interp::str_concat(&s(0), &s(1))),
                StrFn::Insert => S(interp::str_insert(&s(0), n(1), &s(2))),
                StrFn::OfInt => S(interp::str_of_int(n(0))),
                StrFn::Equals => B(s(0) == s(1)),
                StrFn::StartsWith => B(interp::str_startswith(&s(0), &s(1))),
            }
        }
        other => panic!("oracle does not cover {other:?}"),
    }
}

/// Exhaustive enumeration of string assignments over a finite alphabet up to
/// `max_len`. Only systems without free int variables are enumerable.
pub fn brute_force_sc(sys: &ScSystem, alphabet: &[u16], max_len: usize) -> Option<Vec<Vec<u16>>> {
    assert!(sys.int_vars.is_empty(), "oracle enumerates string variables only");
    let mut universe: Vec<Vec<u16>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<u16>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        universe.extend(next.iter().cloned());
        frontier = next;
    }

    let k = sys.str_vars.len();
    let mut picks = vec![0usize; k];
    loop {
        let mut env = HashMap::new();
        for (i, (_, sym)) in sys.str_vars.iter().enumerate() {
            env.insert(*sym, ScVal::S(universe[picks[i]].clone()));
        }
        if sys
            .requires
            .iter()
            .all(|r| matches!(eval_concrete(r, &env), ScVal::B(true)))
        {
            return Some(picks.iter().map(|&p| universe[p].clone()).collect());
        }
        // odometer
        let mut i = 0;
        loop {
            if i == k {
                return None;
            }
            picks[i] += 1;
            if picks[i] < universe.len() {
                break;
            }
            picks[i] = 0;
            i += 1;
        }
    }
}

/// Deterministic random constraint system; the patterns stay closed under
/// mapping every non-alphabet character to an alphabet one, so enumeration
/// over the small alphabet is a sound oracle.
pub fn gen_random_system(seed: u64, n_vars: usize, alphabet: &[u16], max_len: i32) -> String {
    let mut state = seed | 1;
    let mut rng = move |m: u64| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state % m
    };
    let names = ["s", "t", "u"];
    let n = n_vars.clamp(1, 3);
    let mut out = String::new();
    for name in names.iter().take(n) {
        out.push_str(&format!("str {name};\n"));
    }
    let rand_lit = |rng: &mut dyn FnMut(u64) -> u64| {
        let l = rng(3);
        let mut s = String::from("\"");
        for _ in 0..l {
            let c = alphabet[rng(alphabet.len() as u64) as usize];
            s.push(char::from_u32(c as u32).expect("ascii alphabet"));
        }
        s.push('"');
        s
    };
    let var = |rng: &mut dyn FnMut(u64) -> u64| names[rng(n as u64) as usize];
    let str_term = |rng: &mut dyn FnMut(u64) -> u64| -> String {
        match rng(6) {
            0 => rand_lit(rng),
            1 => format!("concat({}, {})", var(rng), rand_lit(rng)),
            2 => format!("concat({}, {})", var(rng), var(rng)),
            3 => format!(
                "substring({}, {}, {})",
                var(rng),
                rng(3),
                rng(max_len as u64 + 1)
            ),
            4 => format!("insert({}, {}, {})", var(rng), rng(3), rand_lit(rng)),
            _ => var(rng).to_string(),
        }
    };
    let n_req = 1 + rng(3);
    for _ in 0..n_req {
        let req = match rng(6) {
            0 => format!("eq({}, {})", var(&mut rng), str_term(&mut rng)),
            1 => format!("startswith({}, {})", var(&mut rng), rand_lit(&mut rng)),
            2 => format!("len({}) == {}", var(&mut rng), rng(max_len as u64 + 1)),
            3 => format!("len({}) > {}", var(&mut rng), rng(max_len as u64)),
            4 => {
                let c = alphabet[rng(alphabet.len() as u64) as usize];
                format!(
                    "charat({}, {}) == '{}'",
                    var(&mut rng),
                    rng(3),
                    char::from_u32(c as u32).expect("ascii alphabet")
                )
            }
            _ => {
                let c = alphabet[rng(alphabet.len() as u64) as usize];
                let w = rng(4) as i64 - 1;
                format!(
                    "indexof({}, '{}', 0) == {}",
                    var(&mut rng),
                    char::from_u32(c as u32).expect("ascii alphabet"),
                    w
                )
            }
        };
        out.push_str(&format!("require {req};\n"));
    }
    out
}
