//! Tseitin flattening of the bit-vector/boolean/array fragment to CNF.
//!
//! Ints are 32-bit two's complement, string characters 16-bit, arrays
//! eagerly expanded over `0..max_array_length`. String function applications
//! are not interpreted here: each one gets fresh result literals and is
//! reported through the registry for the string solver to axiomatize.

pub mod circuits;

use crate::expr::{BinOp, Expr, ExprRef, StrFn, SymId};
use crate::satcore::{Lit, SatResult, Solver};
use circuits::Bv;
use std::collections::HashMap;
use std::rc::Rc;

pub const INT_WIDTH: usize = 32;
pub const CHAR_WIDTH: usize = 16;

#[derive(Debug, Clone)]
pub enum Bits {
    Bool(Lit),
    Bv(Bv),
    /// Array content: one vector per element slot.
    Arr(Vec<Bv>),
}

/// CNF under construction plus the expression-to-literal bitmap.
pub struct CnfFormula {
    num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
    tt: Lit,
    flushed_vars: u32,
    flushed_clauses: usize,
    bitmap: HashMap<usize, Bits>,
    sym_bits: HashMap<SymId, Bits>,
    keep: Vec<ExprRef>,
    str_apps: Vec<ExprRef>,
    str_app_cursor: usize,
    sym_width: HashMap<SymId, usize>,
    max_array_length: usize,
}

impl CnfFormula {
    pub fn new(max_array_length: usize) -> Self {
        let mut cnf = CnfFormula {
            num_vars: 0,
            clauses: Vec::new(),
            tt: Lit::pos(0),
            flushed_vars: 0,
            flushed_clauses: 0,
            bitmap: HashMap::new(),
            sym_bits: HashMap::new(),
            keep: Vec::new(),
            str_apps: Vec::new(),
            str_app_cursor: 0,
            sym_width: HashMap::new(),
            max_array_length,
        };
        let t = cnf.new_var();
        cnf.tt = Lit::pos(t);
        cnf.clauses.push(vec![cnf.tt]);
        cnf
    }

    pub fn max_array_length(&self) -> usize {
        self.max_array_length
    }

    /// The always-true literal.
    pub fn tt(&self) -> Lit {
        self.tt
    }

    pub fn ff(&self) -> Lit {
        self.tt.negate()
    }

    pub fn new_var(&mut self) -> u32 {
        let v = self.num_vars;
        self.num_vars += 1;
        v
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn add_clause(&mut self, lits: &[Lit]) {
        self.clauses.push(lits.to_vec());
    }

    /// Declares a symbol's bit width (chars are 16); defaults to 32.
    pub fn set_sym_width(&mut self, sym: SymId, width: usize) {
        self.sym_width.insert(sym, width);
    }

    /// Pushes variables and clauses added since the last flush into the
    /// solver. Returns false if the solver became trivially unsat.
    pub fn flush_into(&mut self, solver: &mut Solver) -> bool {
        solver.ensure_vars(self.num_vars);
        self.flushed_vars = self.num_vars;
        let mut ok = true;
        while self.flushed_clauses < self.clauses.len() {
            ok &= solver.add_clause(&self.clauses[self.flushed_clauses]);
            self.flushed_clauses += 1;
        }
        ok
    }

    /// Convenience: flush and solve.
    pub fn solve(&mut self, solver: &mut Solver) -> SatResult {
        if !self.flush_into(solver) {
            return SatResult::Unsat;
        }
        solver.solve(&[])
    }

    pub fn dimacs(&self) -> String {
        crate::satcore::dimacs::render(self.num_vars, &self.clauses)
    }

    /// String applications flattened since the previous call.
    pub fn take_new_string_apps(&mut self) -> Vec<ExprRef> {
        let out = self.str_apps[self.str_app_cursor..].to_vec();
        self.str_app_cursor = self.str_apps.len();
        out
    }

    /// Asserts a boolean expression at the top level.
    pub fn assert_expr(&mut self, e: &ExprRef) {
        let l = self.flatten_bool(e);
        self.add_clause(&[l]);
    }

    fn memo(&self, e: &ExprRef) -> Option<&Bits> {
        if let Expr::Sym(s) = &**e {
            return self.sym_bits.get(s);
        }
        self.bitmap.get(&(Rc::as_ptr(e) as usize))
    }

    fn remember(&mut self, e: &ExprRef, bits: Bits) {
        if let Expr::Sym(s) = &**e {
            self.sym_bits.insert(*s, bits);
            return;
        }
        self.bitmap.insert(Rc::as_ptr(e) as usize, bits);
        self.keep.push(e.clone());
    }

    pub fn flatten_bool(&mut self, e: &ExprRef) -> Lit {
        if let Some(Bits::Bool(l)) = self.memo(e) {
            return *l;
        }
        let l = match &**e {
            Expr::BoolConst(true) => self.tt(),
            Expr::BoolConst(false) => self.ff(),
            Expr::Sym(_) => Lit::pos(self.new_var()),
            Expr::Not(a) => self.flatten_bool(a).negate(),
            Expr::Bin(BinOp::And, a, b) => {
                let x = self.flatten_bool(a);
                let y = self.flatten_bool(b);
                self.lit_and(x, y)
            }
            Expr::Bin(BinOp::Or, a, b) => {
                let x = self.flatten_bool(a);
                let y = self.flatten_bool(b);
                self.lit_or(x, y)
            }
            Expr::Bin(BinOp::Implies, a, b) => {
                let x = self.flatten_bool(a);
                let y = self.flatten_bool(b);
                self.lit_or(x.negate(), y)
            }
            Expr::Bin(op, a, b) if op.is_cmp() => {
                let (x, y) = self.flatten_pair(a, b);
                match op {
                    BinOp::Eq => self.eq_bv(&x, &y),
                    BinOp::Ne => self.eq_bv(&x, &y).negate(),
                    BinOp::Lt => self.lt_s(&x, &y),
                    BinOp::Gt => self.lt_s(&y, &x),
                    BinOp::Le => self.lt_s(&y, &x).negate(),
                    BinOp::Ge => self.lt_s(&x, &y).negate(),
                    _ => unreachable!(),
                }
            }
            Expr::Ite(c, t, f) => {
                let cl = self.flatten_bool(c);
                let tl = self.flatten_bool(t);
                let fl = self.flatten_bool(f);
                self.lit_mux(cl, tl, fl)
            }
            Expr::StrApp(f, _) => {
                debug_assert!(matches!(f, StrFn::Equals | StrFn::StartsWith));
                let l = Lit::pos(self.new_var());
                self.register_app(e);
                l
            }
            Expr::MulNoOvf(a, b) => {
                let x = self.flatten_int(a);
                let y = self.flatten_int(b);
                self.mul_no_overflow(&x, &y)
            }
            other => panic!("expression kind not flattenable as bool: {other:?}"),
        };
        self.remember(e, Bits::Bool(l));
        l
    }

    fn register_app(&mut self, e: &ExprRef) {
        self.str_apps.push(e.clone());
    }

    /// Pads two int vectors to a common width; the narrower side is
    /// zero-extended (only 16-bit char values are ever narrow, and Java
    /// widens chars unsigned).
    fn flatten_pair(&mut self, a: &ExprRef, b: &ExprRef) -> (Bv, Bv) {
        let x = self.flatten_int(a);
        let y = self.flatten_int(b);
        let w = x.len().max(y.len());
        (self.zext(&x, w), self.zext(&y, w))
    }

    pub fn flatten_int(&mut self, e: &ExprRef) -> Bv {
        if let Some(Bits::Bv(v)) = self.memo(e) {
            return v.clone();
        }
        let v = match &**e {
            Expr::IntConst(n) => self.constant(*n as i64, INT_WIDTH),
            Expr::Null => self.constant(0, INT_WIDTH),
            Expr::Sym(s) => {
                let w = self.sym_width.get(s).copied().unwrap_or(INT_WIDTH);
                self.fresh_bv(w)
            }
            Expr::Bin(op, a, b) if op.is_arith() => {
                let (x, y) = self.flatten_pair(a, b);
                match op {
                    BinOp::Add => self.add_bv(&x, &y),
                    BinOp::Sub => self.sub_bv(&x, &y),
                    BinOp::Mul => self.mul_bv(&x, &y),
                    BinOp::Div => self.div_rem(&x, &y).0,
                    BinOp::Rem => self.div_rem(&x, &y).1,
                    _ => unreachable!(),
                }
            }
            Expr::Neg(a) => {
                let x = self.flatten_int(a);
                self.neg_bv(&x)
            }
            Expr::Ite(c, t, f) => {
                let cl = self.flatten_bool(c);
                let x = self.flatten_int(t);
                let y = self.flatten_int(f);
                let w = x.len().max(y.len());
                let x = self.zext(&x, w);
                let y = self.zext(&y, w);
                self.mux_bv(cl, &x, &y)
            }
            Expr::Select(content, idx) => {
                let arr = self.flatten_arr(content);
                let i = self.flatten_int(idx);
                // cascade over 0..max_array_length-1; out-of-range reads
                // fall through to the last slot (always guarded)
                let mut acc = arr.last().expect("nonempty array").clone();
                for k in (0..arr.len() - 1).rev() {
                    let kk = self.constant(k as i64, i.len());
                    let is_k = self.eq_bv(&i, &kk);
                    acc = self.mux_bv(is_k, &arr[k], &acc);
                }
                acc
            }
            Expr::StrApp(f, _) => {
                debug_assert!(matches!(f, StrFn::Len | StrFn::CharAt | StrFn::IndexOf));
                let v = self.fresh_bv(INT_WIDTH);
                self.register_app(e);
                v
            }
            other => panic!("expression kind not flattenable as int: {other:?}"),
        };
        self.remember(e, Bits::Bv(v.clone()));
        v
    }

    pub fn flatten_arr(&mut self, e: &ExprRef) -> Vec<Bv> {
        if let Some(Bits::Arr(a)) = self.memo(e) {
            return a.clone();
        }
        let n = self.max_array_length.max(1);
        let a = match &**e {
            Expr::Sym(_) => (0..n).map(|_| self.fresh_bv(INT_WIDTH)).collect::<Vec<_>>(),
            Expr::ArrZero => (0..n).map(|_| self.constant(0, INT_WIDTH)).collect::<Vec<_>>(),
            Expr::Store(content, idx, val) => {
                let base = self.flatten_arr(content);
                let i = self.flatten_int(idx);
                let v = self.flatten_int(val);
                let mut out = Vec::with_capacity(n);
                for (k, slot) in base.iter().enumerate() {
                    let kk = self.constant(k as i64, i.len());
                    let is_k = self.eq_bv(&i, &kk);
                    out.push(self.mux_bv(is_k, &v, slot));
                }
                out
            }
            Expr::Ite(c, t, f) => {
                let cl = self.flatten_bool(c);
                let x = self.flatten_arr(t);
                let y = self.flatten_arr(f);
                x.iter()
                    .zip(y.iter())
                    .map(|(a, b)| self.mux_bv(cl, a, b))
                    .collect()
            }
            other => panic!("expression kind not flattenable as array: {other:?}"),
        };
        self.remember(e, Bits::Arr(a.clone()));
        a
    }

    /// Decodes a previously flattened expression under a model. 32-bit
    /// vectors decode signed, narrower ones (chars) unsigned.
    pub fn eval_int(&self, e: &ExprRef, model: &[bool]) -> Option<i64> {
        match self.memo(e)? {
            Bits::Bv(v) => Some(Self::decode(v, model)),
            _ => None,
        }
    }

    pub fn eval_bool(&self, e: &ExprRef, model: &[bool]) -> Option<bool> {
        match self.memo(e)? {
            Bits::Bool(l) => Some(Self::lit_value(*l, model)),
            _ => None,
        }
    }

    pub fn eval_sym(&self, sym: SymId, model: &[bool]) -> Option<i64> {
        match self.sym_bits.get(&sym)? {
            Bits::Bv(v) => Some(Self::decode(v, model)),
            Bits::Bool(l) => Some(Self::lit_value(*l, model) as i64),
            _ => None,
        }
    }

    pub fn eval_sym_arr(&self, sym: SymId, model: &[bool]) -> Option<Vec<i64>> {
        match self.sym_bits.get(&sym)? {
            Bits::Arr(a) => Some(a.iter().map(|v| Self::decode(v, model)).collect()),
            _ => None,
        }
    }

    fn lit_value(l: Lit, model: &[bool]) -> bool {
        let v = model.get(l.var() as usize).copied().unwrap_or(false);
        v != l.is_neg()
    }

    fn decode(v: &Bv, model: &[bool]) -> i64 {
        let mut out: i64 = 0;
        for (i, &l) in v.iter().enumerate() {
            if Self::lit_value(l, model) {
                out |= 1 << i;
            }
        }
        if v.len() == INT_WIDTH && out >> (INT_WIDTH - 1) & 1 == 1 {
            out -= 1 << INT_WIDTH;
        }
        out
    }
}

#[cfg(test)]
mod tests;
