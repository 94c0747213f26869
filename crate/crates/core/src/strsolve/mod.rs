//! Quantified string-constraint solving by instantiation refinement.
//!
//! Every string-valued expression node becomes a (length, charArray) pair.
//! String operations turn into existential constraints plus universal axioms
//! of the shape `forall i. lo <= i < hi -> value_constraint(i)` whose char
//! accesses are at indices `i + offset`. The loop instantiates axioms at the
//! per-string index sets, solves the relaxation, checks candidate models
//! against the axioms (negation solved with a fresh SAT instance over the
//! single unknown `i`), and grows the index sets until a verdict sticks:
//! an unsatisfiable relaxation is final, and a model surviving every axiom
//! check is a real model.

pub mod sc;

use crate::bvflat::{CnfFormula, CHAR_WIDTH};
use crate::expr::{BinOp, Expr, ExprRef, StrFn, SymId, Ty};
use crate::satcore::{SatResult, Solver};
use crate::symex::SymbolTable;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrVarId(pub usize);

#[derive(Debug)]
pub struct StrVar {
    pub name: String,
    /// 32-bit length symbol.
    pub len: SymId,
    /// Array marker standing for the char array inside axiom templates;
    /// never flattened, always substituted away.
    pub content: SymId,
    /// Defining node, kept for diagnostics.
    pub node: ExprRef,
    /// Index expressions at which axioms get instantiated.
    pub index_set: Vec<ExprRef>,
    index_keys: HashSet<String>,
    /// Materialized char accesses: canonical index -> 16-bit char symbol.
    pub accesses: Vec<(ExprRef, SymId)>,
    access_keys: HashMap<String, SymId>,
}

/// `forall i. lo <= i < hi -> constraint(i)`; accesses list the strings the
/// constraint touches and the offset of each access (index = i + offset).
#[derive(Debug)]
pub struct UniversalAxiom {
    pub lo: ExprRef,
    pub hi: ExprRef,
    pub bound: SymId,
    pub constraint: ExprRef,
    pub accesses: Vec<(StrVarId, ExprRef)>,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrOutcome {
    Sat,
    Unsat,
}

pub struct StringSystem {
    pub max_len: i32,
    pub vars: Vec<StrVar>,
    pub axioms: Vec<UniversalAxiom>,
    node_var: HashMap<usize, StrVarId>,
    sym_var: HashMap<SymId, StrVarId>,
    keep: Vec<ExprRef>,
    instantiated: HashSet<(usize, String)>,
}

impl StringSystem {
    pub fn new(max_len: i32) -> Self {
        StringSystem {
            max_len,
            vars: Vec::new(),
            axioms: Vec::new(),
            node_var: HashMap::new(),
            sym_var: HashMap::new(),
            keep: Vec::new(),
            instantiated: HashSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Registers the SSA string definitions (in assignment order) so string
    /// symbols alias the variable of their defining expression.
    pub fn add_defs(
        &mut self,
        defs: &[(SymId, ExprRef)],
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) {
        for (sym, rhs) in defs {
            let v = self.ensure_var(rhs, syms, cnf);
            self.sym_var.insert(*sym, v);
        }
    }

    fn canon_key(e: &ExprRef) -> String {
        crate::expr::render(e, &crate::expr::NoSyms)
    }

    /// Canonical rendering of an index expression (test helper).
    pub fn canon_key_pub(e: &ExprRef) -> String {
        Self::canon_key(&Self::canon(e))
    }

    /// Normalizes index arithmetic: flattens +/- chains, folds constants,
    /// sorts symbolic atoms, so equal indices get equal keys.
    pub fn canon(e: &ExprRef) -> ExprRef {
        fn collect(e: &ExprRef, sign: i64, atoms: &mut Vec<(ExprRef, i64)>, k: &mut i64) {
            match &**e {
                Expr::IntConst(c) => *k += sign * *c as i64,
                Expr::Bin(BinOp::Add, a, b) => {
                    collect(a, sign, atoms, k);
                    collect(b, sign, atoms, k);
                }
                Expr::Bin(BinOp::Sub, a, b) => {
                    collect(a, sign, atoms, k);
                    collect(b, -sign, atoms, k);
                }
                Expr::Neg(a) => collect(a, -sign, atoms, k),
                _ => atoms.push((e.clone(), sign)),
            }
        }
        let mut atoms = Vec::new();
        let mut k = 0i64;
        collect(e, 1, &mut atoms, &mut k);
        // merge equal atoms
        let mut merged: Vec<(String, ExprRef, i64)> = Vec::new();
        for (a, s) in atoms {
            let key = Self::canon_key(&a);
            match merged.iter_mut().find(|(k2, _, _)| *k2 == key) {
                Some((_, _, c)) => *c += s,
                None => merged.push((key, a, s)),
            }
        }
        merged.retain(|(_, _, c)| *c != 0);
        merged.sort_by(|a, b| (b.2.signum()).cmp(&a.2.signum()).then(a.0.cmp(&b.0)));
        let mut acc: Option<ExprRef> = None;
        for (_, a, c) in merged {
            let term = match c {
                1 => a,
                -1 => Rc::new(Expr::Neg(a)),
                c => Expr::bin(BinOp::Mul, Expr::int(c as i32), a),
            };
            acc = Some(match acc {
                None if c == -1 => term,
                None => term,
                Some(prev) => Expr::add(prev, term),
            });
        }
        let k = k as i32;
        match acc {
            None => Expr::int(k),
            Some(a) if k == 0 => a,
            Some(a) if k < 0 => Expr::sub(a, Expr::int(-k)),
            Some(a) => Expr::add(a, Expr::int(k)),
        }
    }

    fn add_index(&mut self, v: StrVarId, idx: &ExprRef) -> bool {
        let idx = Self::canon(idx);
        let key = Self::canon_key(&idx);
        let var = &mut self.vars[v.0];
        if var.index_keys.insert(key) {
            var.index_set.push(idx);
            true
        } else {
            false
        }
    }

    /// Char access `var[idx]` as a 16-bit symbol, with functional
    /// consistency against every earlier access of the same string. The
    /// index joins the string's index set.
    fn access(
        &mut self,
        v: StrVarId,
        idx: &ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) -> SymId {
        let idx = Self::canon(idx);
        let key = Self::canon_key(&idx);
        if let Some(&c) = self.vars[v.0].access_keys.get(&key) {
            return c;
        }
        let name = format!("{}[{}]", self.vars[v.0].name, key);
        let chr = syms.fresh(name, Ty::Int);
        cnf.set_sym_width(chr, CHAR_WIDTH);
        let prior: Vec<(ExprRef, SymId)> = self.vars[v.0].accesses.clone();
        for (pidx, pchr) in prior {
            let same = Expr::eq(idx.clone(), pidx.clone());
            let agree = Expr::eq(Expr::sym(chr), Expr::sym(pchr));
            cnf.assert_expr(&Expr::implies(same, agree));
        }
        let var = &mut self.vars[v.0];
        var.access_keys.insert(key, chr);
        var.accesses.push((idx.clone(), chr));
        self.add_index(v, &idx);
        chr
    }

    /// The (length, charArray) pair of a string-valued expression node,
    /// axiomatizing it on first sight.
    pub fn ensure_var(
        &mut self,
        node: &ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) -> StrVarId {
        if let Expr::Sym(s) = &**node {
            if let Some(&v) = self.sym_var.get(s) {
                return v;
            }
        } else if let Some(&v) = self.node_var.get(&(Rc::as_ptr(node) as usize)) {
            return v;
        }

        let id = StrVarId(self.vars.len());
        let name = match &**node {
            Expr::Sym(s) => syms.name(*s).to_string(),
            _ => format!("str{}", self.vars.len()),
        };
        let len = syms.fresh(format!("{name}.length"), Ty::Int);
        let content = syms.fresh(format!("{name}.charArray"), Ty::Arr);
        self.vars.push(StrVar {
            name,
            len,
            content,
            node: node.clone(),
            index_set: Vec::new(),
            index_keys: HashSet::new(),
            accesses: Vec::new(),
            access_keys: HashMap::new(),
        });
        match &**node {
            Expr::Sym(s) => {
                self.sym_var.insert(*s, id);
            }
            _ => {
                self.node_var.insert(Rc::as_ptr(node) as usize, id);
                self.keep.push(node.clone());
            }
        }

        // every string is bounded: 0 <= length <= max_len
        let len_e = Expr::sym(len);
        cnf.assert_expr(&Expr::ge(len_e.clone(), Expr::int(0)));
        cnf.assert_expr(&Expr::le(len_e.clone(), Expr::int(self.max_len)));
        // boundary indices seed the index set
        self.add_index(id, &Expr::int(0));
        self.add_index(id, &Expr::sub(len_e.clone(), Expr::int(1)));

        match &**node {
            Expr::Sym(_) => {}
            Expr::StrConst(units) => {
                let units = units.clone();
                cnf.assert_expr(&Expr::eq(len_e, Expr::int(units.len() as i32)));
                for (k, &u) in units.iter().enumerate() {
                    let chr = self.access(id, &Expr::int(k as i32), syms, cnf);
                    cnf.assert_expr(&Expr::eq(Expr::sym(chr), Expr::int(u as i32)));
                }
            }
            Expr::Ite(c, a, b) => {
                let va = self.ensure_var(a, syms, cnf);
                let vb = self.ensure_var(b, syms, cnf);
                let la = Expr::sym(self.vars[va.0].len);
                let lb = Expr::sym(self.vars[vb.0].len);
                cnf.assert_expr(&Expr::eq(len_e.clone(), Expr::ite(c.clone(), la, lb)));
                let zero = Expr::int(0);
                let taken_hi = Expr::ite(c.clone(), len_e.clone(), zero.clone());
                self.universal_copy(id, va, zero.clone(), taken_hi, zero.clone(), "ite-then", syms);
                let else_hi = Expr::ite(c.clone(), zero.clone(), len_e.clone());
                self.universal_copy(id, vb, zero.clone(), else_hi, zero, "ite-else", syms);
            }
            Expr::StrApp(f, args) => self.axiomatize_app(id, *f, args, syms, cnf),
            other => panic!("not a string-valued node: {other:?}"),
        }
        id
    }

    /// Fresh symbol constrained equal to an expression; keeps axiom bounds
    /// readable (constants stay inline).
    fn defined(
        &mut self,
        name: &str,
        e: ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) -> ExprRef {
        if let Expr::IntConst(_) = &*e {
            return e;
        }
        let sym = syms.fresh(name.to_string(), Ty::Int);
        cnf.assert_expr(&Expr::eq(Expr::sym(sym), e));
        Expr::sym(sym)
    }

    /// Axiom `forall i. lo <= i < hi -> dst[i] == src[i - shift]`.
    fn universal_copy(
        &mut self,
        dst: StrVarId,
        src: StrVarId,
        lo: ExprRef,
        hi: ExprRef,
        shift: ExprRef,
        provenance: &str,
        syms: &mut SymbolTable,
    ) {
        let bound = syms.fresh(format!("i{}", self.axioms.len()), Ty::Int);
        let i = Expr::sym(bound);
        let dst_sel = Rc::new(Expr::Select(Expr::sym(self.vars[dst.0].content), i.clone()));
        let src_idx = Self::canon(&Expr::sub(i.clone(), shift.clone()));
        let src_sel = Rc::new(Expr::Select(Expr::sym(self.vars[src.0].content), src_idx));
        let constraint = Expr::eq(dst_sel, src_sel);
        self.axioms.push(UniversalAxiom {
            lo,
            hi,
            bound,
            constraint,
            accesses: vec![
                (dst, Expr::int(0)),
                (src, Self::canon(&Rc::new(Expr::Neg(shift)))),
            ],
            provenance: format!("{provenance}({} <- {})", self.vars[dst.0].name, self.vars[src.0].name),
        });
    }

    fn axiomatize_app(
        &mut self,
        id: StrVarId,
        f: StrFn,
        args: &[ExprRef],
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) {
        let len_e = Expr::sym(self.vars[id.0].len);
        match f {
            StrFn::Substring => {
                let vs = self.ensure_var(&args[0], syms, cnf);
                let ls = Expr::sym(self.vars[vs.0].len);
                let name = self.vars[id.0].name.clone();
                let b = self.defined(
                    &format!("{name}.begin"),
                    Expr::clamp(args[1].clone(), Expr::int(0), ls.clone()),
                    syms,
                    cnf,
                );
                let e = self.defined(
                    &format!("{name}.end"),
                    Expr::clamp(args[2].clone(), b.clone(), ls),
                    syms,
                    cnf,
                );
                cnf.assert_expr(&Expr::eq(len_e.clone(), Expr::sub(e, b.clone())));
                self.universal_copy(id, vs, Expr::int(0), len_e, b, "substring", syms);
            }
            StrFn::Concat | StrFn::Insert => {
                let (s, t, off_raw) = if f == StrFn::Concat {
                    (&args[0], &args[1], None)
                } else {
                    (&args[0], &args[2], Some(args[1].clone()))
                };
                let vs = self.ensure_var(s, syms, cnf);
                let vt = self.ensure_var(t, syms, cnf);
                let ls = Expr::sym(self.vars[vs.0].len);
                let lt = Expr::sym(self.vars[vt.0].len);
                let off = match off_raw {
                    Some(o) => {
                        let name = self.vars[id.0].name.clone();
                        self.defined(
                            &format!("{name}.offset"),
                            Expr::clamp(o, Expr::int(0), ls.clone()),
                            syms,
                            cnf,
                        )
                    }
                    None => ls.clone(),
                };
                // r.length = s.length + t.length
                cnf.assert_expr(&Expr::eq(len_e.clone(), Expr::add(ls, lt.clone())));
                let name = if f == StrFn::Concat { "concat" } else { "insert" };
                // forall i. 0 <= i < offset -> r[i] = s[i]
                self.universal_copy(id, vs, Expr::int(0), off.clone(), Expr::int(0), name, syms);
                // forall i. offset <= i < offset + t.length -> r[i] = t[i - offset]
                let mid_hi = Expr::add(off.clone(), lt.clone());
                self.universal_copy(id, vt, off.clone(), mid_hi.clone(), off.clone(), name, syms);
                // forall i. offset + t.length <= i < r.length -> r[i] = s[i - t.length]
                self.universal_copy(id, vs, mid_hi, len_e, lt, name, syms);
            }
            StrFn::OfInt => {
                self.axiomatize_of_int(id, &args[0], syms, cnf);
            }
            other => panic!("string-valued application expected, got {}", other.name()),
        }
    }

    /// Decimal rendering: digit recurrence over at most 10 digits plus sign,
    /// all existential.
    fn axiomatize_of_int(
        &mut self,
        id: StrVarId,
        n: &ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) {
        let len_e = Expr::sym(self.vars[id.0].len);
        let neg = Expr::lt(n.clone(), Expr::int(0));
        let ten = Expr::int(10);
        // d[j] = n / 10^j, digit[j] = |d[j] % 10|
        let mut d = vec![n.clone()];
        for j in 1..10 {
            d.push(Expr::bin(BinOp::Div, d[j - 1].clone(), ten.clone()));
        }
        let digits: Vec<ExprRef> = d
            .iter()
            .map(|dj| {
                let r = Expr::bin(BinOp::Rem, dj.clone(), ten.clone());
                Expr::ite(Expr::lt(r.clone(), Expr::int(0)), Rc::new(Expr::Neg(r.clone())), r)
            })
            .collect();
        // number of digits: 1 + |{j >= 1 : d[j] != 0}|
        let mut ndigits = Expr::int(1);
        for dj in d.iter().skip(1) {
            ndigits = Expr::add(
                ndigits,
                Expr::ite(Expr::ne(dj.clone(), Expr::int(0)), Expr::int(1), Expr::int(0)),
            );
        }
        let sign_len = Expr::ite(neg.clone(), Expr::int(1), Expr::int(0));
        cnf.assert_expr(&Expr::eq(len_e.clone(), Expr::add(ndigits.clone(), sign_len)));
        // char at p: '-' for a leading sign, else digit (len-1-p) from the right
        for p in 0..11 {
            let pe = Expr::int(p);
            let chr = self.access(id, &pe, syms, cnf);
            let from_right = Expr::sub(Expr::sub(len_e.clone(), Expr::int(1)), pe.clone());
            let mut digit_char: ExprRef = Expr::int('0' as i32);
            for (j, dj) in digits.iter().enumerate() {
                digit_char = Expr::ite(
                    Expr::eq(from_right.clone(), Expr::int(j as i32)),
                    Expr::add(Expr::int('0' as i32), dj.clone()),
                    digit_char,
                );
            }
            let value = Expr::ite(
                Expr::and(neg.clone(), Expr::eq(pe.clone(), Expr::int(0))),
                Expr::int('-' as i32),
                digit_char,
            );
            cnf.assert_expr(&Expr::implies(
                Expr::lt(pe, len_e.clone()),
                Expr::eq(Expr::sym(chr), value),
            ));
        }
    }

    /// Ties one registered int/bool-valued application to its axioms.
    pub fn tie_app(&mut self, app: &ExprRef, syms: &mut SymbolTable, cnf: &mut CnfFormula) {
        let Expr::StrApp(f, args) = &**app else {
            panic!("registry holds applications only");
        };
        match f {
            StrFn::Len => {
                let v = self.ensure_var(&args[0], syms, cnf);
                cnf.assert_expr(&Expr::eq(app.clone(), Expr::sym(self.vars[v.0].len)));
            }
            StrFn::CharAt => {
                let v = self.ensure_var(&args[0], syms, cnf);
                let i = &args[1];
                let len = Expr::sym(self.vars[v.0].len);
                let chr = self.access(v, i, syms, cnf);
                let in_range = Expr::and(
                    Expr::ge(i.clone(), Expr::int(0)),
                    Expr::lt(i.clone(), len),
                );
                cnf.assert_expr(&Expr::eq(
                    app.clone(),
                    Expr::ite(in_range, Expr::sym(chr), Expr::int(0)),
                ));
            }
            StrFn::IndexOf => {
                let v = self.ensure_var(&args[0], syms, cnf);
                let c = &args[1];
                let len = Expr::sym(self.vars[v.0].len);
                let from_name = format!("{}.from", self.vars[v.0].name);
                let from = self.defined(
                    &from_name,
                    Expr::clamp(args[2].clone(), Expr::int(0), len.clone()),
                    syms,
                    cnf,
                );
                let w = app.clone();
                let chr_w = self.access(v, &w, syms, cnf);
                let found = Expr::and(
                    Expr::and(Expr::ge(w.clone(), from.clone()), Expr::lt(w.clone(), len.clone())),
                    Expr::eq(Expr::sym(chr_w), c.clone()),
                );
                cnf.assert_expr(&Expr::or(Expr::eq(w.clone(), Expr::int(-1)), found));
                // forall i. from <= i < (w == -1 ? len : w) -> s[i] != c
                let hi = Expr::ite(Expr::eq(w.clone(), Expr::int(-1)), len, w);
                let bound = syms.fresh(format!("i{}", self.axioms.len()), Ty::Int);
                let i = Expr::sym(bound);
                let sel = Rc::new(Expr::Select(Expr::sym(self.vars[v.0].content), i.clone()));
                self.axioms.push(UniversalAxiom {
                    lo: from,
                    hi,
                    bound,
                    constraint: Expr::ne(sel, c.clone()),
                    accesses: vec![(v, Expr::int(0))],
                    provenance: format!("indexof({})", self.vars[v.0].name),
                });
            }
            StrFn::Equals | StrFn::StartsWith => {
                let vs = self.ensure_var(&args[0], syms, cnf);
                let vt = self.ensure_var(&args[1], syms, cnf);
                let ls = Expr::sym(self.vars[vs.0].len);
                let lt = Expr::sym(self.vars[vt.0].len);
                let b = app.clone();
                let prefix_only = *f == StrFn::StartsWith;
                // length side
                if prefix_only {
                    cnf.assert_expr(&Expr::implies(b.clone(), Expr::ge(ls.clone(), lt.clone())));
                } else {
                    cnf.assert_expr(&Expr::implies(b.clone(), Expr::eq(ls.clone(), lt.clone())));
                }
                // negative side: a witness index where they differ
                let w = Expr::sym(syms.fresh(
                    format!("{}≠{}", self.vars[vs.0].name, self.vars[vt.0].name),
                    Ty::Int,
                ));
                let ws = self.access(vs, &w, syms, cnf);
                let wt = self.access(vt, &w, syms, cnf);
                let len_mismatch = if prefix_only {
                    Expr::lt(ls, lt.clone())
                } else {
                    Expr::ne(ls, lt.clone())
                };
                let char_mismatch = Expr::and(
                    Expr::and(Expr::ge(w.clone(), Expr::int(0)), Expr::lt(w.clone(), lt.clone())),
                    Expr::ne(Expr::sym(ws), Expr::sym(wt)),
                );
                cnf.assert_expr(&Expr::implies(
                    Expr::not(b.clone()),
                    Expr::or(len_mismatch, char_mismatch),
                ));
                // forall i. 0 <= i < (b ? |prefix| : 0) -> s[i] == t[i]
                let hi = Expr::ite(b.clone(), lt, Expr::int(0));
                let bound = syms.fresh(format!("i{}", self.axioms.len()), Ty::Int);
                let i = Expr::sym(bound);
                let s_sel = Rc::new(Expr::Select(Expr::sym(self.vars[vs.0].content), i.clone()));
                let t_sel = Rc::new(Expr::Select(Expr::sym(self.vars[vt.0].content), i.clone()));
                self.axioms.push(UniversalAxiom {
                    lo: Expr::int(0),
                    hi,
                    bound,
                    constraint: Expr::eq(s_sel, t_sel),
                    accesses: vec![(vs, Expr::int(0)), (vt, Expr::int(0))],
                    provenance: format!(
                        "{}({}, {})",
                        f.name(),
                        self.vars[vs.0].name,
                        self.vars[vt.0].name
                    ),
                });
            }
            _ => panic!("string-valued application in the int registry"),
        }
    }

    /// Substitutes the bound variable and materializes char accesses,
    /// turning an axiom body into an existential formula.
    fn instance_expr(
        &mut self,
        ax: usize,
        i0: &ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) -> ExprRef {
        let bound = self.axioms[ax].bound;
        let lo = self.axioms[ax].lo.clone();
        let hi = self.axioms[ax].hi.clone();
        let body = self.axioms[ax].constraint.clone();
        let substituted = self.subst(&body, bound, i0, syms, cnf);
        let guard = Expr::and(
            Expr::le(lo, i0.clone()),
            Expr::lt(i0.clone(), hi),
        );
        Expr::implies(guard, substituted)
    }

    /// Replaces `bound -> value` and resolves `Select(content, e)` into char
    /// access symbols.
    fn subst(
        &mut self,
        e: &ExprRef,
        bound: SymId,
        value: &ExprRef,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
    ) -> ExprRef {
        match &**e {
            Expr::Sym(s) if *s == bound => value.clone(),
            Expr::Select(content, idx) => {
                let Expr::Sym(c) = &**content else {
                    panic!("axiom selects are over content markers")
                };
                let v = self
                    .vars
                    .iter()
                    .position(|sv| sv.content == *c)
                    .map(StrVarId)
                    .expect("content marker registered");
                let idx = self.subst(idx, bound, value, syms, cnf);
                let chr = self.access(v, &idx, syms, cnf);
                Expr::sym(chr)
            }
            Expr::Bin(op, a, b) => {
                let x = self.subst(a, bound, value, syms, cnf);
                let y = self.subst(b, bound, value, syms, cnf);
                Expr::bin(*op, x, y)
            }
            Expr::Not(a) => {
                let x = self.subst(a, bound, value, syms, cnf);
                Expr::not(x)
            }
            Expr::Neg(a) => {
                let x = self.subst(a, bound, value, syms, cnf);
                Rc::new(Expr::Neg(x))
            }
            Expr::Ite(c, t, f) => {
                let cc = self.subst(c, bound, value, syms, cnf);
                let tt = self.subst(t, bound, value, syms, cnf);
                let ff = self.subst(f, bound, value, syms, cnf);
                Expr::ite(cc, tt, ff)
            }
            _ => e.clone(),
        }
    }

    /// One instantiation sweep: every axiom at every index currently in the
    /// sets of its strings. Returns whether anything new was added.
    pub fn instantiate_new(&mut self, syms: &mut SymbolTable, cnf: &mut CnfFormula) -> bool {
        let mut added = false;
        let mut worklist: Vec<(usize, ExprRef)> = Vec::new();
        for ax in 0..self.axioms.len() {
            for (v, off) in self.axioms[ax].accesses.clone() {
                for idx in self.vars[v.0].index_set.clone() {
                    let i0 = Self::canon(&Expr::sub(idx, off.clone()));
                    worklist.push((ax, i0));
                }
            }
        }
        for (ax, i0) in worklist {
            let key = (ax, Self::canon_key(&i0));
            if self.instantiated.contains(&key) {
                continue;
            }
            self.instantiated.insert(key);
            let inst = self.instance_expr(ax, &i0, syms, cnf);
            cnf.assert_expr(&inst);
            added = true;
        }
        added
    }

    /// Structural evaluation of an expression under a propositional model;
    /// unconstrained symbols read as 0.
    fn eval(&self, e: &ExprRef, cnf: &CnfFormula, model: &[bool]) -> i64 {
        match &**e {
            Expr::IntConst(v) => *v as i64,
            Expr::BoolConst(v) => *v as i64,
            Expr::Null => 0,
            Expr::Sym(s) => cnf.eval_sym(*s, model).unwrap_or(0),
            Expr::Bin(op, a, b) => {
                let x = self.eval(a, cnf, model);
                let y = self.eval(b, cnf, model);
                let w = |v: i64| (v as i32) as i64;
                match op {
                    BinOp::Add => w(x + y),
                    BinOp::Sub => w(x - y),
                    BinOp::Mul => w(x * y),
                    BinOp::Div => {
                        if y == 0 {
                            0
                        } else {
                            w((x as i32).wrapping_div(y as i32) as i64)
                        }
                    }
                    BinOp::Rem => {
                        if y == 0 {
                            0
                        } else {
                            w((x as i32).wrapping_rem(y as i32) as i64)
                        }
                    }
                    BinOp::Eq => (x == y) as i64,
                    BinOp::Ne => (x != y) as i64,
                    BinOp::Lt => (x < y) as i64,
                    BinOp::Le => (x <= y) as i64,
                    BinOp::Gt => (x > y) as i64,
                    BinOp::Ge => (x >= y) as i64,
                    BinOp::And => (x != 0 && y != 0) as i64,
                    BinOp::Or => (x != 0 || y != 0) as i64,
                    BinOp::Implies => (x == 0 || y != 0) as i64,
                }
            }
            Expr::Neg(a) => ((-(self.eval(a, cnf, model) as i32)) as i32) as i64,
            Expr::Not(a) => (self.eval(a, cnf, model) == 0) as i64,
            Expr::Ite(c, t, f) => {
                if self.eval(c, cnf, model) != 0 {
                    self.eval(t, cnf, model)
                } else {
                    self.eval(f, cnf, model)
                }
            }
            Expr::StrApp(..) => cnf
                .eval_int(e, model)
                .or_else(|| cnf.eval_bool(e, model).map(|b| b as i64))
                .expect("applications are flattened before model checks"),
            other => panic!("model evaluation does not cover {other:?}"),
        }
    }

    /// Completed string value of a variable under a model: known char points
    /// fill their neighborhoods (below the first known index the first known
    /// value, above the last the last).
    pub fn complete(&self, v: StrVarId, cnf: &CnfFormula, model: &[bool]) -> Vec<u16> {
        let var = &self.vars[v.0];
        let len = self
            .eval(&Expr::sym(var.len), cnf, model)
            .clamp(0, self.max_len as i64) as usize;
        let mut points: Vec<(i64, u16)> = Vec::new();
        for (idx, chr) in &var.accesses {
            let i = self.eval(idx, cnf, model);
            if i >= 0 && (i as usize) < len {
                let c = cnf.eval_sym(*chr, model).unwrap_or(0) as u16;
                if !points.iter().any(|(pi, _)| *pi == i) {
                    points.push((i, c));
                }
            }
        }
        points.sort();
        (0..len as i64)
            .map(|i| {
                match points.iter().find(|(pi, _)| *pi >= i) {
                    Some((_, c)) => *c,
                    // above the last known index: the last known value
                    None => points.last().map(|(_, c)| *c).unwrap_or(0),
                }
            })
            .collect()
    }

    /// Checks every axiom against the candidate model: substitute model
    /// values, leave the bound variable as the only unknown, and solve the
    /// negation with a fresh SAT instance. Returns the first violated axiom
    /// and its witness index.
    pub fn check_model(&self, cnf: &CnfFormula, model: &[bool]) -> Option<(usize, i64)> {
        for (ax_idx, ax) in self.axioms.iter().enumerate() {
            let lo = self.eval(&ax.lo, cnf, model);
            let hi = self.eval(&ax.hi, cnf, model);
            if lo >= hi {
                continue;
            }
            // completed strings for every access in this axiom
            let completed: HashMap<usize, Vec<u16>> = ax
                .accesses
                .iter()
                .map(|(v, _)| (v.0, self.complete(*v, cnf, model)))
                .collect();

            let mut sub = CnfFormula::new(1);
            let mut solver = Solver::new();
            let mut syms = SymbolTable::default();
            let i_sym = syms.fresh("i".into(), Ty::Int);
            let i = Expr::sym(i_sym);
            sub.assert_expr(&Expr::ge(i.clone(), Expr::int(lo as i32)));
            sub.assert_expr(&Expr::lt(i.clone(), Expr::int(hi as i32)));
            let body = self.grounded(&ax.constraint, ax.bound, &i, cnf, model, &completed);
            sub.assert_expr(&Expr::not(body));
            if sub.solve(&mut solver) == SatResult::Sat {
                let witness = sub.eval_sym(i_sym, &solver.model()).unwrap_or(lo);
                return Some((ax_idx, witness));
            }
        }
        None
    }

    /// Grounds an axiom body: model values for every symbol except the
    /// bound variable; char accesses become completion ite-chains over the
    /// known points (`i <= 3 ? 'a' : 'b'`).
    fn grounded(
        &self,
        e: &ExprRef,
        bound: SymId,
        i: &ExprRef,
        cnf: &CnfFormula,
        model: &[bool],
        completed: &HashMap<usize, Vec<u16>>,
    ) -> ExprRef {
        match &**e {
            Expr::Sym(s) if *s == bound => i.clone(),
            Expr::Sym(s) => Expr::int(cnf.eval_sym(*s, model).unwrap_or(0) as i32),
            Expr::IntConst(_) | Expr::BoolConst(_) | Expr::Null => e.clone(),
            Expr::Select(content, idx) => {
                let Expr::Sym(c) = &**content else { panic!("content marker") };
                let v = self
                    .vars
                    .iter()
                    .position(|sv| sv.content == *c)
                    .expect("registered marker");
                let idx = self.grounded(idx, bound, i, cnf, model, completed);
                let chars = &completed[&v];
                // completion rule as an ite chain over the known prefix
                let mut out: ExprRef = Expr::int(chars.last().copied().unwrap_or(0) as i32);
                for (k, c) in chars.iter().enumerate().rev().skip(1) {
                    out = Expr::ite(
                        Expr::le(idx.clone(), Expr::int(k as i32)),
                        Expr::int(*c as i32),
                        out,
                    );
                }
                if chars.is_empty() {
                    out = Expr::int(0);
                }
                out
            }
            Expr::Bin(op, a, b) => Expr::bin(
                *op,
                self.grounded(a, bound, i, cnf, model, completed),
                self.grounded(b, bound, i, cnf, model, completed),
            ),
            Expr::Not(a) => Expr::not(self.grounded(a, bound, i, cnf, model, completed)),
            Expr::Neg(a) => Rc::new(Expr::Neg(self.grounded(a, bound, i, cnf, model, completed))),
            Expr::Ite(c, t, f) => Expr::ite(
                self.grounded(c, bound, i, cnf, model, completed),
                self.grounded(t, bound, i, cnf, model, completed),
                self.grounded(f, bound, i, cnf, model, completed),
            ),
            Expr::StrApp(..) => Expr::int(self.eval(e, cnf, model) as i32),
            other => panic!("axiom bodies do not contain {other:?}"),
        }
    }

    /// Index-set refinement: the witness joins the sets through the violated
    /// axiom's access maps, then indices propagate pairwise between strings
    /// sharing an axiom. Returns whether any set grew.
    pub fn refine(&mut self, violated: Option<(usize, i64)>) -> bool {
        let mut grew = false;
        if let Some((ax, w)) = violated {
            for (v, off) in self.axioms[ax].accesses.clone() {
                let idx = Self::canon(&Expr::add(Expr::int(w as i32), off));
                grew |= self.add_index(v, &idx);
            }
        }
        for ax in 0..self.axioms.len() {
            let accesses = self.axioms[ax].accesses.clone();
            for (v1, o1) in &accesses {
                for (v2, o2) in &accesses {
                    if v1 == v2 {
                        continue;
                    }
                    for j in self.vars[v1.0].index_set.clone() {
                        let idx = Self::canon(&Expr::add(
                            Expr::sub(j, o1.clone()),
                            o2.clone(),
                        ));
                        grew |= self.add_index(*v2, &idx);
                    }
                }
            }
        }
        grew
    }

    /// Renders every axiom and the final index sets (`--show-string-axioms`).
    pub fn render(&self, syms: &SymbolTable) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for ax in &self.axioms {
            let _ = writeln!(
                out,
                "axiom [{}]: forall i. {} <= i && i < {} -> {}",
                ax.provenance,
                crate::expr::render(&ax.lo, syms),
                crate::expr::render(&ax.hi, syms),
                self.render_body(&ax.constraint, ax.bound, syms),
            );
        }
        for v in &self.vars {
            let idx: Vec<String> = v
                .index_set
                .iter()
                .map(|e| crate::expr::render(e, syms))
                .collect();
            let _ = writeln!(out, "index set {}: {{{}}}", v.name, idx.join(", "));
        }
        out
    }

    fn render_body(&self, e: &ExprRef, bound: SymId, syms: &SymbolTable) -> String {
        // renders the bound symbol as plain `i` and selects as charArray[..]
        struct Names<'a> {
            syms: &'a SymbolTable,
            bound: SymId,
        }
        impl crate::expr::SymNames for Names<'_> {
            fn sym_name(&self, id: SymId) -> String {
                if id == self.bound {
                    "i".into()
                } else {
                    self.syms.sym_name(id)
                }
            }
        }
        crate::expr::render(e, &Names { syms, bound })
    }

    /// The refinement loop. `Unsat` is sound because instantiations are
    /// implied by the axioms; `Sat` is certified by `check_model`.
    pub fn solve_strings(
        &mut self,
        syms: &mut SymbolTable,
        cnf: &mut CnfFormula,
        solver: &mut Solver,
    ) -> (StrOutcome, Vec<bool>) {
        let mut rounds = 0usize;
        loop {
            // axiomatize every registered application, transitively
            loop {
                let apps = cnf.take_new_string_apps();
                if apps.is_empty() {
                    break;
                }
                for app in apps {
                    self.tie_app(&app, syms, cnf);
                }
            }
            rounds += 1;
            let budget = (self.max_len as usize + 1) * (self.axioms.len() + 1) + 1;
            assert!(rounds <= budget, "string refinement exceeded its round budget");
            self.instantiate_new(syms, cnf);
            match cnf.solve(solver) {
                SatResult::Unsat => return (StrOutcome::Unsat, Vec::new()),
                SatResult::Sat => {
                    let model = solver.model();
                    match self.check_model(cnf, &model) {
                        None => return (StrOutcome::Sat, model),
                        Some(violated) => {
                            let grew = self.refine(Some(violated));
                            assert!(grew, "model check failed at an index-set fixed point");
                        }
                    }
                }
            }
        }
    }

    /// Variable registered for a string symbol, if any.
    pub fn var_of_sym(&self, s: SymId) -> Option<StrVarId> {
        self.sym_var.get(&s).copied()
    }
}

#[cfg(test)]
mod tests;
