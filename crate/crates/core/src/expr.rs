//! Expression trees shared by the goto program, the SSA system and the
//! solver stack.
//!
//! One enum serves two stages. Before symbolic execution, leaves are program
//! variables ([`Expr::Var`]) and heap accesses appear as unresolved
//! `FieldSel`/`ArraySel`/`ArrayLen` nodes. Symbolic execution replaces all of
//! those with SSA symbols ([`Expr::Sym`]) and `Select`/`Store` over array
//! content symbols; the flattener and the string solver only ever see the
//! post-symex fragment.

use std::fmt;
use std::rc::Rc;

/// Value types after erasure of class information.
///
/// References (objects and `int[]` alike) are 32-bit object ids, 0 = null.
/// `Arr` is the content of an `int[]` allocation, not a reference to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ty {
    Int,
    Bool,
    Str,
    Ref,
    Arr,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ty::Int => "int",
            Ty::Bool => "bool",
            Ty::Str => "string",
            Ty::Ref => "ref",
            Ty::Arr => "arr",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn is_arith(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem
        )
    }

    pub fn is_cmp(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "=>",
        };
        f.write_str(s)
    }
}

/// The string operations the solver axiomatizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrFn {
    /// `len(s) -> int`
    Len,
    /// `charat(s, i) -> int` (0 when out of range)
    CharAt,
    /// `indexof(s, c, from) -> int` (-1 when absent)
    IndexOf,
    /// `substring(s, b, e) -> string` (bounds clamped)
    Substring,
    /// `concat(s, t) -> string`
    Concat,
    /// `insert(s, off, t) -> string` (offset clamped)
    Insert,
    /// `of_int(n) -> string` (decimal rendering)
    OfInt,
    /// `eq(s, t) -> bool`
    Equals,
    /// `startswith(s, p) -> bool`
    StartsWith,
}

impl StrFn {
    pub fn result_ty(self) -> Ty {
        match self {
            StrFn::Len | StrFn::CharAt | StrFn::IndexOf => Ty::Int,
            StrFn::Substring | StrFn::Concat | StrFn::Insert | StrFn::OfInt => Ty::Str,
            StrFn::Equals | StrFn::StartsWith => Ty::Bool,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrFn::Len => "len",
            StrFn::CharAt => "charat",
            StrFn::IndexOf => "indexof",
            StrFn::Substring => "substring",
            StrFn::Concat => "concat",
            StrFn::Insert => "insert",
            StrFn::OfInt => "of_int",
            StrFn::Equals => "eq",
            StrFn::StartsWith => "startswith",
        }
    }
}

/// Identifier of an SSA symbol; indexes the symbol table of the system that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymId(pub u32);

/// Canonical field reference: defining class index plus field name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId {
    pub class: usize,
    pub name: Rc<str>,
}

/// Program variable of the goto IR. Identity includes the erased type so a
/// stack temp reused at a different type is a distinct variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub kind: VarKind,
    pub ty: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// Local slot (parameters occupy the leading slots).
    Local(u16),
    /// Operand stack temp at the given static depth.
    Temp(u16),
    /// The global exception register.
    Thrown,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            VarKind::Local(i) => write!(f, "local{i}"),
            VarKind::Temp(i) => write!(f, "t{i}"),
            VarKind::Thrown => write!(f, "@thrown"),
        }
    }
}

pub type ExprRef = Rc<Expr>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    IntConst(i32),
    BoolConst(bool),
    /// String literal, UTF-16 code units.
    StrConst(Rc<[u16]>),
    /// The null reference (object id 0).
    Null,
    /// Goto-level program variable; gone after symex.
    Var(Var),
    /// SSA symbol.
    Sym(SymId),
    Bin(BinOp, ExprRef, ExprRef),
    Neg(ExprRef),
    Not(ExprRef),
    Ite(ExprRef, ExprRef, ExprRef),
    /// `select(content, index)` over an array content value.
    Select(ExprRef, ExprRef),
    /// `store(content, index, value)` over an array content value.
    Store(ExprRef, ExprRef, ExprRef),
    /// All-zero array content (fresh `int[]` allocations).
    ArrZero,
    StrApp(StrFn, Vec<ExprRef>),
    /// True iff the 32x32-bit signed product does not overflow.
    MulNoOvf(ExprRef, ExprRef),
    /// Field read, resolved by symex against the allocation registry.
    FieldSel(ExprRef, FieldId),
    /// `array[index]` read on an array reference, resolved by symex.
    ArraySel(ExprRef, ExprRef),
    /// `array.length` on an array reference, resolved by symex.
    ArrayLen(ExprRef),
}

impl Expr {
    pub fn int(v: i32) -> ExprRef {
        Rc::new(Expr::IntConst(v))
    }

    pub fn bool(v: bool) -> ExprRef {
        Rc::new(Expr::BoolConst(v))
    }

    pub fn null() -> ExprRef {
        Rc::new(Expr::Null)
    }

    pub fn sym(id: SymId) -> ExprRef {
        Rc::new(Expr::Sym(id))
    }

    pub fn var(v: Var) -> ExprRef {
        Rc::new(Expr::Var(v))
    }

    pub fn str_const(units: &[u16]) -> ExprRef {
        Rc::new(Expr::StrConst(units.into()))
    }

    pub fn bin(op: BinOp, a: ExprRef, b: ExprRef) -> ExprRef {
        Rc::new(Expr::Bin(op, a, b))
    }

    pub fn add(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Add, a, b)
    }

    pub fn sub(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Sub, a, b)
    }

    pub fn eq(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Eq, a, b)
    }

    pub fn ne(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Ne, a, b)
    }

    pub fn lt(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Lt, a, b)
    }

    pub fn le(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Le, a, b)
    }

    pub fn ge(a: ExprRef, b: ExprRef) -> ExprRef {
        Self::bin(BinOp::Ge, a, b)
    }

    /// Conjunction with constant folding, to keep guards readable.
    pub fn and(a: ExprRef, b: ExprRef) -> ExprRef {
        match (&*a, &*b) {
            (Expr::BoolConst(true), _) => b,
            (_, Expr::BoolConst(true)) => a,
            (Expr::BoolConst(false), _) | (_, Expr::BoolConst(false)) => Expr::bool(false),
            _ => Self::bin(BinOp::And, a, b),
        }
    }

    /// Disjunction with constant folding.
    pub fn or(a: ExprRef, b: ExprRef) -> ExprRef {
        match (&*a, &*b) {
            (Expr::BoolConst(false), _) => b,
            (_, Expr::BoolConst(false)) => a,
            (Expr::BoolConst(true), _) | (_, Expr::BoolConst(true)) => Expr::bool(true),
            _ => Self::bin(BinOp::Or, a, b),
        }
    }

    pub fn implies(a: ExprRef, b: ExprRef) -> ExprRef {
        match (&*a, &*b) {
            (Expr::BoolConst(true), _) => b,
            (Expr::BoolConst(false), _) => Expr::bool(true),
            (_, Expr::BoolConst(true)) => Expr::bool(true),
            _ => Self::bin(BinOp::Implies, a, b),
        }
    }

    pub fn not(a: ExprRef) -> ExprRef {
        match &*a {
            Expr::BoolConst(v) => Expr::bool(!v),
            Expr::Not(inner) => inner.clone(),
            _ => Rc::new(Expr::Not(a)),
        }
    }

    pub fn ite(c: ExprRef, t: ExprRef, e: ExprRef) -> ExprRef {
        match &*c {
            Expr::BoolConst(true) => t,
            Expr::BoolConst(false) => e,
            _ => Rc::new(Expr::Ite(c, t, e)),
        }
    }

    pub fn str_app(f: StrFn, args: Vec<ExprRef>) -> ExprRef {
        Rc::new(Expr::StrApp(f, args))
    }

    /// `max(lo, min(e, hi))` as an ite chain.
    pub fn clamp(e: ExprRef, lo: ExprRef, hi: ExprRef) -> ExprRef {
        let low = Expr::ite(Expr::lt(e.clone(), lo.clone()), lo, e);
        Expr::ite(Expr::bin(BinOp::Gt, low.clone(), hi.clone()), hi, low)
    }

    pub fn is_str_typed(&self) -> bool {
        match self {
            Expr::StrConst(_) => true,
            Expr::StrApp(f, _) => f.result_ty() == Ty::Str,
            _ => false,
        }
    }
}

/// Renders an expression in the stable textual form used by `--show-vcc`,
/// `--show-goto` and `--show-string-axioms`.
pub fn render(e: &Expr, names: &dyn SymNames) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, names);
    out
}

/// Source of display names for SSA symbols. The goto printer has no symbol
/// table and uses [`NoSyms`].
pub trait SymNames {
    fn sym_name(&self, id: SymId) -> String;
}

pub struct NoSyms;

impl SymNames for NoSyms {
    fn sym_name(&self, id: SymId) -> String {
        format!("sym{}", id.0)
    }
}

fn write_expr(out: &mut String, e: &Expr, names: &dyn SymNames) {
    use std::fmt::Write;
    match e {
        Expr::IntConst(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::BoolConst(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::StrConst(units) => {
            let _ = write!(out, "\"{}\"", escape_units(units));
        }
        Expr::Null => out.push_str("null"),
        Expr::Var(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Sym(id) => out.push_str(&names.sym_name(*id)),
        Expr::Bin(op, a, b) => {
            out.push('(');
            write_expr(out, a, names);
            let _ = write!(out, " {op} ");
            write_expr(out, b, names);
            out.push(')');
        }
        Expr::Neg(a) => {
            out.push_str("-(");
            write_expr(out, a, names);
            out.push(')');
        }
        Expr::Not(a) => {
            out.push_str("!(");
            write_expr(out, a, names);
            out.push(')');
        }
        Expr::Ite(c, t, f) => {
            out.push('(');
            write_expr(out, c, names);
            out.push_str(" ? ");
            write_expr(out, t, names);
            out.push_str(" : ");
            write_expr(out, f, names);
            out.push(')');
        }
        Expr::Select(a, i) => {
            write_expr(out, a, names);
            out.push('[');
            write_expr(out, i, names);
            out.push(']');
        }
        Expr::ArrZero => out.push_str("zeros"),
        Expr::Store(a, i, v) => {
            out.push_str("store(");
            write_expr(out, a, names);
            out.push_str(", ");
            write_expr(out, i, names);
            out.push_str(", ");
            write_expr(out, v, names);
            out.push(')');
        }
        Expr::StrApp(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, names);
            }
            out.push(')');
        }
        Expr::MulNoOvf(a, b) => {
            out.push_str("mul_no_ovf(");
            write_expr(out, a, names);
            out.push_str(", ");
            write_expr(out, b, names);
            out.push(')');
        }
        Expr::FieldSel(obj, fid) => {
            write_expr(out, obj, names);
            let _ = write!(out, ".{}", fid.name);
        }
        Expr::ArraySel(a, i) => {
            write_expr(out, a, names);
            out.push('[');
            write_expr(out, i, names);
            out.push(']');
        }
        Expr::ArrayLen(a) => {
            write_expr(out, a, names);
            out.push_str(".length");
        }
    }
}

/// Escapes UTF-16 units the way traces render them: printable ASCII stays
/// literal, everything else becomes `\uXXXX`.
pub fn escape_units(units: &[u16]) -> String {
    let mut s = String::new();
    for &u in units {
        match u {
            0x22 => s.push_str("\\\""),
            0x5c => s.push_str("\\\\"),
            0x20..=0x7e => s.push(u as u8 as char),
            _ => s.push_str(&format!("\\u{u:04x}")),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_keeps_guards_small() {
        let t = Expr::bool(true);
        let x = Expr::var(Var {
            kind: VarKind::Local(0),
            ty: Ty::Bool,
        });
        assert_eq!(Expr::and(t.clone(), x.clone()), x);
        assert_eq!(*Expr::or(t, x), Expr::BoolConst(true));
    }

    #[test]
    fn renders_infix() {
        let e = Expr::add(Expr::int(1), Expr::int(2));
        assert_eq!(render(&e, &NoSyms), "(1 + 2)");
    }

    #[test]
    fn escapes_non_printable() {
        assert_eq!(escape_units(&[0x61, 0xa775]), "a\\ua775");
    }
}
