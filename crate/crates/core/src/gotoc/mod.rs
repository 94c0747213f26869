//! Goto program: the unstructured IR the checker actually analyzes, plus the
//! passes that produce it.
//!
//! [`convert`] turns validated stack bytecode into register code over
//! guarded gotos. [`lower_virtual`] replaces dynamic dispatch by class-id
//! cascades, [`lower_exceptions`] replaces throws and exception tables by a
//! global `@thrown` register and explicit dispatch blocks, and [`instrument`]
//! adds the runtime-error properties. [`compile`] runs the whole pipeline and
//! appends the entry harness.

mod convert;
mod exec;
mod instrument;
mod lower;
mod print;

pub use convert::convert;
pub use exec::{run_goto, GotoOutcome};
pub use instrument::instrument;
pub use lower::{lower_exceptions, lower_virtual};
pub use print::print_program;

use crate::expr::{ExprRef, FieldId, Ty, Var};
use crate::frontend::{ClassModel, FrontendError, MjbType};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

/// The checkable property classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyKind {
    Assertion,
    NullDeref,
    ArrayBounds,
    DivByZero,
    Overflow,
    NoUncaughtException,
    /// Bound-insufficiency assertion emitted under `--unwinding-assertions`.
    Unwind,
}

impl PropertyKind {
    pub fn tag(self) -> &'static str {
        match self {
            PropertyKind::Assertion => "assertion",
            PropertyKind::NullDeref => "null-deref",
            PropertyKind::ArrayBounds => "array-bounds",
            PropertyKind::DivByZero => "div-by-zero",
            PropertyKind::Overflow => "overflow",
            PropertyKind::NoUncaughtException => "no-uncaught-exception",
            PropertyKind::Unwind => "unwind",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            PropertyKind::Assertion => "assertion",
            PropertyKind::NullDeref => "null pointer dereference",
            PropertyKind::ArrayBounds => "array index out of bounds",
            PropertyKind::DivByZero => "division by zero",
            PropertyKind::Overflow => "arithmetic overflow",
            PropertyKind::NoUncaughtException => "no uncaught exception",
            PropertyKind::Unwind => "unwinding bound",
        }
    }

    /// Order used when printing results.
    pub fn rank(self) -> usize {
        self as usize
    }
}

/// `Class.method.kind.N`, unique across the program.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertyId {
    pub method: Rc<str>,
    pub kind: PropertyKind,
    pub n: u32,
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.method, self.kind.tag(), self.n)
    }
}

/// Everything the result printer needs about one property.
#[derive(Debug, Clone)]
pub struct PropInfo {
    pub id: PropertyId,
    pub kind: PropertyKind,
    /// Index of the declaring method in `GotoProgram::methods`.
    pub method: usize,
    pub file: Rc<str>,
    pub line: u32,
    /// Ordinal of the originating instruction in its MJB method body.
    pub bytecode_index: usize,
}

#[derive(Debug, Clone)]
pub enum Lhs {
    Var(Var),
    Field { obj: ExprRef, field: FieldId },
    Elem { arr: ExprRef, idx: ExprRef },
}

#[derive(Debug, Clone)]
pub enum Rhs {
    Expr(ExprRef),
    NondetInt,
    NondetStr,
    /// Nondet reference parameter: null or a fresh object of any subclass of
    /// the given class (harness only; expanded by symex).
    NondetRef(usize),
    /// Nondet `int[]` parameter: null or a fresh array (harness only).
    NondetArr,
    AllocObj(usize),
    AllocArr(ExprRef),
}

#[derive(Debug, Clone)]
pub enum GKind {
    Decl(Var),
    Assign { lhs: Lhs, rhs: Rhs },
    Goto { target: usize, guard: ExprRef, backedge: bool },
    Assert { cond: ExprRef, prop: usize },
    Assume { cond: ExprRef },
    Call { target: usize, args: Vec<ExprRef>, ret: Option<Var> },
    /// Pre-lowering virtual call site; receiver is `args[0]`.
    CallVirtual { class: usize, method: Rc<str>, args: Vec<ExprRef>, ret: Option<Var> },
    /// Pre-lowering explicit throw.
    Throw { exc: ExprRef },
    Return { value: Option<ExprRef> },
    Dead(Var),
}

#[derive(Debug, Clone)]
pub struct GInstr {
    pub kind: GKind,
    pub line: u32,
    /// Ordinal of the originating instruction in the MJB method body.
    pub src_idx: usize,
    /// Created by a lowering pass; exempt from runtime-check instrumentation.
    pub synth: bool,
}

#[derive(Debug, Clone)]
pub struct GotoMethod {
    /// `Class.method`
    pub name: Rc<str>,
    pub class_idx: usize,
    pub is_static: bool,
    pub param_tys: Vec<MjbType>,
    pub ret_ty: Option<MjbType>,
    pub instrs: Vec<GInstr>,
    pub source_file: Rc<str>,
    pub decl_line: u32,
    /// Original bytecode length (bytecode indices range over this).
    pub src_len: usize,
    /// First goto-instruction index for every bytecode pc (length
    /// `src_len + 1`); maintained across rewriting passes.
    pub(crate) src_map: Vec<usize>,
    /// Dispatch chain head for each original instruction, once exceptions are
    /// lowered; `None` routes to the caller via the propagate block.
    pub(crate) dispatch_at: Vec<Option<usize>>,
    /// Instruction index of the propagate-to-caller block, if materialized.
    pub(crate) propagate_block: Option<usize>,
    /// Virtual-dispatch cascade heads inserted by `lower_virtual`:
    /// (instruction index, receiver expression), used by `instrument` for
    /// null checks.
    pub(crate) dispatch_sites: Vec<(usize, ExprRef)>,
    /// Explicit-throw sites after exception lowering: (index of the
    /// `@thrown` assignment, thrown expression), for null instrumentation.
    pub(crate) throw_sites: Vec<(usize, ExprRef)>,
}

/// Per-class field layout including the implicit `@class_identifier` tag.
#[derive(Debug, Clone)]
pub struct ObjectLayout {
    /// `(field, type)` in layout order; a subclass layout extends its
    /// superclass layout as a prefix.
    pub fields: Vec<(FieldId, Ty)>,
}

#[derive(Debug, Clone)]
pub struct GotoProgram {
    pub methods: Vec<GotoMethod>,
    pub method_index: HashMap<Rc<str>, usize>,
    pub props: Vec<PropInfo>,
    /// Index of the synthetic entry harness, set by [`compile`].
    pub entry: Option<usize>,
    pub class_names: Vec<Rc<str>>,
    /// Classes flagged (transitively) as exception classes.
    pub exception_classes: Vec<bool>,
    pub layouts: Vec<ObjectLayout>,
    /// Immediate superclass per class.
    pub supers: Vec<Option<usize>>,
    /// True while virtual call sites remain.
    pub has_virtual: bool,
    /// True while throws or exception tables remain unlowered.
    pub has_exceptions: bool,
}

/// Name of the implicit dynamic-type field. It holds the class index; traces
/// render it as the class name.
pub const CLASS_ID_FIELD: &str = "@class_identifier";

pub fn class_id_field() -> FieldId {
    FieldId { class: usize::MAX, name: CLASS_ID_FIELD.into() }
}

#[derive(Debug, thiserror::Error)]
pub enum GotoError {
    #[error("conversion error in {method}: {msg}")]
    Convert { method: String, msg: String },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

pub type Result<T> = std::result::Result<T, GotoError>;

/// Pipeline options.
#[derive(Debug, Clone, Copy, Default)]
pub struct GotoOpts {
    pub throw_runtime: bool,
    pub check_overflow: bool,
}

impl GotoProgram {
    pub fn method_named(&self, name: &str) -> Option<&GotoMethod> {
        self.method_index.get(name).map(|&i| &self.methods[i])
    }

    /// Subclasses of `class_idx` (including itself) in declaration order.
    pub fn subtree(&self, class_idx: usize) -> Vec<usize> {
        (0..self.class_names.len())
            .filter(|&c| {
                let mut cur = Some(c);
                while let Some(k) = cur {
                    if k == class_idx {
                        return true;
                    }
                    cur = self.supers[k];
                }
                false
            })
            .collect()
    }
}

/// Full pipeline: convert, lower dispatch and exceptions, instrument, build
/// the entry harness, and number the properties.
pub fn compile(model: &ClassModel, entry_name: &str, opts: GotoOpts) -> Result<GotoProgram> {
    let mut prog = convert(model)?;
    prog = lower_virtual(prog, model)?;
    prog = lower_exceptions(prog, model, opts.throw_runtime)?;
    prog = instrument(prog, opts)?;
    lower::add_harness(&mut prog, model, entry_name)?;
    number_properties(&mut prog);
    Ok(prog)
}

/// Assigns property numbers per (method, kind) in final program order.
/// Conversion is deterministic, so re-running yields identical ids.
fn number_properties(prog: &mut GotoProgram) {
    let mut counters: HashMap<(Rc<str>, PropertyKind), u32> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for m in &prog.methods {
        for ins in &m.instrs {
            if let GKind::Assert { prop, .. } = &ins.kind {
                order.push(*prop);
            }
        }
    }
    for p in order {
        let info = &mut prog.props[p];
        let key = (info.id.method.clone(), info.kind);
        let n = counters.entry(key).or_insert(0);
        *n += 1;
        info.id.n = *n;
    }
}

#[cfg(test)]
mod tests;
