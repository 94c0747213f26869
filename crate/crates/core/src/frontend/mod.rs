//! MJB front end: parser, class model and validation.
//!
//! MJB is a line-oriented textual bytecode for a Java-like subset: classes
//! with single inheritance, int/string/int[]/reference types, a fixed opcode
//! set and per-method exception tables. [`parse_module`] is the class-loader
//! analogue: it parses source text and returns a [`ClassModel`] whose
//! invariants (unique names, acyclic inheritance, resolvable operands, static
//! stack discipline) have all been checked.

mod lexer;
mod parser;
mod printer;

pub use printer::print_model;

use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("resolution error at line {line}: {msg}")]
    Resolve { line: u32, msg: String },
    #[error("stack discipline error at line {line}: {msg}")]
    Stack { line: u32, msg: String },
}

pub type Result<T> = std::result::Result<T, FrontendError>;

/// Classes every module starts with: the runtime exception hierarchy used by
/// `--throw-runtime-exceptions` lowering.
pub const BUILTIN_CLASSES: [&str; 4] = [
    "RuntimeException",
    "NullPointerException",
    "ArrayIndexOutOfBoundsException",
    "ArithmeticException",
];

/// Declared type of a field, parameter, return value or local slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MjbType {
    Int,
    Str,
    IntArray,
    Class(Rc<str>),
}

impl MjbType {
    pub fn is_ref(&self) -> bool {
        matches!(self, MjbType::Class(_) | MjbType::IntArray)
    }
}

impl std::fmt::Display for MjbType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MjbType::Int => f.write_str("int"),
            MjbType::Str => f.write_str("string"),
            MjbType::IntArray => f.write_str("int[]"),
            MjbType::Class(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpKind {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpKind::Eq => "if_eq",
            CmpKind::Ne => "if_ne",
            CmpKind::Lt => "if_lt",
            CmpKind::Le => "if_le",
            CmpKind::Gt => "if_gt",
            CmpKind::Ge => "if_ge",
        }
    }
}

/// A resolved branch target: label name kept for printing, instruction index
/// for execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub name: Rc<str>,
    pub target: usize,
}

/// `Class.member` operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberRef {
    pub class: Rc<str>,
    pub member: Rc<str>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Opcode {
    Const(i32),
    SConst(Rc<[u16]>),
    Null,
    Load(u16),
    Store(u16),
    Dup,
    Pop,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Neg,
    If(CmpKind, Label),
    Goto(Label),
    New(Rc<str>),
    GetField(MemberRef),
    PutField(MemberRef),
    InvokeStatic(MemberRef),
    InvokeVirtual(MemberRef),
    Return,
    NewArray,
    ALoad,
    AStore,
    ArrayLength,
    AThrow,
    Assert,
    Assume,
    NondetInt,
    NondetString,
    SLen,
    SCharAt,
    SIndexOf,
    SSubstring,
    SConcat,
    SEquals,
    SStartsWith,
    SInsert,
    SOfInt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub op: Opcode,
    /// Source line: explicit `@ n` annotation, or the physical line of the
    /// opcode token.
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcEntry {
    pub start_label: Rc<str>,
    pub end_label: Rc<str>,
    pub handler_label: Rc<str>,
    pub class_name: Rc<str>,
    pub start: usize,
    pub end: usize,
    pub handler: usize,
}

#[derive(Debug, Clone)]
pub struct MethodDef {
    pub name: Rc<str>,
    pub is_static: bool,
    pub params: Vec<MjbType>,
    pub ret: Option<MjbType>,
    pub max_locals: u16,
    pub body: Vec<Instruction>,
    /// label name -> instruction index (an index equal to `body.len()` marks
    /// the method end)
    pub labels: std::collections::BTreeMap<Rc<str>, usize>,
    pub exception_table: Vec<ExcEntry>,
    pub decl_line: u32,
    /// Per-instruction entry type state; `None` for unreachable
    /// instructions. Filled by validation.
    pub flow: Vec<Option<analysis::PcState>>,
}

/// Structural equality: declaration positions and source file names are
/// incidental metadata and do not participate.
impl PartialEq for MethodDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.is_static == other.is_static
            && self.params == other.params
            && self.ret == other.ret
            && self.max_locals == other.max_locals
            && self.body == other.body
            && self.labels == other.labels
            && self.exception_table == other.exception_table
            && self.flow == other.flow
    }
}

impl PartialEq for ClassDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.super_name == other.super_name
            && self.is_exception == other.is_exception
            && self.fields == other.fields
            && self.methods == other.methods
    }
}

impl MethodDef {
    /// Number of local slots taken by `this` and the declared parameters.
    pub fn param_slots(&self) -> u16 {
        self.params.len() as u16 + if self.is_static { 0 } else { 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDecl {
    pub name: Rc<str>,
    pub ty: MjbType,
}

#[derive(Debug, Clone)]
pub struct ClassDef {
    pub name: Rc<str>,
    pub super_name: Option<Rc<str>>,
    pub is_exception: bool,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDef>,
    pub decl_line: u32,
    pub source_file: Rc<str>,
}

/// Stack analysis type: like [`MjbType`] but with a bottom element for the
/// `null` literal, which joins with every reference type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StackTy {
    Int,
    Str,
    IntArray,
    Obj(usize),
    Null,
}

/// Parsed and validated MJB program.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub classes: Vec<ClassDef>,
    index: HashMap<Rc<str>, usize>,
}

pub fn parse_module(text: &str) -> Result<ClassModel> {
    parse_files(&[("<input>", text)])
}

/// Parses and links several MJB files into one model. Class names must be
/// unique across all files.
pub fn parse_files(files: &[(&str, &str)]) -> Result<ClassModel> {
    let mut classes = builtin_classes();
    for (name, text) in files {
        let toks = lexer::tokenize(text)?;
        classes.extend(parser::parse_classes(&toks, name)?);
    }
    let mut model = ClassModel { classes, index: HashMap::new() };
    model.link()?;
    Ok(model)
}

fn builtin_classes() -> Vec<ClassDef> {
    let file: Rc<str> = "<builtin>".into();
    BUILTIN_CLASSES
        .iter()
        .map(|name| ClassDef {
            name: (*name).into(),
            super_name: if *name == "RuntimeException" {
                None
            } else {
                Some("RuntimeException".into())
            },
            is_exception: true,
            fields: Vec::new(),
            methods: Vec::new(),
            decl_line: 0,
            source_file: file.clone(),
        })
        .collect()
}

impl ClassModel {
    pub fn class_idx(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn class(&self, idx: usize) -> &ClassDef {
        &self.classes[idx]
    }

    pub fn super_of(&self, idx: usize) -> Option<usize> {
        self.classes[idx]
            .super_name
            .as_ref()
            .and_then(|n| self.class_idx(n))
    }

    /// True iff `sub` equals or transitively extends `sup`.
    pub fn is_subclass(&self, sub: usize, sup: usize) -> bool {
        let mut cur = Some(sub);
        while let Some(c) = cur {
            if c == sup {
                return true;
            }
            cur = self.super_of(c);
        }
        false
    }

    /// Classes whose instances may appear where static type `class_idx` is
    /// expected: the class itself and all subclasses, in declaration order.
    pub fn subtree(&self, class_idx: usize) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&c| self.is_subclass(c, class_idx))
            .collect()
    }

    /// True iff the class (or an ancestor) carries the `exception` flag.
    pub fn is_exception_class(&self, idx: usize) -> bool {
        let mut cur = Some(idx);
        while let Some(c) = cur {
            if self.classes[c].is_exception {
                return true;
            }
            cur = self.super_of(c);
        }
        false
    }

    /// Resolves a field reference `class.name` to its defining class, walking
    /// up the hierarchy.
    pub fn resolve_field(&self, class_idx: usize, name: &str) -> Option<(usize, &FieldDecl)> {
        let mut cur = Some(class_idx);
        while let Some(c) = cur {
            if let Some(f) = self.classes[c].fields.iter().find(|f| &*f.name == name) {
                return Some((c, f));
            }
            cur = self.super_of(c);
        }
        None
    }

    /// Field layout of a class: inherited fields first (root-most class
    /// first), each as (defining class, decl). A subclass layout extends its
    /// superclass layout as a prefix.
    pub fn layout(&self, class_idx: usize) -> Vec<(usize, &FieldDecl)> {
        let mut chain = Vec::new();
        let mut cur = Some(class_idx);
        while let Some(c) = cur {
            chain.push(c);
            cur = self.super_of(c);
        }
        chain.reverse();
        let mut out = Vec::new();
        for c in chain {
            for f in &self.classes[c].fields {
                out.push((c, f));
            }
        }
        out
    }

    /// Most-derived implementation of a virtual method visible in
    /// `class_idx`: the virtual-table rule (inherited methods are copied down
    /// unless overridden).
    pub fn resolve_virtual(&self, class_idx: usize, name: &str) -> Option<(usize, &MethodDef)> {
        let mut cur = Some(class_idx);
        while let Some(c) = cur {
            if let Some(m) = self.classes[c]
                .methods
                .iter()
                .find(|m| &*m.name == name && !m.is_static)
            {
                return Some((c, m));
            }
            cur = self.super_of(c);
        }
        None
    }

    pub fn method(&self, class_idx: usize, name: &str) -> Option<&MethodDef> {
        self.classes[class_idx]
            .methods
            .iter()
            .find(|m| &*m.name == name)
    }

    /// Looks up the analysis entry point. `"Class.method"` names the method
    /// directly; a bare `"Class"` means that class's `main`.
    pub fn resolve_entry(&self, name: &str) -> Result<(usize, &MethodDef)> {
        let (class_name, method_name) = match name.split_once('.') {
            Some((c, m)) => (c, m),
            None => (name, "main"),
        };
        let class_idx = self.class_idx(class_name).ok_or(FrontendError::Resolve {
            line: 0,
            msg: format!("entry point class '{class_name}' not found"),
        })?;
        let m = self.method(class_idx, method_name).ok_or(FrontendError::Resolve {
            line: 0,
            msg: format!("entry point '{class_name}.{method_name}' not found"),
        })?;
        Ok((class_idx, m))
    }

    /// Least common ancestor of two classes, if any.
    fn join_class(&self, a: usize, b: usize) -> Option<usize> {
        let mut cur = Some(a);
        while let Some(c) = cur {
            if self.is_subclass(b, c) {
                return Some(c);
            }
            cur = self.super_of(c);
        }
        None
    }

    fn link(&mut self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if self.index.insert(c.name.clone(), i).is_some() {
                return Err(FrontendError::Resolve {
                    line: c.decl_line,
                    msg: format!("duplicate class '{}'", c.name),
                });
            }
        }
        self.check_hierarchy()?;
        self.check_members()?;
        for ci in 0..self.classes.len() {
            for mi in 0..self.classes[ci].methods.len() {
                let flow = analysis::check_method(self, ci, mi)?;
                self.classes[ci].methods[mi].flow = flow;
            }
        }
        Ok(())
    }

    fn check_hierarchy(&self) -> Result<()> {
        for c in &self.classes {
            if let Some(sup) = &c.super_name {
                if self.class_idx(sup).is_none() {
                    return Err(FrontendError::Resolve {
                        line: c.decl_line,
                        msg: format!("class '{}' extends unknown class '{sup}'", c.name),
                    });
                }
            }
        }
        for start in 0..self.classes.len() {
            let mut slow = Some(start);
            let mut seen = 0usize;
            while let Some(c) = slow {
                seen += 1;
                if seen > self.classes.len() {
                    return Err(FrontendError::Resolve {
                        line: self.classes[start].decl_line,
                        msg: format!("inheritance cycle involving '{}'", self.classes[start].name),
                    });
                }
                slow = self.super_of(c);
            }
        }
        Ok(())
    }

    fn check_members(&self) -> Result<()> {
        for (ci, c) in self.classes.iter().enumerate() {
            for (fi, f) in c.fields.iter().enumerate() {
                if c.fields[..fi].iter().any(|g| g.name == f.name) {
                    return Err(FrontendError::Resolve {
                        line: c.decl_line,
                        msg: format!("duplicate field '{}.{}'", c.name, f.name),
                    });
                }
                if let Some(sup) = self.super_of(ci) {
                    if self.resolve_field(sup, &f.name).is_some() {
                        return Err(FrontendError::Resolve {
                            line: c.decl_line,
                            msg: format!("field '{}.{}' shadows an inherited field", c.name, f.name),
                        });
                    }
                }
                if let MjbType::Class(n) = &f.ty {
                    if self.class_idx(n).is_none() {
                        return Err(FrontendError::Resolve {
                            line: c.decl_line,
                            msg: format!("field '{}.{}' has unknown type '{n}'", c.name, f.name),
                        });
                    }
                }
            }
            for (mi, m) in c.methods.iter().enumerate() {
                if c.methods[..mi].iter().any(|o| o.name == m.name) {
                    return Err(FrontendError::Resolve {
                        line: m.decl_line,
                        msg: format!(
                            "duplicate method '{}.{}' (overloading is not supported)",
                            c.name, m.name
                        ),
                    });
                }
                for t in m.params.iter().chain(m.ret.iter()) {
                    if let MjbType::Class(n) = t {
                        if self.class_idx(n).is_none() {
                            return Err(FrontendError::Resolve {
                                line: m.decl_line,
                                msg: format!("unknown type '{n}' in signature of '{}.{}'", c.name, m.name),
                            });
                        }
                    }
                }
                if m.param_slots() > m.max_locals {
                    return Err(FrontendError::Resolve {
                        line: m.decl_line,
                        msg: format!(
                            "method '{}.{}' declares fewer locals than parameters",
                            c.name, m.name
                        ),
                    });
                }
                if let Some(sup) = self.super_of(ci) {
                    if let Some((_, inherited)) = self.resolve_method_any(sup, &m.name) {
                        let compatible = !m.is_static
                            && !inherited.is_static
                            && m.params == inherited.params
                            && m.ret == inherited.ret;
                        if !compatible {
                            return Err(FrontendError::Resolve {
                                line: m.decl_line,
                                msg: format!(
                                    "method '{}.{}' does not match the inherited signature",
                                    c.name, m.name
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve_method_any(&self, class_idx: usize, name: &str) -> Option<(usize, &MethodDef)> {
        let mut cur = Some(class_idx);
        while let Some(c) = cur {
            if let Some(m) = self.classes[c].methods.iter().find(|m| &*m.name == name) {
                return Some((c, m));
            }
            cur = self.super_of(c);
        }
        None
    }
}

pub mod analysis;

#[cfg(test)]
mod tests;
