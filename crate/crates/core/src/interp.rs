//! Concrete MJB interpreter: the ground-truth oracle for differential
//! testing, bound-semantics checks and counterexample replay.
//!
//! Runs the pre-lowering [`ClassModel`] directly with an explicit feed of
//! nondet values. Semantics are Java-faithful 32-bit: wraparound arithmetic,
//! truncating division, exception unwinding through the per-method tables.
//! Two details are MJB-specific and shared with the symbolic side: string
//! operations clamp their index arguments instead of throwing, and array
//! lengths saturate into `[0, max_array_length]`.

use crate::frontend::{ClassModel, CmpKind, MethodDef, MjbType, Opcode};
use crate::gotoc::PropertyKind;
use std::collections::{HashMap, VecDeque};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i32),
    Str(Rc<Vec<u16>>),
    /// Object or array reference; 0 is null.
    Ref(u32),
}

/// One nondet value supplied to an execution.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedValue {
    Int(i32),
    Str(Vec<u16>),
    Null,
    IntArray(Vec<i32>),
    /// Fresh instance of the named class with default-valued fields.
    Obj(Rc<str>),
}

/// What kind of nondet value an execution demanded when the feed ran dry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedKind {
    Int,
    Str,
    IntArray,
    Ref(usize),
}

/// How implicit runtime errors behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcMode {
    /// First null/bounds/div-zero event halts with the matching property
    /// violation (mirrors verification without `--throw-runtime-exceptions`).
    Trap,
    /// Events throw catchable exception objects (plain Java semantics).
    Propagate,
}

#[derive(Debug, Clone, Copy)]
pub struct RunCfg {
    pub exc_mode: ExcMode,
    pub check_overflow: bool,
    pub max_array_length: i32,
    pub fuel: u64,
    /// Per-backedge traversal and recursion bound; `None` leaves loops
    /// unbounded (fuel still applies).
    pub unwind: Option<u32>,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            exc_mode: ExcMode::Trap,
            check_overflow: false,
            max_array_length: 16,
            fuel: 1_000_000,
            unwind: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// `Class.method`
    pub method: Rc<str>,
    pub kind: PropertyKind,
    /// Ordinal of the violating instruction in its method body.
    pub instr_idx: usize,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Returned(Option<Value>),
    Violated(Violation),
    Uncaught { class: Rc<str> },
    /// An `assume` condition evaluated to false; the execution is infeasible.
    AssumeFailed,
    FuelExhausted,
    /// A loop or recursion exceeded the unwind bound; the execution left the
    /// analyzed state space.
    BoundExceeded,
}

#[derive(Debug, Error, PartialEq)]
pub enum InterpError {
    #[error("nondet feed exhausted")]
    FeedExhausted { kind: FeedKind },
    #[error("nondet feed value has the wrong type")]
    FeedTypeMismatch,
    #[error("entry resolution failed: {0}")]
    Entry(String),
}

pub type Result<T> = std::result::Result<T, InterpError>;

// Shared concrete string semantics. The solver axioms encode exactly these
// functions.

pub fn clamp_i32(x: i32, lo: i32, hi: i32) -> i32 {
    x.max(lo).min(hi)
}

pub fn str_charat(s: &[u16], i: i32) -> i32 {
    if i >= 0 && (i as usize) < s.len() {
        s[i as usize] as i32
    } else {
        0
    }
}

pub fn str_indexof(s: &[u16], c: i32, from: i32) -> i32 {
    let c16 = c as u16;
    let start = clamp_i32(from, 0, s.len() as i32) as usize;
    for (off, &u) in s[start..].iter().enumerate() {
        if u == c16 {
            return (start + off) as i32;
        }
    }
    -1
}

pub fn str_substring(s: &[u16], b: i32, e: i32) -> Vec<u16> {
    let len = s.len() as i32;
    let b = clamp_i32(b, 0, len);
    let e = clamp_i32(e, b, len);
    s[b as usize..e as usize].to_vec()
}

pub fn str_insert(s: &[u16], off: i32, t: &[u16]) -> Vec<u16> {
    let off = clamp_i32(off, 0, s.len() as i32) as usize;
    let mut out = Vec::with_capacity(s.len() + t.len());
    out.extend_from_slice(&s[..off]);
    out.extend_from_slice(t);
    out.extend_from_slice(&s[off..]);
    out
}

pub fn str_concat(s: &[u16], t: &[u16]) -> Vec<u16> {
    str_insert(s, s.len() as i32, t)
}

pub fn str_startswith(s: &[u16], p: &[u16]) -> bool {
    s.len() >= p.len() && s[..p.len()] == *p
}

pub fn str_of_int(n: i32) -> Vec<u16> {
    n.to_string().encode_utf16().collect()
}

#[derive(Debug, Clone)]
enum HeapObj {
    Obj { class: usize, fields: Vec<Value> },
    Arr(Vec<i32>),
}

enum Flow {
    Ret(Option<Value>),
    Thrown(u32),
    Halt(Outcome),
}

/// Runs `entry` ("Class.method" or "Class" for main) with the given nondet
/// feed. Entry parameters are drawn from the feed first, body nondets after,
/// in execution order.
pub fn run(
    model: &ClassModel,
    entry: &str,
    feed: &[FeedValue],
    cfg: RunCfg,
) -> Result<Outcome> {
    let (class_idx, method) = model
        .resolve_entry(entry)
        .map_err(|e| InterpError::Entry(e.to_string()))?;
    if !method.is_static {
        return Err(InterpError::Entry(format!(
            "entry '{entry}' must be static"
        )));
    }
    let mut interp = Interp {
        model,
        cfg,
        heap: Vec::new(),
        feed: feed.iter().cloned().collect(),
        fuel: cfg.fuel,
        occur: HashMap::new(),
    };
    let mut args = Vec::new();
    for p in &method.params {
        args.push(interp.feed_param(p)?);
    }
    let flow = interp.exec(class_idx, method, args)?;
    Ok(match flow {
        Flow::Ret(v) => Outcome::Returned(v),
        Flow::Thrown(r) => Outcome::Uncaught { class: interp.class_of_ref(r) },
        Flow::Halt(o) => o,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Failure(Violation),
    Success,
}

/// Finite value domains for [`enumerate`].
#[derive(Debug, Clone)]
pub struct Domains {
    pub ints: Vec<i32>,
    pub strings: Vec<Vec<u16>>,
    /// `None` entries are null arrays.
    pub arrays: Vec<Option<Vec<i32>>>,
    pub refs_may_be_null: bool,
}

impl Default for Domains {
    fn default() -> Self {
        Domains {
            ints: (-2..=2).collect(),
            strings: Vec::new(),
            arrays: Vec::new(),
            refs_may_be_null: true,
        }
    }
}

/// Exhaustively runs every feed over the domains; reports FAILURE iff some
/// execution that stays within `k` backedge traversals per site (and `k`
/// stacked occurrences per method) violates a property. Executions leaving
/// the bound are pruned, mirroring unwinding assumptions.
pub fn enumerate(
    model: &ClassModel,
    entry: &str,
    domains: &Domains,
    k: u32,
    base: RunCfg,
) -> Result<Verdict> {
    let cfg = RunCfg { unwind: Some(k), ..base };
    let mut feed = Vec::new();
    dfs(model, entry, domains, cfg, &mut feed)
}

fn dfs(
    model: &ClassModel,
    entry: &str,
    domains: &Domains,
    cfg: RunCfg,
    feed: &mut Vec<FeedValue>,
) -> Result<Verdict> {
    match run(model, entry, feed, cfg) {
        Ok(Outcome::Violated(v)) => Ok(Verdict::Failure(v)),
        Ok(Outcome::Uncaught { .. }) => {
            let (_, m) = model
                .resolve_entry(entry)
                .map_err(|e| InterpError::Entry(e.to_string()))?;
            let (class_name, _) = split_entry(model, entry);
            Ok(Verdict::Failure(Violation {
                method: format!("{class_name}.{}", m.name).into(),
                kind: PropertyKind::NoUncaughtException,
                instr_idx: m.body.len(),
                line: m.decl_line,
            }))
        }
        Ok(Outcome::FuelExhausted) => Err(InterpError::Entry("fuel exhausted".into())),
        Ok(_) => Ok(Verdict::Success),
        Err(InterpError::FeedExhausted { kind }) => {
            let values: Vec<FeedValue> = match kind {
                FeedKind::Int => domains.ints.iter().map(|&v| FeedValue::Int(v)).collect(),
                FeedKind::Str => domains
                    .strings
                    .iter()
                    .map(|s| FeedValue::Str(s.clone()))
                    .collect(),
                FeedKind::IntArray => domains
                    .arrays
                    .iter()
                    .map(|a| match a {
                        None => FeedValue::Null,
                        Some(v) => FeedValue::IntArray(v.clone()),
                    })
                    .collect(),
                FeedKind::Ref(class_idx) => {
                    let mut vs = Vec::new();
                    if domains.refs_may_be_null {
                        vs.push(FeedValue::Null);
                    }
                    for c in model.subtree(class_idx) {
                        vs.push(FeedValue::Obj(model.class(c).name.clone()));
                    }
                    vs
                }
            };
            for v in values {
                feed.push(v);
                let r = dfs(model, entry, domains, cfg, feed)?;
                feed.pop();
                if let Verdict::Failure(_) = r {
                    return Ok(r);
                }
            }
            Ok(Verdict::Success)
        }
        Err(e) => Err(e),
    }
}

fn split_entry<'a>(_model: &'a ClassModel, entry: &'a str) -> (&'a str, &'a str) {
    match entry.split_once('.') {
        Some((c, m)) => (c, m),
        None => (entry, "main"),
    }
}

struct Interp<'m> {
    model: &'m ClassModel,
    cfg: RunCfg,
    heap: Vec<HeapObj>,
    feed: VecDeque<FeedValue>,
    fuel: u64,
    occur: HashMap<Rc<str>, u32>,
}

impl<'m> Interp<'m> {
    fn feed_param(&mut self, ty: &MjbType) -> Result<Value> {
        match ty {
            MjbType::Int => match self.pop_feed(FeedKind::Int)? {
                FeedValue::Int(v) => Ok(Value::Int(v)),
                _ => Err(InterpError::FeedTypeMismatch),
            },
            MjbType::Str => match self.pop_feed(FeedKind::Str)? {
                FeedValue::Str(s) => Ok(Value::Str(Rc::new(s))),
                _ => Err(InterpError::FeedTypeMismatch),
            },
            MjbType::IntArray => match self.pop_feed(FeedKind::IntArray)? {
                FeedValue::Null => Ok(Value::Ref(0)),
                FeedValue::IntArray(mut v) => {
                    v.truncate(self.cfg.max_array_length.max(0) as usize);
                    Ok(Value::Ref(self.alloc(HeapObj::Arr(v))))
                }
                _ => Err(InterpError::FeedTypeMismatch),
            },
            MjbType::Class(n) => {
                let cls = self
                    .model
                    .class_idx(n)
                    .ok_or_else(|| InterpError::Entry(format!("unknown class '{n}'")))?;
                match self.pop_feed(FeedKind::Ref(cls))? {
                    FeedValue::Null => Ok(Value::Ref(0)),
                    FeedValue::Obj(name) => {
                        let c = self
                            .model
                            .class_idx(&name)
                            .ok_or_else(|| InterpError::Entry(format!("unknown class '{name}'")))?;
                        if !self.model.is_subclass(c, cls) {
                            return Err(InterpError::FeedTypeMismatch);
                        }
                        Ok(Value::Ref(self.new_obj(c)))
                    }
                    _ => Err(InterpError::FeedTypeMismatch),
                }
            }
        }
    }

    fn pop_feed(&mut self, kind: FeedKind) -> Result<FeedValue> {
        self.feed
            .pop_front()
            .ok_or(InterpError::FeedExhausted { kind })
    }

    fn alloc(&mut self, o: HeapObj) -> u32 {
        self.heap.push(o);
        self.heap.len() as u32
    }

    fn new_obj(&mut self, class: usize) -> u32 {
        let fields = self
            .model
            .layout(class)
            .iter()
            .map(|(_, f)| match f.ty {
                MjbType::Int => Value::Int(0),
                MjbType::Str => Value::Str(Rc::new(Vec::new())),
                MjbType::IntArray | MjbType::Class(_) => Value::Ref(0),
            })
            .collect();
        self.alloc(HeapObj::Obj { class, fields })
    }

    fn class_of_ref(&self, r: u32) -> Rc<str> {
        match &self.heap[r as usize - 1] {
            HeapObj::Obj { class, .. } => self.model.class(*class).name.clone(),
            HeapObj::Arr(_) => "int[]".into(),
        }
    }

    fn full_name(&self, class_idx: usize, m: &MethodDef) -> Rc<str> {
        format!("{}.{}", self.model.class(class_idx).name, m.name).into()
    }

    fn exec(&mut self, class_idx: usize, m: &'m MethodDef, args: Vec<Value>) -> Result<Flow> {
        let name = self.full_name(class_idx, m);
        if let Some(k) = self.cfg.unwind {
            let c = self.occur.entry(name.clone()).or_insert(0);
            if *c >= k {
                return Ok(Flow::Halt(Outcome::BoundExceeded));
            }
            *c += 1;
        }
        let r = self.frame(class_idx, m, args, &name);
        if self.cfg.unwind.is_some() {
            *self.occur.get_mut(&name).expect("pushed above") -= 1;
        }
        r
    }

    fn frame(
        &mut self,
        _class_idx: usize,
        m: &'m MethodDef,
        args: Vec<Value>,
        name: &Rc<str>,
    ) -> Result<Flow> {
        let mut locals: Vec<Option<Value>> = vec![None; m.max_locals as usize];
        for (i, a) in args.into_iter().enumerate() {
            locals[i] = Some(a);
        }
        let mut stack: Vec<Value> = Vec::new();
        let mut pc = 0usize;
        let mut back_counts: HashMap<usize, u32> = HashMap::new();

        macro_rules! event {
            ($kind:expr, $class:expr, $pc:expr, $line:expr) => {{
                if self.cfg.exc_mode == ExcMode::Trap {
                    return Ok(Flow::Halt(Outcome::Violated(Violation {
                        method: name.clone(),
                        kind: $kind,
                        instr_idx: $pc,
                        line: $line,
                    })));
                }
                let cls = self.model.class_idx($class).expect("builtin class");
                let r = self.new_obj(cls);
                match self.dispatch(m, $pc, r, &mut stack) {
                    Some(h) => {
                        pc = h;
                        continue;
                    }
                    None => return Ok(Flow::Thrown(r)),
                }
            }};
        }

        loop {
            if pc >= m.body.len() {
                // frontend guarantees only void methods fall off the end
                return Ok(Flow::Ret(None));
            }
            if self.fuel == 0 {
                return Ok(Flow::Halt(Outcome::FuelExhausted));
            }
            self.fuel -= 1;
            let ins = &m.body[pc];
            let line = ins.line;

            macro_rules! pop {
                () => {
                    stack.pop().expect("stack discipline checked statically")
                };
            }
            macro_rules! pop_int {
                () => {
                    match pop!() {
                        Value::Int(v) => v,
                        _ => unreachable!("stack discipline"),
                    }
                };
            }
            macro_rules! pop_str {
                () => {
                    match pop!() {
                        Value::Str(s) => s,
                        _ => unreachable!("stack discipline"),
                    }
                };
            }
            macro_rules! pop_ref {
                () => {
                    match pop!() {
                        Value::Ref(r) => r,
                        _ => unreachable!("stack discipline"),
                    }
                };
            }
            macro_rules! branch_to {
                ($target:expr) => {{
                    let t = $target;
                    if t <= pc {
                        let c = back_counts.entry(pc).or_insert(0);
                        *c += 1;
                        if let Some(k) = self.cfg.unwind {
                            if *c > k {
                                return Ok(Flow::Halt(Outcome::BoundExceeded));
                            }
                        }
                    }
                    pc = t;
                    continue;
                }};
            }
            macro_rules! ovf_check {
                ($wide:expr, $narrow:expr, $pc:expr) => {
                    if self.cfg.check_overflow && $wide != $narrow as i64 {
                        return Ok(Flow::Halt(Outcome::Violated(Violation {
                            method: name.clone(),
                            kind: PropertyKind::Overflow,
                            instr_idx: $pc,
                            line,
                        })));
                    }
                };
            }

            match &ins.op {
                Opcode::Const(v) => stack.push(Value::Int(*v)),
                Opcode::SConst(s) => stack.push(Value::Str(Rc::new(s.to_vec()))),
                Opcode::Null => stack.push(Value::Ref(0)),
                Opcode::Load(i) => {
                    let v = locals[*i as usize]
                        .clone()
                        .expect("definite assignment checked statically");
                    stack.push(v);
                }
                Opcode::Store(i) => {
                    locals[*i as usize] = Some(pop!());
                }
                Opcode::Dup => {
                    let v = pop!();
                    stack.push(v.clone());
                    stack.push(v);
                }
                Opcode::Pop => {
                    pop!();
                }
                Opcode::Add => {
                    let b = pop_int!();
                    let a = pop_int!();
                    let r = a.wrapping_add(b);
                    ovf_check!(a as i64 + b as i64, r, pc);
                    stack.push(Value::Int(r));
                }
                Opcode::Sub => {
                    let b = pop_int!();
                    let a = pop_int!();
                    let r = a.wrapping_sub(b);
                    ovf_check!(a as i64 - b as i64, r, pc);
                    stack.push(Value::Int(r));
                }
                Opcode::Mul => {
                    let b = pop_int!();
                    let a = pop_int!();
                    let r = a.wrapping_mul(b);
                    ovf_check!(a as i64 * b as i64, r, pc);
                    stack.push(Value::Int(r));
                }
                Opcode::Div => {
                    let b = pop_int!();
                    let a = pop_int!();
                    if b == 0 {
                        event!(PropertyKind::DivByZero, "ArithmeticException", pc, line);
                    }
                    stack.push(Value::Int(a.wrapping_div(b)));
                }
                Opcode::Rem => {
                    let b = pop_int!();
                    let a = pop_int!();
                    if b == 0 {
                        event!(PropertyKind::DivByZero, "ArithmeticException", pc, line);
                    }
                    stack.push(Value::Int(a.wrapping_rem(b)));
                }
                Opcode::Neg => {
                    let a = pop_int!();
                    let r = a.wrapping_neg();
                    ovf_check!(-(a as i64), r, pc);
                    stack.push(Value::Int(r));
                }
                Opcode::If(kind, l) => {
                    let b = pop!();
                    let a = pop!();
                    let taken = match (&a, &b) {
                        (Value::Int(x), Value::Int(y)) => match kind {
                            CmpKind::Eq => x == y,
                            CmpKind::Ne => x != y,
                            CmpKind::Lt => x < y,
                            CmpKind::Le => x <= y,
                            CmpKind::Gt => x > y,
                            CmpKind::Ge => x >= y,
                        },
                        (Value::Ref(x), Value::Ref(y)) => match kind {
                            CmpKind::Eq => x == y,
                            CmpKind::Ne => x != y,
                            _ => unreachable!("stack discipline"),
                        },
                        _ => unreachable!("stack discipline"),
                    };
                    if taken {
                        branch_to!(l.target);
                    }
                }
                Opcode::Goto(l) => branch_to!(l.target),
                Opcode::New(c) => {
                    let cls = self.model.class_idx(c).expect("validated");
                    let r = self.new_obj(cls);
                    stack.push(Value::Ref(r));
                }
                Opcode::GetField(fr) => {
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    let v = self.field(r, &fr.member).clone();
                    stack.push(v);
                }
                Opcode::PutField(fr) => {
                    let v = pop!();
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    *self.field(r, &fr.member) = v;
                }
                Opcode::InvokeStatic(mr) => {
                    let cls = self.model.class_idx(&mr.class).expect("validated");
                    let callee = self.model.method(cls, &mr.member).expect("validated");
                    let mut cargs = vec![Value::Int(0); callee.params.len()];
                    for slot in (0..callee.params.len()).rev() {
                        cargs[slot] = pop!();
                    }
                    match self.exec(cls, callee, cargs)? {
                        Flow::Ret(v) => {
                            if callee.ret.is_some() {
                                stack.push(v.expect("non-void return"));
                            }
                        }
                        Flow::Thrown(r) => match self.dispatch(m, pc, r, &mut stack) {
                            Some(h) => {
                                pc = h;
                                continue;
                            }
                            None => return Ok(Flow::Thrown(r)),
                        },
                        halt @ Flow::Halt(_) => return Ok(halt),
                    }
                }
                Opcode::InvokeVirtual(mr) => {
                    let static_cls = self.model.class_idx(&mr.class).expect("validated");
                    let (_, proto) = self
                        .model
                        .resolve_virtual(static_cls, &mr.member)
                        .expect("validated");
                    let nargs = proto.params.len();
                    let mut cargs = vec![Value::Int(0); nargs + 1];
                    for slot in (1..=nargs).rev() {
                        cargs[slot] = pop!();
                    }
                    let recv = pop_ref!();
                    if recv == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    cargs[0] = Value::Ref(recv);
                    let dyn_cls = match &self.heap[recv as usize - 1] {
                        HeapObj::Obj { class, .. } => *class,
                        HeapObj::Arr(_) => unreachable!("stack discipline"),
                    };
                    let (owner, callee) = self
                        .model
                        .resolve_virtual(dyn_cls, &mr.member)
                        .expect("validated");
                    match self.exec(owner, callee, cargs)? {
                        Flow::Ret(v) => {
                            if callee.ret.is_some() {
                                stack.push(v.expect("non-void return"));
                            }
                        }
                        Flow::Thrown(r) => match self.dispatch(m, pc, r, &mut stack) {
                            Some(h) => {
                                pc = h;
                                continue;
                            }
                            None => return Ok(Flow::Thrown(r)),
                        },
                        halt @ Flow::Halt(_) => return Ok(halt),
                    }
                }
                Opcode::Return => {
                    let v = if m.ret.is_some() { Some(pop!()) } else { None };
                    return Ok(Flow::Ret(v));
                }
                Opcode::NewArray => {
                    let n = pop_int!();
                    let n = clamp_i32(n, 0, self.cfg.max_array_length);
                    let r = self.alloc(HeapObj::Arr(vec![0; n as usize]));
                    stack.push(Value::Ref(r));
                }
                Opcode::ALoad => {
                    let idx = pop_int!();
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    let arr = self.array(r);
                    if idx < 0 || idx as usize >= arr.len() {
                        event!(
                            PropertyKind::ArrayBounds,
                            "ArrayIndexOutOfBoundsException",
                            pc,
                            line
                        );
                    }
                    let v = arr[idx as usize];
                    stack.push(Value::Int(v));
                }
                Opcode::AStore => {
                    let v = pop_int!();
                    let idx = pop_int!();
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    let len = self.array(r).len();
                    if idx < 0 || idx as usize >= len {
                        event!(
                            PropertyKind::ArrayBounds,
                            "ArrayIndexOutOfBoundsException",
                            pc,
                            line
                        );
                    }
                    self.array_mut(r)[idx as usize] = v;
                }
                Opcode::ArrayLength => {
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    let n = self.array(r).len() as i32;
                    stack.push(Value::Int(n));
                }
                Opcode::AThrow => {
                    let r = pop_ref!();
                    if r == 0 {
                        event!(PropertyKind::NullDeref, "NullPointerException", pc, line);
                    }
                    match self.dispatch(m, pc, r, &mut stack) {
                        Some(h) => {
                            pc = h;
                            continue;
                        }
                        None => return Ok(Flow::Thrown(r)),
                    }
                }
                Opcode::Assert => {
                    let c = pop_int!();
                    if c == 0 {
                        return Ok(Flow::Halt(Outcome::Violated(Violation {
                            method: name.clone(),
                            kind: PropertyKind::Assertion,
                            instr_idx: pc,
                            line,
                        })));
                    }
                }
                Opcode::Assume => {
                    let c = pop_int!();
                    if c == 0 {
                        return Ok(Flow::Halt(Outcome::AssumeFailed));
                    }
                }
                Opcode::NondetInt => match self.pop_feed(FeedKind::Int)? {
                    FeedValue::Int(v) => stack.push(Value::Int(v)),
                    _ => return Err(InterpError::FeedTypeMismatch),
                },
                Opcode::NondetString => match self.pop_feed(FeedKind::Str)? {
                    FeedValue::Str(s) => stack.push(Value::Str(Rc::new(s))),
                    _ => return Err(InterpError::FeedTypeMismatch),
                },
                Opcode::SLen => {
                    let s = pop_str!();
                    stack.push(Value::Int(s.len() as i32));
                }
                Opcode::SCharAt => {
                    let i = pop_int!();
                    let s = pop_str!();
                    stack.push(Value::Int(str_charat(&s, i)));
                }
                Opcode::SIndexOf => {
                    let from = pop_int!();
                    let c = pop_int!();
                    let s = pop_str!();
                    stack.push(Value::Int(str_indexof(&s, c, from)));
                }
                Opcode::SSubstring => {
                    let e = pop_int!();
                    let b = pop_int!();
                    let s = pop_str!();
                    stack.push(Value::Str(Rc::new(str_substring(&s, b, e))));
                }
                Opcode::SConcat => {
                    let t = pop_str!();
                    let s = pop_str!();
                    stack.push(Value::Str(Rc::new(str_concat(&s, &t))));
                }
                Opcode::SEquals => {
                    let t = pop_str!();
                    let s = pop_str!();
                    stack.push(Value::Int((s == t) as i32));
                }
                Opcode::SStartsWith => {
                    let p = pop_str!();
                    let s = pop_str!();
                    stack.push(Value::Int(str_startswith(&s, &p) as i32));
                }
                Opcode::SInsert => {
                    let t = pop_str!();
                    let off = pop_int!();
                    let s = pop_str!();
                    stack.push(Value::Str(Rc::new(str_insert(&s, off, &t))));
                }
                Opcode::SOfInt => {
                    let n = pop_int!();
                    stack.push(Value::Str(Rc::new(str_of_int(n))));
                }
            }
            pc += 1;
        }
    }

    /// Finds the handler for an exception thrown at `pc`, entering it with
    /// the exception as the only stack value. `None` propagates to the
    /// caller.
    fn dispatch(
        &mut self,
        m: &MethodDef,
        pc: usize,
        exc: u32,
        stack: &mut Vec<Value>,
    ) -> Option<usize> {
        let exc_cls = match &self.heap[exc as usize - 1] {
            HeapObj::Obj { class, .. } => *class,
            HeapObj::Arr(_) => unreachable!("arrays are never thrown"),
        };
        for e in &m.exception_table {
            if e.start <= pc && pc < e.end {
                let hcls = self.model.class_idx(&e.class_name).expect("validated");
                if self.model.is_subclass(exc_cls, hcls) {
                    stack.clear();
                    stack.push(Value::Ref(exc));
                    return Some(e.handler);
                }
            }
        }
        None
    }

    fn field(&mut self, r: u32, name: &str) -> &mut Value {
        match &mut self.heap[r as usize - 1] {
            HeapObj::Obj { class, fields } => {
                let pos = self
                    .model
                    .layout(*class)
                    .iter()
                    .position(|(_, f)| &*f.name == name)
                    .expect("validated field");
                &mut fields[pos]
            }
            HeapObj::Arr(_) => unreachable!("stack discipline"),
        }
    }

    fn array(&self, r: u32) -> &Vec<i32> {
        match &self.heap[r as usize - 1] {
            HeapObj::Arr(v) => v,
            HeapObj::Obj { .. } => unreachable!("stack discipline"),
        }
    }

    fn array_mut(&mut self, r: u32) -> &mut Vec<i32> {
        match &mut self.heap[r as usize - 1] {
            HeapObj::Arr(v) => v,
            HeapObj::Obj { .. } => unreachable!("stack discipline"),
        }
    }
}

pub fn utf16(s: &str) -> Vec<u16> {
    s.encode_utf16().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_module;

    fn fixture(name: &str) -> &'static str {
        match name {
            "string_util" => include_str!("../tests/fixtures/string_util.mjb"),
            "binary_search" => include_str!("../tests/fixtures/binary_search.mjb"),
            "equivalence_check" => include_str!("../tests/fixtures/equivalence_check.mjb"),
            _ => panic!("unknown fixture"),
        }
    }

    #[test]
    fn get_last_token_returns_b() {
        let model = parse_module(fixture("string_util")).unwrap();
        let out = run(
            &model,
            "StringUtil.getLastToken",
            &[
                FeedValue::Str(utf16("a,b")),
                FeedValue::Int(',' as i32),
                FeedValue::Int(2),
            ],
            RunCfg::default(),
        )
        .unwrap();
        assert_eq!(out, Outcome::Returned(Some(Value::Str(Rc::new(utf16("b"))))));
    }

    #[test]
    fn get_last_token_limit_zero_violates() {
        let model = parse_module(fixture("string_util")).unwrap();
        let out = run(
            &model,
            "StringUtil.getLastToken",
            &[
                FeedValue::Str(utf16("a,b")),
                FeedValue::Int(',' as i32),
                FeedValue::Int(0),
            ],
            RunCfg::default(),
        )
        .unwrap();
        match out {
            Outcome::Violated(v) => {
                assert_eq!(v.kind, PropertyKind::Assertion);
                assert_eq!(v.line, 17);
            }
            other => panic!("expected assertion violation, got {other:?}"),
        }
    }

    #[test]
    fn binary_search_null_array_raises_npe() {
        let model = parse_module(fixture("binary_search")).unwrap();
        let out = run(
            &model,
            "BinarySearch.binarySearch",
            &[FeedValue::Null, FeedValue::Int(5)],
            RunCfg { exc_mode: ExcMode::Propagate, ..RunCfg::default() },
        )
        .unwrap();
        assert_eq!(out, Outcome::Uncaught { class: "NullPointerException".into() });
        // trap mode pins the null dereference to line 4
        let out = run(
            &model,
            "BinarySearch.binarySearch",
            &[FeedValue::Null, FeedValue::Int(5)],
            RunCfg::default(),
        )
        .unwrap();
        match out {
            Outcome::Violated(v) => {
                assert_eq!(v.kind, PropertyKind::NullDeref);
                assert_eq!(v.line, 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_search_empty_array_goes_out_of_bounds() {
        let model = parse_module(fixture("binary_search")).unwrap();
        let out = run(
            &model,
            "BinarySearch.binarySearch",
            &[FeedValue::IntArray(vec![]), FeedValue::Int(5)],
            RunCfg { exc_mode: ExcMode::Propagate, ..RunCfg::default() },
        )
        .unwrap();
        assert_eq!(
            out,
            Outcome::Uncaught { class: "ArrayIndexOutOfBoundsException".into() }
        );
    }

    #[test]
    fn binary_search_finds_member() {
        let model = parse_module(fixture("binary_search")).unwrap();
        let out = run(
            &model,
            "BinarySearch.binarySearch",
            &[FeedValue::IntArray(vec![1, 3, 5, 7]), FeedValue::Int(5)],
            RunCfg::default(),
        )
        .unwrap();
        assert_eq!(out, Outcome::Returned(Some(Value::Int(2))));
    }

    #[test]
    fn abs_variants_agree_on_min_int() {
        let model = parse_module(fixture("equivalence_check")).unwrap();
        for v in [i32::MIN, -7, 0, 3, i32::MAX] {
            let out = run(
                &model,
                "EquivalenceCheck.check",
                &[FeedValue::Int(v)],
                RunCfg::default(),
            )
            .unwrap();
            assert_eq!(out, Outcome::Returned(None), "input {v}");
        }
    }

    #[test]
    fn exceptions_unwind_through_tables() {
        let src = "
            class MyErr exception { }
            class Sub extends MyErr { }
            class A {
              static method boom() locals 0 {
                new Sub
                athrow
              }
              static method m() : int locals 1 {
                t0:
                invokestatic A.boom
                t1:
                const 0
                return
                h:
                store 0
                const 7
                return
              }
              catch (t0, t1) -> h : MyErr
            }";
        let model = parse_module(src).unwrap();
        let out = run(&model, "A.m", &[], RunCfg::default()).unwrap();
        // subclass thrown, superclass handler catches
        assert_eq!(out, Outcome::Returned(Some(Value::Int(7))));
    }

    #[test]
    fn bound_semantics_prune_deep_iterations() {
        let src = "
            class A {
              static method m() locals 1 {
                const 0
                store 0
              loop:
                load 0
                const 3
                if_ne ok
                const 0
                goto check
              ok:
                const 1
              check:
                assert
                load 0
                const 1
                add
                store 0
                goto loop
              }
            }";
        let model = parse_module(src).unwrap();
        // bug fires on the 4th body execution, i.e. after 3 backedge traversals
        for (k, expect_fail) in [(1, false), (2, false), (3, true), (4, true)] {
            let v = enumerate(&model, "A.m", &Domains::default(), k, RunCfg::default()).unwrap();
            assert_eq!(matches!(v, Verdict::Failure(_)), expect_fail, "k={k}");
        }
    }

    #[test]
    fn division_truncates_toward_zero() {
        let src = "
            class A {
              static method m(int, int) : int locals 2 {
                load 0
                load 1
                div
                return
              }
            }";
        let model = parse_module(src).unwrap();
        let div = |a: i32, b: i32| {
            match run(
                &model,
                "A.m",
                &[FeedValue::Int(a), FeedValue::Int(b)],
                RunCfg::default(),
            )
            .unwrap()
            {
                Outcome::Returned(Some(Value::Int(v))) => v,
                o => panic!("{o:?}"),
            }
        };
        assert_eq!(div(-7, 2), -3);
        assert_eq!(div(7, -2), -3);
        assert_eq!(div(i32::MIN, -1), i32::MIN);
    }

    #[test]
    fn feed_exhaustion_is_reported() {
        let src = "class A { static method m(int) locals 1 { return } }";
        let model = parse_module(src).unwrap();
        let err = run(&model, "A.m", &[], RunCfg::default()).unwrap_err();
        assert_eq!(err, InterpError::FeedExhausted { kind: FeedKind::Int });
    }
}
