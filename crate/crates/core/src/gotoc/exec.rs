//! Concrete executor for lowered goto programs. Exists to certify semantic
//! preservation: on any feed, the original bytecode under [`crate::interp`]
//! and the lowered program here must reach identical outcomes.

use super::*;
use std::collections::{HashMap, VecDeque};
use std::rc::Rc;
use crate::expr::{BinOp, Expr, ExprRef, StrFn, Ty, Var, VarKind};
use crate::interp::{
    clamp_i32, str_charat, str_concat, str_indexof, str_insert, str_of_int, str_startswith,
    str_substring, FeedKind, FeedValue, InterpError, RunCfg, Value,
};


#[derive(Debug, Clone, PartialEq)]
pub enum GotoOutcome {
    Returned(Option<Value>),
    /// Index into `GotoProgram::props`.
    Violated(usize),
    AssumeFailed,
    FuelExhausted,
    BoundExceeded,
}

enum EV {
    I(i32),
    B(bool),
    S(Rc<Vec<u16>>),
}

impl EV {
    fn int(self) -> i32 {
        match self {
            EV::I(v) => v,
            _ => panic!("type confusion in goto executor"),
        }
    }

    fn boolean(self) -> bool {
        match self {
            EV::B(v) => v,
            _ => panic!("type confusion in goto executor"),
        }
    }
}

enum HeapObj {
    Obj { class: usize, fields: Vec<Value> },
    Arr(Vec<i32>),
}

type XResult<T> = std::result::Result<T, InterpError>;

enum Flow {
    Ret(Option<Value>),
    Halt(GotoOutcome),
}

pub fn run_goto(
    prog: &GotoProgram,
    feed: &[FeedValue],
    cfg: RunCfg,
) -> std::result::Result<GotoOutcome, InterpError> {
    let entry = prog.entry.ok_or_else(|| InterpError::Entry("program has no harness".into()))?;
    let mut ex = Exec {
        prog,
        cfg,
        heap: Vec::new(),
        feed: feed.iter().cloned().collect(),
        fuel: cfg.fuel,
        thrown: Value::Ref(0),
        occur: HashMap::new(),
    };
    match ex.exec(entry, Vec::new())? {
        Flow::Ret(v) => Ok(GotoOutcome::Returned(v)),
        Flow::Halt(o) => Ok(o),
    }
}

struct Exec<'p> {
    prog: &'p GotoProgram,
    cfg: RunCfg,
    heap: Vec<HeapObj>,
    feed: VecDeque<FeedValue>,
    fuel: u64,
    thrown: Value,
    occur: HashMap<usize, u32>,
}

impl<'p> Exec<'p> {
    fn exec(&mut self, mi: usize, args: Vec<Value>) -> XResult<Flow> {
        if let Some(k) = self.cfg.unwind {
            let c = self.occur.entry(mi).or_insert(0);
            if *c >= k {
                return Ok(Flow::Halt(GotoOutcome::BoundExceeded));
            }
            *c += 1;
        }
        let r = self.frame(mi, args);
        if self.cfg.unwind.is_some() {
            *self.occur.get_mut(&mi).expect("pushed above") -= 1;
        }
        r
    }

    fn frame(&mut self, mi: usize, args: Vec<Value>) -> XResult<Flow> {
        let m = &self.prog.methods[mi];
        let mut vars: HashMap<Var, Value> = HashMap::new();
        let mut slot_tys: Vec<Ty> = Vec::new();
        if !m.is_static {
            slot_tys.push(Ty::Ref); // `this`
        }
        slot_tys.extend(m.param_tys.iter().map(super::convert::erase_decl));
        for (i, a) in args.into_iter().enumerate() {
            let v = Var { kind: VarKind::Local(i as u16), ty: slot_tys[i] };
            let a = Self::coerce(a, slot_tys[i]);
            vars.insert(v, a);
        }
        let mut pc = 0usize;
        let mut back_counts: HashMap<usize, u32> = HashMap::new();

        loop {
            if pc >= m.instrs.len() {
                return Ok(Flow::Ret(None));
            }
            if self.fuel == 0 {
                return Ok(Flow::Halt(GotoOutcome::FuelExhausted));
            }
            self.fuel -= 1;
            let ins = &m.instrs[pc];
            match &ins.kind {
                GKind::Decl(_) | GKind::Dead(_) => {}
                GKind::Assign { lhs, rhs } => {
                    let value = match rhs {
                        Rhs::Expr(e) => self.eval_value(e, &vars),
                        Rhs::NondetInt => match self.pop_feed(FeedKind::Int)? {
                            FeedValue::Int(v) => Value::Int(v),
                            _ => return Err(InterpError::FeedTypeMismatch),
                        },
                        Rhs::NondetStr => match self.pop_feed(FeedKind::Str)? {
                            FeedValue::Str(s) => Value::Str(Rc::new(s)),
                            _ => return Err(InterpError::FeedTypeMismatch),
                        },
                        Rhs::NondetRef(cls) => match self.pop_feed(FeedKind::Ref(*cls))? {
                            FeedValue::Null => Value::Ref(0),
                            FeedValue::Obj(name) => {
                                let c = self
                                    .prog
                                    .class_names
                                    .iter()
                                    .position(|n| *n == name)
                                    .ok_or(InterpError::FeedTypeMismatch)?;
                                Value::Ref(self.new_obj(c))
                            }
                            _ => return Err(InterpError::FeedTypeMismatch),
                        },
                        Rhs::NondetArr => match self.pop_feed(FeedKind::IntArray)? {
                            FeedValue::Null => Value::Ref(0),
                            FeedValue::IntArray(mut v) => {
                                v.truncate(self.cfg.max_array_length.max(0) as usize);
                                self.heap.push(HeapObj::Arr(v));
                                Value::Ref(self.heap.len() as u32)
                            }
                            _ => return Err(InterpError::FeedTypeMismatch),
                        },
                        Rhs::AllocObj(cls) => Value::Ref(self.new_obj(*cls)),
                        Rhs::AllocArr(len) => {
                            let n = self.eval(len, &vars).int();
                            let n = clamp_i32(n, 0, self.cfg.max_array_length);
                            self.heap.push(HeapObj::Arr(vec![0; n as usize]));
                            Value::Ref(self.heap.len() as u32)
                        }
                    };
                    match lhs {
                        Lhs::Var(v) if v.kind == VarKind::Thrown => {
                            self.thrown = Self::coerce(value, Ty::Ref)
                        }
                        Lhs::Var(v) => {
                            let value = Self::coerce(value, v.ty);
                            vars.insert(v.clone(), value);
                        }
                        Lhs::Field { obj, field } => {
                            let r = self.eval_ref(obj, &vars);
                            let pos = self.field_pos(r, &field.name);
                            let fty = match &self.heap[r as usize - 1] {
                                HeapObj::Obj { class, .. } => {
                                    self.prog.layouts[*class].fields[pos].1
                                }
                                HeapObj::Arr(_) => panic!("field store on array"),
                            };
                            let value = Self::coerce(value, fty);
                            match &mut self.heap[r as usize - 1] {
                                HeapObj::Obj { fields, .. } => fields[pos] = value,
                                HeapObj::Arr(_) => panic!("field store on array"),
                            }
                        }
                        Lhs::Elem { arr, idx } => {
                            let r = self.eval_ref(arr, &vars);
                            let i = self.eval(idx, &vars).int();
                            let v = match value {
                                Value::Int(v) => v,
                                _ => panic!("array element must be int"),
                            };
                            match &mut self.heap[r as usize - 1] {
                                HeapObj::Arr(elems) => elems[i as usize] = v,
                                HeapObj::Obj { .. } => panic!("element store on object"),
                            }
                        }
                    }
                }
                GKind::Goto { target, guard, backedge } => {
                    if self.eval(guard, &vars).boolean() {
                        if *backedge {
                            let c = back_counts.entry(pc).or_insert(0);
                            *c += 1;
                            if let Some(k) = self.cfg.unwind {
                                if *c > k {
                                    return Ok(Flow::Halt(GotoOutcome::BoundExceeded));
                                }
                            }
                        }
                        pc = *target;
                        continue;
                    }
                }
                GKind::Assert { cond, prop } => {
                    if !self.eval(cond, &vars).boolean() {
                        return Ok(Flow::Halt(GotoOutcome::Violated(*prop)));
                    }
                }
                GKind::Assume { cond } => {
                    if !self.eval(cond, &vars).boolean() {
                        return Ok(Flow::Halt(GotoOutcome::AssumeFailed));
                    }
                }
                GKind::Call { target, args, ret } => {
                    let argv: Vec<Value> = args.iter().map(|a| self.eval_value(a, &vars)).collect();
                    match self.exec(*target, argv)? {
                        Flow::Ret(v) => {
                            if let Some(rv) = ret {
                                let v = Self::coerce(v.expect("non-void return"), rv.ty);
                                vars.insert(rv.clone(), v);
                            }
                        }
                        halt @ Flow::Halt(_) => return Ok(halt),
                    }
                }
                GKind::CallVirtual { .. } => panic!("virtual call survived lowering"),
                GKind::Throw { .. } => panic!("throw survived lowering"),
                GKind::Return { value } => {
                    let v = value.as_ref().map(|e| {
                        let raw = self.eval_value(e, &vars);
                        match &m.ret_ty {
                            Some(t) => Self::coerce(raw, super::convert::erase_decl(t)),
                            None => raw,
                        }
                    });
                    return Ok(Flow::Ret(v));
                }
            }
            pc += 1;
        }
    }

    /// References travel as ints inside expressions; restore the Ref shape
    /// wherever a typed slot receives a value.
    fn coerce(value: Value, ty: Ty) -> Value {
        match (value, ty) {
            (Value::Int(v), Ty::Ref) => Value::Ref(v as u32),
            (v, _) => v,
        }
    }

    fn pop_feed(&mut self, kind: FeedKind) -> XResult<FeedValue> {
        self.feed.pop_front().ok_or(InterpError::FeedExhausted { kind })
    }

    fn new_obj(&mut self, class: usize) -> u32 {
        let fields = self.prog.layouts[class]
            .fields
            .iter()
            .map(|(_, ty)| match ty {
                Ty::Int => Value::Int(0),
                Ty::Str => Value::Str(Rc::new(Vec::new())),
                Ty::Ref => Value::Ref(0),
                _ => panic!("unexpected field type"),
            })
            .collect::<Vec<_>>();
        let mut fields = fields;
        fields[0] = Value::Int(class as i32);
        self.heap.push(HeapObj::Obj { class, fields });
        self.heap.len() as u32
    }

    fn field_pos(&self, r: u32, name: &str) -> usize {
        let class = match &self.heap[r as usize - 1] {
            HeapObj::Obj { class, .. } => *class,
            HeapObj::Arr(_) => panic!("field access on array"),
        };
        self.prog.layouts[class]
            .fields
            .iter()
            .position(|(f, _)| &*f.name == name)
            .expect("resolved field")
    }

    fn eval_value(&mut self, e: &ExprRef, vars: &HashMap<Var, Value>) -> Value {
        match self.eval(e, vars) {
            EV::I(v) => Value::Int(v),
            EV::S(s) => Value::Str(Rc::new((*s).clone())),
            EV::B(_) => panic!("booleans never stored"),
        }
    }

    fn eval_ref(&mut self, e: &ExprRef, vars: &HashMap<Var, Value>) -> u32 {
        match self.eval(e, vars).int() {
            v if v >= 0 => v as u32,
            _ => panic!("negative reference"),
        }
    }

    /// References evaluate as their object id so integer comparison covers
    /// them uniformly.
    fn eval(&mut self, e: &ExprRef, vars: &HashMap<Var, Value>) -> EV {
        match &**e {
            Expr::IntConst(v) => EV::I(*v),
            Expr::BoolConst(v) => EV::B(*v),
            Expr::StrConst(s) => EV::S(Rc::new(s.to_vec())),
            Expr::Null => EV::I(0),
            Expr::Var(v) => {
                let val = if v.kind == VarKind::Thrown {
                    self.thrown.clone()
                } else {
                    vars.get(v).cloned().unwrap_or_else(|| panic!("read of undefined {v}"))
                };
                match val {
                    Value::Int(i) => EV::I(i),
                    Value::Ref(r) => EV::I(r as i32),
                    Value::Str(s) => EV::S(s),
                }
            }
            Expr::Sym(_) => panic!("SSA symbol in goto execution"),
            Expr::Bin(op, a, b) => {
                if matches!(op, BinOp::And | BinOp::Or | BinOp::Implies) {
                    let x = self.eval(a, vars).boolean();
                    return EV::B(match op {
                        BinOp::And => x && self.eval(b, vars).boolean(),
                        BinOp::Or => x || self.eval(b, vars).boolean(),
                        _ => !x || self.eval(b, vars).boolean(),
                    });
                }
                let x = self.eval(a, vars).int();
                let y = self.eval(b, vars).int();
                match op {
                    BinOp::Add => EV::I(x.wrapping_add(y)),
                    BinOp::Sub => EV::I(x.wrapping_sub(y)),
                    BinOp::Mul => EV::I(x.wrapping_mul(y)),
                    BinOp::Div => EV::I(x.wrapping_div(y)),
                    BinOp::Rem => EV::I(x.wrapping_rem(y)),
                    BinOp::Eq => EV::B(x == y),
                    BinOp::Ne => EV::B(x != y),
                    BinOp::Lt => EV::B(x < y),
                    BinOp::Le => EV::B(x <= y),
                    BinOp::Gt => EV::B(x > y),
                    BinOp::Ge => EV::B(x >= y),
                    _ => unreachable!(),
                }
            }
            Expr::Neg(a) => EV::I(self.eval(a, vars).int().wrapping_neg()),
            Expr::Not(a) => EV::B(!self.eval(a, vars).boolean()),
            Expr::Ite(c, t, f) => {
                if self.eval(c, vars).boolean() {
                    self.eval(t, vars)
                } else {
                    self.eval(f, vars)
                }
            }
            Expr::Select(..) | Expr::Store(..) | Expr::ArrZero => {
                panic!("SSA array node in goto execution")
            }
            Expr::StrApp(f, args) => self.eval_str_app(*f, args, vars),
            Expr::MulNoOvf(a, b) => {
                let x = self.eval(a, vars).int() as i64;
                let y = self.eval(b, vars).int() as i64;
                let p = x * y;
                EV::B(p >= i32::MIN as i64 && p <= i32::MAX as i64)
            }
            Expr::FieldSel(obj, field) => {
                let r = self.eval_ref(obj, vars);
                assert!(r != 0, "null dereference escaped instrumentation");
                if &*field.name == CLASS_ID_FIELD {
                    match &self.heap[r as usize - 1] {
                        HeapObj::Obj { class, .. } => return EV::I(*class as i32),
                        HeapObj::Arr(_) => panic!("class id of array"),
                    }
                }
                let pos = self.field_pos(r, &field.name);
                match &self.heap[r as usize - 1] {
                    HeapObj::Obj { fields, .. } => match &fields[pos] {
                        Value::Int(v) => EV::I(*v),
                        Value::Ref(x) => EV::I(*x as i32),
                        Value::Str(s) => EV::S(s.clone()),
                    },
                    HeapObj::Arr(_) => panic!("field access on array"),
                }
            }
            Expr::ArraySel(arr, idx) => {
                let r = self.eval_ref(arr, vars);
                let i = self.eval(idx, vars).int();
                assert!(r != 0, "null dereference escaped instrumentation");
                match &self.heap[r as usize - 1] {
                    HeapObj::Arr(elems) => EV::I(elems[i as usize]),
                    HeapObj::Obj { .. } => panic!("element access on object"),
                }
            }
            Expr::ArrayLen(arr) => {
                let r = self.eval_ref(arr, vars);
                assert!(r != 0, "null dereference escaped instrumentation");
                match &self.heap[r as usize - 1] {
                    HeapObj::Arr(elems) => EV::I(elems.len() as i32),
                    HeapObj::Obj { .. } => panic!("length of object"),
                }
            }
        }
    }

    fn eval_str_app(&mut self, f: StrFn, args: &[ExprRef], vars: &HashMap<Var, Value>) -> EV {
        macro_rules! s {
            ($i:expr) => {
                match self.eval(&args[$i], vars) {
                    EV::S(s) => s,
                    _ => panic!("string operand expected"),
                }
            };
        }
        macro_rules! i {
            ($i:expr) => {
                self.eval(&args[$i], vars).int()
            };
        }
        match f {
            StrFn::Len => EV::I(s!(0).len() as i32),
            StrFn::CharAt => EV::I(str_charat(&s!(0), i!(1))),
            StrFn::IndexOf => EV::I(str_indexof(&s!(0), i!(1), i!(2))),
            StrFn::Substring => EV::S(Rc::new(str_substring(&s!(0), i!(1), i!(2)))),
            StrFn::Concat => EV::S(Rc::new(str_concat(&s!(0), &s!(1)))),
            StrFn::Insert => EV::S(Rc::new(str_insert(&s!(0), i!(1), &s!(2)))),
            StrFn::OfInt => EV::S(Rc::new(str_of_int(i!(0)))),
            StrFn::Equals => EV::B(s!(0) == s!(1)),
            StrFn::StartsWith => EV::B(str_startswith(&s!(0), &s!(1))),
        }
    }
}
