//! Static stack discipline: a worklist fixpoint that assigns every reachable
//! instruction a unique entry stack type vector and checks definite
//! assignment of local slots. The result drives the goto converter's temp
//! naming and operand class resolution.

use super::{
    ClassModel, CmpKind, FrontendError, MethodDef, MjbType, Opcode, Result, StackTy,
};

/// Local slot state at a program point.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalSt {
    /// Not assigned on some path; reading is an error.
    Unset,
    Set(StackTy),
    /// Assigned with incompatible kinds on different paths; reading is an
    /// error.
    Conflict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcState {
    pub stack: Vec<StackTy>,
    pub locals: Vec<LocalSt>,
}

pub(super) fn check_method(
    model: &ClassModel,
    ci: usize,
    mi: usize,
) -> Result<Vec<Option<PcState>>> {
    Checker { model, ci, m: &model.classes[ci].methods[mi] }.run()
}

struct Checker<'a> {
    model: &'a ClassModel,
    ci: usize,
    m: &'a MethodDef,
}

impl<'a> Checker<'a> {
    fn run(&self) -> Result<Vec<Option<PcState>>> {
        let m = self.m;
        let n = m.body.len();
        let mut flow: Vec<Option<PcState>> = vec![None; n + 1];
        let mut work: Vec<usize> = Vec::new();

        let mut locals = vec![LocalSt::Unset; m.max_locals as usize];
        let mut slot = 0usize;
        if !m.is_static {
            locals[0] = LocalSt::Set(StackTy::Obj(self.ci));
            slot = 1;
        }
        for p in &m.params {
            locals[slot] = LocalSt::Set(self.decl_to_stack(p)?);
            slot += 1;
        }
        flow[0] = Some(PcState { stack: Vec::new(), locals });
        work.push(0);

        while let Some(pc) = work.pop() {
            if pc == n {
                if m.ret.is_some() {
                    return Err(self.stack_err(
                        m.body.last().map(|i| i.line).unwrap_or(m.decl_line),
                        "control may fall off the end of a non-void method",
                    ));
                }
                continue;
            }
            let state = flow[pc].clone().expect("worklist entries are reached");
            for (succ, succ_state) in self.step(pc, state)? {
                self.merge(&mut flow, &mut work, succ, succ_state)?;
            }
            // every covered pc feeds its handlers (locals as of entry,
            // stack replaced by the thrown exception)
            let pre = flow[pc].as_ref().expect("just processed");
            let pre_locals = pre.locals.clone();
            for e in &m.exception_table {
                if e.start <= pc && pc < e.end {
                    let cls = self.model.class_idx(&e.class_name).ok_or_else(|| {
                        FrontendError::Resolve {
                            line: m.decl_line,
                            msg: format!("unknown exception class '{}' in catch", e.class_name),
                        }
                    })?;
                    if !self.model.is_exception_class(cls) {
                        return Err(FrontendError::Resolve {
                            line: m.decl_line,
                            msg: format!("catch class '{}' is not an exception class", e.class_name),
                        });
                    }
                    let hstate = PcState {
                        stack: vec![StackTy::Obj(cls)],
                        locals: pre_locals.clone(),
                    };
                    self.merge(&mut flow, &mut work, e.handler, hstate)?;
                }
            }
        }
        flow.truncate(n);
        Ok(flow)
    }

    fn merge(
        &self,
        flow: &mut [Option<PcState>],
        work: &mut Vec<usize>,
        pc: usize,
        incoming: PcState,
    ) -> Result<()> {
        let line = self.line_of(pc);
        match &mut flow[pc] {
            slot @ None => {
                *slot = Some(incoming);
                work.push(pc);
            }
            Some(cur) => {
                if cur.stack.len() != incoming.stack.len() {
                    return Err(self.stack_err(
                        line,
                        &format!(
                            "stack depth mismatch at join: {} vs {}",
                            cur.stack.len(),
                            incoming.stack.len()
                        ),
                    ));
                }
                let mut changed = false;
                for (a, b) in cur.stack.iter_mut().zip(incoming.stack.iter()) {
                    let j = self.join_stack(a, b).ok_or_else(|| {
                        self.stack_err(line, "incompatible stack types at join")
                    })?;
                    if &j != a {
                        *a = j;
                        changed = true;
                    }
                }
                for (a, b) in cur.locals.iter_mut().zip(incoming.locals.iter()) {
                    let j = self.join_local(a, b);
                    if &j != a {
                        *a = j;
                        changed = true;
                    }
                }
                if changed {
                    work.push(pc);
                }
            }
        }
        Ok(())
    }

    fn join_stack(&self, a: &StackTy, b: &StackTy) -> Option<StackTy> {
        match (a, b) {
            _ if a == b => Some(a.clone()),
            (StackTy::Null, StackTy::Obj(_) | StackTy::IntArray) => Some(b.clone()),
            (StackTy::Obj(_) | StackTy::IntArray, StackTy::Null) => Some(a.clone()),
            (StackTy::Obj(x), StackTy::Obj(y)) => self.model.join_class(*x, *y).map(StackTy::Obj),
            _ => None,
        }
    }

    fn join_local(&self, a: &LocalSt, b: &LocalSt) -> LocalSt {
        match (a, b) {
            (LocalSt::Unset, _) | (_, LocalSt::Unset) => LocalSt::Unset,
            (LocalSt::Conflict, _) | (_, LocalSt::Conflict) => LocalSt::Conflict,
            (LocalSt::Set(x), LocalSt::Set(y)) => match self.join_stack(x, y) {
                Some(j) => LocalSt::Set(j),
                None => LocalSt::Conflict,
            },
        }
    }

    /// Executes one instruction over the type state, returning its
    /// successors.
    fn step(&self, pc: usize, mut st: PcState) -> Result<Vec<(usize, PcState)>> {
        let m = self.m;
        let ins = &m.body[pc];
        let line = ins.line;

        macro_rules! pop {
            ($what:expr) => {
                st.stack.pop().ok_or_else(|| {
                    self.stack_err(line, &format!("stack underflow popping {}", $what))
                })?
            };
        }
        macro_rules! pop_int {
            ($what:expr) => {{
                let t = pop!($what);
                if t != StackTy::Int {
                    return Err(self.stack_err(line, &format!("{} must be int", $what)));
                }
            }};
        }
        macro_rules! pop_str {
            ($what:expr) => {{
                let t = pop!($what);
                if t != StackTy::Str {
                    return Err(self.stack_err(line, &format!("{} must be string", $what)));
                }
            }};
        }

        let fall = pc + 1;
        let out = match &ins.op {
            Opcode::Const(_) => {
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::SConst(_) => {
                st.stack.push(StackTy::Str);
                vec![(fall, st)]
            }
            Opcode::Null => {
                st.stack.push(StackTy::Null);
                vec![(fall, st)]
            }
            Opcode::Load(i) => {
                let i = *i as usize;
                if i >= m.max_locals as usize {
                    return Err(self.resolve_err(line, &format!("slot {i} out of range")));
                }
                match &st.locals[i] {
                    LocalSt::Set(t) => st.stack.push(t.clone()),
                    LocalSt::Unset => {
                        return Err(self.stack_err(
                            line,
                            &format!("local slot {i} may be read before assignment"),
                        ))
                    }
                    LocalSt::Conflict => {
                        return Err(self.stack_err(
                            line,
                            &format!("local slot {i} holds incompatible types"),
                        ))
                    }
                }
                vec![(fall, st)]
            }
            Opcode::Store(i) => {
                let i = *i as usize;
                if i >= m.max_locals as usize {
                    return Err(self.resolve_err(line, &format!("slot {i} out of range")));
                }
                let t = pop!("stored value");
                st.locals[i] = LocalSt::Set(t);
                vec![(fall, st)]
            }
            Opcode::Dup => {
                let t = pop!("dup operand");
                st.stack.push(t.clone());
                st.stack.push(t);
                vec![(fall, st)]
            }
            Opcode::Pop => {
                pop!("pop operand");
                vec![(fall, st)]
            }
            Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::Div | Opcode::Rem => {
                pop_int!("right operand");
                pop_int!("left operand");
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::Neg => {
                pop_int!("operand");
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::If(kind, l) => {
                let b = pop!("right comparison operand");
                let a = pop!("left comparison operand");
                let int_pair = a == StackTy::Int && b == StackTy::Int;
                let ref_kind = |t: &StackTy| {
                    matches!(t, StackTy::Obj(_) | StackTy::IntArray | StackTy::Null)
                };
                let ref_pair = ref_kind(&a) && ref_kind(&b);
                match kind {
                    CmpKind::Eq | CmpKind::Ne if int_pair || ref_pair => {}
                    CmpKind::Eq | CmpKind::Ne => {
                        return Err(self.stack_err(
                            line,
                            "if_eq/if_ne compare two ints or two references (strings use s_equals)",
                        ))
                    }
                    _ if int_pair => {}
                    _ => {
                        return Err(self.stack_err(line, "ordered comparison needs int operands"))
                    }
                }
                vec![(l.target, st.clone()), (fall, st)]
            }
            Opcode::Goto(l) => vec![(l.target, st)],
            Opcode::New(name) => {
                let idx = self.class_of(name, line)?;
                st.stack.push(StackTy::Obj(idx));
                vec![(fall, st)]
            }
            Opcode::GetField(r) => {
                let (fty, owner) = self.field_ty(r, line)?;
                let recv = pop!("receiver");
                self.require_obj(&recv, owner, line)?;
                st.stack.push(self.decl_to_stack(&fty)?);
                vec![(fall, st)]
            }
            Opcode::PutField(r) => {
                let (fty, owner) = self.field_ty(r, line)?;
                let val = pop!("value");
                self.require_assignable(&val, &fty, line)?;
                let recv = pop!("receiver");
                self.require_obj(&recv, owner, line)?;
                vec![(fall, st)]
            }
            Opcode::InvokeStatic(r) => {
                let cls = self.class_of(&r.class, line)?;
                let callee = self.model.method(cls, &r.member).ok_or_else(|| {
                    self.resolve_err(line, &format!("unknown method '{}.{}'", r.class, r.member))
                })?;
                if !callee.is_static {
                    return Err(
                        self.resolve_err(line, &format!("'{}.{}' is not static", r.class, r.member))
                    );
                }
                self.pop_args(&mut st, callee, line)?;
                if let Some(rt) = &callee.ret {
                    st.stack.push(self.decl_to_stack(rt)?);
                }
                vec![(fall, st)]
            }
            Opcode::InvokeVirtual(r) => {
                let cls = self.class_of(&r.class, line)?;
                let (_, callee) = self.model.resolve_virtual(cls, &r.member).ok_or_else(|| {
                    self.resolve_err(
                        line,
                        &format!("no implementation of '{}.{}' in the hierarchy", r.class, r.member),
                    )
                })?;
                self.pop_args(&mut st, callee, line)?;
                let recv = pop!("receiver");
                self.require_obj(&recv, cls, line)?;
                if let Some(rt) = &callee.ret {
                    st.stack.push(self.decl_to_stack(rt)?);
                }
                vec![(fall, st)]
            }
            Opcode::Return => {
                if let Some(rt) = &m.ret {
                    let v = pop!("return value");
                    self.require_assignable(&v, rt, line)?;
                }
                vec![]
            }
            Opcode::NewArray => {
                pop_int!("array length");
                st.stack.push(StackTy::IntArray);
                vec![(fall, st)]
            }
            Opcode::ALoad => {
                pop_int!("index");
                self.pop_array(&mut st, line)?;
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::AStore => {
                pop_int!("value");
                pop_int!("index");
                self.pop_array(&mut st, line)?;
                vec![(fall, st)]
            }
            Opcode::ArrayLength => {
                self.pop_array(&mut st, line)?;
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::AThrow => {
                let t = pop!("thrown value");
                match t {
                    StackTy::Null => {}
                    StackTy::Obj(c) if self.model.is_exception_class(c) => {}
                    _ => {
                        return Err(
                            self.stack_err(line, "athrow needs an exception-class reference")
                        )
                    }
                }
                vec![]
            }
            Opcode::Assert | Opcode::Assume => {
                pop_int!("condition");
                vec![(fall, st)]
            }
            Opcode::NondetInt => {
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::NondetString => {
                st.stack.push(StackTy::Str);
                vec![(fall, st)]
            }
            Opcode::SLen => {
                pop_str!("string");
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::SCharAt => {
                pop_int!("index");
                pop_str!("string");
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::SIndexOf => {
                pop_int!("from index");
                pop_int!("character");
                pop_str!("string");
                st.stack.push(StackTy::Int);
                vec![(fall, st)]
            }
            Opcode::SSubstring => {
                pop_int!("end index");
                pop_int!("begin index");
                pop_str!("string");
                st.stack.push(StackTy::Str);
                vec![(fall, st)]
            }
            Opcode::SConcat | Opcode::SEquals | Opcode::SStartsWith => {
                pop_str!("right string");
                pop_str!("left string");
                st.stack.push(if matches!(ins.op, Opcode::SConcat) {
                    StackTy::Str
                } else {
                    StackTy::Int
                });
                vec![(fall, st)]
            }
            Opcode::SInsert => {
                pop_str!("inserted string");
                pop_int!("offset");
                pop_str!("receiver string");
                st.stack.push(StackTy::Str);
                vec![(fall, st)]
            }
            Opcode::SOfInt => {
                pop_int!("operand");
                st.stack.push(StackTy::Str);
                vec![(fall, st)]
            }
        };
        Ok(out)
    }

    fn pop_args(&self, st: &mut PcState, callee: &MethodDef, line: u32) -> Result<()> {
        for p in callee.params.iter().rev() {
            let v = st.stack.pop().ok_or_else(|| {
                self.stack_err(line, "stack underflow popping call arguments")
            })?;
            self.require_assignable(&v, p, line)?;
        }
        Ok(())
    }

    fn pop_array(&self, st: &mut PcState, line: u32) -> Result<()> {
        match st.stack.pop() {
            Some(StackTy::IntArray) | Some(StackTy::Null) => Ok(()),
            Some(_) => Err(self.stack_err(line, "operand must be int[]")),
            None => Err(self.stack_err(line, "stack underflow popping array")),
        }
    }

    fn require_obj(&self, t: &StackTy, class_idx: usize, line: u32) -> Result<()> {
        match t {
            StackTy::Null => Ok(()),
            StackTy::Obj(c) if self.model.is_subclass(*c, class_idx) => Ok(()),
            _ => Err(self.stack_err(
                line,
                &format!("receiver must be a {} reference", self.model.class(class_idx).name),
            )),
        }
    }

    fn require_assignable(&self, v: &StackTy, to: &MjbType, line: u32) -> Result<()> {
        let ok = match (v, to) {
            (StackTy::Int, MjbType::Int) => true,
            (StackTy::Str, MjbType::Str) => true,
            (StackTy::IntArray | StackTy::Null, MjbType::IntArray) => true,
            (StackTy::Null, MjbType::Class(_)) => true,
            (StackTy::Obj(c), MjbType::Class(n)) => self
                .model
                .class_idx(n)
                .is_some_and(|t| self.model.is_subclass(*c, t)),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.stack_err(line, &format!("value is not assignable to {to}")))
        }
    }

    fn field_ty(&self, r: &MemberRefT, line: u32) -> Result<(MjbType, usize)> {
        let cls = self.class_of(&r.class, line)?;
        let (_, f) = self.model.resolve_field(cls, &r.member).ok_or_else(|| {
            self.resolve_err(line, &format!("unknown field '{}.{}'", r.class, r.member))
        })?;
        Ok((f.ty.clone(), cls))
    }

    fn class_of(&self, name: &str, line: u32) -> Result<usize> {
        self.model
            .class_idx(name)
            .ok_or_else(|| self.resolve_err(line, &format!("unknown class '{name}'")))
    }

    fn decl_to_stack(&self, t: &MjbType) -> Result<StackTy> {
        Ok(match t {
            MjbType::Int => StackTy::Int,
            MjbType::Str => StackTy::Str,
            MjbType::IntArray => StackTy::IntArray,
            MjbType::Class(n) => StackTy::Obj(self.model.class_idx(n).ok_or_else(|| {
                self.resolve_err(self.m.decl_line, &format!("unknown class '{n}'"))
            })?),
        })
    }

    fn line_of(&self, pc: usize) -> u32 {
        self.m
            .body
            .get(pc)
            .map(|i| i.line)
            .unwrap_or(self.m.decl_line)
    }

    fn stack_err(&self, line: u32, msg: &str) -> FrontendError {
        FrontendError::Stack { line, msg: format!("{}.{}: {msg}", self.class_name(), self.m.name) }
    }

    fn resolve_err(&self, line: u32, msg: &str) -> FrontendError {
        FrontendError::Resolve {
            line,
            msg: format!("{}.{}: {msg}", self.class_name(), self.m.name),
        }
    }

    fn class_name(&self) -> &str {
        &self.model.classes[self.ci].name
    }
}

use super::MemberRef as MemberRefT;
