//! Symbolic execution: unwinds the lowered goto program to the bound,
//! renames to SSA and produces the constraint system whose satisfiability
//! (together with a negated property) witnesses a violation.
//!
//! States walk the program in a worklist ordered by (backedge traversals,
//! location); states meeting at the same location with the same traversal
//! counts merge with fresh phi symbols, so each reachable location is
//! processed once per unwinding. Backedges past the bound get an unwinding
//! assumption (or an assertion under `--unwinding-assertions`), calls are
//! inlined, and recursion is cut off at the same bound.

use crate::expr::{Expr, ExprRef, FieldId, SymId, Ty, Var, VarKind};
use crate::gotoc::{
    GInstr, GKind, GotoProgram, Lhs, PropInfo, PropertyId, PropertyKind, Rhs, CLASS_ID_FIELD,
};
use std::collections::BTreeMap;
use std::rc::Rc;

#[derive(Debug, Clone, Copy)]
pub struct SymexOpts {
    pub unwind: u32,
    pub max_array_length: i32,
    pub unwinding_assertions: bool,
    pub nondet_may_be_null: bool,
}

impl Default for SymexOpts {
    fn default() -> Self {
        SymexOpts {
            unwind: 1,
            max_array_length: 16,
            unwinding_assertions: false,
            nondet_may_be_null: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymInfo {
    /// Unique SSA name, e.g. `A.m!1::local0#2`.
    pub unique: String,
    pub ty: Ty,
}

#[derive(Debug, Default)]
pub struct SymbolTable {
    pub infos: Vec<SymInfo>,
}

impl SymbolTable {
    pub fn fresh(&mut self, unique: String, ty: Ty) -> SymId {
        self.infos.push(SymInfo { unique, ty });
        SymId(self.infos.len() as u32 - 1)
    }

    pub fn ty(&self, id: SymId) -> Ty {
        self.infos[id.0 as usize].ty
    }

    pub fn name(&self, id: SymId) -> &str {
        &self.infos[id.0 as usize].unique
    }
}

impl crate::expr::SymNames for SymbolTable {
    fn sym_name(&self, id: SymId) -> String {
        self.infos[id.0 as usize].unique.clone()
    }
}

/// How a constraint renders in a counterexample trace.
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    /// Nondet input: renders `INPUT name: value`.
    Input(String),
    /// Ordinary assignment: renders `name=value`.
    Visible(String),
    /// Dynamic type tag of a fresh allocation.
    ClassId(u32),
    /// Machinery (temps, phis, clamps); never shown.
    Hidden,
}

/// One guarded SSA equality `lhs == rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub guard: ExprRef,
    pub lhs: SymId,
    pub rhs: ExprRef,
    pub kind: StepKind,
    pub line: u32,
    pub method: Rc<str>,
    pub file: Rc<str>,
}

/// One occurrence of a property after unwinding.
#[derive(Debug, Clone)]
pub struct PropInstance {
    /// Index into the property table.
    pub prop: usize,
    pub guard: ExprRef,
    pub claim: ExprRef,
}

/// Allocation registry entry; ids start at 1, 0 is null.
#[derive(Debug, Clone)]
pub struct ObjInfo {
    pub id: u32,
    /// `Some(class)` for objects, `None` for int arrays.
    pub class: Option<usize>,
    /// Array length expression (arrays only).
    pub length: Option<ExprRef>,
    /// Fields the object carries, in layout order (objects only).
    pub fields: Vec<FieldId>,
}

#[derive(Debug)]
pub struct SsaSystem {
    pub syms: SymbolTable,
    pub constraints: Vec<Constraint>,
    /// Global conjuncts: program assumes, unwinding assumptions, nondet
    /// range restrictions.
    pub assumes: Vec<ExprRef>,
    pub props: Vec<PropInstance>,
    pub objects: Vec<ObjInfo>,
    /// Unwinding-assertion properties minted during symex (appended to the
    /// program's table for reporting).
    pub extra_props: Vec<PropInfo>,
}

impl SsaSystem {
    /// Verification condition for a subset of property instances:
    /// conjunction of all scalar constraints and assumes with the
    /// disjunction of negated selected claims. String- and array-typed
    /// equalities do not appear; the flattening driver binds those.
    pub fn build_vc(&self, selected: &[usize]) -> ExprRef {
        let mut conj = Expr::bool(true);
        for c in &self.constraints {
            match self.syms.ty(c.lhs) {
                Ty::Str | Ty::Arr => continue,
                _ => {
                    conj = Expr::and(conj, Expr::eq(Expr::sym(c.lhs), c.rhs.clone()));
                }
            }
        }
        for a in &self.assumes {
            conj = Expr::and(conj, a.clone());
        }
        let mut dis = Expr::bool(false);
        for &i in selected {
            let p = &self.props[i];
            dis = Expr::or(dis, Expr::and(p.guard.clone(), Expr::not(p.claim.clone())));
        }
        Expr::and(conj, dis)
    }

    /// String-typed definitions (SSA symbol, defining expression) in
    /// assignment order, for the string solver.
    pub fn string_defs(&self) -> Vec<(SymId, ExprRef)> {
        self.constraints
            .iter()
            .filter(|c| self.syms.ty(c.lhs) == Ty::Str)
            .map(|c| (c.lhs, c.rhs.clone()))
            .collect()
    }

    /// Array-content definitions in assignment order.
    pub fn array_defs(&self) -> Vec<(SymId, ExprRef)> {
        self.constraints
            .iter()
            .filter(|c| self.syms.ty(c.lhs) == Ty::Arr)
            .map(|c| (c.lhs, c.rhs.clone()))
            .collect()
    }

    /// Stable text dump (`--show-vcc`).
    pub fn render(&self, props: &[PropInfo]) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for c in &self.constraints {
            let _ = writeln!(
                out,
                "{{{}}} {} == {}",
                crate::expr::render(&c.guard, &self.syms),
                self.syms.name(c.lhs),
                crate::expr::render(&c.rhs, &self.syms),
            );
        }
        for a in &self.assumes {
            let _ = writeln!(out, "assume {}", crate::expr::render(a, &self.syms));
        }
        for p in &self.props {
            let _ = writeln!(
                out,
                "property [{}] guard {} claim {}",
                props[p.prop].id,
                crate::expr::render(&p.guard, &self.syms),
                crate::expr::render(&p.claim, &self.syms),
            );
        }
        out
    }
}

type Globals = BTreeMap<GlobalKey, ExprRef>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GlobalKey {
    Thrown,
    /// Field of an allocation.
    Field(u32, Rc<str>),
    /// Array content of an allocation.
    Content(u32),
}

#[derive(Debug, Clone)]
struct State {
    guard: ExprRef,
    vars: BTreeMap<Var, ExprRef>,
    globals: Globals,
}

#[derive(Debug, Clone)]
struct ExitState {
    guard: ExprRef,
    ret: Option<ExprRef>,
    globals: Globals,
}

/// Worklist key: (total backedge traversals, counter map, location).
/// Successor keys are strictly greater, so each key pops at most once and
/// every merge happens before its location executes.
type Counters = BTreeMap<usize, u32>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    itersum: u32,
    pc: usize,
    counters: Vec<(usize, u32)>,
}

impl Key {
    fn new(pc: usize, counters: &Counters) -> Key {
        Key {
            itersum: counters.values().sum(),
            pc,
            counters: counters.iter().map(|(&a, &b)| (a, b)).collect(),
        }
    }
}

pub fn unwind(prog: &GotoProgram, opts: SymexOpts) -> SsaSystem {
    let entry = prog.entry.expect("compile() adds the harness");
    let mut ex = Symex {
        prog,
        opts,
        ssa: SsaSystem {
            syms: SymbolTable::default(),
            constraints: Vec::new(),
            assumes: Vec::new(),
            props: Vec::new(),
            objects: Vec::new(),
            extra_props: Vec::new(),
        },
        frame_counter: 0,
        version_counter: BTreeMap::new(),
        stack_occur: BTreeMap::new(),
        unwind_props: BTreeMap::new(),
    };
    let entry_state = State {
        guard: Expr::bool(true),
        vars: BTreeMap::new(),
        globals: BTreeMap::new(),
    };
    ex.exec_frame(entry, Vec::new(), entry_state);
    ex.ssa
}

struct Symex<'p> {
    prog: &'p GotoProgram,
    opts: SymexOpts,
    ssa: SsaSystem,
    frame_counter: u32,
    version_counter: BTreeMap<String, u32>,
    stack_occur: BTreeMap<usize, u32>,
    /// Property table index per (method, backedge pc) for
    /// `--unwinding-assertions`.
    unwind_props: BTreeMap<(usize, usize), usize>,
}

impl<'p> Symex<'p> {
    fn fresh_sym(&mut self, base: &str, ty: Ty) -> SymId {
        let n = self.version_counter.entry(base.to_string()).or_insert(0);
        let unique = format!("{base}#{n}");
        *n += 1;
        self.ssa.syms.fresh(unique, ty)
    }

    fn constrain(
        &mut self,
        guard: ExprRef,
        base: &str,
        ty: Ty,
        rhs: ExprRef,
        kind: StepKind,
        mi: usize,
        line: u32,
    ) -> ExprRef {
        let lhs = self.fresh_sym(base, ty);
        let m = &self.prog.methods[mi];
        self.ssa.constraints.push(Constraint {
            guard,
            lhs,
            rhs,
            kind,
            line,
            method: m.name.clone(),
            file: m.source_file.clone(),
        });
        Expr::sym(lhs)
    }

    /// Inlines one activation of a method. Returns the merged exit state, or
    /// None when every path through it is infeasible or pruned.
    fn exec_frame(&mut self, mi: usize, args: Vec<ExprRef>, entry: State) -> Option<ExitState> {
        let m = &self.prog.methods[mi];
        let frame_id = self.frame_counter;
        self.frame_counter += 1;
        let frame = format!("{}!{}", m.name, frame_id);

        let mut state = entry;
        // bind parameters to local slots
        let mut slot_tys: Vec<Ty> = Vec::new();
        if !m.is_static {
            slot_tys.push(Ty::Ref);
        }
        slot_tys.extend(m.param_tys.iter().map(erase_decl));
        for (i, a) in args.into_iter().enumerate() {
            state
                .vars
                .insert(Var { kind: VarKind::Local(i as u16), ty: slot_tys[i] }, a);
        }

        let mut pending: BTreeMap<Key, Vec<State>> = BTreeMap::new();
        pending.insert(Key::new(0, &Counters::new()), vec![state]);
        let mut exits: Vec<ExitState> = Vec::new();

        while let Some((key, states)) = pending.pop_first() {
            let state = self.merge_states(states, &frame, mi);
            if let Expr::BoolConst(false) = &*state.guard {
                continue;
            }
            if key.pc >= m.instrs.len() {
                exits.push(ExitState { guard: state.guard, ret: None, globals: state.globals });
                continue;
            }
            let counters: Counters = key.counters.iter().copied().collect();
            self.step(mi, key.pc, counters, state, &frame, &mut pending, &mut exits);
        }

        self.merge_exits(exits, &frame, mi)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        mi: usize,
        pc: usize,
        counters: Counters,
        mut state: State,
        frame: &str,
        pending: &mut BTreeMap<Key, Vec<State>>,
        exits: &mut Vec<ExitState>,
    ) {
        let ins: &GInstr = &self.prog.methods[mi].instrs[pc];
        let line = ins.line;
        let enqueue = |pending: &mut BTreeMap<Key, Vec<State>>, key: Key, st: State| {
            pending.entry(key).or_default().push(st);
        };

        match &ins.kind {
            GKind::Decl(_) | GKind::Dead(_) => {
                enqueue(pending, Key::new(pc + 1, &counters), state);
            }
            GKind::Assign { lhs, rhs } => {
                self.exec_assign(mi, pc, &mut state, frame, lhs, rhs);
                enqueue(pending, Key::new(pc + 1, &counters), state);
            }
            GKind::Goto { target, guard, backedge } => {
                let g = self.resolve(guard, &mut state, frame, mi, line);
                let taken_guard = Expr::and(state.guard.clone(), g.clone());
                let fall_guard = Expr::and(state.guard.clone(), Expr::not(g.clone()));

                let mut prune_taken = false;
                let mut taken_counters = counters.clone();
                if *backedge {
                    let c = taken_counters.entry(pc).or_insert(0);
                    if *c >= self.opts.unwind {
                        prune_taken = true;
                    } else {
                        *c += 1;
                    }
                }
                if prune_taken {
                    // unwinding assumption: the bound-exceeding edge is
                    // never taken
                    self.ssa.assumes.push(Expr::not(taken_guard.clone()));
                    if self.opts.unwinding_assertions {
                        let prop = self.unwind_prop(mi, pc, line, ins.src_idx);
                        self.ssa.props.push(PropInstance {
                            prop,
                            guard: state.guard.clone(),
                            claim: Expr::not(g.clone()),
                        });
                    }
                } else if !matches!(&*taken_guard, Expr::BoolConst(false)) {
                    let mut taken = state.clone();
                    taken.guard = taken_guard;
                    enqueue(pending, Key::new(*target, &taken_counters), taken);
                }
                if !matches!(&*fall_guard, Expr::BoolConst(false)) {
                    state.guard = fall_guard;
                    enqueue(pending, Key::new(pc + 1, &counters), state);
                }
            }
            GKind::Assert { cond, prop } => {
                let c = self.resolve(cond, &mut state, frame, mi, line);
                self.ssa.props.push(PropInstance {
                    prop: *prop,
                    guard: state.guard.clone(),
                    claim: c,
                });
                enqueue(pending, Key::new(pc + 1, &counters), state);
            }
            GKind::Assume { cond } => {
                let c = self.resolve(cond, &mut state, frame, mi, line);
                self.ssa
                    .assumes
                    .push(Expr::implies(state.guard.clone(), c.clone()));
                state.guard = Expr::and(state.guard.clone(), c);
                if !matches!(&*state.guard, Expr::BoolConst(false)) {
                    enqueue(pending, Key::new(pc + 1, &counters), state);
                }
            }
            GKind::Call { target, args, ret } => {
                let argv: Vec<ExprRef> = args
                    .iter()
                    .map(|a| self.resolve(a, &mut state, frame, mi, line))
                    .collect();

                // recursion cutoff: at most `unwind` stacked occurrences
                let occ = self.stack_occur.entry(*target).or_insert(0);
                if *occ >= self.opts.unwind {
                    self.ssa.assumes.push(Expr::not(state.guard.clone()));
                    if self.opts.unwinding_assertions {
                        let prop = self.unwind_prop(mi, pc, line, ins.src_idx);
                        self.ssa.props.push(PropInstance {
                            prop,
                            guard: state.guard.clone(),
                            claim: Expr::bool(false),
                        });
                    }
                    return; // path pruned
                }
                *occ += 1;
                let callee_entry = State {
                    guard: state.guard.clone(),
                    vars: BTreeMap::new(),
                    globals: std::mem::take(&mut state.globals),
                };
                let exit = self.exec_frame(*target, argv, callee_entry);
                *self.stack_occur.get_mut(target).expect("pushed above") -= 1;

                match exit {
                    None => {} // no feasible path returns
                    Some(exit) => {
                        state.guard = exit.guard;
                        state.globals = exit.globals;
                        if let Some(rv) = ret {
                            let value = exit.ret.expect("non-void callee returns a value");
                            state.vars.insert(rv.clone(), value);
                        }
                        enqueue(pending, Key::new(pc + 1, &counters), state);
                    }
                }
            }
            GKind::Return { value } => {
                let ret = value
                    .as_ref()
                    .map(|e| self.resolve(e, &mut state, frame, mi, line));
                exits.push(ExitState { guard: state.guard, ret, globals: state.globals });
            }
            GKind::CallVirtual { .. } => panic!("virtual call survived lowering"),
            GKind::Throw { .. } => panic!("throw survived lowering"),
        }
    }

    fn unwind_prop(&mut self, mi: usize, pc: usize, line: u32, src_idx: usize) -> usize {
        if let Some(&p) = self.unwind_props.get(&(mi, pc)) {
            return p;
        }
        let m = &self.prog.methods[mi];
        let n = self
            .unwind_props
            .keys()
            .filter(|(omi, _)| *omi == mi)
            .count() as u32
            + 1;
        let idx = self.prog.props.len() + self.ssa.extra_props.len();
        self.ssa.extra_props.push(PropInfo {
            id: PropertyId { method: m.name.clone(), kind: PropertyKind::Unwind, n },
            kind: PropertyKind::Unwind,
            method: mi,
            file: m.source_file.clone(),
            line,
            bytecode_index: src_idx.min(m.src_len),
        });
        self.unwind_props.insert((mi, pc), idx);
        idx
    }

    fn exec_assign(
        &mut self,
        mi: usize,
        pc: usize,
        state: &mut State,
        frame: &str,
        lhs: &Lhs,
        rhs: &Rhs,
    ) {
        let ins = &self.prog.methods[mi].instrs[pc];
        let line = ins.line;
        let value: ExprRef = match rhs {
            Rhs::Expr(e) => self.resolve(e, state, frame, mi, line),
            Rhs::NondetInt => {
                let sym = self.fresh_sym(&format!("{frame}::nondet"), Ty::Int);
                self.input_constraint(state, mi, line, frame, lhs, Expr::sym(sym))
            }
            Rhs::NondetStr => {
                let sym = self.fresh_sym(&format!("{frame}::nondet"), Ty::Str);
                self.input_constraint(state, mi, line, frame, lhs, Expr::sym(sym))
            }
            Rhs::NondetRef(class) => {
                let v = self.nondet_ref(*class, state, mi, line, frame);
                self.input_constraint(state, mi, line, frame, lhs, v)
            }
            Rhs::NondetArr => {
                let v = self.nondet_arr(state, mi, line, frame);
                self.input_constraint(state, mi, line, frame, lhs, v)
            }
            Rhs::AllocObj(class) => self.alloc_obj(*class, state, mi, line),
            Rhs::AllocArr(len) => {
                let len = self.resolve(len, state, frame, mi, line);
                self.alloc_arr(len, state, mi, line, true)
            }
        };
        if matches!(rhs, Rhs::NondetInt | Rhs::NondetStr | Rhs::NondetRef(_) | Rhs::NondetArr) {
            // input_constraint already recorded the SSA assignment
            return;
        }
        self.store_lhs(mi, pc, state, frame, lhs, value);
    }

    /// Records an INPUT-flagged assignment for a nondet right-hand side.
    fn input_constraint(
        &mut self,
        state: &mut State,
        mi: usize,
        line: u32,
        frame: &str,
        lhs: &Lhs,
        value: ExprRef,
    ) -> ExprRef {
        let Lhs::Var(v) = lhs else {
            panic!("nondet assigns to a plain variable");
        };
        let sym = self.constrain(
            state.guard.clone(),
            &format!("{frame}::{v}"),
            v.ty,
            value,
            StepKind::Input(v.to_string()),
            mi,
            line,
        );
        state.vars.insert(v.clone(), sym.clone());
        sym
    }

    fn store_lhs(
        &mut self,
        mi: usize,
        pc: usize,
        state: &mut State,
        frame: &str,
        lhs: &Lhs,
        value: ExprRef,
    ) {
        let ins = &self.prog.methods[mi].instrs[pc];
        let line = ins.line;
        match lhs {
            Lhs::Var(v) => {
                let (base, kind) = match &v.kind {
                    VarKind::Thrown => ("@thrown".to_string(), StepKind::Hidden),
                    VarKind::Temp(_) => (format!("{frame}::{v}"), StepKind::Hidden),
                    VarKind::Local(_) if ins.synth => (format!("{frame}::{v}"), StepKind::Hidden),
                    VarKind::Local(_) => (format!("{frame}::{v}"), StepKind::Visible(v.to_string())),
                };
                let sym = self.constrain(state.guard.clone(), &base, v.ty, value, kind, mi, line);
                if v.kind == VarKind::Thrown {
                    state.globals.insert(GlobalKey::Thrown, sym);
                } else {
                    state.vars.insert(v.clone(), sym);
                }
            }
            Lhs::Field { obj, field } => {
                let o = self.resolve(obj, state, frame, mi, line);
                let candidates = self.field_candidates(field);
                for id in candidates {
                    let key = GlobalKey::Field(id, field.name.clone());
                    let old = state.globals.get(&key).cloned().unwrap_or_else(|| {
                        default_for(self.field_ty(id, &field.name))
                    });
                    let hit = Expr::eq(o.clone(), Expr::int(id as i32));
                    let new = match &*hit {
                        Expr::BoolConst(true) => value.clone(),
                        _ => Expr::ite(hit.clone(), value.clone(), old.clone()),
                    };
                    // skip allocations the pointer can never reference
                    if let Expr::IntConst(p) = &*o {
                        if *p != id as i32 {
                            continue;
                        }
                    }
                    let ty = self.field_ty(id, &field.name);
                    let sym = self.constrain(
                        Expr::and(state.guard.clone(), Expr::eq(o.clone(), Expr::int(id as i32))),
                        &format!("dynamic_object{id}.{}", field.name),
                        ty,
                        new,
                        StepKind::Visible(format!("dynamic_object{id}.{}", field.name)),
                        mi,
                        line,
                    );
                    state.globals.insert(key, sym);
                }
            }
            Lhs::Elem { arr, idx } => {
                let a = self.resolve(arr, state, frame, mi, line);
                let i = self.resolve(idx, state, frame, mi, line);
                for id in self.array_ids() {
                    let key = GlobalKey::Content(id);
                    let Some(old) = state.globals.get(&key).cloned() else { continue };
                    let hit = Expr::eq(a.clone(), Expr::int(id as i32));
                    if let Expr::IntConst(p) = &*a {
                        if *p != id as i32 {
                            continue;
                        }
                    }
                    let stored = Rc::new(Expr::Store(old.clone(), i.clone(), value.clone()));
                    let new = match &*hit {
                        Expr::BoolConst(true) => stored,
                        _ => Expr::ite(hit.clone(), stored, old),
                    };
                    let sym = self.constrain(
                        Expr::and(state.guard.clone(), hit),
                        &format!("dynamic_object{id}.content"),
                        Ty::Arr,
                        new,
                        StepKind::Visible(format!("dynamic_object{id}")),
                        mi,
                        line,
                    );
                    state.globals.insert(key, sym);
                }
            }
        }
    }

    fn field_ty(&self, id: u32, name: &str) -> Ty {
        let class = self.ssa.objects[id as usize - 1]
            .class
            .expect("field access on object");
        self.prog.layouts[class]
            .fields
            .iter()
            .find(|(f, _)| &*f.name == name)
            .map(|(_, t)| *t)
            .expect("resolved field")
    }

    /// Allocations whose class carries the field.
    fn field_candidates(&self, field: &FieldId) -> Vec<u32> {
        self.ssa
            .objects
            .iter()
            .filter(|o| match o.class {
                Some(c) => self.prog.layouts[c]
                    .fields
                    .iter()
                    .any(|(f, _)| f.name == field.name),
                None => false,
            })
            .map(|o| o.id)
            .collect()
    }

    fn array_ids(&self) -> Vec<u32> {
        self.ssa
            .objects
            .iter()
            .filter(|o| o.class.is_none())
            .map(|o| o.id)
            .collect()
    }

    fn alloc_obj(&mut self, class: usize, state: &mut State, mi: usize, line: u32) -> ExprRef {
        let id = self.ssa.objects.len() as u32 + 1;
        let fields: Vec<FieldId> = self.prog.layouts[class]
            .fields
            .iter()
            .skip(1) // @class_identifier is implicit
            .map(|(f, _)| f.clone())
            .collect();
        self.ssa.objects.push(ObjInfo { id, class: Some(class), length: None, fields: fields.clone() });
        // the dynamic type tag is constant; record it for the trace
        self.constrain(
            state.guard.clone(),
            &format!("dynamic_object{id}.{CLASS_ID_FIELD}"),
            Ty::Int,
            Expr::int(class as i32),
            StepKind::ClassId(id),
            mi,
            line,
        );
        for (f, t) in self.prog.layouts[class].fields.iter().skip(1) {
            state
                .globals
                .insert(GlobalKey::Field(id, f.name.clone()), default_for(*t));
        }
        Expr::int(id as i32)
    }

    /// Allocates an array; harness parameters keep nondet elements,
    /// program allocations zero-initialize.
    fn alloc_arr(
        &mut self,
        len: ExprRef,
        state: &mut State,
        mi: usize,
        line: u32,
        zero_content: bool,
    ) -> ExprRef {
        let id = self.ssa.objects.len() as u32 + 1;
        let max = Expr::int(self.opts.max_array_length);
        let clamped = Expr::clamp(len, Expr::int(0), max);
        let lsym = self.constrain(
            state.guard.clone(),
            &format!("dynamic_object{id}.length"),
            Ty::Int,
            clamped,
            StepKind::Hidden,
            mi,
            line,
        );
        self.ssa.objects.push(ObjInfo {
            id,
            class: None,
            length: Some(lsym.clone()),
            fields: Vec::new(),
        });
        let content: ExprRef = if zero_content {
            Rc::new(Expr::ArrZero)
        } else {
            Expr::sym(self.fresh_sym(&format!("dynamic_object{id}.content"), Ty::Arr))
        };
        state.globals.insert(GlobalKey::Content(id), content);
        Expr::int(id as i32)
    }

    fn nondet_arr(&mut self, state: &mut State, mi: usize, line: u32, _frame: &str) -> ExprRef {
        let len = Expr::sym(self.fresh_sym("nondet_array_length", Ty::Int));
        self.ssa.assumes.push(Expr::ge(len.clone(), Expr::int(0)));
        self.ssa
            .assumes
            .push(Expr::le(len.clone(), Expr::int(self.opts.max_array_length)));
        let arr = self.alloc_arr(len, state, mi, line, false);
        if self.opts.nondet_may_be_null {
            let isnull = Expr::sym(self.fresh_sym("nondet_array_null", Ty::Bool));
            Expr::ite(isnull, Expr::null(), arr)
        } else {
            arr
        }
    }

    /// Null or a fresh instance of any subclass, chosen by a nondet
    /// selector.
    fn nondet_ref(
        &mut self,
        class: usize,
        state: &mut State,
        mi: usize,
        line: u32,
        _frame: &str,
    ) -> ExprRef {
        let classes = self.prog.subtree(class);
        let sel = Expr::sym(self.fresh_sym("nondet_object_choice", Ty::Int));
        let lo = if self.opts.nondet_may_be_null { 0 } else { 1 };
        self.ssa.assumes.push(Expr::ge(sel.clone(), Expr::int(lo)));
        self.ssa
            .assumes
            .push(Expr::le(sel.clone(), Expr::int(classes.len() as i32)));
        let mut value = Expr::null();
        for (i, c) in classes.iter().enumerate().rev() {
            let obj = self.alloc_obj(*c, state, mi, line);
            value = Expr::ite(
                Expr::eq(sel.clone(), Expr::int(i as i32 + 1)),
                obj,
                value,
            );
        }
        value
    }

    /// Renames a goto-level expression into SSA land: variables read their
    /// current value, heap accesses resolve against the allocation registry.
    fn resolve(&mut self, e: &ExprRef, state: &mut State, frame: &str, mi: usize, line: u32) -> ExprRef {
        match &**e {
            Expr::Var(v) => {
                if v.kind == VarKind::Thrown {
                    state
                        .globals
                        .get(&GlobalKey::Thrown)
                        .cloned()
                        .unwrap_or_else(Expr::null)
                } else {
                    state.vars.get(v).cloned().unwrap_or_else(|| {
                        // unassigned-but-dead variable on this path
                        default_for(v.ty)
                    })
                }
            }
            Expr::FieldSel(obj, field) => {
                let o = self.resolve(obj, state, frame, mi, line);
                self.field_select(state, &o, field, mi)
            }
            Expr::ArraySel(arr, idx) => {
                let a = self.resolve(arr, state, frame, mi, line);
                let i = self.resolve(idx, state, frame, mi, line);
                let ids = self.array_ids();
                let mut acc: ExprRef = self.free_value(Ty::Int);
                for id in ids.iter().rev() {
                    let content = state.globals[&GlobalKey::Content(*id)].clone();
                    let sel = Rc::new(Expr::Select(content, i.clone()));
                    if let Expr::IntConst(p) = &*a {
                        if *p == *id as i32 {
                            return sel;
                        }
                        continue;
                    }
                    acc = Expr::ite(Expr::eq(a.clone(), Expr::int(*id as i32)), sel, acc);
                }
                acc
            }
            Expr::ArrayLen(arr) => {
                let a = self.resolve(arr, state, frame, mi, line);
                let ids = self.array_ids();
                let mut acc: ExprRef = self.free_value(Ty::Int);
                for id in ids.iter().rev() {
                    let len = self.ssa.objects[*id as usize - 1]
                        .length
                        .clone()
                        .expect("arrays carry lengths");
                    if let Expr::IntConst(p) = &*a {
                        if *p == *id as i32 {
                            return len;
                        }
                        continue;
                    }
                    acc = Expr::ite(Expr::eq(a.clone(), Expr::int(*id as i32)), len, acc);
                }
                acc
            }
            Expr::Bin(op, a, b) => {
                let x = self.resolve(a, state, frame, mi, line);
                let y = self.resolve(b, state, frame, mi, line);
                if Rc::ptr_eq(&x, a) && Rc::ptr_eq(&y, b) {
                    e.clone()
                } else {
                    Expr::bin(*op, x, y)
                }
            }
            Expr::Neg(a) => {
                let x = self.resolve(a, state, frame, mi, line);
                Rc::new(Expr::Neg(x))
            }
            Expr::Not(a) => {
                let x = self.resolve(a, state, frame, mi, line);
                Expr::not(x)
            }
            Expr::Ite(c, t, f) => {
                let cc = self.resolve(c, state, frame, mi, line);
                let tt = self.resolve(t, state, frame, mi, line);
                let ff = self.resolve(f, state, frame, mi, line);
                Expr::ite(cc, tt, ff)
            }
            Expr::StrApp(fun, args) => {
                let rargs: Vec<ExprRef> = args
                    .iter()
                    .map(|a| self.resolve(a, state, frame, mi, line))
                    .collect();
                Expr::str_app(*fun, rargs)
            }
            Expr::MulNoOvf(a, b) => {
                let x = self.resolve(a, state, frame, mi, line);
                let y = self.resolve(b, state, frame, mi, line);
                Rc::new(Expr::MulNoOvf(x, y))
            }
            _ => e.clone(),
        }
    }

    /// Ite cascade over compatible allocations; free symbol when nothing can
    /// match (unmodelled object).
    fn field_select(&mut self, state: &State, obj: &ExprRef, field: &FieldId, _mi: usize) -> ExprRef {
        if &*field.name == CLASS_ID_FIELD {
            let mut acc: ExprRef = self.free_value(Ty::Int);
            for o in self.ssa.objects.iter().rev() {
                let Some(class) = o.class else { continue };
                if let Expr::IntConst(p) = &**obj {
                    if *p == o.id as i32 {
                        return Expr::int(class as i32);
                    }
                    continue;
                }
                acc = Expr::ite(
                    Expr::eq(obj.clone(), Expr::int(o.id as i32)),
                    Expr::int(class as i32),
                    acc,
                );
            }
            return acc;
        }
        let candidates = self.field_candidates(field);
        if candidates.is_empty() {
            let ty = Ty::Int; // unmodelled: a free scalar
            return self.free_value(ty);
        }
        let mut acc: Option<ExprRef> = None;
        for id in candidates.iter().rev() {
            let v = state.globals[&GlobalKey::Field(*id, field.name.clone())].clone();
            if let Expr::IntConst(p) = &**obj {
                if *p == *id as i32 {
                    return v;
                }
                continue;
            }
            acc = Some(match acc {
                None => v,
                Some(rest) => Expr::ite(
                    Expr::eq(obj.clone(), Expr::int(*id as i32)),
                    v,
                    rest,
                ),
            });
        }
        match acc {
            Some(a) => a,
            None => {
                let ty = self.field_ty(candidates[0], &field.name);
                self.free_value(ty)
            }
        }
    }

    fn free_value(&mut self, ty: Ty) -> ExprRef {
        Expr::sym(self.fresh_sym("unmodelled", ty))
    }

    /// Phi-merges all states arriving at one worklist key.
    fn merge_states(&mut self, mut states: Vec<State>, frame: &str, mi: usize) -> State {
        let mut acc = states.remove(0);
        for s in states {
            acc = self.merge_two(acc, s, frame, mi);
        }
        acc
    }

    fn merge_two(&mut self, a: State, b: State, frame: &str, mi: usize) -> State {
        if let Expr::BoolConst(false) = &*a.guard {
            return b;
        }
        if let Expr::BoolConst(false) = &*b.guard {
            return a;
        }
        let guard = Expr::or(a.guard.clone(), b.guard.clone());
        let mut vars = BTreeMap::new();
        let keys: Vec<Var> = a.vars.keys().chain(b.vars.keys()).cloned().collect();
        for k in keys {
            if vars.contains_key(&k) {
                continue;
            }
            let v = match (a.vars.get(&k), b.vars.get(&k)) {
                (Some(x), Some(y)) if x == y => x.clone(),
                (Some(x), Some(y)) => self.phi(&a.guard, x, y, &format!("{frame}::{k}"), k.ty, mi),
                (Some(x), None) => x.clone(),
                (None, Some(y)) => y.clone(),
                (None, None) => unreachable!(),
            };
            vars.insert(k, v);
        }
        let globals = self.merge_globals(&a.guard, a.globals, b.globals, mi);
        State { guard, vars, globals }
    }

    fn merge_globals(
        &mut self,
        a_guard: &ExprRef,
        a: Globals,
        b: Globals,
        mi: usize,
    ) -> Globals {
        let mut out = BTreeMap::new();
        let keys: Vec<GlobalKey> = a.keys().chain(b.keys()).cloned().collect();
        for k in keys {
            if out.contains_key(&k) {
                continue;
            }
            let v = match (a.get(&k), b.get(&k)) {
                (Some(x), Some(y)) if x == y => x.clone(),
                (Some(x), Some(y)) => {
                    let (base, ty) = self.global_base(&k);
                    self.phi(a_guard, x, y, &base, ty, mi)
                }
                (Some(x), None) => x.clone(),
                (None, Some(y)) => y.clone(),
                (None, None) => unreachable!(),
            };
            out.insert(k, v);
        }
        out
    }

    fn global_base(&self, k: &GlobalKey) -> (String, Ty) {
        match k {
            GlobalKey::Thrown => ("@thrown".into(), Ty::Ref),
            GlobalKey::Field(id, name) => {
                (format!("dynamic_object{id}.{name}"), self.field_ty(*id, name))
            }
            GlobalKey::Content(id) => (format!("dynamic_object{id}.content"), Ty::Arr),
        }
    }

    fn phi(
        &mut self,
        a_guard: &ExprRef,
        x: &ExprRef,
        y: &ExprRef,
        base: &str,
        ty: Ty,
        mi: usize,
    ) -> ExprRef {
        let rhs = Expr::ite(a_guard.clone(), x.clone(), y.clone());
        let m = &self.prog.methods[mi];
        let lhs = self.fresh_sym(base, ty);
        self.ssa.constraints.push(Constraint {
            guard: Expr::bool(true),
            lhs,
            rhs,
            kind: StepKind::Hidden,
            line: 0,
            method: m.name.clone(),
            file: m.source_file.clone(),
        });
        Expr::sym(lhs)
    }

    fn merge_exits(&mut self, exits: Vec<ExitState>, frame: &str, mi: usize) -> Option<ExitState> {
        let mut it = exits.into_iter();
        let mut acc = it.next()?;
        for e in it {
            let guard = Expr::or(acc.guard.clone(), e.guard.clone());
            let ret = match (acc.ret.clone(), e.ret.clone()) {
                (Some(x), Some(y)) if x == y => Some(x),
                (Some(x), Some(y)) => {
                    let ty = self.prog.methods[mi]
                        .ret_ty
                        .as_ref()
                        .map(erase_decl)
                        .unwrap_or(Ty::Int);
                    Some(self.phi(&acc.guard, &x, &y, &format!("{frame}::ret"), ty, mi))
                }
                (x, None) => x,
                (None, y) => y,
            };
            let globals = self.merge_globals(&acc.guard, acc.globals, e.globals, mi);
            acc = ExitState { guard, ret, globals };
        }
        Some(acc)
    }
}

fn erase_decl(t: &crate::frontend::MjbType) -> Ty {
    match t {
        crate::frontend::MjbType::Int => Ty::Int,
        crate::frontend::MjbType::Str => Ty::Str,
        crate::frontend::MjbType::IntArray | crate::frontend::MjbType::Class(_) => Ty::Ref,
    }
}

fn default_for(ty: Ty) -> ExprRef {
    match ty {
        Ty::Int => Expr::int(0),
        Ty::Bool => Expr::bool(false),
        Ty::Str => Expr::str_const(&[]),
        Ty::Ref => Expr::null(),
        Ty::Arr => Rc::new(Expr::ArrZero),
    }
}

#[cfg(test)]
mod tests;
