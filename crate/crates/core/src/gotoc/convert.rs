//! Stack bytecode to register goto code. One temp per static stack slot;
//! branches become guarded goto pairs; loops stay as backward gotos.

use super::*;
use crate::expr::{BinOp, Expr, ExprRef, StrFn, Ty, Var, VarKind};
use crate::frontend::analysis::{LocalSt, PcState};
use crate::frontend::{CmpKind, MethodDef, MjbType, Opcode, StackTy};

pub(super) fn erase_stack(t: &StackTy) -> Ty {
    match t {
        StackTy::Int => Ty::Int,
        StackTy::Str => Ty::Str,
        StackTy::IntArray | StackTy::Obj(_) | StackTy::Null => Ty::Ref,
    }
}

pub(super) fn erase_decl(t: &MjbType) -> Ty {
    match t {
        MjbType::Int => Ty::Int,
        MjbType::Str => Ty::Str,
        MjbType::IntArray | MjbType::Class(_) => Ty::Ref,
    }
}

pub(super) fn default_value(t: &MjbType) -> ExprRef {
    match t {
        MjbType::Int => Expr::int(0),
        MjbType::Str => Expr::str_const(&[]),
        MjbType::IntArray | MjbType::Class(_) => Expr::null(),
    }
}

fn temp(depth: usize, ty: Ty) -> Var {
    Var { kind: VarKind::Temp(depth as u16), ty }
}

fn local(slot: u16, ty: Ty) -> Var {
    Var { kind: VarKind::Local(slot), ty }
}

/// How many goto instructions an opcode expands to.
fn emit_count(op: &Opcode) -> usize {
    match op {
        Opcode::Pop => 0,
        Opcode::If(..) => 2,
        _ => 1,
    }
}

/// Converts the whole model; virtual calls and throws survive as
/// [`GKind::CallVirtual`] and [`GKind::Throw`] for the lowering passes.
pub fn convert(model: &ClassModel) -> Result<GotoProgram> {
    let mut methods = Vec::new();
    let mut method_index = HashMap::new();
    for (ci, c) in model.classes.iter().enumerate() {
        for m in &c.methods {
            let full: Rc<str> = format!("{}.{}", c.name, m.name).into();
            method_index.insert(full.clone(), methods.len());
            methods.push((ci, m, full));
        }
    }
    let lookup = |class_idx: usize, name: &str| -> usize {
        let full = format!("{}.{}", model.class(class_idx).name, name);
        *method_index.get(&*full as &str).expect("validated method ref")
    };

    let mut prog = GotoProgram {
        methods: Vec::new(),
        method_index: HashMap::new(),
        props: Vec::new(),
        entry: None,
        class_names: model.classes.iter().map(|c| c.name.clone()).collect(),
        exception_classes: (0..model.classes.len())
            .map(|i| model.is_exception_class(i))
            .collect(),
        layouts: (0..model.classes.len())
            .map(|i| {
                let mut fields = vec![(class_id_field(), Ty::Int)];
                for (def, f) in model.layout(i) {
                    fields.push((
                        FieldId { class: def, name: f.name.clone() },
                        erase_decl(&f.ty),
                    ));
                }
                ObjectLayout { fields }
            })
            .collect(),
        supers: (0..model.classes.len()).map(|i| model.super_of(i)).collect(),
        has_virtual: false,
        has_exceptions: false,
    };

    for (ci, m, full) in &methods {
        let gm = convert_method(model, *ci, m, full.clone(), &mut prog, &lookup)?;
        prog.method_index.insert(full.clone(), prog.methods.len());
        prog.methods.push(gm);
    }
    Ok(prog)
}

fn convert_method(
    model: &ClassModel,
    class_idx: usize,
    m: &MethodDef,
    full_name: Rc<str>,
    prog: &mut GotoProgram,
    lookup: &dyn Fn(usize, &str) -> usize,
) -> Result<GotoMethod> {
    let n = m.body.len();
    // first instruction index for every bytecode pc (unreachable pcs map to
    // the next reachable one, and are never jumped to from emitted code)
    let mut map = Vec::with_capacity(n + 1);
    let mut at = 0usize;
    for (pc, ins) in m.body.iter().enumerate() {
        map.push(at);
        if m.flow[pc].is_some() {
            at += emit_count(&ins.op);
        }
    }
    map.push(at);

    let mut instrs: Vec<GInstr> = Vec::new();
    let mut has_virtual = false;
    let mut has_throw = false;

    for (pc, ins) in m.body.iter().enumerate() {
        let Some(state) = &m.flow[pc] else { continue };
        emit_instr(
            model, class_idx, m, &full_name, pc, ins, state, &map, &mut instrs, prog, lookup,
            &mut has_virtual, &mut has_throw,
        )?;
        debug_assert_eq!(instrs.len(), map[pc + 1].min(instrs.len()));
    }
    // landing pad for jumps to the method end; only void methods can reach it
    if m.ret.is_none() {
        instrs.push(GInstr {
            kind: GKind::Return { value: None },
            line: m.decl_line,
            src_idx: n,
            synth: false,
        });
    }

    prog.has_virtual |= has_virtual;
    prog.has_exceptions |= has_throw || !m.exception_table.is_empty();

    Ok(GotoMethod {
        name: full_name,
        class_idx,
        is_static: m.is_static,
        param_tys: m.params.clone(),
        ret_ty: m.ret.clone(),
        instrs,
        source_file: model.class(class_idx).source_file.clone(),
        decl_line: m.decl_line,
        src_len: n,
        src_map: map,
        dispatch_at: Vec::new(),
        propagate_block: None,
        dispatch_sites: Vec::new(),
        throw_sites: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
fn emit_instr(
    model: &ClassModel,
    class_idx: usize,
    m: &MethodDef,
    full_name: &Rc<str>,
    pc: usize,
    ins: &crate::frontend::Instruction,
    state: &PcState,
    map: &[usize],
    out: &mut Vec<GInstr>,
    prog: &mut GotoProgram,
    lookup: &dyn Fn(usize, &str) -> usize,
    has_virtual: &mut bool,
    has_throw: &mut bool,
) -> Result<()> {
    let stack = &state.stack;
    let d = stack.len();
    let line = ins.line;
    let tv = |i: usize| temp(i, erase_stack(&stack[i]));
    let te = |i: usize| Expr::var(tv(i));

    macro_rules! push {
        ($kind:expr) => {
            out.push(GInstr { kind: $kind, line, src_idx: pc, synth: false })
        };
    }
    macro_rules! assign {
        ($lhs:expr, $rhs:expr) => {
            push!(GKind::Assign { lhs: Lhs::Var($lhs), rhs: $rhs })
        };
    }
    macro_rules! assign_e {
        ($lhs:expr, $e:expr) => {
            assign!($lhs, Rhs::Expr($e))
        };
    }

    match &ins.op {
        Opcode::Const(v) => assign_e!(temp(d, Ty::Int), Expr::int(*v)),
        Opcode::SConst(s) => assign_e!(temp(d, Ty::Str), Expr::str_const(s)),
        Opcode::Null => assign_e!(temp(d, Ty::Ref), Expr::null()),
        Opcode::Load(i) => {
            let lty = match &state.locals[*i as usize] {
                LocalSt::Set(t) => erase_stack(t),
                _ => unreachable!("definite assignment checked"),
            };
            assign_e!(temp(d, lty), Expr::var(local(*i, lty)));
        }
        Opcode::Store(i) => {
            let vty = erase_stack(&stack[d - 1]);
            assign_e!(local(*i, vty), te(d - 1));
        }
        Opcode::Dup => {
            let ty = erase_stack(&stack[d - 1]);
            assign_e!(temp(d, ty), te(d - 1));
        }
        Opcode::Pop => {}
        Opcode::Add | Opcode::Sub | Opcode::Mul | Opcode::Div | Opcode::Rem => {
            let op = match ins.op {
                Opcode::Add => BinOp::Add,
                Opcode::Sub => BinOp::Sub,
                Opcode::Mul => BinOp::Mul,
                Opcode::Div => BinOp::Div,
                _ => BinOp::Rem,
            };
            assign_e!(temp(d - 2, Ty::Int), Expr::bin(op, te(d - 2), te(d - 1)));
        }
        Opcode::Neg => {
            assign_e!(temp(d - 1, Ty::Int), Rc::new(crate::expr::Expr::Neg(te(d - 1))));
        }
        Opcode::If(kind, l) => {
            let op = match kind {
                CmpKind::Eq => BinOp::Eq,
                CmpKind::Ne => BinOp::Ne,
                CmpKind::Lt => BinOp::Lt,
                CmpKind::Le => BinOp::Le,
                CmpKind::Gt => BinOp::Gt,
                CmpKind::Ge => BinOp::Ge,
            };
            let cond = Expr::bin(op, te(d - 2), te(d - 1));
            push!(GKind::Goto {
                target: map[l.target],
                guard: cond.clone(),
                backedge: l.target <= pc,
            });
            push!(GKind::Goto {
                target: map[pc + 1],
                guard: Expr::not(cond),
                backedge: false,
            });
        }
        Opcode::Goto(l) => {
            push!(GKind::Goto {
                target: map[l.target],
                guard: Expr::bool(true),
                backedge: l.target <= pc,
            });
        }
        Opcode::New(c) => {
            let cls = model.class_idx(c).expect("validated");
            assign!(temp(d, Ty::Ref), Rhs::AllocObj(cls));
        }
        Opcode::GetField(r) => {
            let cls = model.class_idx(&r.class).expect("validated");
            let (def, f) = model.resolve_field(cls, &r.member).expect("validated");
            let fid = FieldId { class: def, name: f.name.clone() };
            let fty = erase_decl(&f.ty);
            assign_e!(temp(d - 1, fty), Rc::new(crate::expr::Expr::FieldSel(te(d - 1), fid)));
        }
        Opcode::PutField(r) => {
            let cls = model.class_idx(&r.class).expect("validated");
            let (def, f) = model.resolve_field(cls, &r.member).expect("validated");
            let fid = FieldId { class: def, name: f.name.clone() };
            push!(GKind::Assign {
                lhs: Lhs::Field { obj: te(d - 2), field: fid },
                rhs: Rhs::Expr(te(d - 1)),
            });
        }
        Opcode::InvokeStatic(r) => {
            let cls = model.class_idx(&r.class).expect("validated");
            let callee = model.method(cls, &r.member).expect("validated");
            let nargs = callee.params.len();
            let args = (d - nargs..d).map(te).collect();
            let ret = callee
                .ret
                .as_ref()
                .map(|t| temp(d - nargs, erase_decl(t)));
            push!(GKind::Call { target: lookup(cls, &r.member), args, ret });
        }
        Opcode::InvokeVirtual(r) => {
            let cls = model.class_idx(&r.class).expect("validated");
            let (_, callee) = model.resolve_virtual(cls, &r.member).expect("validated");
            let nargs = callee.params.len();
            let recv_at = d - nargs - 1;
            let args = (recv_at..d).map(te).collect();
            let ret = callee.ret.as_ref().map(|t| temp(recv_at, erase_decl(t)));
            push!(GKind::CallVirtual { class: cls, method: r.member.clone(), args, ret });
            *has_virtual = true;
        }
        Opcode::Return => {
            let value = m.ret.as_ref().map(|_| te(d - 1));
            push!(GKind::Return { value });
        }
        Opcode::NewArray => {
            assign!(temp(d - 1, Ty::Ref), Rhs::AllocArr(te(d - 1)));
        }
        Opcode::ALoad => {
            assign_e!(
                temp(d - 2, Ty::Int),
                Rc::new(crate::expr::Expr::ArraySel(te(d - 2), te(d - 1)))
            );
        }
        Opcode::AStore => {
            push!(GKind::Assign {
                lhs: Lhs::Elem { arr: te(d - 3), idx: te(d - 2) },
                rhs: Rhs::Expr(te(d - 1)),
            });
        }
        Opcode::ArrayLength => {
            assign_e!(temp(d - 1, Ty::Int), Rc::new(crate::expr::Expr::ArrayLen(te(d - 1))));
        }
        Opcode::AThrow => {
            push!(GKind::Throw { exc: te(d - 1) });
            *has_throw = true;
        }
        Opcode::Assert => {
            let prop = prog.props.len();
            prog.props.push(PropInfo {
                id: PropertyId {
                    method: full_name.clone(),
                    kind: PropertyKind::Assertion,
                    n: 0,
                },
                kind: PropertyKind::Assertion,
                method: prog.methods.len(),
                file: model.class(class_idx).source_file.clone(),
                line,
                bytecode_index: pc,
            });
            push!(GKind::Assert { cond: Expr::ne(te(d - 1), Expr::int(0)), prop });
        }
        Opcode::Assume => {
            push!(GKind::Assume { cond: Expr::ne(te(d - 1), Expr::int(0)) });
        }
        Opcode::NondetInt => assign!(temp(d, Ty::Int), Rhs::NondetInt),
        Opcode::NondetString => assign!(temp(d, Ty::Str), Rhs::NondetStr),
        Opcode::SLen => {
            assign_e!(temp(d - 1, Ty::Int), Expr::str_app(StrFn::Len, vec![te(d - 1)]));
        }
        Opcode::SCharAt => {
            assign_e!(
                temp(d - 2, Ty::Int),
                Expr::str_app(StrFn::CharAt, vec![te(d - 2), te(d - 1)])
            );
        }
        Opcode::SIndexOf => {
            assign_e!(
                temp(d - 3, Ty::Int),
                Expr::str_app(StrFn::IndexOf, vec![te(d - 3), te(d - 2), te(d - 1)])
            );
        }
        Opcode::SSubstring => {
            assign_e!(
                temp(d - 3, Ty::Str),
                Expr::str_app(StrFn::Substring, vec![te(d - 3), te(d - 2), te(d - 1)])
            );
        }
        Opcode::SConcat => {
            assign_e!(
                temp(d - 2, Ty::Str),
                Expr::str_app(StrFn::Concat, vec![te(d - 2), te(d - 1)])
            );
        }
        Opcode::SEquals | Opcode::SStartsWith => {
            let f = if matches!(ins.op, Opcode::SEquals) {
                StrFn::Equals
            } else {
                StrFn::StartsWith
            };
            assign_e!(
                temp(d - 2, Ty::Int),
                Expr::ite(
                    Expr::str_app(f, vec![te(d - 2), te(d - 1)]),
                    Expr::int(1),
                    Expr::int(0)
                )
            );
        }
        Opcode::SInsert => {
            assign_e!(
                temp(d - 3, Ty::Str),
                Expr::str_app(StrFn::Insert, vec![te(d - 3), te(d - 2), te(d - 1)])
            );
        }
        Opcode::SOfInt => {
            assign_e!(temp(d - 1, Ty::Str), Expr::str_app(StrFn::OfInt, vec![te(d - 1)]));
        }
    }
    Ok(())
}
