//! Runtime-check instrumentation: null dereference, array bounds (null
//! first), division by zero, and optional signed-overflow checks.
//!
//! Without `--throw-runtime-exceptions` every check is an assert carrying
//! the matching property. With it, a failing check constructs the
//! corresponding exception object in `@thrown` and jumps to the innermost
//! dispatch chain, so the error flows like a thrown exception.

use std::rc::Rc;
use super::lower::{remap_method_meta, thrown_var, Rw};
use super::*;
use crate::expr::{BinOp, Expr, ExprRef};

#[derive(Debug, Clone)]
enum Check {
    Null(ExprRef),
    Bounds { arr: ExprRef, idx: ExprRef },
    DivZero(ExprRef),
    Overflow(ExprRef),
}

impl Check {
    fn kind(&self) -> PropertyKind {
        match self {
            Check::Null(_) => PropertyKind::NullDeref,
            Check::Bounds { .. } => PropertyKind::ArrayBounds,
            Check::DivZero(_) => PropertyKind::DivByZero,
            Check::Overflow(_) => PropertyKind::Overflow,
        }
    }

    fn exception_class(&self) -> &'static str {
        match self {
            Check::Null(_) => "NullPointerException",
            Check::Bounds { .. } => "ArrayIndexOutOfBoundsException",
            Check::DivZero(_) => "ArithmeticException",
            Check::Overflow(_) => unreachable!("overflow never throws"),
        }
    }

    fn condition(&self) -> ExprRef {
        match self {
            Check::Null(o) => Expr::ne(o.clone(), Expr::null()),
            Check::Bounds { arr, idx } => Expr::and(
                Expr::ge(idx.clone(), Expr::int(0)),
                Expr::lt(idx.clone(), Rc::new(crate::expr::Expr::ArrayLen(arr.clone()))),
            ),
            Check::DivZero(d) => Expr::ne(d.clone(), Expr::int(0)),
            Check::Overflow(c) => c.clone(),
        }
    }
}

fn overflow_cond(op: BinOp, a: &ExprRef, b: &ExprRef) -> ExprRef {
    let zero = Expr::int(0);
    let r = Expr::bin(op, a.clone(), b.clone());
    match op {
        BinOp::Add => {
            let pos = Expr::and(
                Expr::and(Expr::ge(a.clone(), zero.clone()), Expr::ge(b.clone(), zero.clone())),
                Expr::lt(r.clone(), zero.clone()),
            );
            let neg = Expr::and(
                Expr::and(Expr::lt(a.clone(), zero.clone()), Expr::lt(b.clone(), zero.clone())),
                Expr::ge(r, zero),
            );
            Expr::not(Expr::or(pos, neg))
        }
        BinOp::Sub => {
            let pos = Expr::and(
                Expr::and(Expr::ge(a.clone(), zero.clone()), Expr::lt(b.clone(), zero.clone())),
                Expr::lt(r.clone(), zero.clone()),
            );
            let neg = Expr::and(
                Expr::and(Expr::lt(a.clone(), zero.clone()), Expr::ge(b.clone(), zero.clone())),
                Expr::ge(r, zero),
            );
            Expr::not(Expr::or(pos, neg))
        }
        BinOp::Mul => Rc::new(crate::expr::Expr::MulNoOvf(a.clone(), b.clone())),
        _ => unreachable!("only add/sub/mul overflow"),
    }
}

/// Collects checks from an expression, children before parents; per array
/// access the null check precedes the bounds check.
fn collect_expr(e: &ExprRef, ovf: bool, out: &mut Vec<Check>) {
    match &**e {
        crate::expr::Expr::FieldSel(obj, _) => {
            collect_expr(obj, ovf, out);
            if !is_thrown(obj) {
                out.push(Check::Null(obj.clone()));
            }
        }
        crate::expr::Expr::ArraySel(arr, idx) => {
            collect_expr(arr, ovf, out);
            collect_expr(idx, ovf, out);
            out.push(Check::Null(arr.clone()));
            out.push(Check::Bounds { arr: arr.clone(), idx: idx.clone() });
        }
        crate::expr::Expr::ArrayLen(arr) => {
            collect_expr(arr, ovf, out);
            out.push(Check::Null(arr.clone()));
        }
        crate::expr::Expr::Bin(op, a, b) => {
            collect_expr(a, ovf, out);
            collect_expr(b, ovf, out);
            match op {
                BinOp::Div | BinOp::Rem => out.push(Check::DivZero(b.clone())),
                BinOp::Add | BinOp::Sub | BinOp::Mul if ovf => {
                    out.push(Check::Overflow(overflow_cond(*op, a, b)))
                }
                _ => {}
            }
        }
        crate::expr::Expr::Neg(a) => {
            collect_expr(a, ovf, out);
            if ovf {
                out.push(Check::Overflow(Expr::ne(a.clone(), Expr::int(i32::MIN))));
            }
        }
        crate::expr::Expr::Not(a) => collect_expr(a, ovf, out),
        crate::expr::Expr::Ite(c, t, f) => {
            collect_expr(c, ovf, out);
            collect_expr(t, ovf, out);
            collect_expr(f, ovf, out);
        }
        crate::expr::Expr::Select(a, i) => {
            collect_expr(a, ovf, out);
            collect_expr(i, ovf, out);
        }
        crate::expr::Expr::Store(a, i, v) => {
            collect_expr(a, ovf, out);
            collect_expr(i, ovf, out);
            collect_expr(v, ovf, out);
        }
        crate::expr::Expr::StrApp(_, args) => {
            for a in args {
                collect_expr(a, ovf, out);
            }
        }
        crate::expr::Expr::MulNoOvf(a, b) => {
            collect_expr(a, ovf, out);
            collect_expr(b, ovf, out);
        }
        _ => {}
    }
}

fn is_thrown(e: &ExprRef) -> bool {
    matches!(&**e, crate::expr::Expr::Var(v) if *v == thrown_var())
}

fn collect_instr(ins: &GInstr, ovf: bool) -> Vec<Check> {
    let mut out = Vec::new();
    match &ins.kind {
        GKind::Assign { lhs, rhs } => {
            match lhs {
                Lhs::Var(_) => {}
                Lhs::Field { obj, .. } => {
                    collect_expr(obj, ovf, &mut out);
                    if !is_thrown(obj) {
                        out.push(Check::Null(obj.clone()));
                    }
                }
                Lhs::Elem { arr, idx } => {
                    collect_expr(arr, ovf, &mut out);
                    collect_expr(idx, ovf, &mut out);
                    out.push(Check::Null(arr.clone()));
                    out.push(Check::Bounds { arr: arr.clone(), idx: idx.clone() });
                }
            }
            match rhs {
                Rhs::Expr(e) => collect_expr(e, ovf, &mut out),
                Rhs::AllocArr(len) => collect_expr(len, ovf, &mut out),
                _ => {}
            }
        }
        GKind::Goto { guard, .. } => collect_expr(guard, ovf, &mut out),
        GKind::Assert { cond, .. } | GKind::Assume { cond } => collect_expr(cond, ovf, &mut out),
        GKind::Call { args, .. } | GKind::CallVirtual { args, .. } => {
            for a in args {
                collect_expr(a, ovf, &mut out);
            }
        }
        GKind::Return { value: Some(e) } => collect_expr(e, ovf, &mut out),
        GKind::Throw { exc } => collect_expr(exc, ovf, &mut out),
        _ => {}
    }
    out
}

pub fn instrument(mut prog: GotoProgram, opts: GotoOpts) -> Result<GotoProgram> {
    for mi in 0..prog.methods.len() {
        let instrs = std::mem::take(&mut prog.methods[mi].instrs);
        let dispatch_sites = prog.methods[mi].dispatch_sites.clone();
        let throw_sites = prog.methods[mi].throw_sites.clone();
        let dispatch_at = prog.methods[mi].dispatch_at.clone();
        let propagate = prog.methods[mi].propagate_block;
        let src_len = prog.methods[mi].src_len;
        let method_name = prog.methods[mi].name.clone();
        let file = prog.methods[mi].source_file.clone();

        let mut rw = Rw::new();
        for (i, ins) in instrs.iter().enumerate() {
            rw.begin_old();
            let mut checks: Vec<Check> = Vec::new();
            for (pos, recv) in &dispatch_sites {
                if *pos == i {
                    checks.push(Check::Null(recv.clone()));
                }
            }
            for (pos, exc) in &throw_sites {
                if *pos == i {
                    checks.push(Check::Null(exc.clone()));
                }
            }
            if !ins.synth {
                checks.extend(collect_instr(ins, opts.check_overflow));
            }
            for c in checks {
                let kind = c.kind();
                let cond = c.condition();
                if opts.throw_runtime && kind != PropertyKind::Overflow {
                    // passing the check skips the throw block
                    let cur = rw.out.len();
                    rw.push(GInstr {
                        kind: GKind::Goto { target: cur + 3, guard: cond, backedge: false },
                        line: ins.line,
                        src_idx: ins.src_idx,
                        synth: true,
                    });
                    let cls = prog
                        .class_names
                        .iter()
                        .position(|n| &**n == c.exception_class())
                        .expect("builtin exception classes");
                    rw.push(GInstr {
                        kind: GKind::Assign {
                            lhs: Lhs::Var(thrown_var()),
                            rhs: Rhs::AllocObj(cls),
                        },
                        line: ins.line,
                        src_idx: ins.src_idx,
                        synth: true,
                    });
                    let src = ins.src_idx.min(src_len);
                    match dispatch_at.get(src).copied().flatten() {
                        Some(d) => rw.push_goto_old(d, Expr::bool(true), ins),
                        None => rw.push_goto_old(
                            propagate.expect("throw-runtime lowering materializes propagate"),
                            Expr::bool(true),
                            ins,
                        ),
                    };
                } else {
                    let prop = prog.props.len();
                    prog.props.push(PropInfo {
                        id: PropertyId { method: method_name.clone(), kind, n: 0 },
                        kind,
                        method: mi,
                        file: file.clone(),
                        line: ins.line,
                        bytecode_index: ins.src_idx.min(src_len),
                    });
                    rw.push(GInstr {
                        kind: GKind::Assert { cond, prop },
                        line: ins.line,
                        src_idx: ins.src_idx,
                        synth: true,
                    });
                }
            }
            rw.push_copy(ins);
        }
        let (out, map) = rw.finish(&[], None);
        let m = &mut prog.methods[mi];
        m.instrs = out;
        remap_method_meta(m, &map);
    }
    Ok(prog)
}
