//! Stable textual form of a goto program (`--show-goto`).

use super::*;
use crate::expr::{render, NoSyms};
use std::fmt::Write;

pub fn print_program(prog: &GotoProgram) -> String {
    let mut out = String::new();
    for (i, m) in prog.methods.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "method {}", m.name);
        for (pc, ins) in m.instrs.iter().enumerate() {
            let _ = writeln!(out, "{pc:4}: {}", render_instr(prog, ins));
        }
    }
    out
}

fn render_instr(prog: &GotoProgram, ins: &GInstr) -> String {
    let e = |x: &crate::expr::ExprRef| render(x, &NoSyms);
    match &ins.kind {
        GKind::Decl(v) => format!("decl {v}"),
        GKind::Assign { lhs, rhs } => {
            let l = match lhs {
                Lhs::Var(v) => v.to_string(),
                Lhs::Field { obj, field } => format!("{}.{}", e(obj), field.name),
                Lhs::Elem { arr, idx } => format!("{}[{}]", e(arr), e(idx)),
            };
            let r = match rhs {
                Rhs::Expr(x) => e(x),
                Rhs::NondetInt => "nondet_int".into(),
                Rhs::NondetStr => "nondet_string".into(),
                Rhs::NondetRef(c) => format!("nondet_ref({})", prog.class_names[*c]),
                Rhs::NondetArr => "nondet_array".into(),
                Rhs::AllocObj(c) => format!("new {}", prog.class_names[*c]),
                Rhs::AllocArr(len) => format!("new int[{}]", e(len)),
            };
            format!("{l} := {r}")
        }
        GKind::Goto { target, guard, backedge } => {
            let back = if *backedge { " back" } else { "" };
            match &**guard {
                crate::expr::Expr::BoolConst(true) => format!("goto{back} {target}"),
                _ => format!("goto{back} {target} if {}", e(guard)),
            }
        }
        GKind::Assert { cond, prop } => {
            format!("assert {} // [{}]", e(cond), prog.props[*prop].id)
        }
        GKind::Assume { cond } => format!("assume {}", e(cond)),
        GKind::Call { target, args, ret } => {
            let a: Vec<String> = args.iter().map(e).collect();
            let call = format!("call {}({})", prog.methods[*target].name, a.join(", "));
            match ret {
                Some(v) => format!("{v} := {call}"),
                None => call,
            }
        }
        GKind::CallVirtual { class, method, args, ret } => {
            let a: Vec<String> = args.iter().map(e).collect();
            let call = format!(
                "virtualcall {}.{}({})",
                prog.class_names[*class],
                method,
                a.join(", ")
            );
            match ret {
                Some(v) => format!("{v} := {call}"),
                None => call,
            }
        }
        GKind::Throw { exc } => format!("throw {}", e(exc)),
        GKind::Return { value } => match value {
            Some(v) => format!("return {}", e(v)),
            None => "return".into(),
        },
        GKind::Dead(v) => format!("dead {v}"),
    }
}
