//! Canonical MJB pretty-printer. Re-parsing the output yields a structurally
//! equal model, so source line annotations are always written explicitly.

use super::{ClassModel, Instruction, MethodDef, Opcode, BUILTIN_CLASSES};
use crate::expr::escape_units;
use std::fmt::Write;

pub fn print_model(model: &ClassModel) -> String {
    let mut out = String::new();
    for c in &model.classes {
        if BUILTIN_CLASSES.contains(&&*c.name) {
            continue;
        }
        let _ = write!(out, "class {}", c.name);
        if let Some(s) = &c.super_name {
            let _ = write!(out, " extends {s}");
        }
        if c.is_exception {
            out.push_str(" exception");
        }
        out.push_str(" {\n");
        for f in &c.fields {
            let _ = writeln!(out, "  field {} : {} ;", f.name, f.ty);
        }
        for m in &c.methods {
            print_method(&mut out, m);
        }
        out.push_str("}\n");
    }
    out
}

fn print_method(out: &mut String, m: &MethodDef) {
    out.push_str("  ");
    if m.is_static {
        out.push_str("static ");
    }
    let _ = write!(out, "method {}(", m.name);
    for (i, p) in m.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{p}");
    }
    out.push(')');
    if let Some(r) = &m.ret {
        let _ = write!(out, " : {r}");
    }
    let _ = writeln!(out, " locals {} {{", m.max_locals);
    for (pc, ins) in m.body.iter().enumerate() {
        for (name, &target) in &m.labels {
            if target == pc {
                let _ = writeln!(out, "  {name}:");
            }
        }
        let _ = writeln!(out, "    {}", render_instr(ins));
    }
    for (name, &target) in &m.labels {
        if target == m.body.len() {
            let _ = writeln!(out, "  {name}:");
        }
    }
    out.push_str("  }\n");
    for e in &m.exception_table {
        let _ = writeln!(
            out,
            "  catch ({}, {}) -> {} : {}",
            e.start_label, e.end_label, e.handler_label, e.class_name
        );
    }
}

fn render_instr(ins: &Instruction) -> String {
    let core = match &ins.op {
        Opcode::Const(v) => format!("const {v}"),
        Opcode::SConst(s) => format!("sconst \"{}\"", escape_units(s)),
        Opcode::Null => "null".into(),
        Opcode::Load(i) => format!("load {i}"),
        Opcode::Store(i) => format!("store {i}"),
        Opcode::Dup => "dup".into(),
        Opcode::Pop => "pop".into(),
        Opcode::Add => "add".into(),
        Opcode::Sub => "sub".into(),
        Opcode::Mul => "mul".into(),
        Opcode::Div => "div".into(),
        Opcode::Rem => "rem".into(),
        Opcode::Neg => "neg".into(),
        Opcode::If(k, l) => format!("{} {}", k.mnemonic(), l.name),
        Opcode::Goto(l) => format!("goto {}", l.name),
        Opcode::New(c) => format!("new {c}"),
        Opcode::GetField(r) => format!("getfield {}.{}", r.class, r.member),
        Opcode::PutField(r) => format!("putfield {}.{}", r.class, r.member),
        Opcode::InvokeStatic(r) => format!("invokestatic {}.{}", r.class, r.member),
        Opcode::InvokeVirtual(r) => format!("invokevirtual {}.{}", r.class, r.member),
        Opcode::Return => "return".into(),
        Opcode::NewArray => "newarray".into(),
        Opcode::ALoad => "aload".into(),
        Opcode::AStore => "astore".into(),
        Opcode::ArrayLength => "arraylength".into(),
        Opcode::AThrow => "athrow".into(),
        Opcode::Assert => "assert".into(),
        Opcode::Assume => "assume".into(),
        Opcode::NondetInt => "nondet_int".into(),
        Opcode::NondetString => "nondet_string".into(),
        Opcode::SLen => "s_len".into(),
        Opcode::SCharAt => "s_charat".into(),
        Opcode::SIndexOf => "s_indexof".into(),
        Opcode::SSubstring => "s_substring".into(),
        Opcode::SConcat => "s_concat".into(),
        Opcode::SEquals => "s_equals".into(),
        Opcode::SStartsWith => "s_startswith".into(),
        Opcode::SInsert => "s_insert".into(),
        Opcode::SOfInt => "s_of_int".into(),
    };
    format!("{core} @ {}", ins.line)
}
