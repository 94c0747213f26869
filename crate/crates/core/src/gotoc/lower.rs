//! Dispatch and exception lowering.
//!
//! After these passes no `CallVirtual` and no `Throw` remains: dynamic
//! dispatch is a cascade of guarded gotos over `@class_identifier`, and
//! exception flow is the global `@thrown` register plus per-method dispatch
//! chains that test handler classes in table order.

use std::rc::Rc;
use super::convert::{default_value, erase_decl};
use super::*;
use crate::expr::{Expr, Ty, Var, VarKind};
use crate::frontend::MethodDef;

pub(super) fn thrown_var() -> Var {
    Var { kind: VarKind::Thrown, ty: Ty::Ref }
}

/// Rewrites one method's instruction list with stable old-index remapping.
pub(super) struct Rw {
    pub out: Vec<GInstr>,
    map: Vec<usize>,
    old_patches: Vec<usize>,
    chain_patches: Vec<(usize, usize)>,
    propagate_patches: Vec<usize>,
}

impl Rw {
    pub fn new() -> Self {
        Rw {
            out: Vec::new(),
            map: Vec::new(),
            old_patches: Vec::new(),
            chain_patches: Vec::new(),
            propagate_patches: Vec::new(),
        }
    }

    /// Marks the start of the rewrite of the next original instruction.
    pub fn begin_old(&mut self) {
        self.map.push(self.out.len());
    }

    pub fn push(&mut self, i: GInstr) -> usize {
        self.out.push(i);
        self.out.len() - 1
    }

    /// Copies an instruction; goto targets still reference old indices and
    /// get remapped at the end.
    pub fn push_copy(&mut self, ins: &GInstr) {
        if let GKind::Goto { .. } = ins.kind {
            self.old_patches.push(self.out.len());
        }
        self.out.push(ins.clone());
    }

    /// Emits a goto whose target is an old instruction index.
    pub fn push_goto_old(&mut self, target: usize, guard: crate::expr::ExprRef, tmpl: &GInstr) {
        self.old_patches.push(self.out.len());
        self.out.push(GInstr {
            kind: GKind::Goto { target, guard, backedge: false },
            line: tmpl.line,
            src_idx: tmpl.src_idx,
            synth: true,
        });
    }

    /// Emits a goto to exception-dispatch chain `key` (resolved at finish).
    pub fn push_goto_chain(&mut self, key: Option<usize>, guard: crate::expr::ExprRef, tmpl: &GInstr) {
        match key {
            Some(k) => self.chain_patches.push((self.out.len(), k)),
            None => self.propagate_patches.push(self.out.len()),
        }
        self.out.push(GInstr {
            kind: GKind::Goto { target: usize::MAX, guard, backedge: false },
            line: tmpl.line,
            src_idx: tmpl.src_idx,
            synth: true,
        });
    }

    /// Applies patches and returns (instructions, old->new map).
    pub fn finish(
        mut self,
        chain_pos: &[usize],
        propagate: Option<usize>,
    ) -> (Vec<GInstr>, Vec<usize>) {
        self.map.push(self.out.len());
        for p in self.old_patches {
            if let GKind::Goto { target, .. } = &mut self.out[p].kind {
                *target = self.map[*target];
            }
        }
        for (p, k) in self.chain_patches {
            if let GKind::Goto { target, .. } = &mut self.out[p].kind {
                *target = chain_pos[k];
            }
        }
        for p in self.propagate_patches {
            if let GKind::Goto { target, .. } = &mut self.out[p].kind {
                *target = propagate.expect("propagate block must exist when targeted");
            }
        }
        (self.out, self.map)
    }
}

pub(super) fn remap_method_meta(m: &mut GotoMethod, map: &[usize]) {
    for s in &mut m.src_map {
        *s = map[*s];
    }
    for (pos, _) in &mut m.dispatch_sites {
        *pos = map[*pos];
    }
    for (pos, _) in &mut m.throw_sites {
        *pos = map[*pos];
    }
    for d in m.dispatch_at.iter_mut().flatten() {
        *d = map[*d];
    }
    if let Some(p) = &mut m.propagate_block {
        *p = map[*p];
    }
}

fn depth_of(prog: &GotoProgram, mut c: usize) -> usize {
    let mut d = 0;
    while let Some(s) = prog.supers[c] {
        c = s;
        d += 1;
    }
    d
}

/// Class-identifier test `expr.@class_identifier == class`.
fn class_test(recv: &crate::expr::ExprRef, class: usize) -> crate::expr::ExprRef {
    Expr::eq(
        Rc::new(crate::expr::Expr::FieldSel(recv.clone(), class_id_field())),
        Expr::int(class as i32),
    )
}

/// Replaces every virtual call site by a cascade of guarded gotos over the
/// receiver's dynamic type, most-derived classes first, each branch ending in
/// a static call to the most-derived visible implementation.
pub fn lower_virtual(mut prog: GotoProgram, model: &ClassModel) -> Result<GotoProgram> {
    for mi in 0..prog.methods.len() {
        let instrs = std::mem::take(&mut prog.methods[mi].instrs);
        let mut rw = Rw::new();
        let mut sites: Vec<(usize, crate::expr::ExprRef)> = Vec::new();

        for ins in &instrs {
            rw.begin_old();
            match &ins.kind {
                GKind::CallVirtual { class, method, args, ret } => {
                    let recv = args[0].clone();
                    let mut cands: Vec<(usize, usize)> = Vec::new();
                    for d in prog.subtree(*class) {
                        let (owner, _) = model
                            .resolve_virtual(d, method)
                            .ok_or_else(|| GotoError::Convert {
                                method: prog.methods[mi].name.to_string(),
                                msg: format!(
                                    "no implementation of '{method}' reachable from '{}'",
                                    prog.class_names[*class]
                                ),
                            })?;
                        let full = format!("{}.{}", prog.class_names[owner], method);
                        let target = *prog
                            .method_index
                            .get(&*full as &str)
                            .expect("converted method");
                        cands.push((d, target));
                    }
                    cands.sort_by_key(|&(d, _)| (std::cmp::Reverse(depth_of(&prog, d)), d));

                    let h = rw.out.len();
                    let n = cands.len();
                    sites.push((h, recv.clone()));
                    for (j, (d, _)) in cands.iter().enumerate() {
                        rw.push(GInstr {
                            kind: GKind::Goto {
                                target: h + n + 1 + 2 * j,
                                guard: class_test(&recv, *d),
                                backedge: false,
                            },
                            line: ins.line,
                            src_idx: ins.src_idx,
                            synth: true,
                        });
                    }
                    // receiver's type always lies in the tested subtree
                    rw.push(GInstr {
                        kind: GKind::Assume { cond: Expr::bool(false) },
                        line: ins.line,
                        src_idx: ins.src_idx,
                        synth: true,
                    });
                    let cont = h + n + 1 + 2 * n;
                    for (_, target) in &cands {
                        rw.push(GInstr {
                            kind: GKind::Call {
                                target: *target,
                                args: args.clone(),
                                ret: ret.clone(),
                            },
                            line: ins.line,
                            src_idx: ins.src_idx,
                            synth: true,
                        });
                        rw.push(GInstr {
                            kind: GKind::Goto {
                                target: cont,
                                guard: Expr::bool(true),
                                backedge: false,
                            },
                            line: ins.line,
                            src_idx: ins.src_idx,
                            synth: true,
                        });
                    }
                }
                _ => rw.push_copy(ins),
            }
        }
        let (out, map) = rw.finish(&[], None);
        let m = &mut prog.methods[mi];
        m.instrs = out;
        remap_method_meta(m, &map);
        m.dispatch_sites.extend(sites);
    }
    prog.has_virtual = false;
    Ok(prog)
}

/// Introduces `@thrown` and explicit handler dispatch. Every throw point
/// jumps to the innermost chain for its bytecode position; chains test
/// handler classes in table order, clear `@thrown` and enter the handler;
/// no match returns a default value so the caller's post-call check
/// propagates further.
pub fn lower_exceptions(
    mut prog: GotoProgram,
    model: &ClassModel,
    throw_runtime: bool,
) -> Result<GotoProgram> {
    let any_throw = prog
        .methods
        .iter()
        .any(|m| m.instrs.iter().any(|i| matches!(i.kind, GKind::Throw { .. })));
    let needs_machinery = throw_runtime || any_throw;

    // model methods in conversion order
    let mut model_methods: Vec<&MethodDef> = Vec::new();
    for c in &model.classes {
        for m in &c.methods {
            model_methods.push(m);
        }
    }

    for mi in 0..prog.methods.len() {
        let table = &model_methods[mi].exception_table;
        let src_len = prog.methods[mi].src_len;

        // distinct candidate entry lists, keyed per bytecode pc
        let mut chains: Vec<Vec<usize>> = Vec::new();
        let mut chain_of_pc: Vec<Option<usize>> = vec![None; src_len + 1];
        if needs_machinery {
            for pc in 0..src_len {
                let list: Vec<usize> = table
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.start <= pc && pc < e.end)
                    .map(|(j, _)| j)
                    .collect();
                if list.is_empty() {
                    continue;
                }
                let key = match chains.iter().position(|c| *c == list) {
                    Some(k) => k,
                    None => {
                        chains.push(list);
                        chains.len() - 1
                    }
                };
                chain_of_pc[pc] = Some(key);
            }
        }

        let instrs = std::mem::take(&mut prog.methods[mi].instrs);
        let mut rw = Rw::new();
        let mut throw_sites = Vec::new();

        for ins in &instrs {
            rw.begin_old();
            match &ins.kind {
                GKind::Throw { exc } => {
                    let pos = rw.push(GInstr {
                        kind: GKind::Assign {
                            lhs: Lhs::Var(thrown_var()),
                            rhs: Rhs::Expr(exc.clone()),
                        },
                        line: ins.line,
                        src_idx: ins.src_idx,
                        synth: true,
                    });
                    throw_sites.push((pos, exc.clone()));
                    rw.push_goto_chain(chain_of_pc[ins.src_idx], Expr::bool(true), ins);
                }
                GKind::Call { .. } => {
                    rw.push_copy(ins);
                    if needs_machinery {
                        rw.push_goto_chain(
                            chain_of_pc[ins.src_idx],
                            Expr::ne(Expr::var(thrown_var()), Expr::null()),
                            ins,
                        );
                    }
                }
                _ => rw.push_copy(ins),
            }
        }

        // propagate block: leave the method with @thrown still set
        let propagate = if needs_machinery {
            let ret_ty = prog.methods[mi].ret_ty.clone();
            let p = rw.push(GInstr {
                kind: GKind::Return { value: ret_ty.as_ref().map(default_value) },
                line: model_methods[mi].decl_line,
                src_idx: src_len,
                synth: true,
            });
            Some(p)
        } else {
            None
        };

        // dispatch chains
        let mut chain_pos = vec![0usize; chains.len()];
        let thrown = Expr::var(thrown_var());
        for (k, list) in chains.iter().enumerate() {
            let base = rw.out.len();
            chain_pos[k] = base;
            let stubs_base = base + list.len() + 1;
            for (j, &ej) in list.iter().enumerate() {
                let e = &table[ej];
                let hcls = model.class_idx(&e.class_name).expect("validated");
                let mut test = Expr::bool(false);
                for d in prog.subtree(hcls) {
                    test = Expr::or(test, class_test(&thrown, d));
                }
                rw.push(GInstr {
                    kind: GKind::Goto {
                        target: stubs_base + 3 * j,
                        guard: test,
                        backedge: false,
                    },
                    line: model_methods[mi].decl_line,
                    src_idx: src_len,
                    synth: true,
                });
            }
            rw.push(GInstr {
                kind: GKind::Goto {
                    target: propagate.expect("machinery implies propagate"),
                    guard: Expr::bool(true),
                    backedge: false,
                },
                line: model_methods[mi].decl_line,
                src_idx: src_len,
                synth: true,
            });
            for &ej in list {
                let e = &table[ej];
                let handler_old = prog.methods[mi].src_map[e.handler];
                let tmpl = GInstr {
                    kind: GKind::Decl(thrown_var()),
                    line: model_methods[mi].decl_line,
                    src_idx: e.handler,
                    synth: true,
                };
                // handler entry: the exception is the only stack value
                rw.push(GInstr {
                    kind: GKind::Assign {
                        lhs: Lhs::Var(Var { kind: VarKind::Temp(0), ty: Ty::Ref }),
                        rhs: Rhs::Expr(thrown.clone()),
                    },
                    ..tmpl.clone()
                });
                rw.push(GInstr {
                    kind: GKind::Assign {
                        lhs: Lhs::Var(thrown_var()),
                        rhs: Rhs::Expr(Expr::null()),
                    },
                    ..tmpl.clone()
                });
                rw.push_goto_old(handler_old, Expr::bool(true), &tmpl);
            }
        }

        let (out, map) = rw.finish(&chain_pos, propagate);
        let m = &mut prog.methods[mi];
        m.instrs = out;
        remap_method_meta(m, &map);
        m.throw_sites.extend(throw_sites);
        m.dispatch_at = (0..=src_len)
            .map(|pc| chain_of_pc[pc].map(|k| chain_pos[k]))
            .collect();
        m.propagate_block = propagate;
    }

    prog.has_exceptions = false;
    Ok(prog)
}

/// Builds the synthetic `__start` method: nondet inputs for every entry
/// parameter, the entry call, and the final no-uncaught-exception assert.
pub(super) fn add_harness(
    prog: &mut GotoProgram,
    model: &ClassModel,
    entry_name: &str,
) -> Result<()> {
    let (class_idx, m) = model.resolve_entry(entry_name)?;
    if !m.is_static {
        return Err(GotoError::Convert {
            method: format!("{}.{}", model.class(class_idx).name, m.name),
            msg: "entry point must be a static method".into(),
        });
    }
    let full = format!("{}.{}", model.class(class_idx).name, m.name);
    let target = *prog.method_index.get(&*full as &str).expect("converted");
    let line = m.decl_line;
    let file = model.class(class_idx).source_file.clone();

    let mut instrs = Vec::new();
    let mut push = |kind: GKind, src_idx: usize| {
        instrs.push(GInstr { kind, line, src_idx, synth: true })
    };
    push(GKind::Decl(thrown_var()), 0);
    push(
        GKind::Assign { lhs: Lhs::Var(thrown_var()), rhs: Rhs::Expr(Expr::null()) },
        0,
    );
    let mut args = Vec::new();
    for (slot, p) in m.params.iter().enumerate() {
        let v = Var { kind: VarKind::Local(slot as u16), ty: erase_decl(p) };
        let rhs = match p {
            MjbType::Int => Rhs::NondetInt,
            MjbType::Str => Rhs::NondetStr,
            MjbType::IntArray => Rhs::NondetArr,
            MjbType::Class(n) => Rhs::NondetRef(model.class_idx(n).expect("validated")),
        };
        push(GKind::Assign { lhs: Lhs::Var(v.clone()), rhs }, slot);
        args.push(Expr::var(v));
    }
    let ret = m
        .ret
        .as_ref()
        .map(|t| Var { kind: VarKind::Local(m.params.len() as u16), ty: erase_decl(t) });
    push(GKind::Call { target, args, ret: ret.clone() }, m.params.len());

    let prop = prog.props.len();
    prog.props.push(PropInfo {
        id: PropertyId {
            method: full.clone().into(),
            kind: PropertyKind::NoUncaughtException,
            n: 0,
        },
        kind: PropertyKind::NoUncaughtException,
        method: target,
        file,
        line,
        bytecode_index: m.body.len(),
    });
    push(
        GKind::Assert {
            cond: Expr::eq(Expr::var(thrown_var()), Expr::null()),
            prop,
        },
        m.body.len(),
    );
    // hand the entry's return value out so executors can observe it
    push(GKind::Return { value: ret.map(Expr::var) }, m.body.len());

    let n = instrs.len();
    prog.methods.push(GotoMethod {
        name: "__start".into(),
        class_idx,
        is_static: true,
        param_tys: Vec::new(),
        ret_ty: m.ret.clone(),
        instrs,
        source_file: model.class(class_idx).source_file.clone(),
        decl_line: line,
        src_len: n,
        src_map: (0..=n).collect(),
        dispatch_at: Vec::new(),
        propagate_block: None,
        dispatch_sites: Vec::new(),
        throw_sites: Vec::new(),
    });
    let idx = prog.methods.len() - 1;
    prog.method_index.insert("__start".into(), idx);
    prog.entry = Some(idx);
    Ok(())
}
