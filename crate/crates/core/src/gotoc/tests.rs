use super::*;
use crate::frontend::parse_module;
use crate::interp::{self, ExcMode, FeedValue, RunCfg, Value};

fn compile_src(src: &str, entry: &str, opts: GotoOpts) -> GotoProgram {
    let model = parse_module(src).unwrap();
    compile(&model, entry, opts).unwrap()
}

#[test]
fn stack_code_becomes_register_code() {
    let src = "class A { static method m() locals 1 { const 1 const 2 add store 0 return } }";
    let model = parse_module(src).unwrap();
    let prog = convert(&model).unwrap();
    let m = prog.method_named("A.m").unwrap();
    let text = print_program(&prog);
    assert!(text.contains("t0 := 1"), "{text}");
    assert!(text.contains("t1 := 2"), "{text}");
    assert!(text.contains("t0 := (t0 + t1)"), "{text}");
    assert!(text.contains("local0 := t0"), "{text}");
    assert_eq!(m.instrs.len(), 6); // four assigns, return, end pad
}

#[test]
fn branch_becomes_guarded_goto_pair() {
    let src = "
        class A {
          static method m(int, int) : int locals 2 {
            load 0
            load 1
            if_lt less
            const 0
            return
          less:
            const 1
            return
          }
        }";
    let model = parse_module(src).unwrap();
    let prog = convert(&model).unwrap();
    let m = prog.method_named("A.m").unwrap();
    let gotos: Vec<_> = m
        .instrs
        .iter()
        .filter_map(|i| match &i.kind {
            GKind::Goto { guard, .. } => Some(crate::expr::render(guard, &crate::expr::NoSyms)),
            _ => None,
        })
        .collect();
    assert_eq!(gotos, vec!["(t0 < t1)".to_string(), "!((t0 < t1))".to_string()]);
}

#[test]
fn while_loop_stays_backward_goto() {
    let model = parse_module(include_str!("../../tests/fixtures/string_util.mjb")).unwrap();
    let prog = convert(&model).unwrap();
    let m = prog.method_named("StringUtil.getLastToken").unwrap();
    let backs: Vec<_> = m
        .instrs
        .iter()
        .enumerate()
        .filter(|(_, i)| matches!(i.kind, GKind::Goto { backedge: true, .. }))
        .collect();
    assert_eq!(backs.len(), 1, "exactly the while backedge");
    match &backs[0].1.kind {
        GKind::Goto { target, .. } => assert!(*target < backs[0].0),
        _ => unreachable!(),
    }
}

const HIERARCHY: &str = "
    class A { method m() : int locals 1 { const 1 return } }
    class B extends A { }
    class C extends A { method m() : int locals 1 { const 2 return } }
    class Use {
      static method go(A) : int locals 1 {
        load 0
        invokevirtual A.m
        return
      }
    }";

#[test]
fn dispatch_uses_vtable_rule() {
    let prog = compile_src(HIERARCHY, "Use.go", GotoOpts::default());
    assert!(!prog.has_virtual);
    let text = print_program(&prog);
    // inherited slot: B's branch targets A.m; override: C's branch targets C.m
    assert!(text.contains("call A.m"), "{text}");
    assert!(text.contains("call C.m"), "{text}");
    let m = prog.method_named("Use.go").unwrap();
    let calls: Vec<Rc<str>> = m
        .instrs
        .iter()
        .filter_map(|i| match &i.kind {
            GKind::Call { target, .. } => Some(prog.methods[*target].name.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(calls.len(), 3, "one branch per class in the subtree");
    // most-derived first: B and C (depth 1) before A (depth 0)
    let guards: Vec<String> = m
        .instrs
        .iter()
        .filter_map(|i| match &i.kind {
            GKind::Goto { guard, .. } if !matches!(**guard, crate::expr::Expr::BoolConst(_)) => {
                Some(crate::expr::render(guard, &crate::expr::NoSyms))
            }
            _ => None,
        })
        .collect();
    let b = prog.class_names.iter().position(|n| &**n == "B").unwrap() as i32;
    let a = prog.class_names.iter().position(|n| &**n == "A").unwrap() as i32;
    let pos_b = guards.iter().position(|g| g.contains(&format!("== {b}"))).unwrap();
    let pos_a = guards.iter().position(|g| g.contains(&format!("== {a}"))).unwrap();
    assert!(pos_b < pos_a, "most-derived tested first: {guards:?}");
}

#[test]
fn lowered_program_has_no_virtual_or_throw() {
    let src = "
        class E exception { }
        class A {
          static method m(int) locals 1 {
            load 0
            const 0
            if_eq ok
            t0:
            new E
            athrow
            t1:
            ok:
            return
            h:
            pop
            return
          }
          catch (t0, t1) -> h : E
        }";
    let prog = compile_src(src, "A.m", GotoOpts::default());
    for m in &prog.methods {
        for i in &m.instrs {
            assert!(!matches!(i.kind, GKind::CallVirtual { .. } | GKind::Throw { .. }));
        }
    }
}

#[test]
fn property_ids_are_deterministic_and_ordered() {
    let src = "
        class A {
          static method m(int, int) : int locals 2 {
            load 0
            load 1
            div
            dup
            const 0
            if_ne ok
            const 0
            assert
          ok:
            return
          }
        }";
    let p1 = compile_src(src, "A.m", GotoOpts::default());
    let p2 = compile_src(src, "A.m", GotoOpts::default());
    let ids1: Vec<String> = p1.props.iter().map(|p| p.id.to_string()).collect();
    let ids2: Vec<String> = p2.props.iter().map(|p| p.id.to_string()).collect();
    assert_eq!(ids1, ids2);
    assert!(ids1.contains(&"A.m.div-by-zero.1".to_string()), "{ids1:?}");
    assert!(ids1.contains(&"A.m.assertion.1".to_string()), "{ids1:?}");
    assert!(ids1.contains(&"A.m.no-uncaught-exception.1".to_string()), "{ids1:?}");
}

#[test]
fn overflow_checks_only_behind_flag() {
    let src = "class A { static method m(int) : int locals 1 { load 0 load 0 add return } }";
    let without = compile_src(src, "A.m", GotoOpts::default());
    assert!(without.props.iter().all(|p| p.kind != PropertyKind::Overflow));
    let with = compile_src(src, "A.m", GotoOpts { check_overflow: true, ..Default::default() });
    assert!(with.props.iter().any(|p| p.kind == PropertyKind::Overflow));
}

/// The central gotoc invariant: interp on the bytecode and the executor on
/// the lowered program agree, outcome for outcome.
fn assert_preserved(src: &str, entry: &str, feeds: &[Vec<FeedValue>], opts: GotoOpts) {
    let model = parse_module(src).unwrap();
    let prog = compile(&model, entry, opts).unwrap();
    let cfg = RunCfg {
        exc_mode: if opts.throw_runtime { ExcMode::Propagate } else { ExcMode::Trap },
        check_overflow: opts.check_overflow,
        ..RunCfg::default()
    };
    for feed in feeds {
        let a = interp::run(&model, entry, feed, cfg).unwrap();
        let b = run_goto(&prog, feed, cfg).unwrap();
        match (&a, &b) {
            (interp::Outcome::Returned(x), GotoOutcome::Returned(y)) => match (x, y) {
                (Some(Value::Int(i)), Some(Value::Int(j))) => assert_eq!(i, j, "feed {feed:?}"),
                (Some(Value::Str(s)), Some(Value::Str(t))) => assert_eq!(s, t, "feed {feed:?}"),
                (Some(Value::Ref(r)), Some(Value::Ref(q))) => {
                    assert_eq!(*r == 0, *q == 0, "feed {feed:?}")
                }
                (None, None) => {}
                other => panic!("return shape mismatch {other:?} on feed {feed:?}"),
            },
            (interp::Outcome::Violated(v), GotoOutcome::Violated(p)) => {
                let info = &prog.props[*p];
                assert_eq!(
                    (v.method.clone(), v.kind, v.instr_idx),
                    (info.id.method.clone(), info.kind, info.bytecode_index),
                    "feed {feed:?}"
                );
            }
            (interp::Outcome::Uncaught { .. }, GotoOutcome::Violated(p)) => {
                assert_eq!(
                    prog.props[*p].kind,
                    PropertyKind::NoUncaughtException,
                    "feed {feed:?}"
                );
            }
            other => panic!("outcome mismatch {other:?} on feed {feed:?}"),
        }
    }
}

#[test]
fn semantic_preservation_binary_search() {
    let feeds: Vec<Vec<FeedValue>> = vec![
        vec![FeedValue::Null, FeedValue::Int(5)],
        vec![FeedValue::IntArray(vec![]), FeedValue::Int(5)],
        vec![FeedValue::IntArray(vec![1, 3, 5, 7]), FeedValue::Int(5)],
        vec![FeedValue::IntArray(vec![2, 4]), FeedValue::Int(1)],
    ];
    let src = include_str!("../../tests/fixtures/binary_search.mjb");
    assert_preserved(src, "BinarySearch.binarySearch", &feeds, GotoOpts::default());
    assert_preserved(
        src,
        "BinarySearch.binarySearch",
        &feeds,
        GotoOpts { throw_runtime: true, ..Default::default() },
    );
}

#[test]
fn semantic_preservation_strings_and_dispatch() {
    let feeds: Vec<Vec<FeedValue>> = vec![
        vec![FeedValue::Str(interp::utf16("xpath=a")), FeedValue::Int(0)],
        vec![FeedValue::Str(interp::utf16("id=zz")), FeedValue::Int(1)],
        vec![FeedValue::Str(interp::utf16("plain")), FeedValue::Int(0)],
        vec![FeedValue::Str(interp::utf16("")), FeedValue::Int(7)],
    ];
    // assertion sites get hit by the matching prefixes; both sides must agree
    assert_preserved(
        include_str!("../../tests/fixtures/locator_handler.mjb"),
        "LocatorHandler.autoLocator",
        &feeds,
        GotoOpts::default(),
    );
}

#[test]
fn semantic_preservation_exceptions() {
    let src = "
        class E exception { field code : int ; }
        class F extends E { }
        class A {
          static method boom(int) locals 1 {
            load 0
            const 0
            if_eq fine
            load 0
            const 1
            if_eq makee
            new F
            athrow
          makee:
            new E
            athrow
          fine:
            return
          }
          static method m(int) : int locals 2 {
            t0:
            load 0
            invokestatic A.boom
            t1:
            const 0
            return
            h:
            store 1
            const 7
            return
          }
          catch (t0, t1) -> h : E
        }";
    let feeds: Vec<Vec<FeedValue>> =
        vec![vec![FeedValue::Int(0)], vec![FeedValue::Int(1)], vec![FeedValue::Int(2)]];
    assert_preserved(src, "A.m", &feeds, GotoOpts::default());
    assert_preserved(src, "A.m", &feeds, GotoOpts { throw_runtime: true, ..Default::default() });
}

#[test]
fn runtime_checks_feed_exception_dispatch() {
    // null deref inside try/catch: caught under throw-runtime, trapped otherwise
    let src = "
        class A {
          static method m(int[]) : int locals 2 {
            t0:
            load 0
            arraylength
            t1:
            return
            h:
            store 1
            const -1
            return
          }
          catch (t0, t1) -> h : NullPointerException
        }";
    let model = parse_module(src).unwrap();
    let feeds = vec![vec![FeedValue::Null], vec![FeedValue::IntArray(vec![1, 2])]];
    assert_preserved(src, "A.m", &feeds, GotoOpts::default());
    assert_preserved(src, "A.m", &feeds, GotoOpts { throw_runtime: true, ..Default::default() });

    // and the caught execution returns -1 concretely
    let prog = compile(&model, "A.m", GotoOpts { throw_runtime: true, ..Default::default() }).unwrap();
    let cfg = RunCfg { exc_mode: ExcMode::Propagate, ..RunCfg::default() };
    let out = run_goto(&prog, &[FeedValue::Null], cfg).unwrap();
    assert_eq!(out, GotoOutcome::Returned(Some(Value::Int(-1))));
}
