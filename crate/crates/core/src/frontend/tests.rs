use super::*;

#[test]
fn parses_empty_class() {
    let m = parse_module("class A { }").unwrap();
    let a = m.class_idx("A").unwrap();
    assert!(m.class(a).methods.is_empty());
    // the builtin exception hierarchy is always present
    assert!(m.class_idx("NullPointerException").is_some());
}

#[test]
fn rejects_inheritance_cycle() {
    let err = parse_module("class B extends A { } class A extends B { }").unwrap_err();
    match err {
        FrontendError::Resolve { msg, .. } => assert!(msg.contains("cycle"), "{msg}"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn rejects_duplicate_class_and_unknown_super() {
    assert!(parse_module("class A { } class A { }").is_err());
    assert!(parse_module("class A extends Nope { }").is_err());
}

#[test]
fn resolves_entry_variants() {
    let src = "
        class BinarySearch {
          static method main() locals 0 { return }
          static method helper() locals 0 { return }
        }";
    let m = parse_module(src).unwrap();
    assert_eq!(&*m.resolve_entry("BinarySearch.helper").unwrap().1.name, "helper");
    assert_eq!(&*m.resolve_entry("BinarySearch").unwrap().1.name, "main");
    assert!(m.resolve_entry("NoSuch.m").is_err());
}

#[test]
fn rejects_unbalanced_join() {
    let src = "
        class A {
          static method m(int) locals 1 {
            load 0
            const 0
            if_eq l
            const 1
          l:
            return
          }
        }";
    let err = parse_module(src).unwrap_err();
    assert!(matches!(err, FrontendError::Stack { .. }), "{err:?}");
}

#[test]
fn rejects_read_before_assignment() {
    let src = "class A { static method m() : int locals 1 { load 0 return } }";
    let err = parse_module(src).unwrap_err();
    match err {
        FrontendError::Stack { msg, .. } => assert!(msg.contains("before assignment"), "{msg}"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn rejects_slot_out_of_range() {
    let src = "class A { static method m() locals 1 { const 1 store 3 return } }";
    assert!(parse_module(src).is_err());
}

#[test]
fn rejects_overload() {
    let src = "
        class A {
          static method m() locals 0 { return }
          static method m(int) locals 1 { return }
        }";
    let err = parse_module(src).unwrap_err();
    match err {
        FrontendError::Resolve { msg, .. } => assert!(msg.contains("overloading"), "{msg}"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn rejects_bad_override() {
    let src = "
        class A { method m(int) locals 2 { return } }
        class B extends A { method m(string) locals 2 { return } }";
    assert!(parse_module(src).is_err());
}

#[test]
fn accepts_matching_override_and_dispatch() {
    let src = "
        class A { method m() : int locals 1 { const 1 return } }
        class B extends A { method m() : int locals 1 { const 2 return } }
        class Use {
          static method go(A) : int locals 1 {
            load 0
            invokevirtual A.m
            return
          }
        }";
    let m = parse_module(src).unwrap();
    let b = m.class_idx("B").unwrap();
    let (owner, _) = m.resolve_virtual(b, "m").unwrap();
    assert_eq!(owner, b);
}

#[test]
fn virtual_resolution_copies_inherited_slots() {
    let src = "
        class A { method m() : int locals 1 { const 1 return } }
        class B extends A { }";
    let m = parse_module(src).unwrap();
    let b = m.class_idx("B").unwrap();
    let a = m.class_idx("A").unwrap();
    assert_eq!(m.resolve_virtual(b, "m").unwrap().0, a);
}

#[test]
fn exception_handler_gets_typed_entry() {
    let src = "
        class E exception { }
        class A {
          static method m() : int locals 1 {
            t0:
            new E
            athrow
            t1:
            h:
            store 0
            const 7
            return
          }
          catch (t0, t1) -> h : E
        }";
    let model = parse_module(src).unwrap();
    let a = model.class_idx("A").unwrap();
    let m = &model.class(a).methods[0];
    let h = m.labels["h"];
    let st = m.flow[h].as_ref().unwrap();
    assert_eq!(st.stack.len(), 1);
}

#[test]
fn catch_range_must_be_ordered() {
    let src = "
        class E exception { }
        class A {
          static method m() locals 1 {
            a:
            return
            b:
            h:
            store 0
            return
          }
          catch (b, a) -> h : E
        }";
    assert!(parse_module(src).is_err());
}

#[test]
fn strings_do_not_compare_with_if_eq() {
    let src = "
        class A {
          static method m(string, string) locals 2 {
            load 0
            load 1
            if_eq l
            l:
            return
          }
        }";
    assert!(parse_module(src).is_err());
}

#[test]
fn parse_print_round_trip() {
    let src = "
        class E exception { field code : int ; }
        class A extends E {
          field name : string ;
          field buf : int[] ;
          static method m(int, string) : string locals 4 {
            sconst \"x\\u0007y\"
            store 2
            const -3
            store 3
          top:
            load 3
            const 0
            if_lt done @ 42
            load 3
            const 1
            sub
            store 3
            goto top
          done:
            load 2
            return
          }
          method v() locals 1 { return }
        }";
    let m1 = parse_module(src).unwrap();
    let printed = print_model(&m1);
    let m2 = parse_module(&printed).unwrap();
    assert_eq!(m1, m2, "printed form:\n{printed}");
    // and printing is a fixed point
    assert_eq!(printed, print_model(&m2));
}

#[test]
fn getlasttoken_port_parses_with_backward_branch() {
    let src = include_str!("../../tests/fixtures/string_util.mjb");
    let m = parse_module(src).unwrap();
    let c = m.class_idx("StringUtil").unwrap();
    let method = m.method(c, "getLastToken").unwrap();
    assert_eq!(method.params.len(), 3);
    let has_backward = method.body.iter().enumerate().any(|(pc, ins)| match &ins.op {
        Opcode::Goto(l) | Opcode::If(_, l) => l.target <= pc,
        _ => false,
    });
    assert!(has_backward, "the while loop must appear as a backward branch");
}
