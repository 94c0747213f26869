use super::sc::{brute_force_sc, gen_random_system, parse_sc, solve_sc};
use super::*;
use crate::interp::utf16;

fn solve_text(text: &str, max_len: i32) -> (StrOutcome, Vec<(String, Vec<u16>)>) {
    let mut sys = parse_sc(text).unwrap();
    let sol = solve_sc(&mut sys, max_len);
    (sol.outcome, sol.strings)
}

#[test]
fn empty_equality_is_sat() {
    let (out, _) = solve_text("require eq(\"\", \"\");", 4);
    assert_eq!(out, StrOutcome::Sat);
}

#[test]
fn length_zero_gives_empty_model() {
    let (out, strings) = solve_text("str s; require len(s) == 0;", 8);
    assert_eq!(out, StrOutcome::Sat);
    assert_eq!(strings[0].1, Vec::<u16>::new());
}

#[test]
fn equals_and_conflicting_prefix_is_unsat() {
    // brute force over all strings of length <= 2 agrees
    let text = "str s; require eq(s, \"ab\"); require startswith(s, \"b\");";
    let sys = parse_sc(text).unwrap();
    assert!(brute_force_sc(&sys, &utf16("ab"), 2).is_none());
    let (out, _) = solve_text(text, 4);
    assert_eq!(out, StrOutcome::Unsat);
}

#[test]
fn literal_equality_pins_the_model() {
    let (out, strings) = solve_text("str s; require eq(s, \"ab\");", 4);
    assert_eq!(out, StrOutcome::Sat);
    assert_eq!(strings[0].1, utf16("ab"));
}

#[test]
fn concat_assembles() {
    let (out, strings) = solve_text(
        "str s; require eq(concat(\"ab\", \"cd\"), s);",
        8,
    );
    assert_eq!(out, StrOutcome::Sat);
    assert_eq!(strings[0].1, utf16("abcd"));
}

#[test]
fn substring_matches_paper_schema() {
    // res.length == s.length - b and a shifted copy constraint
    let mut sys = parse_sc("str s; str r; require eq(r, substring(s, 5, len(s)));").unwrap();
    let mut cnf = crate::bvflat::CnfFormula::new(1);
    let mut strings = StringSystem::new(16);
    for r in &sys.requires {
        cnf.assert_expr(r);
    }
    loop {
        let apps = cnf.take_new_string_apps();
        if apps.is_empty() {
            break;
        }
        for app in apps {
            strings.tie_app(&app, &mut sys.syms, &mut cnf);
        }
    }
    let text = strings.render(&sys.syms);
    // one copy axiom of the form forall i. 0 <= i && i < res.length -> res[i] = s[i + shift]
    assert!(text.contains("substring"), "{text}");
    assert!(text.contains("forall i."), "{text}");
    let copy = text
        .lines()
        .find(|l| l.contains("substring"))
        .expect("substring axiom rendered");
    assert!(copy.contains("0 <= i && i < "), "{copy}");
    // the paper shape: res.charArray[i] == s.charArray[i + begin]
    assert!(copy.contains(".charArray[i]"), "{copy}");
    assert!(copy.contains("(i + "), "shifted source access: {copy}");
}

#[test]
fn insert_emits_the_three_window_axioms() {
    let mut sys = parse_sc("str s; str t; str r; require eq(r, insert(s, 2, t));").unwrap();
    let mut cnf = crate::bvflat::CnfFormula::new(1);
    let mut strings = StringSystem::new(8);
    for r in &sys.requires {
        cnf.assert_expr(r);
    }
    loop {
        let apps = cnf.take_new_string_apps();
        if apps.is_empty() {
            break;
        }
        for app in apps {
            strings.tie_app(&app, &mut sys.syms, &mut cnf);
        }
    }
    let inserts: Vec<&UniversalAxiom> = strings
        .axioms
        .iter()
        .filter(|a| a.provenance.starts_with("insert"))
        .collect();
    assert_eq!(inserts.len(), 3, "prefix, inserted window, suffix");
}

#[test]
fn insert_solves_concretely() {
    let (out, strings) = solve_text(
        "str r; require eq(r, insert(\"abcd\", 2, \"XY\"));",
        8,
    );
    assert_eq!(out, StrOutcome::Sat);
    assert_eq!(strings[0].1, utf16("abXYcd"));
}

#[test]
fn indexof_behaves_like_the_interpreter() {
    for (text, expect) in [
        ("str s; require eq(s, \"abcab\"); require indexof(s, 'b', 0) == 1;", StrOutcome::Sat),
        ("str s; require eq(s, \"abcab\"); require indexof(s, 'b', 2) == 4;", StrOutcome::Sat),
        ("str s; require eq(s, \"abcab\"); require indexof(s, 'z', 0) == -1;", StrOutcome::Sat),
        ("str s; require eq(s, \"abcab\"); require indexof(s, 'b', 0) == 2;", StrOutcome::Unsat),
        ("str s; require len(s) == 2; require indexof(s, 'a', 0) == -1; require charat(s, 0) == 'a';", StrOutcome::Unsat),
    ] {
        let (out, _) = solve_text(text, 8);
        assert_eq!(out, expect, "{text}");
    }
}

#[test]
fn of_int_renders_decimals() {
    for (n, s) in [(0, "0"), (7, "7"), (-123, "-123"), (2147483647, "2147483647")] {
        let (out, strings) = solve_text(
            &format!("str r; require eq(r, of_int({n}));"),
            12,
        );
        assert_eq!(out, StrOutcome::Sat, "{n}");
        assert_eq!(strings[0].1, utf16(s), "{n}");
    }
    // and backwards: which int renders as "10"?
    let mut sys = parse_sc("str r; int x; require eq(r, of_int(x)); require eq(r, \"10\");").unwrap();
    let sol = solve_sc(&mut sys, 12);
    assert_eq!(sol.outcome, StrOutcome::Sat);
    assert_eq!(sol.ints[0].1, 10);
}

#[test]
fn completion_follows_the_next_known_index() {
    // known s[3]='a' and s[5]='b': reads are (i <= 3 ? 'a' : 'b')
    let text = "str s; require len(s) == 6; require charat(s, 3) == 'a'; require charat(s, 5) == 'b';";
    let mut sys = parse_sc(text).unwrap();
    let mut cnf = crate::bvflat::CnfFormula::new(1);
    let mut solver = crate::satcore::Solver::new();
    let mut strings = StringSystem::new(8);
    for r in &sys.requires {
        cnf.assert_expr(r);
    }
    let (out, model) = strings.solve_strings(&mut sys.syms, &mut cnf, &mut solver);
    assert_eq!(out, StrOutcome::Sat);
    let v = strings.var_of_sym(sys.str_vars[0].1).unwrap();
    let completed = strings.complete(v, &cnf, &model);
    assert_eq!(completed.len(), 6);
    // indices up to 3 read the value known at 3, later ones the value at 5
    assert_eq!(&completed[..4], utf16("aaaa").as_slice());
    assert_eq!(&completed[4..], utf16("bb").as_slice());
}

#[test]
fn refinement_propagates_through_insert_windows() {
    let mut sys = parse_sc("str s; str t; str r; require eq(r, insert(s, 2, t));").unwrap();
    let mut cnf = crate::bvflat::CnfFormula::new(1);
    let mut strings = StringSystem::new(8);
    for r in &sys.requires {
        cnf.assert_expr(r);
    }
    loop {
        let apps = cnf.take_new_string_apps();
        if apps.is_empty() {
            break;
        }
        for app in apps {
            strings.tie_app(&app, &mut sys.syms, &mut cnf);
        }
    }
    let vt = strings.var_of_sym(sys.str_vars[1].1).unwrap();
    // the middle insert window relates the result string r and t through
    // i -> i - offset; refine must push r's boundary index into t's set
    let (v_res, off_res, off_t) = strings
        .axioms
        .iter()
        .find_map(|a| {
            if !a.provenance.starts_with("insert") {
                return None;
            }
            let t_entry = a.accesses.iter().find(|(v, _)| *v == vt)?;
            let other = a.accesses.iter().find(|(v, _)| *v != vt)?;
            Some((other.0, other.1.clone(), t_entry.1.clone()))
        })
        .expect("an insert axiom relates the result and t");
    let res_len = strings.vars[v_res.0].len;
    let boundary = Expr::sub(Expr::sym(res_len), Expr::int(1));
    let expected = StringSystem::canon(&Expr::add(
        Expr::sub(boundary, off_res),
        off_t,
    ));
    let key = StringSystem::canon_key_pub(&expected);
    let before: Vec<String> = strings.vars[vt.0]
        .index_set
        .iter()
        .map(StringSystem::canon_key_pub)
        .collect();
    strings.refine(None);
    let after: Vec<String> = strings.vars[vt.0]
        .index_set
        .iter()
        .map(StringSystem::canon_key_pub)
        .collect();
    assert!(!before.contains(&key), "not propagated before refine: {before:?}");
    assert!(after.contains(&key), "propagated after refine: {after:?}");
}

#[test]
fn fixed_point_reached_within_budget_on_random_systems() {
    let alphabet = utf16("ab");
    for seed in 0..60u64 {
        let text = gen_random_system(seed.wrapping_mul(0x9e3779b9).wrapping_add(seed), 2, &alphabet, 4);
        let sys = parse_sc(&text).unwrap();
        let expect = brute_force_sc(&sys, &alphabet, 4).is_some();
        let mut sys = parse_sc(&text).unwrap();
        let sol = solve_sc(&mut sys, 4);
        let got = sol.outcome == StrOutcome::Sat;
        assert_eq!(got, expect, "seed {seed}:\n{text}");
        // SAT models must satisfy every requirement concretely
        if got {
            let mut env = std::collections::HashMap::new();
            for ((_, sym), (_, units)) in sys.str_vars.iter().zip(&sol.strings) {
                env.insert(*sym, super::sc::ScVal::S(units.clone()));
            }
            for r in &sys.requires {
                assert_eq!(
                    super::sc::eval_concrete(r, &env),
                    super::sc::ScVal::B(true),
                    "seed {seed} model check:\n{text}"
                );
            }
        }
    }
}
