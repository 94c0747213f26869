use super::*;

/// Brute-force reference: tries all assignments. The oracle the CDCL core is
/// measured against.
pub fn brute_force(num_vars: u32, clauses: &[Vec<Lit>]) -> SatResult {
    assert!(num_vars <= 24, "reference solver is exponential");
    'outer: for bits in 0u64..(1u64 << num_vars) {
        for c in clauses {
            let sat = c.iter().any(|l| {
                let v = bits >> l.var() & 1 == 1;
                v != l.is_neg()
            });
            if !sat {
                continue 'outer;
            }
        }
        return SatResult::Sat;
    }
    SatResult::Unsat
}

fn solver_with(num_vars: u32, clauses: &[Vec<Lit>]) -> Solver {
    let mut s = Solver::new();
    s.ensure_vars(num_vars);
    for c in clauses {
        s.add_clause(c);
    }
    s
}

fn d(v: i32) -> Lit {
    Lit::from_dimacs(v)
}

#[test]
fn trivial_conflict_is_unsat() {
    let mut s = Solver::new();
    s.ensure_vars(1);
    assert!(s.add_clause(&[d(1)]));
    assert!(!s.add_clause(&[d(-1)]));
    assert_eq!(s.solve(&[]), SatResult::Unsat);
}

#[test]
fn duplicate_literals_collapse() {
    let mut s = Solver::new();
    s.ensure_vars(2);
    s.add_clause(&[d(1), d(1), d(2)]);
    assert_eq!(s.clauses[0], vec![d(1), d(2)]);
}

#[test]
fn tautologies_are_dropped() {
    let mut s = Solver::new();
    s.ensure_vars(2);
    s.add_clause(&[d(1), d(-1)]);
    assert_eq!(s.num_clauses(), 0);
    assert_eq!(s.solve(&[]), SatResult::Sat);
}

#[test]
fn empty_database_is_sat() {
    let mut s = Solver::new();
    assert_eq!(s.solve(&[]), SatResult::Sat);
}

#[test]
fn small_unsat_core() {
    let mut s = solver_with(2, &[vec![d(1), d(2)], vec![d(-1)], vec![d(-2)]]);
    assert_eq!(s.solve(&[]), SatResult::Unsat);
}

#[test]
fn assumptions_flip_verdicts_and_retract() {
    let mut s = solver_with(3, &[vec![d(1), d(2)], vec![d(-2), d(3)]]);
    assert_eq!(s.solve(&[d(-1)]), SatResult::Sat);
    assert!(s.model_value(1)); // x2 forced by (x1 v x2) under !x1
    assert!(s.model_value(2));
    assert_eq!(s.solve(&[d(-1), d(-2)]), SatResult::Unsat);
    // retractable: the same solver is still sat without assumptions
    assert_eq!(s.solve(&[]), SatResult::Sat);
    // and under contradictory assumption literals
    assert_eq!(s.solve(&[d(3), d(-3)]), SatResult::Unsat);
}

#[test]
fn monotone_addition_keeps_unsat() {
    let mut s = solver_with(2, &[vec![d(1)], vec![d(-1)]]);
    assert_eq!(s.solve(&[]), SatResult::Unsat);
    s.add_clause(&[d(2)]);
    assert_eq!(s.solve(&[]), SatResult::Unsat);
}

/// Pigeonhole formula PHP(pigeons, holes): var p*holes+h says pigeon p sits
/// in hole h.
pub fn php(pigeons: u32, holes: u32) -> (u32, Vec<Vec<Lit>>) {
    let var = |p: u32, h: u32| p * holes + h;
    let mut clauses = Vec::new();
    for p in 0..pigeons {
        clauses.push((0..holes).map(|h| Lit::pos(var(p, h))).collect());
    }
    for h in 0..holes {
        for p1 in 0..pigeons {
            for p2 in p1 + 1..pigeons {
                clauses.push(vec![Lit::neg(var(p1, h)), Lit::neg(var(p2, h))]);
            }
        }
    }
    (pigeons * holes, clauses)
}

#[test]
fn pigeonhole_4_3_is_unsat() {
    let (nv, clauses) = php(4, 3);
    assert_eq!(brute_force(nv, &clauses), SatResult::Unsat);
    let mut s = solver_with(nv, &clauses);
    assert_eq!(s.solve(&[]), SatResult::Unsat);
}

#[test]
fn pigeonhole_5_5_is_sat() {
    let (nv, clauses) = php(5, 5);
    let mut s = solver_with(nv, &clauses);
    assert_eq!(s.solve(&[]), SatResult::Sat);
}

#[test]
fn random_3cnf_agrees_with_reference() {
    // deterministic xorshift so failures reproduce
    let mut state = 0x2545f4914f6cdd1du64;
    let mut rng = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for round in 0..300 {
        let nv = 3 + (rng() % 13) as u32; // up to 15 vars
        let nc = 5 + (rng() % 60) as usize;
        let clauses: Vec<Vec<Lit>> = (0..nc)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let v = (rng() % nv as u64) as u32;
                        Lit::new(v, rng() & 1 == 1)
                    })
                    .collect()
            })
            .collect();
        let expect = brute_force(nv, &clauses);
        let mut s = solver_with(nv, &clauses);
        assert_eq!(s.solve(&[]), expect, "round {round} nv={nv} {clauses:?}");
    }
}

#[test]
fn incremental_refinement_pattern() {
    // mimic the string loop: solve, add blocking clauses, solve again
    let mut s = solver_with(4, &[vec![d(1), d(2), d(3), d(4)]]);
    let mut models = 0;
    while s.solve(&[]) == SatResult::Sat {
        models += 1;
        let block: Vec<Lit> = (0..4)
            .map(|v| Lit::new(v, s.model_value(v)))
            .collect();
        s.add_clause(&block);
        assert!(models <= 16, "enumeration must terminate");
    }
    assert_eq!(models, 15, "all assignments except all-false");
}
