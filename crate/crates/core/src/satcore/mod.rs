//! Embedded CDCL solver: two-watched literals, first-UIP clause learning,
//! VSIDS-style decaying activities, Luby restarts and phase saving. Clauses
//! may be added between solves (monotone growth) and solving accepts
//! MiniSAT-style assumptions, so the string refinement loop can re-solve
//! after each instantiation round without resetting.

pub mod dimacs;

use std::fmt;

/// Propositional literal over variables numbered from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var << 1 | negated as u32)
    }

    pub fn pos(var: u32) -> Lit {
        Lit::new(var, false)
    }

    pub fn neg(var: u32) -> Lit {
        Lit::new(var, true)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn negate(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn index(self) -> usize {
        self.0 as usize
    }

    /// DIMACS encoding: 1-based, negative for negated.
    pub fn to_dimacs(self) -> i32 {
        let v = self.var() as i32 + 1;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }

    pub fn from_dimacs(v: i32) -> Lit {
        debug_assert!(v != 0);
        Lit::new(v.unsigned_abs() - 1, v < 0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LBool {
    True,
    False,
    Undef,
}

#[derive(Clone, Copy)]
struct Watcher {
    clause: u32,
    blocker: Lit,
}

/// Indexed max-heap over variable activities.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<Option<u32>>,
}

impl VarHeap {
    fn new() -> Self {
        VarHeap { heap: Vec::new(), pos: Vec::new() }
    }

    fn grow(&mut self, n: usize) {
        self.pos.resize(n, None);
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize].is_some()
    }

    fn push(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v as usize] = Some(self.heap.len() as u32);
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap[0];
        self.pos[top as usize] = None;
        let last = self.heap.pop().expect("nonempty");
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn bumped(&mut self, v: u32, act: &[f64]) {
        if let Some(i) = self.pos[v as usize] {
            self.sift_up(i as usize, act);
        }
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if act[self.heap[i] as usize] <= act[self.heap[parent] as usize] {
                break;
            }
            self.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        loop {
            let l = 2 * i + 1;
            let r = 2 * i + 2;
            let mut best = i;
            if l < self.heap.len() && act[self.heap[l] as usize] > act[self.heap[best] as usize] {
                best = l;
            }
            if r < self.heap.len() && act[self.heap[r] as usize] > act[self.heap[best] as usize] {
                best = r;
            }
            if best == i {
                break;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos[self.heap[a] as usize] = Some(a as u32);
        self.pos[self.heap[b] as usize] = Some(b as u32);
    }
}

pub struct Solver {
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<Watcher>>,
    assign: Vec<LBool>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    /// False once the clause set is unsatisfiable regardless of assumptions.
    ok: bool,
    conflicts: u64,
    restarts: u32,
}

const VAR_DECAY: f64 = 0.95;
const RESTART_BASE: u64 = 100;

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

impl Solver {
    pub fn new() -> Self {
        Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            assign: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            heap: VarHeap::new(),
            phase: Vec::new(),
            ok: true,
            conflicts: 0,
            restarts: 0,
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.assign.len() as u32
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn new_var(&mut self) -> u32 {
        let v = self.assign.len() as u32;
        self.assign.push(LBool::Undef);
        self.level.push(0);
        self.reason.push(None);
        self.activity.push(0.0);
        self.phase.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap.grow(self.assign.len());
        self.heap.push(v, &self.activity);
        v
    }

    pub fn ensure_vars(&mut self, n: u32) {
        while self.num_vars() < n {
            self.new_var();
        }
    }

    fn value(&self, l: Lit) -> LBool {
        match self.assign[l.var() as usize] {
            LBool::Undef => LBool::Undef,
            LBool::True => {
                if l.is_neg() {
                    LBool::False
                } else {
                    LBool::True
                }
            }
            LBool::False => {
                if l.is_neg() {
                    LBool::True
                } else {
                    LBool::False
                }
            }
        }
    }

    /// Adds a clause; duplicate literals collapse, tautologies are dropped.
    /// Returns false when the clause set became unsatisfiable on the spot.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        assert!(
            lits.iter().all(|l| l.var() < self.num_vars()),
            "literal references an unallocated variable"
        );
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        for i in 0..c.len().saturating_sub(1) {
            if c[i].var() == c[i + 1].var() {
                return true; // tautology
            }
        }
        if c.iter().any(|&l| self.value(l) == LBool::True) {
            return true; // already satisfied at top level
        }
        c.retain(|&l| self.value(l) != LBool::False);
        match c.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(c);
                true
            }
        }
    }

    fn attach(&mut self, c: Vec<Lit>) -> u32 {
        let idx = self.clauses.len() as u32;
        self.watches[c[0].negate().index()].push(Watcher { clause: idx, blocker: c[1] });
        self.watches[c[1].negate().index()].push(Watcher { clause: idx, blocker: c[0] });
        self.clauses.push(c);
        idx
    }

    fn enqueue(&mut self, l: Lit, from: Option<u32>) {
        debug_assert_eq!(self.value(l), LBool::Undef);
        let v = l.var() as usize;
        self.assign[v] = if l.is_neg() { LBool::False } else { LBool::True };
        self.level[v] = self.trail_lim.len() as u32;
        self.reason[v] = from;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let mut ws = std::mem::take(&mut self.watches[p.index()]);
            let mut conflict = None;
            let mut i = 0;
            'watchers: while i < ws.len() {
                let w = ws[i];
                if self.value(w.blocker) == LBool::True {
                    i += 1;
                    continue;
                }
                let ci = w.clause as usize;
                let falsified = p.negate();
                if self.clauses[ci][0] == falsified {
                    self.clauses[ci].swap(0, 1);
                }
                let first = self.clauses[ci][0];
                if self.value(first) == LBool::True {
                    ws[i].blocker = first;
                    i += 1;
                    continue;
                }
                for k in 2..self.clauses[ci].len() {
                    if self.value(self.clauses[ci][k]) != LBool::False {
                        self.clauses[ci].swap(1, k);
                        let nw = self.clauses[ci][1];
                        self.watches[nw.negate().index()]
                            .push(Watcher { clause: w.clause, blocker: first });
                        ws.swap_remove(i);
                        continue 'watchers;
                    }
                }
                if self.value(first) == LBool::False {
                    conflict = Some(w.clause);
                    self.qhead = self.trail.len();
                    break;
                }
                self.enqueue(first, Some(w.clause));
                i += 1;
            }
            let tail = std::mem::take(&mut self.watches[p.index()]);
            self.watches[p.index()] = ws;
            self.watches[p.index()].extend(tail);
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn new_decision_level(&mut self) {
        self.trail_lim.push(self.trail.len());
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let bound = self.trail_lim[level as usize];
        for i in (bound..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var() as usize;
            self.phase[v] = !l.is_neg();
            self.assign[v] = LBool::Undef;
            self.reason[v] = None;
            self.heap.push(l.var(), &self.activity);
        }
        self.trail.truncate(bound);
        self.trail_lim.truncate(level as usize);
        self.qhead = self.trail.len();
    }

    fn bump(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v, &self.activity);
    }

    /// First-UIP learning. Returns the learned clause (asserting literal
    /// first, second-highest level at slot 1) and the backjump level.
    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learned: Vec<Lit> = vec![Lit(0)];
        let mut seen = vec![false; self.num_vars() as usize];
        let mut counter = 0u32;
        let mut skip: Option<Lit> = None;
        let mut index = self.trail.len();

        loop {
            let reason_lits = self.clauses[confl as usize].clone();
            for q in reason_lits {
                if Some(q) == skip {
                    continue;
                }
                let v = q.var() as usize;
                if !seen[v] && self.level[v] > 0 {
                    seen[v] = true;
                    self.bump(q.var());
                    if self.level[v] >= self.decision_level() {
                        counter += 1;
                    } else {
                        learned.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if seen[self.trail[index].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[index];
            seen[lit.var() as usize] = false;
            counter -= 1;
            if counter == 0 {
                learned[0] = lit.negate();
                break;
            }
            skip = Some(lit);
            confl = self.reason[lit.var() as usize].expect("implied literal has a reason");
        }

        let bt = if learned.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..learned.len() {
                if self.level[learned[i].var() as usize]
                    > self.level[learned[max_i].var() as usize]
                {
                    max_i = i;
                }
            }
            learned.swap(1, max_i);
            self.level[learned[1].var() as usize]
        };
        (learned, bt)
    }

    fn luby(mut x: u32) -> u64 {
        let mut size = 1u32;
        let mut seq = 0u32;
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        while size - 1 != x {
            size = (size - 1) / 2;
            seq -= 1;
            x %= size;
        }
        1u64 << seq
    }

    /// Decides satisfiability under assumptions (tried as the first
    /// decisions). The solver stays usable afterwards: assumptions retract,
    /// clauses stay.
    pub fn solve(&mut self, assumptions: &[Lit]) -> SatResult {
        assert!(
            assumptions.iter().all(|l| l.var() < self.num_vars()),
            "assumption references an unallocated variable"
        );
        if !self.ok {
            return SatResult::Unsat;
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SatResult::Unsat;
        }

        let mut budget = RESTART_BASE * Self::luby(self.restarts);
        let result = loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    break SatResult::Unsat;
                }
                if self.decision_level() <= assumptions.len() as u32 {
                    // the conflict is forced by the assumptions alone
                    break SatResult::Unsat;
                }
                let (learned, bt) = self.analyze(confl);
                let bt = bt.max(assumptions.len() as u32);
                self.cancel_until(bt);
                let assert_lit = learned[0];
                if learned.len() == 1 {
                    self.cancel_until(0);
                    if self.value(assert_lit) == LBool::False {
                        self.ok = false;
                        break SatResult::Unsat;
                    }
                    if self.value(assert_lit) == LBool::Undef {
                        self.enqueue(assert_lit, None);
                    }
                } else {
                    let ci = self.attach(learned);
                    self.enqueue(assert_lit, Some(ci));
                }
                self.var_inc /= VAR_DECAY;
                budget = budget.saturating_sub(1);
            } else if budget == 0 && self.decision_level() > assumptions.len() as u32 {
                self.restarts += 1;
                budget = RESTART_BASE * Self::luby(self.restarts);
                self.cancel_until(assumptions.len() as u32);
            } else if (self.decision_level() as usize) < assumptions.len() {
                let p = assumptions[self.decision_level() as usize];
                match self.value(p) {
                    LBool::True => self.new_decision_level(),
                    LBool::False => break SatResult::Unsat,
                    LBool::Undef => {
                        self.new_decision_level();
                        self.enqueue(p, None);
                    }
                }
            } else {
                let mut next = None;
                while let Some(v) = self.heap.pop(&self.activity) {
                    if self.assign[v as usize] == LBool::Undef {
                        next = Some(v);
                        break;
                    }
                }
                match next {
                    None => break SatResult::Sat,
                    Some(v) => {
                        self.new_decision_level();
                        self.enqueue(Lit::new(v, !self.phase[v as usize]), None);
                    }
                }
            }
        };

        if cfg!(debug_assertions) && result == SatResult::Sat {
            self.verify_model(assumptions);
        }
        result
    }

    /// Value of a variable in the last SAT model; variables the search never
    /// constrained read as false.
    pub fn model_value(&self, var: u32) -> bool {
        matches!(self.assign[var as usize], LBool::True)
    }

    pub fn model(&self) -> Vec<bool> {
        (0..self.num_vars()).map(|v| self.model_value(v)).collect()
    }

    fn verify_model(&self, assumptions: &[Lit]) {
        for (i, c) in self.clauses.iter().enumerate() {
            assert!(
                c.iter().any(|&l| self.value(l) == LBool::True),
                "model violates clause {i}"
            );
        }
        for &a in assumptions {
            assert!(self.value(a) == LBool::True, "model violates assumption {a}");
        }
    }
}

#[cfg(test)]
mod tests;
