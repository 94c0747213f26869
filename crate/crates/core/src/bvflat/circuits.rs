//! Width-generic two's-complement circuits over CNF literals. Bit 0 is the
//! least significant. Comparisons are signed unless suffixed `_u`.

use super::CnfFormula;
use crate::satcore::Lit;

pub type Bv = Vec<Lit>;

impl CnfFormula {
    pub fn constant(&mut self, value: i64, width: usize) -> Bv {
        (0..width)
            .map(|i| if value >> i & 1 == 1 { self.tt() } else { self.ff() })
            .collect()
    }

    pub fn fresh_bv(&mut self, width: usize) -> Bv {
        (0..width).map(|_| Lit::pos(self.new_var())).collect()
    }

    /// `x` if it already has the width, zero-padded or truncated otherwise.
    pub fn zext(&mut self, x: &Bv, width: usize) -> Bv {
        let mut out = x.clone();
        out.truncate(width);
        while out.len() < width {
            out.push(self.ff());
        }
        out
    }

    /// Sign-extends (or truncates) to the width.
    pub fn sext(&mut self, x: &Bv, width: usize) -> Bv {
        let msb = *x.last().expect("nonempty vector");
        let mut out = x.clone();
        out.truncate(width);
        while out.len() < width {
            out.push(msb);
        }
        out
    }

    pub fn lit_not(&mut self, a: Lit) -> Lit {
        a.negate()
    }

    pub fn lit_and(&mut self, a: Lit, b: Lit) -> Lit {
        if a == self.tt() {
            return b;
        }
        if b == self.tt() {
            return a;
        }
        if a == self.ff() || b == self.ff() {
            return self.ff();
        }
        let o = Lit::pos(self.new_var());
        self.add_clause(&[a.negate(), b.negate(), o]);
        self.add_clause(&[a, o.negate()]);
        self.add_clause(&[b, o.negate()]);
        o
    }

    pub fn lit_or(&mut self, a: Lit, b: Lit) -> Lit {
        self.lit_and(a.negate(), b.negate()).negate()
    }

    pub fn lit_xor(&mut self, a: Lit, b: Lit) -> Lit {
        if a == self.tt() {
            return b.negate();
        }
        if a == self.ff() {
            return b;
        }
        if b == self.tt() {
            return a.negate();
        }
        if b == self.ff() {
            return a;
        }
        let o = Lit::pos(self.new_var());
        self.add_clause(&[a.negate(), b.negate(), o.negate()]);
        self.add_clause(&[a, b, o.negate()]);
        self.add_clause(&[a.negate(), b, o]);
        self.add_clause(&[a, b.negate(), o]);
        o
    }

    pub fn lit_iff(&mut self, a: Lit, b: Lit) -> Lit {
        self.lit_xor(a, b).negate()
    }

    pub fn lit_mux(&mut self, c: Lit, t: Lit, e: Lit) -> Lit {
        if c == self.tt() {
            return t;
        }
        if c == self.ff() {
            return e;
        }
        if t == e {
            return t;
        }
        let o = Lit::pos(self.new_var());
        self.add_clause(&[c.negate(), t.negate(), o]);
        self.add_clause(&[c.negate(), t, o.negate()]);
        self.add_clause(&[c, e.negate(), o]);
        self.add_clause(&[c, e, o.negate()]);
        o
    }

    pub fn and_many(&mut self, lits: &[Lit]) -> Lit {
        let mut acc = self.tt();
        for &l in lits {
            acc = self.lit_and(acc, l);
        }
        acc
    }

    pub fn mux_bv(&mut self, c: Lit, t: &Bv, e: &Bv) -> Bv {
        debug_assert_eq!(t.len(), e.len());
        t.iter().zip(e).map(|(&x, &y)| self.lit_mux(c, x, y)).collect()
    }

    /// Ripple-carry addition with explicit carry-in.
    pub fn add_with_carry(&mut self, a: &Bv, b: &Bv, mut carry: Lit) -> Bv {
        debug_assert_eq!(a.len(), b.len());
        let mut out = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let xy = self.lit_xor(x, y);
            out.push(self.lit_xor(xy, carry));
            let c1 = self.lit_and(x, y);
            let c2 = self.lit_and(xy, carry);
            carry = self.lit_or(c1, c2);
        }
        out
    }

    pub fn add_bv(&mut self, a: &Bv, b: &Bv) -> Bv {
        let ff = self.ff();
        self.add_with_carry(a, b, ff)
    }

    pub fn sub_bv(&mut self, a: &Bv, b: &Bv) -> Bv {
        let nb: Bv = b.iter().map(|l| l.negate()).collect();
        let tt = self.tt();
        self.add_with_carry(a, &nb, tt)
    }

    pub fn neg_bv(&mut self, a: &Bv) -> Bv {
        let zero = self.constant(0, a.len());
        self.sub_bv(&zero, a)
    }

    /// Shift-add multiplier truncated to the operand width.
    pub fn mul_bv(&mut self, a: &Bv, b: &Bv) -> Bv {
        debug_assert_eq!(a.len(), b.len());
        let w = a.len();
        let mut acc = self.constant(0, w);
        for i in 0..w {
            // (a << i) gated by b[i]
            let mut partial = Vec::with_capacity(w);
            for j in 0..w {
                if j < i {
                    partial.push(self.ff());
                } else {
                    let g = self.lit_and(a[j - i], b[i]);
                    partial.push(g);
                }
            }
            acc = self.add_bv(&acc, &partial);
        }
        acc
    }

    pub fn eq_bv(&mut self, a: &Bv, b: &Bv) -> Lit {
        debug_assert_eq!(a.len(), b.len());
        let bits: Vec<Lit> = a.iter().zip(b).map(|(&x, &y)| self.lit_iff(x, y)).collect();
        self.and_many(&bits)
    }

    /// Unsigned a < b via ripple comparison from the least significant bit.
    pub fn lt_u(&mut self, a: &Bv, b: &Bv) -> Lit {
        debug_assert_eq!(a.len(), b.len());
        let mut lt = self.ff();
        for (&x, &y) in a.iter().zip(b) {
            let eq = self.lit_iff(x, y);
            let xln = self.lit_and(x.negate(), y);
            let keep = self.lit_and(eq, lt);
            lt = self.lit_or(xln, keep);
        }
        lt
    }

    /// Signed a < b: unsigned comparison with flipped sign bits.
    pub fn lt_s(&mut self, a: &Bv, b: &Bv) -> Lit {
        let mut af = a.clone();
        let mut bf = b.clone();
        let n = af.len();
        af[n - 1] = af[n - 1].negate();
        bf[n - 1] = bf[n - 1].negate();
        self.lt_u(&af, &bf)
    }

    /// Asserts `cond -> (a == b)` bitwise.
    pub fn implies_eq(&mut self, cond: Lit, a: &Bv, b: &Bv) {
        debug_assert_eq!(a.len(), b.len());
        for (&x, &y) in a.iter().zip(b) {
            self.add_clause(&[cond.negate(), x.negate(), y]);
            self.add_clause(&[cond.negate(), x, y.negate()]);
        }
    }

    /// Java `/` and `%` on `width`-bit operands: fresh quotient and
    /// remainder constrained by the exact double-width identity
    /// `n == q*d + r` with `|r| < |d|` and `sign(r) == sign(n)` (or r == 0),
    /// truncation toward zero. The `MIN / -1` wraparound is a special case
    /// and a zero divisor leaves both results unconstrained (instrumentation
    /// guards those paths).
    pub fn div_rem(&mut self, n: &Bv, d: &Bv) -> (Bv, Bv) {
        let w = n.len();
        let q = self.fresh_bv(w);
        let r = self.fresh_bv(w);

        let min = self.constant(1i64 << (w - 1), w);
        let m1 = self.constant(-1, w);
        let zero = self.constant(0, w);

        let n_min = self.eq_bv(n, &min);
        let d_m1 = self.eq_bv(d, &m1);
        let special = self.lit_and(n_min, d_m1);
        let d_zero = self.eq_bv(d, &zero);
        let not_special = special.negate();
        let ok = self.lit_and(not_special, d_zero.negate());

        // exact identity at double width
        let w2 = 2 * w;
        let q2 = self.sext(&q, w2);
        let d2 = self.sext(d, w2);
        let r2 = self.sext(&r, w2);
        let n2 = self.sext(n, w2);
        let prod = self.mul_bv(&q2, &d2);
        let sum = self.add_bv(&prod, &r2);
        self.implies_eq(ok, &sum, &n2);

        // remainder sign: r == 0 or sign(r) == sign(n)
        let r_zero = self.eq_bv(&r, &zero);
        let sign_ok = self.lit_iff(r[w - 1], n[w - 1]);
        let r_sign = self.lit_or(r_zero, sign_ok);
        self.add_clause(&[ok.negate(), r_sign]);

        // |r| < |d| at width+1 so MIN's magnitude fits
        let abs_r = self.abs_wide(&r);
        let abs_d = self.abs_wide(d);
        let mag = self.lt_u(&abs_r, &abs_d);
        self.add_clause(&[ok.negate(), mag]);

        // MIN / -1 wraps
        self.implies_eq(special, &q, &min);
        self.implies_eq(special, &r, &zero);
        (q, r)
    }

    /// |x| as an unsigned (width+1)-bit vector.
    fn abs_wide(&mut self, x: &Bv) -> Bv {
        let w1 = x.len() + 1;
        let ext = self.sext(x, w1);
        let negated = self.neg_bv(&ext);
        self.mux_bv(ext[w1 - 1], &negated, &ext)
    }

    /// True iff the signed product of `a` and `b` fits the operand width.
    pub fn mul_no_overflow(&mut self, a: &Bv, b: &Bv) -> Lit {
        let w = a.len();
        let w2 = 2 * w;
        let a2 = self.sext(a, w2);
        let b2 = self.sext(b, w2);
        let p = self.mul_bv(&a2, &b2);
        // upper half plus one must replicate the sign of the truncation
        let bits: Vec<Lit> = (w - 1..w2 - 1)
            .map(|i| (p[i], p[i + 1]))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(lo, hi)| self.lit_iff(lo, hi))
            .collect();
        self.and_many(&bits)
    }
}
