//! Independent MMPP likelihood oracle: the unnormalised matrix product evaluated in
//! double-double arithmetic, with matrix exponentials from a Taylor series.

#![allow(dead_code)]

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r2 = r - b * Dd::from(q2);
        let q3 = r2.hi / b.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e } + Dd::from(q3)
    }

    /// Natural log with one Newton step on `exp` (the hi part's log is accurate to
    /// double precision already; the correction restores the low bits).
    pub fn ln(self) -> f64 {
        let x0 = self.hi.ln();
        // ln(a) = x0 + ln(a e^{-x0}); a e^{-x0} is within 1e-16 of 1
        let e = Dd::from((-x0).exp());
        let r = self * e - Dd::ONE;
        x0 + r.to_f64()
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Dd { hi, lo }
    }
}

type M2 = [[Dd; 2]; 2];

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[Dd::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `exp(a t)` by scaling, a 40-term Taylor series and squaring, all in double-double.
pub fn expm_dd(a: [[f64; 2]; 2], t: f64) -> M2 {
    let norm = (a[0][0].abs() + a[0][1].abs()).max(a[1][0].abs() + a[1][1].abs()) * t;
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.125 {
        s += 1;
    }
    let scale = Dd::from(t).div(Dd::from(2f64.powi(s)));
    let x: M2 = [
        [Dd::from(a[0][0]) * scale, Dd::from(a[0][1]) * scale],
        [Dd::from(a[1][0]) * scale, Dd::from(a[1][1]) * scale],
    ];
    let mut result: M2 = [[Dd::ONE, Dd::ZERO], [Dd::ZERO, Dd::ONE]];
    let mut term = result;
    for k in 1..40 {
        term = mat_mul(&term, &x);
        let inv = Dd::ONE.div(Dd::from(k as f64));
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * inv;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                result[i][j] = result[i][j] + term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result);
    }
    result
}

/// Log of `nu' e^{A t1} Psi e^{A t2} Psi ... e^{A t_{n+1}} 1` without any rescaling.
pub fn naive_loglik(psi: [f64; 2], q: [f64; 2], events: &[f64], window: f64) -> f64 {
    let a = [[-q[0] - psi[0], q[0]], [q[1], -q[1] - psi[1]]];
    let total = Dd::from(q[0]) + Dd::from(q[1]);
    let mut v = [Dd::from(q[1]).div(total), Dd::from(q[0]).div(total)];
    let mut prev = 0.0;
    for (idx, &t) in events.iter().chain(std::iter::once(&window)).enumerate() {
        let e = expm_dd(a, t - prev);
        prev = t;
        let mut n = [v[0] * e[0][0] + v[1] * e[1][0], v[0] * e[0][1] + v[1] * e[1][1]];
        if idx < events.len() {
            n[0] = n[0] * Dd::from(psi[0]);
            n[1] = n[1] * Dd::from(psi[1]);
        }
        v = n;
    }
    (v[0] + v[1]).ln()
}

pub type Instance = ([f64; 2], [f64; 2], Vec<f64>, f64);

/// Deterministic small instances: parameters, sorted event times and a window.
pub fn random_instances(count: usize, seed: u64) -> Vec<Instance> {
    // a small LCG keeps the oracle independent of the library's generators
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            let psi1 = 0.5 + 4.5 * next();
            let psi2 = psi1 + 0.1 + 10.0 * next();
            let q = [0.1 + 3.0 * next(), 0.1 + 3.0 * next()];
            let window = 0.5 + 4.5 * next();
            let n = (next() * 11.0) as usize;
            let mut ev: Vec<f64> = (0..n).map(|_| window * next()).collect();
            ev.sort_by(f64::total_cmp);
            ev.dedup();
            ([psi1, psi2], q, ev, window)
        })
        .collect()
}
