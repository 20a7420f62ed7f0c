//! Double-double arithmetic (about 106 significant bits) for loss values.
//!
//! Loss values are accumulated here so that two evaluations a few ulps
//! apart can be differenced without f64 rounding noise.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd {
        hi: s,
        lo: (a - (s - bb)) + (b - bb),
    }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        let q = quick_two_sum(q1, q2);
        q + Dd::from_f64(q3)
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * k;
        // r / 1024, Taylor series, then square ten times
        let r = r.ldexp(-10);
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = (term * r).div(Dd::from_f64(n as f64));
            sum = sum + term;
        }
        // sum = e^r - 1; (1 + s)^2 - 1 = 2s + s^2 keeps precision near zero
        for _ in 0..10 {
            sum = sum * 2.0 + sum * sum;
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    /// Natural log by one Newton step from the f64 estimate.
    pub fn ln(self) -> Dd {
        let y = Dd::from_f64(self.hi.ln());
        y + self * (-y).exp() - Dd::ONE
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let s = two_sum(self.hi, b.hi);
        let t = two_sum(self.lo, b.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
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

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = two_prod(self.hi, b.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let p = two_prod(self.hi, b);
        quick_two_sum(p.hi, p.lo + self.lo * b)
    }
}

/// `log_softmax(x / t)` in double-double.
pub fn log_softmax_scaled(row: impl Iterator<Item = f64>, t: f64) -> Vec<Dd> {
    let td = Dd::from_f64(t);
    let z: Vec<Dd> = row.map(|x| Dd::from_f64(x).div(td)).collect();
    let max = z.iter().map(|d| d.hi).fold(f64::NEG_INFINITY, f64::max);
    let m = Dd::from_f64(max);
    let sum = z.iter().fold(Dd::ZERO, |acc, &d| acc + (d - m).exp());
    let lse = m + sum.ln();
    z.into_iter().map(|d| d - lse).collect()
}
