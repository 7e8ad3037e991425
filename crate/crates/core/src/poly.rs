//! Exact univariate polynomials over the rationals and real root isolation
//! on (0, 1) by Descartes' rule of signs with dyadic bisection.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug, PartialEq)]
pub struct RatPoly {
    /// `coeffs[k]` multiplies `x^k`; no trailing zeros.
    coeffs: Vec<BigRational>,
}

impl RatPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn sign_at(&self, x: &BigRational) -> i8 {
        let v = self.eval(x);
        if v.is_zero() {
            0
        } else if v.is_positive() {
            1
        } else {
            -1
        }
    }

    pub fn scale(&self, k: &BigRational) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = BigRational::zero();
        Self::new(
            (0..n)
                .map(|i| {
                    self.coeffs.get(i).unwrap_or(&zero) - other.coeffs.get(i).unwrap_or(&zero)
                })
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * BigRational::from_integer(BigInt::from(k)))
                .collect(),
        )
    }

    fn monic(&self) -> Self {
        match self.coeffs.last() {
            Some(lead) => {
                let inv = lead.recip();
                self.scale(&inv)
            }
            None => Self::zero(),
        }
    }

    /// Quotient and remainder of polynomial long division.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let dd = divisor.coeffs.len() - 1;
        let lead = divisor.coeffs.last().unwrap().clone();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Self::zero(), self.clone());
        }
        let mut quot = vec![BigRational::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] / &lead;
            if !c.is_zero() {
                for (j, dc) in divisor.coeffs.iter().enumerate() {
                    rem[k + j] -= &c * dc;
                }
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (Self::new(quot), Self::new(rem))
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    /// `p / gcd(p, p')`: same distinct roots, all simple.
    pub fn square_free(&self) -> Self {
        if self.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative());
        self.div_rem(&g).0
    }

    /// `p(x + a)`.
    fn taylor_shift(&self, a: &BigRational) -> Self {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let t = &c[j + 1] * a;
                c[j] += t;
            }
        }
        Self::new(c)
    }

    /// Sign variations of `(1+x)^n p((a + b x)/(1 + x))`, an upper bound on
    /// (and equal in parity to) the number of roots in the open interval
    /// `(a, b)`.
    fn descartes_bound(&self, a: &BigRational, b: &BigRational) -> usize {
        // p(a + (b - a) y) maps (0,1) onto (a,b)
        let shifted = self.taylor_shift(a);
        let width = b - a;
        let mut pow = BigRational::one();
        let mut scaled = Vec::with_capacity(shifted.coeffs.len());
        for c in &shifted.coeffs {
            scaled.push(c * &pow);
            pow *= &width;
        }
        // y^n q(1/y) then y -> x + 1 maps (0, inf) onto (0, 1)
        scaled.reverse();
        let moebius = Self::new(scaled).taylor_shift(&BigRational::one());
        sign_variations(&moebius.coeffs)
    }
}

fn sign_variations(coeffs: &[BigRational]) -> usize {
    let mut count = 0;
    let mut last = 0i8;
    for c in coeffs {
        let s = if c.is_zero() {
            continue;
        } else if c.is_positive() {
            1
        } else {
            -1
        };
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

/// A real root certified to lie in `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactEnclosure {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl ExactEnclosure {
    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn lo_f64(&self) -> f64 {
        let v = self.lo.to_f64().unwrap_or(0.0);
        if BigRational::from_float(v).is_some_and(|r| r > self.lo) {
            v.next_down()
        } else {
            v
        }
    }

    pub fn hi_f64(&self) -> f64 {
        let v = self.hi.to_f64().unwrap_or(1.0);
        if BigRational::from_float(v).is_some_and(|r| r < self.hi) {
            v.next_up()
        } else {
            v
        }
    }
}

fn half() -> BigRational {
    BigRational::new(1.into(), 2.into())
}

/// Isolates every distinct real root of `p` in the open interval (0, 1)
/// and refines each enclosure to width at most `tol`. Enclosures are
/// returned in increasing order and are pairwise disjoint.
///
/// Panics if `p` is the zero polynomial.
pub fn isolate_roots_unit(p: &RatPoly, tol: f64) -> Vec<ExactEnclosure> {
    assert!(!p.is_zero(), "root isolation of the zero polynomial");
    let sf = p.square_free();
    if sf.degree() == Some(0) {
        return Vec::new();
    }
    let tol = BigRational::from_float(tol).expect("finite tolerance");

    let mut found: Vec<ExactEnclosure> = Vec::new();
    let mut stack = vec![(BigRational::zero(), BigRational::one())];
    while let Some((a, b)) = stack.pop() {
        match sf.descartes_bound(&a, &b) {
            0 => {}
            1 => found.push(ExactEnclosure { lo: a, hi: b }),
            _ => {
                let mid = (&a + &b) * half();
                if sf.sign_at(&mid) == 0 {
                    found.push(ExactEnclosure {
                        lo: mid.clone(),
                        hi: mid.clone(),
                    });
                }
                stack.push((a, mid.clone()));
                stack.push((mid, b));
            }
        }
    }

    let mut refined: Vec<ExactEnclosure> = found
        .into_iter()
        .map(|enc| refine(&sf, enc, &tol))
        .collect();
    refined.sort_by(|x, y| x.lo.cmp(&y.lo));
    refined
}

/// Bisection on an isolating interval. The root is simple (square-free
/// input), so the count in each half decides which half keeps it.
fn refine(sf: &RatPoly, mut enc: ExactEnclosure, tol: &BigRational) -> ExactEnclosure {
    while enc.width() > *tol {
        let mid = (&enc.lo + &enc.hi) * half();
        if sf.sign_at(&mid) == 0 {
            return ExactEnclosure {
                lo: mid.clone(),
                hi: mid,
            };
        }
        if sf.descartes_bound(&enc.lo, &mid) == 1 {
            enc.hi = mid;
        } else {
            enc.lo = mid;
        }
    }
    enc
}
