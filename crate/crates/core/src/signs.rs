//! Sign structure of the discriminant `(1/sqrt(xi''))''` on (0, 1).
//!
//! The sign is read off the polynomial `s = 3 (xi''')^2 - 2 xi'' xi''''`.
//! Roots are isolated exactly over the rationals, so the labels below are
//! certified rather than sampled.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::model::MixedModel;
use crate::poly::{isolate_roots_unit, ExactEnclosure};

pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignKind {
    IdenticallyZero,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Certified enclosure of a root of `s` in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootEnclosure {
    pub lo: f64,
    pub hi: f64,
}

impl RootEnclosure {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentSign {
    Positive,
    Nonpositive,
}

/// One connected component of `{d > 0}` (open) or `{d <= 0}` (closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub sign: ComponentSign,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub kind: SignKind,
    pub positive_components: Vec<Interval>,
    pub nonpositive_components: Vec<Interval>,
    pub roots: Vec<RootEnclosure>,
}

impl SignPattern {
    /// Components in increasing order along [0, 1]. Empty for the
    /// identically-zero pattern.
    pub fn components(&self) -> Vec<Component> {
        if self.kind == SignKind::IdenticallyZero {
            return Vec::new();
        }
        let mut out: Vec<Component> = self
            .positive_components
            .iter()
            .map(|iv| Component {
                sign: ComponentSign::Positive,
                lo: iv.lo,
                hi: iv.hi,
            })
            .chain(self.nonpositive_components.iter().map(|iv| Component {
                sign: ComponentSign::Nonpositive,
                lo: iv.lo,
                hi: iv.hi,
            }))
            .collect();
        out.sort_by(|a, b| {
            a.lo.total_cmp(&b.lo)
                .then_with(|| a.hi.total_cmp(&b.hi))
        });
        out
    }

    /// Sign label at `t`, resolving roots to the nonpositive side.
    pub fn label_at(&self, t: f64) -> ComponentSign {
        if self.kind == SignKind::IdenticallyZero
            || self.nonpositive_components.iter().any(|c| c.contains(t))
        {
            ComponentSign::Nonpositive
        } else {
            ComponentSign::Positive
        }
    }
}

fn to_f64_mid(lo: &BigRational, hi: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    ((lo + hi) / BigRational::from_integer(2.into()))
        .to_f64()
        .unwrap_or(0.5)
}

/// Computes the sign pattern of the discriminant with root enclosures of
/// width at most `root_tol`.
pub fn sign_pattern(model: &MixedModel, root_tol: f64) -> SignPattern {
    let s = model.exact_discriminant();
    if s.is_zero() {
        return SignPattern {
            kind: SignKind::IdenticallyZero,
            positive_components: Vec::new(),
            nonpositive_components: vec![Interval::new(0.0, 1.0)],
            roots: Vec::new(),
        };
    }
    let roots: Vec<ExactEnclosure> = isolate_roots_unit(&s, root_tol);

    // One exact sample strictly inside every gap between enclosures.
    let zero = BigRational::zero();
    let one = BigRational::one();
    let n = roots.len();
    let mut gap_positive = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let left = if i == 0 { &zero } else { &roots[i - 1].hi };
        let right = if i == n { &one } else { &roots[i].lo };
        let sample = (left + right) / BigRational::from_integer(2.into());
        gap_positive.push(s.sign_at(&sample) > 0);
    }

    let root_pos: Vec<f64> = roots.iter().map(|r| to_f64_mid(&r.lo, &r.hi)).collect();
    let boundary = |i: usize| -> f64 {
        // boundary i sits between gap i-1 and gap i
        if i == 0 {
            0.0
        } else if i == n + 1 {
            1.0
        } else {
            root_pos[i - 1]
        }
    };

    let mut positive = Vec::new();
    let mut nonpositive: Vec<Interval> = Vec::new();
    // Walk the gaps; roots attach to the closed nonpositive side.
    let mut open_nonpos: Option<f64> = None;
    for (i, &pos) in gap_positive.iter().enumerate() {
        let (lo, hi) = (boundary(i), boundary(i + 1));
        if pos {
            if let Some(start) = open_nonpos.take() {
                nonpositive.push(Interval::new(start, lo));
            } else if i > 0 {
                // root flanked by positive gaps on both sides
                nonpositive.push(Interval::new(lo, lo));
            }
            positive.push(Interval::new(lo, hi));
        } else if open_nonpos.is_none() {
            open_nonpos = Some(lo);
        }
    }
    if let Some(start) = open_nonpos {
        nonpositive.push(Interval::new(start, 1.0));
    }

    SignPattern {
        kind: SignKind::Mixed,
        positive_components: positive,
        nonpositive_components: nonpositive,
        roots: roots
            .iter()
            .map(|r| RootEnclosure {
                lo: r.lo_f64(),
                hi: r.hi_f64(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(terms: &[(u32, f64)]) -> MixedModel {
        MixedModel::new(terms.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn pure_two_spin_is_identically_zero() {
        let p = sign_pattern(&m(&[(2, 0.7)]), DEFAULT_ROOT_TOL);
        assert_eq!(p.kind, SignKind::IdenticallyZero);
        assert!(p.components().is_empty());
    }

    #[test]
    fn pure_three_spin_is_positive_everywhere() {
        let p = sign_pattern(&m(&[(3, 2.0)]), DEFAULT_ROOT_TOL);
        assert_eq!(p.kind, SignKind::Mixed);
        assert_eq!(p.positive_components, vec![Interval::new(0.0, 1.0)]);
        assert!(p.nonpositive_components.is_empty());
        assert!(p.roots.is_empty());
    }

    #[test]
    fn two_plus_four_has_one_sign_change() {
        let p = sign_pattern(&m(&[(2, 1.0), (4, 1.0)]), DEFAULT_ROOT_TOL);
        let r = 12f64.powf(-0.5);
        assert_eq!(p.roots.len(), 1);
        assert!(p.roots[0].lo <= r && r <= p.roots[0].hi);
        assert_eq!(p.nonpositive_components.len(), 1);
        assert_eq!(p.nonpositive_components[0].lo, 0.0);
        assert!((p.nonpositive_components[0].hi - r).abs() < 1e-12);
        assert_eq!(p.positive_components.len(), 1);
        assert!((p.positive_components[0].lo - r).abs() < 1e-12);
        assert_eq!(p.positive_components[0].hi, 1.0);
        let comps = p.components();
        assert_eq!(comps[0].sign, ComponentSign::Nonpositive);
        assert_eq!(comps[1].sign, ComponentSign::Positive);
    }

    #[test]
    fn pure_four_spin_root_at_zero_is_not_counted() {
        // s = 1152 t^2 vanishes only at the endpoint
        let p = sign_pattern(&m(&[(4, 1.0)]), DEFAULT_ROOT_TOL);
        assert_eq!(p.positive_components, vec![Interval::new(0.0, 1.0)]);
    }

    #[test]
    fn label_at_resolves_roots_to_nonpositive() {
        let p = sign_pattern(&m(&[(2, 1.0), (4, 1.0)]), DEFAULT_ROOT_TOL);
        assert_eq!(p.label_at(0.1), ComponentSign::Nonpositive);
        assert_eq!(p.label_at(p.nonpositive_components[0].hi), ComponentSign::Nonpositive);
        assert_eq!(p.label_at(0.5), ComponentSign::Positive);
    }
}
