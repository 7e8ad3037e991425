//! The mixed p-spin covariance `xi(t) = sum_p c_p t^p` together with the
//! external field `h`.
//!
//! Coefficients already absorb the inverse temperature: `c_p = beta^2 beta_p^2`.
//! Only finite mixtures are supported, so `xi` is a polynomial and every
//! derived quantity used by the sign analysis is a polynomial as well.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::RatPoly;

/// A finite mixture `xi(t) = sum c_p t^p` with field `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct MixedModel {
    terms: Vec<(u32, f64)>,
    h: f64,
}

/// On-disk form: `{"terms": [[p, c_p], ...], "h": number}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    terms: Vec<(u32, f64)>,
    h: f64,
}

impl TryFrom<ModelJson> for MixedModel {
    type Error = Error;

    fn try_from(raw: ModelJson) -> Result<Self> {
        MixedModel::new(raw.terms, raw.h)
    }
}

impl From<MixedModel> for ModelJson {
    fn from(m: MixedModel) -> Self {
        ModelJson {
            terms: m.terms,
            h: m.h,
        }
    }
}

fn falling_factorial(p: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * f64::from(p - j))
}

impl MixedModel {
    pub fn new(terms: Vec<(u32, f64)>, h: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidModel("no terms".into()));
        }
        for (i, &(p, c)) in terms.iter().enumerate() {
            if p < 2 {
                return Err(Error::InvalidModel(format!("degree {p} < 2")));
            }
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "coefficient of degree {p} must be finite and nonnegative, got {c}"
                )));
            }
            if i > 0 && terms[i - 1].0 >= p {
                return Err(Error::InvalidModel(
                    "degrees must be strictly increasing".into(),
                ));
            }
        }
        if terms.iter().all(|&(_, c)| c == 0.0) {
            return Err(Error::InvalidModel("all coefficients vanish".into()));
        }
        if !h.is_finite() || h < 0.0 {
            return Err(Error::InvalidModel(format!(
                "field must be finite and nonnegative, got {h}"
            )));
        }
        Ok(Self { terms, h })
    }

    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h2(&self) -> f64 {
        self.h * self.h
    }

    /// Same mixture with a different field.
    pub fn with_field(&self, h: f64) -> Result<Self> {
        Self::new(self.terms.clone(), h)
    }

    /// All coefficients multiplied by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.terms.iter().map(|&(p, c)| (p, c * lambda)).collect(),
            self.h,
        )
    }

    /// Lowest degree carrying a positive coefficient.
    pub fn lowest_degree(&self) -> u32 {
        self.terms
            .iter()
            .find(|&&(_, c)| c > 0.0)
            .map(|&(p, _)| p)
            .expect("validated model has a positive coefficient")
    }

    /// `xi^(order)(t)` without domain checks. Callers guarantee `t >= 0`.
    pub fn d(&self, order: u32, t: f64) -> f64 {
        self.terms
            .iter()
            .filter(|&&(p, c)| p >= order && c != 0.0)
            .map(|&(p, c)| c * falling_factorial(p, order) * t.powi((p - order) as i32))
            .sum()
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.d(0, t)
    }

    pub fn xi1(&self, t: f64) -> f64 {
        self.d(1, t)
    }

    pub fn xi2(&self, t: f64) -> f64 {
        self.d(2, t)
    }

    /// Checked derivative evaluation.
    pub fn xi_eval(&self, t: f64, order: u32) -> Result<f64> {
        if order > 4 {
            return Err(Error::UnsupportedOrder(order));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t = {t} must be nonnegative")));
        }
        Ok(self.d(order, t))
    }

    /// `s(t) = 3 (xi''')^2 - 2 xi'' xi''''`, which has the sign of the
    /// discriminant `(1/sqrt(xi''))''` on (0, 1).
    pub fn discriminant(&self, t: f64) -> f64 {
        let d2 = self.d(2, t);
        let d3 = self.d(3, t);
        let d4 = self.d(4, t);
        3.0 * d3 * d3 - 2.0 * d2 * d4
    }

    /// `(1/sqrt(xi''))'' = s / (4 xi''^(5/2))`.
    pub fn frak_d(&self, t: f64) -> Result<f64> {
        let d2 = self.d(2, t);
        if d2 <= 0.0 {
            return Err(Error::Singular(t));
        }
        Ok(self.discriminant(t) / (4.0 * d2 * d2 * d2.sqrt()))
    }

    /// `g = 1/sqrt(xi'')`. Segment densities are `-g''`.
    pub fn g(&self, t: f64) -> f64 {
        1.0 / self.d(2, t).sqrt()
    }

    /// `g' = -xi''' / (2 xi''^(3/2))`.
    pub fn g_prime(&self, t: f64) -> f64 {
        let d2 = self.d(2, t);
        -self.d(3, t) / (2.0 * d2 * d2.sqrt())
    }

    /// Exact rational form of `xi^(order)`; coefficients are the binary
    /// values of the stored doubles.
    pub(crate) fn exact_derivative(&self, order: u32) -> RatPoly {
        let max = self.terms.last().map(|&(p, _)| p).unwrap_or(0);
        let mut coeffs = vec![BigRational::zero(); (max + 1) as usize];
        for &(p, c) in &self.terms {
            if p < order || c == 0.0 {
                continue;
            }
            let c = BigRational::from_f64(c).expect("finite coefficient");
            let ff: BigInt = (0..order).map(|j| BigInt::from(p - j)).product();
            coeffs[(p - order) as usize] = c * BigRational::from_integer(ff);
        }
        RatPoly::new(coeffs)
    }

    /// Exact `s = 3 (xi''')^2 - 2 xi'' xi''''`.
    pub(crate) fn exact_discriminant(&self) -> RatPoly {
        let d2 = self.exact_derivative(2);
        let d3 = self.exact_derivative(3);
        let d4 = self.exact_derivative(4);
        let three = BigRational::from_integer(3.into());
        let two = BigRational::from_integer(2.into());
        d3.mul(&d3).scale(&three).sub(&d2.mul(&d4).scale(&two))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(terms: &[(u32, f64)], h: f64) -> MixedModel {
        MixedModel::new(terms.to_vec(), h).unwrap()
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(m(&[(2, 0.25)], 0.0).xi_eval(1.0, 0).unwrap(), 0.25);
        assert_eq!(m(&[(2, 0.25)], 0.0).xi_eval(0.7, 2).unwrap(), 0.5);
        assert_eq!(m(&[(3, 1.0)], 0.0).xi_eval(0.5, 3).unwrap(), 6.0);
    }

    #[test]
    fn xi_vanishes_to_first_order_at_zero() {
        let model = m(&[(2, 0.3), (3, 1.2), (7, 0.01)], 0.1);
        assert_eq!(model.xi(0.0), 0.0);
        assert_eq!(model.xi1(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_order_and_domain() {
        let model = m(&[(2, 1.0)], 0.0);
        assert_eq!(model.xi_eval(0.5, 5), Err(Error::UnsupportedOrder(5)));
        assert!(matches!(model.xi_eval(-0.1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(MixedModel::new(vec![], 0.0).is_err());
        assert!(MixedModel::new(vec![(1, 1.0)], 0.0).is_err());
        assert!(MixedModel::new(vec![(3, 1.0), (2, 1.0)], 0.0).is_err());
        assert!(MixedModel::new(vec![(2, 1.0), (2, 1.0)], 0.0).is_err());
        assert!(MixedModel::new(vec![(2, -1.0)], 0.0).is_err());
        assert!(MixedModel::new(vec![(2, 0.0), (3, 0.0)], 0.0).is_err());
        assert!(MixedModel::new(vec![(2, 1.0)], -0.5).is_err());
        assert!(MixedModel::new(vec![(2, f64::NAN)], 0.0).is_err());
    }

    #[test]
    fn discriminant_examples() {
        let c = 1.7;
        let pure3 = m(&[(3, c)], 0.0);
        for t in [0.0, 0.3, 0.9] {
            assert!((pure3.discriminant(t) - 108.0 * c * c).abs() < 1e-10);
        }
        assert_eq!(m(&[(2, 0.4)], 0.0).discriminant(0.6), 0.0);
        let mixed = m(&[(2, 1.0), (4, 1.0)], 0.0);
        assert_eq!(mixed.discriminant(0.0), -96.0);
        let t: f64 = 0.41;
        assert!((mixed.discriminant(t) - (1152.0 * t * t - 96.0)).abs() < 1e-10);
    }

    #[test]
    fn frak_d_examples() {
        assert_eq!(m(&[(2, 0.8)], 0.0).frak_d(0.4).unwrap(), 0.0);
        // (1/sqrt(6t))'' = (3/4) 6^{-1/2} t^{-5/2}
        let expected = 0.75 / 6f64.sqrt() * 0.25f64.powf(-2.5);
        let got = m(&[(3, 1.0)], 0.0).frak_d(0.25).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected, "{got} vs {expected}");
        let mixed = m(&[(2, 1.0), (4, 1.0)], 0.0);
        let at0 = mixed.frak_d(0.0).unwrap();
        assert!((at0 + 96.0 / (4.0 * 2f64.powf(2.5))).abs() < 1e-12);
        assert_eq!(m(&[(3, 1.0)], 0.0).frak_d(0.0), Err(Error::Singular(0.0)));
    }

    #[test]
    fn g_prime_matches_finite_difference() {
        let model = m(&[(2, 1.0), (4, 1.0)], 0.0);
        let step = 1e-6;
        for t in [0.05, 0.2, 0.6] {
            let fd = (model.g(t + step) - model.g(t - step)) / (2.0 * step);
            assert!((fd - model.g_prime(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let model = m(&[(2, 1.0), (4, 0.5)], 0.3);
        let text = serde_json::to_string(&model).unwrap();
        assert_eq!(text, r#"{"terms":[[2,1.0],[4,0.5]],"h":0.3}"#);
        let back: MixedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
        assert!(serde_json::from_str::<MixedModel>(r#"{"terms":[[2,1.0]],"h":0,"x":1}"#).is_err());
        assert!(serde_json::from_str::<MixedModel>(r#"{"terms":[[1,1.0]],"h":0}"#).is_err());
    }
}
