//! The Crisanti–Sommers functional
//! `P(mu) = 1/2 [ int xi'' phi + int (1/phi - 1/(1-s)) + h^2 phi(0) ]`
//! and its first variation in the masses.
//!
//! Integration by parts turns the first term into `xi(1) - int xi dmu`.
//! The second integrand is written as `d / (phi (1-s))` with
//! `d = 1 - s - phi`, which vanishes beyond `q*`; on atom-only pieces it
//! integrates in closed form.
//!
//! The raw first variation pairs `1/phi^2` with `1 - max(s, q)` and is
//! infinite for every `q`. Its divergent part does not depend on `q`, so
//! the gradient here subtracts the Lebesgue counterpart `1/(1-s)^2` and
//! restores its finite, `q`-dependent share in closed form. Only
//! differences of gradients are meaningful on the simplex, and those are
//! unaffected.

use crate::error::Result;
use crate::measure::{Measure, PhiFunction};
use crate::model::MixedModel;
use crate::quad;
use crate::tolerances::Tolerances;

/// Evaluator for `P` and its mass gradient at a fixed measure. Building it
/// once amortizes the per-piece tables across many gradient probes.
#[derive(Clone, Debug)]
pub struct Primal<'a> {
    model: &'a MixedModel,
    phi: &'a PhiFunction,
    quad_tol: f64,
    /// `int_{x_0}^{x_k} R` with `R = 1/phi^2 - 1/(1-s)^2`.
    l0: Vec<f64>,
    /// `int_{x_k}^{q*} R (1-s)`.
    m_tail: Vec<f64>,
}

impl<'a> Primal<'a> {
    pub fn new(model: &'a MixedModel, phi: &'a PhiFunction, tol: &Tolerances) -> Result<Self> {
        phi.require_valid(tol.mass_tol)?;
        let n = phi.breakpoints().len();
        let mut l0 = vec![0.0; n];
        let mut m_tail = vec![0.0; n];
        for k in 0..phi.pieces() {
            let (_, b) = phi.piece_bounds(k);
            l0[k + 1] = l0[k] + r_partial(phi, k, b, tol.quad_tol)?;
        }
        for k in (0..phi.pieces()).rev() {
            let (a, b) = phi.piece_bounds(k);
            let f = |s: f64| r_in(phi, k, s) * (1.0 - s);
            m_tail[k] = m_tail[k + 1] + quad::integrate(&f, a, b, tol.quad_tol)?;
        }
        Ok(Self {
            model,
            phi,
            quad_tol: tol.quad_tol,
            l0,
            m_tail,
        })
    }

    pub fn value(&self) -> Result<f64> {
        value_of(self.model, self.phi, self.quad_tol)
    }

    /// Regularized first variation `G(q)`; see the module docs.
    pub fn gradient(&self, q: f64) -> Result<f64> {
        let model = self.model;
        let (l0, m) = match self.phi.locate(q) {
            None => (*self.l0.last().expect("nonempty"), 0.0),
            Some(k) if q == self.phi.piece_bounds(k).0 => (self.l0[k], self.m_tail[k]),
            Some(k) => {
                let phi = self.phi;
                let (_, b) = phi.piece_bounds(k);
                let l0 = self.l0[k] + r_partial(phi, k, q, self.quad_tol)?;
                let f = |s: f64| r_in(phi, k, s) * (1.0 - s);
                let m = self.m_tail[k + 1] + quad::integrate(&f, q, b, self.quad_tol)?;
                (l0, m)
            }
        };
        let lebesgue = q + (-q).ln_1p();
        Ok(0.5
            * (model.xi(1.0) - model.xi(q) - lebesgue + model.h2() * (1.0 - q)
                - ((1.0 - q) * l0 + m)))
    }

    /// `G'(q) = (eta'(q) - xi'(q)) / 2`, computed from the primal tables.
    pub fn gradient_slope(&self, q: f64) -> Result<f64> {
        let l0 = match self.phi.locate(q) {
            None => *self.l0.last().expect("nonempty"),
            Some(k) => self.l0[k] + r_partial(self.phi, k, q, self.quad_tol)?,
        };
        let model = self.model;
        Ok(0.5 * (l0 + q / (1.0 - q) - model.h2() - model.xi1(q)))
    }

    pub fn gradient_integral(&self) -> Result<f64> {
        // G is evaluated inside the closure; propagate its failures by hand
        let err = std::cell::RefCell::new(None);
        let total = self.phi.integrate_against(
            |s| match self.gradient(s) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            self.quad_tol,
        );
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        total
    }
}

/// `P` alone; skips the gradient tables.
pub fn value_of(model: &MixedModel, phi: &PhiFunction, quad_tol: f64) -> Result<f64> {
    let a = model.xi(1.0) - phi.integrate_against(|s| model.xi(s), quad_tol)?;
    let mut b = 0.0;
    for k in 0..phi.pieces() {
        b += b_piece(phi, k, quad_tol)?;
    }
    Ok(0.5 * (a + b + model.h2() * phi.phi_at_break(0)))
}

/// `int_piece d / (phi (1-s))`.
fn b_piece(phi: &PhiFunction, k: usize, quad_tol: f64) -> Result<f64> {
    let (a, b) = phi.piece_bounds(k);
    if phi.is_segment_piece(k) {
        let f = |s: f64| phi.d_in(k, s) / (phi.phi_in(k, s) * (1.0 - s));
        return quad::integrate(&f, a, b, quad_tol);
    }
    // phi(s) = phi_b + F (b - s) with F = cdf on the piece
    let dx = b - a;
    let phi_b = phi.phi_at_break(k + 1);
    let slope = 1.0 - phi.remaining_in(k, a);
    let inv_phi = if slope == 0.0 {
        dx / phi_b
    } else {
        (slope * dx / phi_b).ln_1p() / slope
    };
    Ok(inv_phi - (dx / (1.0 - b)).ln_1p())
}

/// `R(s) = 1/phi^2 - 1/(1-s)^2` in cancellation-free form.
fn r_in(phi: &PhiFunction, k: usize, s: f64) -> f64 {
    let d = phi.d_in(k, s);
    let p = phi.phi_in(k, s);
    let u = 1.0 - s;
    d * (2.0 * u - d) / (p * p * u * u)
}

/// `int_{x_k}^{q} R` for `q` inside piece `k`.
fn r_partial(phi: &PhiFunction, k: usize, q: f64, tol: f64) -> Result<f64> {
    let (a, _) = phi.piece_bounds(k);
    if q <= a {
        return Ok(0.0);
    }
    if phi.is_segment_piece(k) {
        return quad::integrate(&|s| r_in(phi, k, s), a, q, tol);
    }
    // phi is affine here: int 1/phi^2 = (q-a)/(phi_a phi_q)
    let d_a = phi.d_at_break(k);
    let phi_a = phi.phi_at_break(k);
    let d_q = phi.d_in(k, q);
    let phi_q = phi.phi_in(k, q);
    Ok((q - a) * ((1.0 - a) * d_q + d_a * phi_q) / (phi_a * phi_q * (1.0 - a) * (1.0 - q)))
}

pub fn primal_value<M: Measure + ?Sized>(model: &MixedModel, mu: &M) -> Result<f64> {
    primal_value_with(model, mu, &Tolerances::default())
}

pub fn primal_value_with<M: Measure + ?Sized>(
    model: &MixedModel,
    mu: &M,
    tol: &Tolerances,
) -> Result<f64> {
    let phi = mu.phi_function()?;
    phi.require_valid(tol.mass_tol)?;
    value_of(model, &phi, tol.quad_tol)
}

pub fn mass_gradient<M: Measure + ?Sized>(model: &MixedModel, mu: &M, q: f64) -> Result<f64> {
    let phi = mu.phi_function()?;
    Primal::new(model, &phi, &Tolerances::default())?.gradient(q)
}

/// `min_q G(q) - int G dmu` over the probe points `i / probe_grid`.
pub fn varineq_residual<M: Measure + ?Sized>(
    model: &MixedModel,
    mu: &M,
    probe_grid: usize,
) -> Result<f64> {
    let phi = mu.phi_function()?;
    let primal = Primal::new(model, &phi, &Tolerances::default())?;
    let n = probe_grid.max(1);
    let mut min = f64::INFINITY;
    for i in 0..n {
        min = min.min(primal.gradient(i as f64 / n as f64)?);
    }
    Ok(min - primal.gradient_integral()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, ParisiMeasure};

    fn model(terms: &[(u32, f64)], h: f64) -> MixedModel {
        MixedModel::new(terms.to_vec(), h).unwrap()
    }

    fn mu(m: &MixedModel, atoms: &[(f64, f64)]) -> ParisiMeasure {
        ParisiMeasure::new(m.clone(), atoms.iter().map(|&a| Atom::from(a)).collect(), vec![]).unwrap()
    }

    /// `P` straight from its defining formula, by brute-force quadrature.
    fn brute_primal(m: &MixedModel, phi: &PhiFunction) -> f64 {
        let first = quad::integrate(&|s| m.xi2(s) * phi.phi(s), 0.0, 1.0, 1e-13).unwrap();
        let mut second = 0.0;
        let mut cuts = phi.breakpoints().to_vec();
        cuts.dedup();
        for w in cuts.windows(2) {
            let f = |s: f64| 1.0 / phi.phi(s) - 1.0 / (1.0 - s);
            second += quad::integrate(&f, w[0], w[1], 1e-13).unwrap();
        }
        0.5 * (first + second + m.h2() * phi.phi(0.0))
    }

    fn dirac_closed_form(m: &MixedModel, q: f64) -> f64 {
        0.5 * (m.xi(1.0) - m.xi(q) + q / (1.0 - q) + (1.0 - q).ln() + m.h2() * (1.0 - q))
    }

    #[test]
    fn dirac_at_zero() {
        let m = model(&[(2, 0.25)], 0.0);
        let v = primal_value(&m, &mu(&m, &[(0.0, 1.0)])).unwrap();
        assert!((v - 0.125).abs() < 1e-15);
        let mh = model(&[(2, 0.25), (3, 0.5)], 0.7);
        let v = primal_value(&mh, &mu(&mh, &[(0.0, 1.0)])).unwrap();
        assert!((v - 0.5 * (0.75 + 0.49)).abs() < 1e-14);
    }

    #[test]
    fn dirac_closed_form_matches_value_and_brute_force() {
        let m = model(&[(2, 1.0)], 0.0);
        let v = primal_value(&m, &mu(&m, &[(0.5, 1.0)])).unwrap();
        assert!((v - 0.528_426_409_720_027_3).abs() < 1e-12, "{v}");
        let mh = model(&[(2, 0.3), (3, 1.1), (5, 0.2)], 0.4);
        for i in 1..=9 {
            let q = i as f64 / 10.0;
            let measure = mu(&mh, &[(q, 1.0)]);
            let v = primal_value(&mh, &measure).unwrap();
            assert!((v - dirac_closed_form(&mh, q)).abs() < 1e-10);
            let brute = brute_primal(&mh, &measure.phi_function().unwrap());
            assert!((v - brute).abs() < 1e-10, "q={q}: {v} vs {brute}");
        }
    }

    #[test]
    fn segment_measures_match_brute_force() {
        let m = model(&[(2, 1.0), (4, 1.0)], 0.3);
        let seg = crate::measure::Segment { r1: 0.05, r2: 0.25 };
        let sm = crate::measure::segment_mass(&m, &seg);
        let measure = ParisiMeasure::new(
            m.clone(),
            vec![Atom { q: 0.05, m: 0.2 }, Atom { q: 0.6, m: 0.8 - sm }],
            vec![seg],
        )
        .unwrap();
        let phi = measure.phi_function().unwrap();
        let v = primal_value(&m, &measure).unwrap();
        assert!((v - brute_primal(&m, &phi)).abs() < 1e-10);
    }

    #[test]
    fn gradient_differences_match_finite_differences() {
        let m = model(&[(2, 1.0)], 0.5);
        let base = [(0.3, 0.6), (0.5, 0.4)];
        let phi = mu(&m, &base).phi_function().unwrap();
        let primal = Primal::new(&m, &phi, &Tolerances::default()).unwrap();
        let step = 1e-5;
        let shifted = |e: f64| {
            primal_value(&m, &mu(&m, &[(0.3, 0.6 + e), (0.5, 0.4 - e)])).unwrap()
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        let analytic = primal.gradient(0.3).unwrap() - primal.gradient(0.5).unwrap();
        assert!(((fd - analytic) / analytic).abs() < 1e-6, "{fd} vs {analytic}");
    }

    #[test]
    fn varineq_examples() {
        let m = model(&[(2, 0.25)], 0.0);
        assert!(varineq_residual(&m, &mu(&m, &[(0.0, 1.0)]), 200).unwrap() >= -1e-8);
        assert!(varineq_residual(&m, &mu(&m, &[(0.9, 1.0)]), 200).unwrap() < -1e-3);
        let hot = model(&[(2, 1.0)], 0.0);
        assert!(varineq_residual(&hot, &mu(&hot, &[(0.0, 1.0)]), 200).unwrap() < 0.0);
    }
}
