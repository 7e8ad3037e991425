//! The dual variable `eta_mu` (`eta'' = 1/phi^2`, `eta'(0) = -h^2`, shifted
//! so that `inf (eta - xi) = 0`), the dual functional `D`, and optimality
//! certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Measure, PhiFunction};
use crate::model::MixedModel;
use crate::primal::Primal;
use crate::quad;
use crate::tolerances::Tolerances;

/// Scan resolution for the infimum of `eta - xi` and the coincidence set.
const SCAN_STEPS: usize = 1024;
const COINCIDENCE_STEPS: usize = 4096;
const SUBPIECES: usize = 64;

#[derive(Clone, Debug)]
pub struct DualFunction {
    model: MixedModel,
    phi: PhiFunction,
    quad_tol: f64,
    /// `int_0^{x_k} 1/phi^2`.
    e1: Vec<f64>,
    /// `int_0^{x_k} (x_k - s)/phi^2`.
    h: Vec<f64>,
    shift: f64,
    t_min: f64,
    local_minima: Vec<f64>,
    t_bound: f64,
}

/// `(-ln(1-x) - x) / x^2` for `0 <= x < 1`.
fn log_remainder(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let mut acc = 0.0;
        for j in (0..7).rev() {
            acc = acc * x + 1.0 / (j as f64 + 2.0);
        }
        acc
    } else {
        (-(-x).ln_1p() - x) / (x * x)
    }
}

impl DualFunction {
    pub fn model(&self) -> &MixedModel {
        &self.model
    }

    pub fn phi(&self) -> &PhiFunction {
        &self.phi
    }

    /// `c = -inf (eta_0 - xi)`; also `eta(0)`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    /// Beyond this point `eta' > xi'` for every measure.
    pub fn t_bound(&self) -> f64 {
        self.t_bound
    }

    /// `int_{x_k}^t 1/phi^2` inside piece `k`.
    fn e1_partial(&self, k: usize, t: f64) -> f64 {
        let phi = &self.phi;
        let (a, _) = phi.piece_bounds(k);
        if t <= a {
            return 0.0;
        }
        if phi.is_segment_piece(k) {
            let f = |s: f64| phi.phi_in(k, s).powi(-2);
            return quad::integrate(&f, a, t, self.quad_tol).unwrap_or(f64::NAN);
        }
        (t - a) / (phi.phi_at_break(k) * phi.phi_in(k, t))
    }

    /// `int_{x_k}^t (t - s)/phi^2` inside piece `k`.
    fn h_partial(&self, k: usize, t: f64) -> f64 {
        let phi = &self.phi;
        let (a, _) = phi.piece_bounds(k);
        if t <= a {
            return 0.0;
        }
        if phi.is_segment_piece(k) {
            let f = |s: f64| (t - s) * phi.phi_in(k, s).powi(-2);
            return quad::integrate(&f, a, t, self.quad_tol).unwrap_or(f64::NAN);
        }
        let phi_a = phi.phi_at_break(k);
        let slope = 1.0 - phi.remaining_in(k, a);
        let tau = (t - a) / phi_a;
        tau * tau * log_remainder(slope * tau)
    }

    /// `int_0^t 1/phi^2 = eta'(t) + h^2`.
    fn e1_at(&self, t: f64) -> f64 {
        match self.phi.locate(t) {
            Some(k) => self.e1[k] + self.e1_partial(k, t),
            None => {
                let q = self.phi.q_star();
                self.e1.last().unwrap() + (t - q) / ((1.0 - t) * (1.0 - q))
            }
        }
    }

    /// Unshifted `eta_0(t) = -h^2 t + int_0^t (t - s)/phi^2`.
    pub fn eta0(&self, t: f64) -> f64 {
        let h2 = self.model.h2();
        let double = match self.phi.locate(t) {
            Some(k) => {
                let (a, _) = self.phi.piece_bounds(k);
                self.h[k] + (t - a) * self.e1[k] + self.h_partial(k, t)
            }
            None => {
                let q = self.phi.q_star();
                let y = (t - q) / (1.0 - q);
                self.h.last().unwrap() + (t - q) * self.e1.last().unwrap() + y * y * log_remainder(y)
            }
        };
        -h2 * t + double
    }

    pub fn eta(&self, t: f64) -> f64 {
        self.shift + self.eta0(t)
    }

    pub fn eta1(&self, t: f64) -> f64 {
        -self.model.h2() + self.e1_at(t)
    }

    pub fn eta2(&self, t: f64) -> f64 {
        self.phi.phi(t).powi(-2)
    }

    /// `eta(t) - xi(t)`, nonnegative on [0, 1).
    pub fn gap(&self, t: f64) -> f64 {
        self.shift + self.eta0(t) - self.model.xi(t)
    }

    fn gap_slope(&self, t: f64) -> f64 {
        self.eta1(t) - self.model.xi1(t)
    }
}

pub fn build_dual<M: Measure + ?Sized>(model: &MixedModel, mu: &M) -> Result<DualFunction> {
    build_dual_with(model, mu.phi_function()?, &Tolerances::default())
}

pub fn build_dual_with(model: &MixedModel, phi: PhiFunction, tol: &Tolerances) -> Result<DualFunction> {
    phi.require_valid(tol.mass_tol)?;
    let n = phi.breakpoints().len();
    let mut dual = DualFunction {
        model: model.clone(),
        phi,
        quad_tol: tol.quad_tol,
        e1: vec![0.0; n],
        h: vec![0.0; n],
        shift: 0.0,
        t_min: 0.0,
        local_minima: Vec::new(),
        t_bound: 0.0,
    };
    for k in 0..dual.phi.pieces() {
        let (a, b) = dual.phi.piece_bounds(k);
        let e1 = dual.e1_partial(k, b);
        let hp = dual.h_partial(k, b);
        if !(e1.is_finite() && hp.is_finite()) {
            return Err(Error::Quadrature { a, b });
        }
        dual.e1[k + 1] = dual.e1[k] + e1;
        dual.h[k + 1] = dual.h[k] + (b - a) * dual.e1[k] + hp;
    }

    // eta' >= t/(1-t) - h^2 exceeds xi'(1) past t_bound
    let reach = model.xi1(1.0) + model.h2();
    dual.t_bound = reach / (1.0 + reach);
    let mut pts: Vec<f64> = (0..=SCAN_STEPS)
        .map(|j| j as f64 / SCAN_STEPS as f64 * dual.t_bound)
        .chain(dual.phi.breakpoints().iter().copied().filter(|&x| x <= dual.t_bound))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut minima = vec![0.0];
    let slopes: Vec<f64> = pts.iter().map(|&t| dual.gap_slope(t)).collect();
    for i in 0..pts.len() - 1 {
        if slopes[i] < 0.0 && slopes[i + 1] >= 0.0 {
            let (mut lo, mut hi) = (pts[i], pts[i + 1]);
            while hi - lo > tol.x_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if dual.gap_slope(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            minima.push(0.5 * (lo + hi));
        }
    }
    if slopes.last().is_some_and(|&s| s < 0.0) {
        minima.push(*pts.last().unwrap());
    }
    let (t_min, low) = minima
        .iter()
        .map(|&t| (t, dual.eta0(t) - model.xi(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("t = 0 is always a candidate");
    if !low.is_finite() {
        return Err(Error::InfeasibleDual("non-finite infimum of eta - xi".into()));
    }
    dual.shift = -low;
    dual.t_min = t_min;
    dual.local_minima = minima;
    Ok(dual)
}

/// `D(eta) = 1/2 (int [2 sqrt(eta'') - eta''(1-s) - 1/(1-s)] - eta(0) + h^2 + xi(1))`.
/// With `u = (1-s)/phi` the bracket equals `-(u-1)^2/(1-s)`, which is
/// `-d^2/(phi^2 (1-s))` and vanishes beyond `q*`.
pub fn dual_value(model: &MixedModel, eta: &DualFunction) -> Result<f64> {
    if eta.model.terms() != model.terms() || eta.model.h() != model.h() {
        return Err(Error::InfeasibleDual(
            "dual variable was built for a different model".into(),
        ));
    }
    if !eta.shift.is_finite() {
        return Err(Error::InfeasibleDual("shift is not finite".into()));
    }
    let phi = &eta.phi;
    let mut integral = 0.0;
    for k in 0..phi.pieces() {
        let (a, b) = phi.piece_bounds(k);
        let f = |s: f64| {
            let d = phi.d_in(k, s);
            let p = phi.phi_in(k, s);
            d * d / (p * p * (1.0 - s))
        };
        integral += quad::integrate(&f, a, b, eta.quad_tol)?;
    }
    Ok(0.5 * (-integral - eta.shift + model.h2() + model.xi(1.0)))
}

pub fn gap_function<M: Measure + ?Sized>(model: &MixedModel, mu: &M, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} must lie in [0, 1)")));
    }
    Ok(build_dual(model, mu)?.gap(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub t: f64,
    /// `|eta' - xi'|` (one-sided at `t = 0`).
    pub slope_defect: f64,
    /// `min(eta'' - xi'', 0)`.
    pub curvature_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    #[serde(rename = "P")]
    pub primal: f64,
    #[serde(rename = "D")]
    pub dual: f64,
    /// `P - D`.
    pub gap: f64,
    /// `1/2 int (eta - xi) dmu`, which equals `P - D` identically.
    pub gap_integral: f64,
    pub complementarity_defect: f64,
    pub consistency: Vec<ConsistencyEntry>,
    pub tail_regularity_defect: f64,
    pub coincidence_set: Vec<[f64; 2]>,
    /// Coincidence components that carry no mass.
    pub shallow_points: Vec<f64>,
    /// `max |phi sqrt(xi'') - 1|` over segment pieces, if any.
    pub segment_identity_defect: Option<f64>,
    pub shift: f64,
    pub t_min: f64,
    pub tolerances: Tolerances,
}

impl DualCertificate {
    pub fn is_certified(&self) -> bool {
        self.gap <= self.tolerances.gap_tol
    }
}

pub fn certify<M: Measure + ?Sized>(model: &MixedModel, mu: &M) -> Result<DualCertificate> {
    certify_with(model, mu, &Tolerances::default())
}

pub fn certify_with<M: Measure + ?Sized>(
    model: &MixedModel,
    mu: &M,
    tol: &Tolerances,
) -> Result<DualCertificate> {
    certify_phi(model, mu.phi_function()?, tol)
}

pub fn certify_phi(model: &MixedModel, phi: PhiFunction, tol: &Tolerances) -> Result<DualCertificate> {
    let primal = Primal::new(model, &phi, tol)?.value()?;
    let eta = build_dual_with(model, phi, tol)?;
    let dual = dual_value(model, &eta)?;
    let phi = &eta.phi;
    let gap_integral = 0.5 * phi.integrate_against(|s| eta.gap(s), tol.quad_tol)?;

    let mut defect = 0.0;
    for (k, &x) in phi.breakpoints().iter().enumerate() {
        let m = phi.atom_mass_at(k);
        if m != 0.0 && eta.gap(x) > tol.coin_tol {
            defect += m;
        }
    }
    for k in 0..phi.pieces() {
        if !phi.is_segment_piece(k) {
            continue;
        }
        let (a, b) = phi.piece_bounds(k);
        let w = (b - a) / SUBPIECES as f64;
        for j in 0..SUBPIECES {
            let lo = a + j as f64 * w;
            let hi = if j + 1 == SUBPIECES { b } else { lo + w };
            if eta.gap(0.5 * (lo + hi)) > tol.coin_tol {
                defect += phi.remaining_in(k, lo) - phi.remaining_in(k, hi);
            }
        }
    }

    let coincidence = coincidence_set(&eta, tol);
    let mut consistency = Vec::new();
    let mut shallow = Vec::new();
    for iv in &coincidence {
        let t = argmin_gap(&eta, iv);
        let slope = eta.gap_slope(t);
        let slope_defect = if t == 0.0 { (-slope).max(0.0) } else { slope.abs() };
        consistency.push(ConsistencyEntry {
            t,
            slope_defect,
            curvature_defect: (eta.eta2(t) - model.xi2(t)).min(0.0),
        });
        let pad = tol.merge_tol;
        if phi.mass_in(iv[0] - pad, iv[1] + pad) <= tol.mass_tol {
            shallow.push(0.5 * (iv[0] + iv[1]));
        }
    }

    let q = phi.q_star();
    let tail_regularity_defect = (0..SUBPIECES)
        .map(|i| {
            let t = q + (1.0 - q) * i as f64 / (SUBPIECES as f64 + 1.0);
            (eta.eta2(t) * (1.0 - t) * (1.0 - t) - 1.0).abs()
        })
        .fold(0.0, f64::max);

    let mut segment_identity_defect: Option<f64> = None;
    for k in 0..phi.pieces() {
        if !phi.is_segment_piece(k) {
            continue;
        }
        let (a, b) = phi.piece_bounds(k);
        for j in 0..=SUBPIECES {
            let s = a + (b - a) * j as f64 / SUBPIECES as f64;
            let v = (phi.phi_in(k, s) * model.xi2(s).sqrt() - 1.0).abs();
            segment_identity_defect = Some(segment_identity_defect.map_or(v, |m| m.max(v)));
        }
    }

    Ok(DualCertificate {
        primal,
        dual,
        gap: primal - dual,
        gap_integral,
        complementarity_defect: defect,
        consistency,
        tail_regularity_defect,
        coincidence_set: coincidence,
        shallow_points: shallow,
        segment_identity_defect,
        shift: eta.shift,
        t_min: eta.t_min,
        tolerances: *tol,
    })
}

/// Closed intervals where the sampled gap is at most `coin_tol`. Samples
/// are a uniform grid up to `t_bound`, the measure breakpoints and the
/// local minima found while computing the shift.
fn coincidence_set(eta: &DualFunction, tol: &Tolerances) -> Vec<[f64; 2]> {
    let top = eta.t_bound.max(eta.phi.q_star());
    let mut pts: Vec<f64> = (0..=COINCIDENCE_STEPS)
        .map(|j| j as f64 / COINCIDENCE_STEPS as f64 * top)
        .chain(eta.phi.breakpoints().iter().copied())
        .chain(eta.local_minima.iter().copied())
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out: Vec<[f64; 2]> = Vec::new();
    let mut open: Option<[f64; 2]> = None;
    for &t in &pts {
        if eta.gap(t) <= tol.coin_tol {
            open = Some(match open {
                Some([lo, _]) => [lo, t],
                None => [t, t],
            });
        } else if let Some(iv) = open.take() {
            out.push(iv);
        }
    }
    out.extend(open);
    // components split only by sampling noise
    let mut merged: Vec<[f64; 2]> = Vec::new();
    for iv in out {
        match merged.last_mut() {
            Some(last) if iv[0] - last[1] <= 2.0 * tol.x_tol => last[1] = iv[1],
            _ => merged.push(iv),
        }
    }
    merged
}

fn argmin_gap(eta: &DualFunction, iv: &[f64; 2]) -> f64 {
    let candidates = eta
        .local_minima
        .iter()
        .copied()
        .filter(|&t| iv[0] <= t && t <= iv[1])
        .chain([iv[0], iv[1], 0.5 * (iv[0] + iv[1])]);
    candidates
        .map(|t| (t, eta.gap(t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .expect("nonempty")
}
