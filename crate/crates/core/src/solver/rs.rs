//! Replica-symmetric quick checks: fixed points of
//! `q = (xi'(q) + h^2)(1-q)^2`, replicon values and the obstacle test.

use serde::{Deserialize, Serialize};

use crate::dual::build_dual;
use crate::measure::ParisiMeasure;
use crate::model::MixedModel;

const SCAN_INTERVALS: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub residual: f64,
    /// `1 - xi''(q)(1-q)^2`.
    pub replicon: f64,
    /// Half the gap function at `q` for the dual built from `delta_q`,
    /// i.e. the duality gap of `delta_q`.
    pub obstacle_gap: f64,
    pub obstacle_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RSDiagnostics {
    pub roots: Vec<FixedPoint>,
    /// `xi''(1) <= 1`.
    pub weak_coupling: bool,
    /// `h^2 >= xi''(1)`.
    pub strong_field: bool,
}

impl RSDiagnostics {
    /// The sufficient conditions that certify RS without solving.
    pub fn rs_guaranteed(&self) -> bool {
        self.weak_coupling || (self.strong_field && self.roots.iter().any(|r| r.obstacle_ok))
    }
}

pub fn fixed_point_residual(model: &MixedModel, q: f64) -> f64 {
    q - (model.xi1(q) + model.h2()) * (1.0 - q) * (1.0 - q)
}

pub fn fixed_point_roots(model: &MixedModel, fp_tol: f64) -> Vec<f64> {
    let f = |q: f64| fixed_point_residual(model, q);
    let mut roots = Vec::new();
    let mut prev_q = 0.0;
    let mut prev = f(0.0);
    if prev == 0.0 {
        roots.push(0.0);
    }
    for j in 1..=SCAN_INTERVALS {
        let q = j as f64 / SCAN_INTERVALS as f64;
        let cur = f(q);
        if cur == 0.0 && q < 1.0 {
            roots.push(q);
        } else if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
            let (mut lo, mut hi) = (prev_q, q);
            let lo_neg = prev < 0.0;
            // refine past fp_tol in width until the residual itself is below it
            while hi - lo > fp_tol || f(lo).abs().min(f(hi).abs()) > fp_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (f(mid) < 0.0) == lo_neg {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let r = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
            roots.push(r);
        }
        prev_q = q;
        prev = cur;
    }
    roots
}

pub fn rs_quick_tests(model: &MixedModel, fp_tol: f64, gap_tol: f64) -> RSDiagnostics {
    let roots = fixed_point_roots(model, fp_tol)
        .into_iter()
        .map(|q| {
            let obstacle_gap = ParisiMeasure::dirac(model.clone(), q)
                .and_then(|mu| build_dual(model, &mu))
                .map(|eta| 0.5 * eta.gap(q))
                .unwrap_or(f64::INFINITY);
            FixedPoint {
                q,
                residual: fixed_point_residual(model, q),
                replicon: 1.0 - model.xi2(q) * (1.0 - q) * (1.0 - q),
                obstacle_gap,
                obstacle_ok: obstacle_gap <= gap_tol,
            }
        })
        .collect();
    let xi2_1 = model.xi2(1.0);
    RSDiagnostics {
        roots,
        weak_coupling: xi2_1 <= 1.0,
        strong_field: model.h2() >= xi2_1,
    }
}
