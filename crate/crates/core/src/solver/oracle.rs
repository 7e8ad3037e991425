//! Brute-force reference: minimize `P` over probability vectors on the grid
//! `{i/N : i < N}` with pairwise conditional-gradient steps. The result is
//! an honest bracket `[D(eta_w), P(w)]` around the free energy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{build_dual_with, dual_value};
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, Measure};
use crate::model::MixedModel;
use crate::primal::{value_of, Primal};
use crate::solver::masses::project_simplex;
use crate::tolerances::Tolerances;

/// Weights below this are ignored when reporting clusters.
pub const CLUSTER_MASS: f64 = 1e-7;
const LINE_SEARCH_STEPS: usize = 80;
const CORRECTIVE_STEPS: usize = 200;
const MAX_STALLS: usize = 20;
const NEWTON_STEPS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub n: usize,
    pub d_lower: f64,
    pub p_upper: f64,
    /// Conditional-gradient gap at termination.
    pub fw_gap: f64,
    pub iterations: usize,
    pub clusters: Vec<Cluster>,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl OracleResult {
    pub fn grid_measure(&self) -> Result<GridMeasure> {
        GridMeasure::new(self.weights.clone())
    }
}

#[derive(Clone, Debug)]
pub struct OracleOptions {
    pub fw_tol: f64,
    pub max_iter: usize,
    pub tolerances: Tolerances,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            fw_tol: 1e-10,
            max_iter: 20_000,
            tolerances: Tolerances::default(),
        }
    }
}

pub fn grid_oracle(model: &MixedModel, n: usize, fw_tol: f64) -> Result<OracleResult> {
    grid_oracle_with(
        model,
        n,
        &OracleOptions {
            fw_tol,
            ..Default::default()
        },
    )
}

fn value(model: &MixedModel, w: &[f64], tol: &Tolerances) -> Result<f64> {
    let phi = GridMeasure::new(w.to_vec())?.phi_function()?;
    value_of(model, &phi, tol.quad_tol)
}

pub fn grid_oracle_with(model: &MixedModel, n: usize, opts: &OracleOptions) -> Result<OracleResult> {
    if n < 100 {
        return Err(Error::Domain(format!("grid size {n} must be at least 100")));
    }
    let tol = &opts.tolerances;
    let mut w = vec![0.0; n];
    w[0] = 1.0;
    let mut active = vec![0usize];
    let mut iterations = 0;
    let mut fw_gap = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stalls = 0;
    while iterations < opts.max_iter {
        let phi = GridMeasure::new(w.clone())?.phi_function()?;
        let primal = Primal::new(model, &phi, tol)?;
        let g: Vec<f64> = (0..n)
            .map(|i| primal.gradient(i as f64 / n as f64))
            .collect::<Result<_>>()?;
        let s = (0..n).min_by(|&a, &b| g[a].total_cmp(&g[b])).expect("n > 0");
        let mean: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        fw_gap = mean - g[s];
        if fw_gap <= opts.fw_tol {
            break;
        }
        iterations += 1;
        if !active.contains(&s) {
            active.push(s);
            active.sort_unstable();
        }
        let before = active.len();
        correct(model, tol, &mut w, &mut active)?;
        // near the optimum the value can no longer resolve the step, but
        // the stationarity residual still can
        if !active.contains(&s) {
            active.push(s);
            active.sort_unstable();
        }
        newton(model, tol, &mut w, &mut active)?;
        if active.len() == before && w[s] == 0.0 {
            // the corrective solve could not use the new vertex: take the
            // plain line-search step toward it instead
            line_step(model, tol, &mut w, s)?;
            active = (0..n).filter(|&i| w[i] > 0.0).collect();
        }
        if fw_gap < best {
            best = fw_gap;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= MAX_STALLS {
                break;
            }
        }
    }

    let grid = GridMeasure::new(w.clone())?;
    let phi = grid.phi_function()?;
    let p_upper = value_of(model, &phi, tol.quad_tol)?;
    let eta = build_dual_with(model, phi, tol)?;
    let d_lower = dual_value(model, &eta)?;
    Ok(OracleResult {
        n,
        d_lower,
        p_upper,
        fw_gap,
        iterations,
        clusters: clusters(&w, 2.0 / n as f64),
        weights: w,
    })
}

/// Exact line search on the segment from `w` to the vertex `e_s`.
fn line_step(model: &MixedModel, tol: &Tolerances, w: &mut [f64], s: usize) -> Result<()> {
    let along = |gamma: f64| -> Result<f64> {
        let mut t: Vec<f64> = w.iter().map(|x| x * (1.0 - gamma)).collect();
        t[s] += gamma;
        value(model, &t, tol)
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (along(c)?, along(d)?);
    for _ in 0..LINE_SEARCH_STEPS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = along(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = along(d)?;
        }
    }
    let gamma = if fc <= fd { c } else { d };
    for x in w.iter_mut() {
        *x *= 1.0 - gamma;
    }
    w[s] += gamma;
    Ok(())
}

/// Newton's method on the stationarity system `G(q_i) = G(q_ref)` over the
/// active points, with `ref` the heaviest point absorbing the mass
/// constraint. Weights that a step would drive negative are removed.
fn newton(model: &MixedModel, tol: &Tolerances, w: &mut [f64], active: &mut Vec<usize>) -> Result<()> {
    let n = w.len() as f64;
    for step in 0..NEWTON_STEPS {
        if step > 0 {
            active.retain(|&i| w[i] > 0.0);
        }
        let k = active.len();
        if k < 2 {
            return Ok(());
        }
        let r = (0..k)
            .max_by(|&a, &b| w[active[a]].total_cmp(&w[active[b]]))
            .expect("k >= 2");
        let others: Vec<usize> = (0..k).filter(|&j| j != r).collect();
        let residual = |v: &[f64]| -> Result<Vec<f64>> {
            let phi = GridMeasure::new(v.to_vec())?.phi_function()?;
            let primal = Primal::new(model, &phi, tol)?;
            let g: Vec<f64> = active
                .iter()
                .map(|&i| primal.gradient(i as f64 / n))
                .collect::<Result<_>>()?;
            Ok(others.iter().map(|&j| g[j] - g[r]).collect())
        };
        let res = residual(w)?;
        let norm = DVector::from_column_slice(&res).norm();
        if norm <= 1e-15 {
            return Ok(());
        }
        let m = others.len();
        let eps = 1e-8 * w[active[r]];
        let mut jac = DMatrix::zeros(m, m);
        for (col, &j) in others.iter().enumerate() {
            let mut v = w.to_vec();
            v[active[j]] += eps;
            v[active[r]] -= eps;
            let rj = residual(&v)?;
            for row in 0..m {
                jac[(row, col)] = (rj[row] - res[row]) / eps;
            }
        }
        let Some(d) = jac.lu().solve(&DVector::from_column_slice(&res)) else {
            return Ok(());
        };
        let mut dir = vec![0.0; k];
        for (row, &j) in others.iter().enumerate() {
            dir[j] = -d[row];
        }
        dir[r] = -dir.iter().sum::<f64>();
        let mut t: f64 = 1.0;
        for j in 0..k {
            if dir[j] < 0.0 {
                t = t.min(w[active[j]] / -dir[j]);
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut v = w.to_vec();
            for j in 0..k {
                let x = v[active[j]] + t * dir[j];
                // a weight within rounding of zero leaves the support
                v[active[j]] = if x <= 1e-15 { 0.0 } else { x };
            }
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
            let trial: Vec<usize> = active.iter().copied().filter(|&i| v[i] > 0.0).collect();
            let better = if trial.len() == k {
                residual(&v).is_ok_and(|rt| DVector::from_column_slice(&rt).norm() < norm)
            } else {
                value(model, &v, tol)? <= value(model, w, tol)?
            };
            if better {
                w.copy_from_slice(&v);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    active.retain(|&i| w[i] > 0.0);
    Ok(())
}

/// Re-optimizes the weights over the active grid points by projected
/// gradient with Barzilai–Borwein steps, then drops points left at zero.
fn correct(model: &MixedModel, tol: &Tolerances, w: &mut [f64], active: &mut Vec<usize>) -> Result<()> {
    let n = w.len() as f64;
    let expand = |wa: &[f64], active: &[usize]| {
        let mut full = vec![0.0; w.len()];
        for (&i, &x) in active.iter().zip(wa) {
            full[i] = x;
        }
        full
    };
    let grad = |full: &[f64], active: &[usize]| -> Result<Vec<f64>> {
        let phi = GridMeasure::new(full.to_vec())?.phi_function()?;
        let primal = Primal::new(model, &phi, tol)?;
        active.iter().map(|&i| primal.gradient(i as f64 / n)).collect()
    };
    let mut wa: Vec<f64> = active.iter().map(|&i| w[i]).collect();
    let mut full = expand(&wa, active);
    let mut f = value(model, &full, tol)?;
    let mut g = grad(&full, active)?;
    let mut alpha = 1.0;
    for _ in 0..CORRECTIVE_STEPS {
        let mut accepted = None;
        for _ in 0..60 {
            let trial = project_simplex(&wa.iter().zip(&g).map(|(x, d)| x - alpha * d).collect::<Vec<_>>(), 1.0);
            let dir: f64 = trial.iter().zip(&wa).zip(&g).map(|((t, x), d)| (t - x) * d).sum();
            if trial == wa || dir >= 0.0 {
                break;
            }
            let tfull = expand(&trial, active);
            let tf = value(model, &tfull, tol)?;
            if tf <= f + 1e-4 * dir {
                accepted = Some((trial, tfull, tf, dir));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, tfull, tf, dir)) = accepted else {
            break;
        };
        let tg = grad(&tfull, active)?;
        let sv: Vec<f64> = trial.iter().zip(&wa).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(tg.iter().zip(&g)).map(|(s, (a, b))| s * (a - b)).sum();
        let ss: f64 = sv.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { ss / sy } else { alpha * 4.0 };
        wa = trial;
        full = tfull;
        f = tf;
        g = tg;
        if -dir <= 1e-16 {
            break;
        }
    }
    w.copy_from_slice(&full);
    active.retain(|&i| w[i] > 0.0);
    Ok(())
}

/// Groups support points (weight above [`CLUSTER_MASS`]) that lie within
/// `radius` of their neighbour.
pub fn clusters(w: &[f64], radius: f64) -> Vec<Cluster> {
    let n = w.len() as f64;
    let mut out: Vec<Cluster> = Vec::new();
    let mut moment = 0.0;
    for (i, &m) in w.iter().enumerate() {
        if m <= CLUSTER_MASS {
            continue;
        }
        let q = i as f64 / n;
        match out.last_mut() {
            Some(c) if q - c.hi <= radius + 1e-12 => {
                c.hi = q;
                c.mass += m;
                moment += m * q;
                c.center = moment / c.mass;
            }
            _ => {
                moment = m * q;
                out.push(Cluster {
                    lo: q,
                    hi: q,
                    center: q,
                    mass: m,
                });
            }
        }
    }
    out
}
