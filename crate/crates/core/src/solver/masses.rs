//! Inner problem: minimize `P` over the free masses for fixed locations.
//! `P` is convex in the masses, so projected gradient with
//! Barzilai–Borwein steps and Armijo backtracking converges to the global
//! minimum of the slice `{w >= 0, sum w = 1 - segment mass}`.

use crate::ansatz::{realize, AnsatzFamily, ParamVector};
use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::model::MixedModel;
use crate::primal::{value_of, Primal};
use crate::tolerances::Tolerances;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Euclidean projection onto `{w >= 0, sum w = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // large steps leave cancellation error in theta; restore the sum exactly
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|x| *x *= total / sum);
    }
    out
}

pub struct MassProblem<'a> {
    pub family: &'a AnsatzFamily,
    pub model: &'a MixedModel,
    pub tol: &'a Tolerances,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct MassSolution {
    pub params: ParamVector,
    pub value: f64,
}

impl MassProblem<'_> {
    fn with_masses(&self, params: &ParamVector, w: &[f64]) -> ParamVector {
        let mut p = params.clone();
        for i in 0..self.family.slots.len() {
            p.set_masses(i, (w[2 * i], w[2 * i + 1]));
        }
        p
    }

    fn value(&self, params: &ParamVector) -> Result<f64> {
        let (mu, _) = realize(self.family, params, self.model, self.tol.mass_tol)?;
        let phi = mu.phi_function()?;
        phi.require_valid(self.tol.mass_tol)?;
        value_of(self.model, &phi, self.tol.quad_tol)
    }

    fn gradient(&self, params: &ParamVector) -> Result<Vec<f64>> {
        let (mu, _) = realize(self.family, params, self.model, self.tol.mass_tol)?;
        let phi = mu.phi_function()?;
        let primal = Primal::new(self.model, &phi, self.tol)?;
        self.family
            .mass_positions(params)
            .into_iter()
            .map(|q| primal.gradient(q))
            .collect()
    }

    /// `params` carries the (already feasible) locations and a warm start
    /// for the masses.
    pub fn solve(&self, params: &ParamVector) -> Result<MassSolution> {
        let seg = self.family.segment_mass(params, self.model);
        if seg > 1.0 + self.tol.mass_tol {
            return Err(Error::Infeasible(format!("segment mass {seg} exceeds 1")));
        }
        let total = (1.0 - seg).max(0.0);
        let slots = self.family.slots.len();
        let warm: Vec<f64> = (0..slots)
            .flat_map(|i| {
                let (a, b) = params.masses(i);
                [a, b]
            })
            .collect();
        let mut w = if warm.iter().sum::<f64>() > 0.0 {
            let s: f64 = warm.iter().sum();
            project_simplex(&warm.iter().map(|x| x * total / s).collect::<Vec<_>>(), total)
        } else {
            vec![total / (2 * slots) as f64; 2 * slots]
        };
        let mut p = self.with_masses(params, &w);
        let mut f = self.value(&p)?;
        let mut g = self.gradient(&p)?;
        let mut alpha = 1.0;
        for _ in 0..self.max_iter {
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> =
                    project_simplex(&w.iter().zip(&g).map(|(x, d)| x - alpha * d).collect::<Vec<_>>(), total);
                let dir: f64 = trial.iter().zip(&w).zip(&g).map(|((t, x), d)| (t - x) * d).sum();
                if trial == w || dir >= 0.0 {
                    break;
                }
                let tp = self.with_masses(params, &trial);
                let tf = self.value(&tp)?;
                if tf <= f + ARMIJO * dir {
                    accepted = Some((trial, tp, tf));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, tp, tf)) = accepted else {
                break;
            };
            let tg = self.gradient(&tp)?;
            let s: Vec<f64> = trial.iter().zip(&w).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = tg.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            alpha = if sy > 0.0 { ss / sy } else { alpha * 4.0 };
            let improvement = f - tf;
            w = trial;
            p = tp;
            f = tf;
            g = tg;
            if improvement <= 1e-17 && ss.sqrt() <= 1e-14 {
                break;
            }
        }
        Ok(MassSolution {
            params: p,
            value: f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::family_from_pattern;
    use crate::signs::{sign_pattern, DEFAULT_ROOT_TOL};

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5], 1.0);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[2.0, -1.0, 0.0], 1.0);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3], 0.5);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn weak_two_spin_puts_all_mass_at_zero() {
        let m = MixedModel::new(vec![(2, 0.25)], 0.0).unwrap();
        let fam = family_from_pattern(&sign_pattern(&m, DEFAULT_ROOT_TOL)).capped(0.9);
        let tol = Tolerances::default();
        let problem = MassProblem {
            family: &fam,
            model: &m,
            tol: &tol,
            max_iter: 200,
        };
        let sol = problem.solve(&ParamVector(vec![0.0, 0.4, 0.5, 0.5])).unwrap();
        assert!((sol.value - 0.125).abs() < 1e-12, "{sol:?}");
        assert!(sol.params.masses(0).0 > 1.0 - 1e-9);
    }
}
