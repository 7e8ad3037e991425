//! Newton refinement on the optimality system of the current support.
//! Every atom with weight satisfies `G(x) = lambda` and `G'(x) = 0`, a
//! segment endpoint without an atom satisfies `G(x) = lambda`, and the
//! masses sum to one. The unknowns are the locations, the weights and
//! `lambda`; the Jacobian is taken by forward differences.

use nalgebra::{DMatrix, DVector};

use super::{Candidate, Context, Stats};
use crate::ansatz::{realize, ParamVector, SlotKind};
use crate::measure::Measure;
use crate::primal::{value_of, Primal};

const MAX_STEPS: usize = 25;
/// Weights at or below this are treated as absent.
const DUST: f64 = 1e-10;
const FD_STEP: f64 = 1e-7;

#[derive(Clone, Copy, Debug)]
struct Entry {
    slot: usize,
    side: usize,
    weighted: bool,
    /// Sits on `q = 0`, where only `G'(0) >= 0` is required.
    pinned: bool,
}

struct System<'c, 'a> {
    ctx: &'c Context<'a>,
    base: ParamVector,
    entries: Vec<Entry>,
    /// Entry whose weight absorbs the mass constraint.
    dependent: usize,
    /// Segment slots collapsed to a point; their lower end follows the upper.
    tied: Vec<usize>,
}

impl System<'_, '_> {
    fn dim(&self) -> usize {
        self.free().count() + self.weights().count() + 1
    }

    /// Weighted entries other than the dependent one.
    fn weights(&self) -> impl Iterator<Item = &Entry> {
        let dep = self.dependent;
        self.entries.iter().enumerate().filter(move |&(i, e)| e.weighted && i != dep).map(|(_, e)| e)
    }

    fn free(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| !e.pinned)
    }

    fn params(&self, z: &[f64]) -> ParamVector {
        let mut p = self.base.clone();
        let mut k = 0;
        for e in self.free() {
            p.0[4 * e.slot + e.side] = z[k];
            k += 1;
        }
        for e in self.weights() {
            p.0[4 * e.slot + 2 + e.side] = z[k];
            k += 1;
        }
        for &i in &self.tied {
            p.0[4 * i] = p.0[4 * i + 1];
        }
        if let Some(e) = self.entries.get(self.dependent) {
            let seg = self.ctx.family.segment_mass(&p, self.ctx.model);
            let others: f64 = self.weights().map(|o| p.0[4 * o.slot + 2 + o.side]).sum();
            p.0[4 * e.slot + 2 + e.side] = 1.0 - seg - others;
        }
        p
    }

    /// Unknowns of the base point, `lambda` last.
    fn pack(&self, lambda: f64) -> Vec<f64> {
        let mut z: Vec<f64> = self.free().map(|e| self.base.0[4 * e.slot + e.side]).collect();
        z.extend(self.weights().map(|e| self.base.0[4 * e.slot + 2 + e.side]));
        z.push(lambda);
        z
    }

    fn primal_at<T>(&self, p: &ParamVector, f: impl FnOnce(&Primal, f64) -> Option<T>) -> Option<T> {
        let tol = &self.ctx.opts.tolerances;
        let (mu, residual) = realize(&self.ctx.family, p, self.ctx.model, tol.mass_tol).ok()?;
        let phi = mu.phi_function().ok()?;
        let primal = Primal::new(self.ctx.model, &phi, tol).ok()?;
        f(&primal, residual)
    }

    fn residual(&self, z: &[f64]) -> Option<Vec<f64>> {
        let lambda = *z.last().expect("lambda");
        let p = self.params(z);
        self.primal_at(&p, |primal, _| {
            let mut out = Vec::with_capacity(self.dim());
            for e in &self.entries {
                let x = p.0[4 * e.slot + e.side];
                out.push(primal.gradient(x).ok()? - lambda);
                if e.weighted && !e.pinned {
                    out.push(primal.gradient_slope(x).ok()?);
                }
            }
            Some(out)
        })
    }

    /// Weighted mean of `G` over the atoms of the base point.
    fn lambda(&self) -> Option<f64> {
        let p = self.params(&self.pack(0.0));
        self.primal_at(&p, |primal, _| {
            let (mut num, mut den) = (0.0, 0.0);
            for e in self.entries.iter().filter(|e| e.weighted) {
                let w = p.0[4 * e.slot + 2 + e.side];
                num += w * primal.gradient(p.0[4 * e.slot + e.side]).ok()?;
                den += w;
            }
            match (den > 0.0, self.entries.first()) {
                (true, _) => Some(num / den),
                (false, Some(e)) => primal.gradient(p.0[4 * e.slot + e.side]).ok(),
                (false, None) => None,
            }
        })
    }
}

impl Context<'_> {
    /// The support of `c` as Newton unknowns. Dust weights are zeroed and
    /// coinciding atoms merged so the system stays regular.
    fn system(&self, c: &Candidate) -> System<'_, '_> {
        let mut base = c.params.clone();
        let mut entries = Vec::new();
        let mut tied = Vec::new();
        for (i, slot) in self.family.slots.iter().enumerate() {
            let (x1, x2) = base.locations(i);
            let (mut w1, mut w2) = base.masses(i);
            if w1 <= DUST {
                w1 = 0.0;
            }
            if w2 <= DUST {
                w2 = 0.0;
            }
            let coincide = x1 == x2
                || (slot.kind == SlotKind::Atoms && (x1 - x2).abs() <= self.opts.tolerances.merge_tol);
            if coincide && w1 > 0.0 && w2 > 0.0 {
                base.set_locations(i, (x2, x2));
                w2 += w1;
                w1 = 0.0;
            }
            base.set_masses(i, (w1, w2));
            if slot.kind == SlotKind::Segment && base.locations(i).0 == base.locations(i).1 {
                tied.push(i);
            }
            let segment = slot.kind == SlotKind::Segment && x1 != x2;
            let (x1, x2) = base.locations(i);
            for (side, x, w) in [(0, x1, w1), (1, x2, w2)] {
                let pinned = x == 0.0;
                if w > 0.0 || (segment && !pinned) {
                    entries.push(Entry {
                        slot: i,
                        side,
                        weighted: w > 0.0,
                        pinned,
                    });
                }
            }
        }
        let dependent = (0..entries.len())
            .filter(|&k| entries[k].weighted)
            .max_by(|&a, &b| {
                let w = |k: usize| base.0[4 * entries[k].slot + 2 + entries[k].side];
                w(a).total_cmp(&w(b))
            })
            .unwrap_or(usize::MAX);
        System {
            ctx: self,
            base,
            entries,
            dependent,
            tied,
        }
    }

    fn feasible(&self, p: &ParamVector) -> bool {
        self.family.slots.iter().enumerate().all(|(i, s)| {
            let (x1, x2) = p.locations(i);
            let (w1, w2) = p.masses(i);
            let ordered = s.kind == SlotKind::Atoms || x1 <= x2;
            ordered && [x1, x2].iter().all(|x| s.lo <= *x && *x <= s.hi) && w1 >= 0.0 && w2 >= 0.0
        })
    }

    pub(super) fn gap(&self, c: &Candidate) -> f64 {
        self.certificate(c).map_or(f64::INFINITY, |cert| cert.gap)
    }

    /// Newton on the optimality system. Returns whichever of the input and
    /// the refined point has the smaller duality gap.
    pub(super) fn polish(&self, current: Candidate, stats: &mut Stats) -> Candidate {
        let tol = &self.opts.tolerances;
        let sys = self.system(&current);
        let Some(lambda) = sys.lambda() else {
            return current;
        };
        let mut z = sys.pack(lambda);
        let Some(mut r) = sys.residual(&z) else {
            return current;
        };
        let n = sys.dim();
        for _ in 0..MAX_STEPS {
            let norm = DVector::from_column_slice(&r).norm();
            if norm <= 1e-14 || stats.budget == 0 {
                break;
            }
            stats.budget -= 1;
            stats.iterations += 1;
            let mut jac = DMatrix::zeros(n, n);
            for col in 0..n {
                let h = FD_STEP * z[col].abs().max(1e-2);
                let mut zp = z.clone();
                zp[col] += h;
                let Some(rp) = sys.residual(&zp) else {
                    return current;
                };
                stats.evaluations += 1;
                for row in 0..n {
                    jac[(row, col)] = (rp[row] - r[row]) / h;
                }
            }
            let Some(step) = jac.lu().solve(&DVector::from_column_slice(&r)) else {
                break;
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
                if self.feasible(&sys.params(&trial)) {
                    if let Some(rt) = sys.residual(&trial) {
                        stats.evaluations += 1;
                        if DVector::from_column_slice(&rt).norm() < norm {
                            accepted = Some((trial, rt));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            let Some((zt, rt)) = accepted else {
                break;
            };
            z = zt;
            r = rt;
        }
        let params = sys.params(&z);
        let refined = realize(&self.family, &params, self.model, tol.mass_tol)
            .ok()
            .and_then(|(mu, _)| mu.phi_function().ok())
            .and_then(|phi| {
                phi.require_valid(tol.mass_tol).ok()?;
                value_of(self.model, &phi, tol.quad_tol).ok()
            })
            .map(|value| Candidate { params, value });
        match refined {
            Some(c) if self.gap(&c) < self.gap(&current) => c,
            _ => current,
        }
    }
}
