//! Minimization of `P` over the ansatz family with a duality-gap stopping
//! rule, plus the grid oracle, RS quick checks and parameter sweeps.

mod masses;
pub mod nelder_mead;
pub mod oracle;
mod polish;
pub mod rs;
pub mod sweep;

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{family_from_pattern, project_feasible, realize, AnsatzFamily, ParamVector, SlotKind};
use crate::dual::{certify_with, DualCertificate};
use crate::error::Result;
use crate::measure::{segment_mass, Atom, MeasureSpec, ParisiMeasure, Segment};
use crate::model::MixedModel;
use crate::signs::{sign_pattern, SignPattern};
use crate::tolerances::Tolerances;

pub use masses::project_simplex;
use masses::MassProblem;
use nelder_mead::NelderMead;
pub use rs::{rs_quick_tests, FixedPoint, RSDiagnostics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub tolerances: Tolerances,
    /// Number of multistart seeds.
    pub starts: usize,
    /// Total budget of outer (location search) iterations over all starts.
    /// Zero skips the search and never certifies.
    pub max_iter: usize,
    pub inner_max_iter: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            starts: 8,
            max_iter: 6000,
            inner_max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Certified,
    Uncertified,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Certified => write!(f, "certified"),
            SolveStatus::Uncertified => write!(f, "uncertified"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label")]
pub enum PhaseLabel {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "kRSB")]
    KRsb { k: usize },
    #[serde(rename = "fRSB")]
    FRsb { segments: usize, atoms: usize },
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseLabel::Rs => write!(f, "RS"),
            PhaseLabel::KRsb { k } => write!(f, "{k}RSB"),
            PhaseLabel::FRsb { .. } => write!(f, "fRSB"),
        }
    }
}

/// Census-based label; expects a pruned measure.
pub fn classify(mu: &ParisiMeasure) -> PhaseLabel {
    let atoms = mu.atoms().iter().filter(|a| a.m > 0.0).count();
    let segments = mu.segments().iter().filter(|s| s.r2 > s.r1).count();
    if segments > 0 {
        PhaseLabel::FRsb { segments, atoms }
    } else if atoms <= 1 {
        PhaseLabel::Rs
    } else {
        PhaseLabel::KRsb { k: atoms - 1 }
    }
}

/// Drops atoms and segments of mass at most `prune_tol`, merges atoms
/// closer than `merge_tol` (and onto nearby segment endpoints), then
/// rescales the atoms so the total mass is one.
pub fn prune(mu: &ParisiMeasure, prune_tol: f64, merge_tol: f64) -> Result<ParisiMeasure> {
    let model = mu.model();
    let segments: Vec<Segment> = mu
        .segments()
        .iter()
        .filter(|s| s.r2 > s.r1 && segment_mass(model, s) > prune_tol)
        .copied()
        .collect();
    let mut atoms: Vec<Atom> = Vec::new();
    for a in mu.atoms().iter().filter(|a| a.m > prune_tol) {
        let snapped = segments
            .iter()
            .flat_map(|s| [s.r1, s.r2])
            .find(|&r| (r - a.q).abs() <= merge_tol)
            .unwrap_or(a.q);
        match atoms.last_mut() {
            Some(last) if (snapped - last.q).abs() <= merge_tol => {
                let m = last.m + a.m;
                let on_endpoint = segments.iter().any(|s| s.r1 == last.q || s.r2 == last.q);
                if !on_endpoint {
                    last.q = if segments.iter().any(|s| s.r1 == snapped || s.r2 == snapped) {
                        snapped
                    } else {
                        (last.q * last.m + snapped * a.m) / m
                    };
                }
                last.m = m;
            }
            _ => atoms.push(Atom { q: snapped, m: a.m }),
        }
    }
    let seg_total: f64 = segments.iter().map(|s| segment_mass(model, s)).sum();
    let atom_total: f64 = atoms.iter().map(|a| a.m).sum();
    if atom_total > 0.0 {
        let scale = (1.0 - seg_total) / atom_total;
        for a in &mut atoms {
            a.m *= scale;
        }
    }
    ParisiMeasure::new(model.clone(), atoms, segments)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub iterations: usize,
    pub restarts: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub model: MixedModel,
    pub measure: MeasureSpec,
    pub free_energy: f64,
    pub certificate: DualCertificate,
    pub phase: PhaseLabel,
    pub status: SolveStatus,
    pub telemetry: Telemetry,
    pub seed: u64,
}

impl SolveReport {
    pub fn measure(&self) -> Result<ParisiMeasure> {
        self.measure.bind(&self.model)
    }
}

/// Upper end of the range that can hold an optimal support: beyond it
/// `eta' > xi'` for every candidate measure.
pub fn support_bound(model: &MixedModel) -> f64 {
    let reach = model.xi1(1.0) + model.h2();
    reach / (1.0 + reach)
}

#[derive(Default)]
struct Stats {
    budget: usize,
    iterations: usize,
    restarts: usize,
    evaluations: usize,
}

struct Context<'a> {
    model: &'a MixedModel,
    family: AnsatzFamily,
    opts: &'a SolveOptions,
}

#[derive(Clone, Debug)]
struct Candidate {
    params: ParamVector,
    value: f64,
}

impl Context<'_> {
    fn mass_problem(&self) -> MassProblem<'_> {
        MassProblem {
            family: &self.family,
            model: self.model,
            tol: &self.opts.tolerances,
            max_iter: self.opts.inner_max_iter,
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.family.slots.iter().flat_map(|s| [(s.lo, s.hi), (s.lo, s.hi)]).collect()
    }

    fn with_locations(&self, base: &ParamVector, locs: &[f64]) -> ParamVector {
        let mut p = base.clone();
        for i in 0..self.family.slots.len() {
            p.set_locations(i, (locs[2 * i], locs[2 * i + 1]));
        }
        p
    }

    fn locations(&self, params: &ParamVector) -> Vec<f64> {
        (0..self.family.slots.len())
            .flat_map(|i| {
                let (a, b) = params.locations(i);
                [a, b]
            })
            .collect()
    }

    /// Optimal masses for the given locations.
    fn evaluate(&self, params: &ParamVector) -> Option<Candidate> {
        let projected = project_feasible(&self.family, params, self.model).ok()?;
        let sol = self.mass_problem().solve(&projected).ok()?;
        Some(Candidate {
            params: sol.params,
            value: sol.value,
        })
    }

    fn certificate(&self, c: &Candidate) -> Option<DualCertificate> {
        let (mu, _) = realize(&self.family, &c.params, self.model, self.opts.tolerances.mass_tol).ok()?;
        certify_with(self.model, &mu, &self.opts.tolerances).ok()
    }

    fn is_certified(&self, c: &Candidate) -> bool {
        self.certificate(c).is_some_and(|cert| cert.gap <= self.opts.tolerances.gap_tol)
    }

    /// Nelder–Mead over the locations with a shrinking initial simplex,
    /// stopping as soon as the candidate is certified.
    fn descend(&self, mut current: Candidate, mut step: f64, stats: &mut Stats) -> (Candidate, bool) {
        loop {
            if self.is_certified(&current) {
                return (current, true);
            }
            if stats.budget == 0 || step < 1e-7 {
                return (current, false);
            }
            current = self.polish(current, stats);
            if self.is_certified(&current) {
                return (current, true);
            }
            if stats.budget == 0 {
                return (current, false);
            }
            let nm = NelderMead {
                max_iter: stats.budget.min(400),
                initial_step: step,
                // Newton takes over once the support is located
                f_tol: 1e-13,
                x_tol: 1e-3 * step,
            };
            let warm = current.params.clone();
            let result = nm.minimize(
                |locs| {
                    self.evaluate(&self.with_locations(&warm, locs))
                        .map_or(f64::INFINITY, |c| c.value)
                },
                &self.locations(&current.params),
                &self.bounds(),
            );
            stats.iterations += result.iterations;
            stats.evaluations += result.evaluations;
            stats.budget -= result.iterations.min(stats.budget);
            stats.restarts += 1;
            if let Some(c) = self.evaluate(&self.with_locations(&warm, &result.x)) {
                if c.value <= current.value {
                    current = c;
                }
            }
            step *= 0.1;
        }
    }

    /// A segment of negligible width changes `P` by less than the gap
    /// tolerance, so a certified candidate may hold one where the optimum
    /// has a single atom. Each segment is collapsed to its mass-weighted
    /// center and refined; the collapsed measure is kept when it certifies.
    fn simplify(&self, mut best: Candidate, stats: &mut Stats) -> Candidate {
        for (i, slot) in self.family.slots.iter().enumerate() {
            if slot.kind != SlotKind::Segment {
                continue;
            }
            let (x1, x2) = best.params.locations(i);
            if x1 == x2 {
                continue;
            }
            let (w1, w2) = best.params.masses(i);
            let seg = segment_mass(self.model, &Segment { r1: x1, r2: x2 });
            let total = w1 + w2 + seg;
            let center = if total > 0.0 {
                (w1 * x1 + w2 * x2 + seg * 0.5 * (x1 + x2)) / total
            } else {
                x2
            };
            let mut trial = best.params.clone();
            trial.set_locations(i, (center, center));
            trial.set_masses(i, (0.0, total));
            let Some(start) = self.evaluate(&trial) else {
                continue;
            };
            stats.evaluations += 1;
            let c = self.polish(start, stats);
            let (y1, y2) = c.params.locations(i);
            if y1 == y2 && self.is_certified(&c) {
                best = c;
                continue;
            }
            // a segment that should start at the origin can stall a little
            // above it with a light atom at its lower end
            if slot.lo == 0.0 && x1 > 0.0 {
                let mut trial = best.params.clone();
                trial.set_locations(i, (0.0, x2));
                let Some(start) = self.evaluate(&trial) else {
                    continue;
                };
                stats.evaluations += 1;
                let c = self.polish(start, stats);
                let defect = |c: &Candidate| {
                    self.certificate(c)
                        .filter(|cert| cert.gap <= self.opts.tolerances.gap_tol)
                        .map_or(f64::INFINITY, |cert| cert.segment_identity_defect.unwrap_or(0.0))
                };
                if defect(&c) < defect(&best) {
                    best = c;
                }
            }
        }
        best
    }

    /// Seed parameter vectors: Diracs at the RS fixed points and at 0,
    /// two-atom spreads, full-width segments, then random fills.
    fn seeds(&self, fixed_points: &[f64]) -> Vec<ParamVector> {
        let slots = &self.family.slots;
        let dim = self.family.dim();
        let base = || {
            let mut p = ParamVector(vec![0.0; dim]);
            for (i, s) in slots.iter().enumerate() {
                let mid = 0.5 * (s.lo + s.hi);
                p.set_locations(i, (mid, mid));
            }
            p
        };
        let dirac = |q: f64| -> Option<ParamVector> {
            let i = slots.iter().position(|s| s.lo <= q && q <= s.hi)?;
            let mut p = base();
            p.set_locations(i, (q, q));
            p.set_masses(i, (1.0, 0.0));
            Some(p)
        };
        let mut out: Vec<ParamVector> = Vec::new();
        let push = |p: ParamVector, out: &mut Vec<ParamVector>| {
            if !out.contains(&p) {
                out.push(p);
            }
        };
        for &q in fixed_points {
            if let Some(p) = dirac(q) {
                push(p, &mut out);
            }
        }
        if let Some(p) = dirac(0.0) {
            push(p, &mut out);
        }
        let mut spread = base();
        let mut full = base();
        for (i, s) in slots.iter().enumerate() {
            let w = s.hi - s.lo;
            spread.set_locations(i, (s.lo + w / 3.0, s.lo + 2.0 * w / 3.0));
            spread.set_masses(i, (1.0, 1.0));
            match s.kind {
                SlotKind::Segment => full.set_locations(i, (s.lo, s.hi)),
                SlotKind::Atoms => full.set_locations(i, (s.lo + 0.25 * w, s.lo + 0.75 * w)),
            }
            full.set_masses(i, (1.0, 1.0));
        }
        push(spread, &mut out);
        push(full, &mut out);
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut attempts = 0;
        while out.len() < self.opts.starts.max(1) && attempts < 10 * self.opts.starts.max(1) {
            attempts += 1;
            let mut p = base();
            for (i, s) in slots.iter().enumerate() {
                let a = rng.random_range(s.lo..=s.hi);
                let b = rng.random_range(s.lo..=s.hi);
                p.set_locations(i, (a, b));
                p.set_masses(i, (rng.random::<f64>(), rng.random::<f64>()));
            }
            push(p, &mut out);
        }
        out.truncate(self.opts.starts.max(1));
        out
    }
}

pub fn solve(model: &MixedModel, opts: &SolveOptions) -> Result<SolveReport> {
    let started = Instant::now();
    opts.tolerances.validate()?;
    let tol = &opts.tolerances;
    let pattern: SignPattern = sign_pattern(model, tol.root_tol);
    let family = family_from_pattern(&pattern).capped(support_bound(model));
    let ctx = Context { model, family, opts };
    let fixed_points = rs::fixed_point_roots(model, tol.fp_tol);
    let seeds = ctx.seeds(&fixed_points);

    let mut stats = Stats {
        budget: opts.max_iter,
        ..Default::default()
    };
    let mut best: Option<Candidate> = None;
    let mut certified = false;

    for seed in &seeds {
        if stats.budget == 0 {
            break;
        }
        let Some(start) = ctx.evaluate(seed) else {
            continue;
        };
        stats.evaluations += 1;
        let (current, ok) = ctx.descend(start, 0.1, &mut stats);
        let better = best.as_ref().is_none_or(|b| current.value < b.value);
        if ok || better {
            best = Some(current);
        }
        if ok {
            certified = true;
            break;
        }
    }
    if certified {
        if let Some(b) = best.take() {
            let b = ctx.polish(b, &mut stats);
            best = Some(ctx.simplify(b, &mut stats));
        }
    }

    let best = match best {
        Some(b) => b,
        // no budget: report the first feasible seed as is
        None => seeds
            .iter()
            .find_map(|s| ctx.evaluate(s))
            .ok_or_else(|| crate::Error::Infeasible("no feasible starting point".into()))?,
    };
    let (raw, _) = realize(&ctx.family, &best.params, model, tol.mass_tol)?;
    let measure = prune(&raw, tol.prune_tol, tol.merge_tol)?;
    let certificate = certify_with(model, &measure, tol)?;
    let status = if opts.max_iter > 0 && certificate.gap <= tol.gap_tol {
        SolveStatus::Certified
    } else {
        SolveStatus::Uncertified
    };
    Ok(SolveReport {
        model: model.clone(),
        measure: measure.spec(),
        free_energy: certificate.primal,
        phase: classify(&measure),
        certificate,
        status,
        telemetry: Telemetry {
            iterations: stats.iterations,
            restarts: stats.restarts,
            evaluations: stats.evaluations,
            wall_time_s: started.elapsed().as_secs_f64(),
            tolerances: *tol,
        },
        seed: opts.seed,
    })
}
