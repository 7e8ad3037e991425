//! Candidate Parisi measures and the piecewise description of
//! `phi(t) = int_t^1 mu([0, s]) ds`.
//!
//! Three representations share one evaluator ([`PhiFunction`]):
//! - [`ParisiMeasure`]: atoms plus segments whose density is `-d = -g''`
//!   with `g = 1/sqrt(xi'')` for the linked model; segment masses and CDF
//!   increments use the closed form `g'(r1) - g'(r)`.
//! - [`GridMeasure`]: weights on `{i/N : i < N}` (used by the oracle).
//! - [`DiscreteMeasure`]: arbitrary finitely many atoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixedModel;
use crate::quad;
use crate::signs::SignPattern;

pub const DEFAULT_MASS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Atom {
    pub q: f64,
    pub m: f64,
}

impl From<(f64, f64)> for Atom {
    fn from((q, m): (f64, f64)) -> Self {
        Self { q, m }
    }
}

impl From<Atom> for (f64, f64) {
    fn from(a: Atom) -> Self {
        (a.q, a.m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Segment {
    pub r1: f64,
    pub r2: f64,
}

impl From<(f64, f64)> for Segment {
    fn from((r1, r2): (f64, f64)) -> Self {
        Self { r1, r2 }
    }
}

impl From<Segment> for (f64, f64) {
    fn from(s: Segment) -> Self {
        (s.r1, s.r2)
    }
}

/// Wire form of a measure: `{"atoms": [[q, m], ...], "segments": [[r1, r2], ...]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl MeasureSpec {
    pub fn bind(&self, model: &MixedModel) -> Result<ParisiMeasure> {
        ParisiMeasure::new(model.clone(), self.atoms.clone(), self.segments.clone())
    }
}

/// Anything that can be compiled into a [`PhiFunction`].
pub trait Measure {
    fn phi_function(&self) -> Result<PhiFunction>;

    /// `q* = sup supp mu`.
    fn support_sup(&self) -> f64;

    fn cdf(&self, s: f64) -> Result<f64> {
        Ok(self.phi_function()?.cdf(s))
    }

    fn phi(&self, t: f64) -> Result<f64> {
        Ok(self.phi_function()?.phi(t))
    }
}

// ---------------------------------------------------------------------------
// ParisiMeasure

#[derive(Clone, Debug, PartialEq)]
pub struct ParisiMeasure {
    model: MixedModel,
    atoms: Vec<Atom>,
    segments: Vec<Segment>,
}

impl ParisiMeasure {
    /// Atoms and segments are sorted on construction. Masses, overlaps and
    /// sign compatibility are left to [`validate`]; only malformed numbers
    /// and segments where `xi''` vanishes are rejected here.
    pub fn new(model: MixedModel, mut atoms: Vec<Atom>, mut segments: Vec<Segment>) -> Result<Self> {
        for a in &atoms {
            if !(a.q.is_finite() && a.m.is_finite() && (0.0..=1.0).contains(&a.q)) {
                return Err(Error::InvalidMeasure(format!("bad atom ({}, {})", a.q, a.m)));
            }
        }
        for s in &segments {
            if !(s.r1.is_finite() && s.r2.is_finite() && 0.0 <= s.r1 && s.r1 <= s.r2 && s.r2 <= 1.0) {
                return Err(Error::InvalidMeasure(format!("bad segment [{}, {}]", s.r1, s.r2)));
            }
            if model.xi2(s.r1) <= 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "segment [{}, {}] starts where xi'' vanishes",
                    s.r1, s.r2
                )));
            }
        }
        atoms.sort_by(|a, b| a.q.total_cmp(&b.q));
        segments.sort_by(|a, b| a.r1.total_cmp(&b.r1));
        Ok(Self {
            model,
            atoms,
            segments,
        })
    }

    pub fn dirac(model: MixedModel, q: f64) -> Result<Self> {
        Self::new(model, vec![Atom { q, m: 1.0 }], Vec::new())
    }

    pub fn model(&self) -> &MixedModel {
        &self.model
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn spec(&self) -> MeasureSpec {
        MeasureSpec {
            atoms: self.atoms.clone(),
            segments: self.segments.clone(),
        }
    }

    pub fn segment_mass(&self, seg: &Segment) -> f64 {
        segment_mass(&self.model, seg)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.m).sum::<f64>()
            + self.segments.iter().map(|s| self.segment_mass(s)).sum::<f64>()
    }

    /// Pushes all mass in `[1 - eps, 1]` onto the point `1 - eps`.
    pub fn truncate(&self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let cut = 1.0 - eps;
        let mut moved = 0.0;
        let mut atoms = Vec::new();
        for a in &self.atoms {
            if a.q >= cut {
                moved += a.m;
            } else {
                atoms.push(*a);
            }
        }
        let mut segments = Vec::new();
        for s in &self.segments {
            if s.r2 < cut {
                segments.push(*s);
            } else if s.r1 >= cut {
                moved += self.segment_mass(s);
            } else {
                moved += self.model.g_prime(cut) - self.model.g_prime(s.r2);
                segments.push(Segment { r1: s.r1, r2: cut });
            }
        }
        if moved != 0.0 {
            atoms.push(Atom { q: cut, m: moved });
        }
        Self::new(self.model.clone(), atoms, segments)
    }
}

pub fn segment_mass(model: &MixedModel, seg: &Segment) -> f64 {
    if seg.r2 <= seg.r1 {
        0.0
    } else {
        model.g_prime(seg.r1) - model.g_prime(seg.r2)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("truncation level {eps} must lie in (0, 1)")));
    }
    Ok(())
}

impl Measure for ParisiMeasure {
    fn phi_function(&self) -> Result<PhiFunction> {
        let atoms: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.q, a.m)).collect();
        let segs: Vec<(f64, f64)> = self
            .segments
            .iter()
            .filter(|s| s.r2 > s.r1)
            .map(|s| (s.r1, s.r2))
            .collect();
        PhiFunction::build(Some(&self.model), &atoms, &segs, &[])
    }

    fn support_sup(&self) -> f64 {
        let a = self
            .atoms
            .iter()
            .filter(|a| a.m > 0.0)
            .map(|a| a.q)
            .fold(0.0, f64::max);
        self.segments
            .iter()
            .filter(|s| self.segment_mass(s) > 0.0)
            .map(|s| s.r2)
            .fold(a, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Grid and discrete measures

/// Weights on the grid `{i/N : i = 0..N-1}`; the point 1 is excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("empty grid".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite grid weight".into()));
        }
        Ok(Self { weights })
    }

    /// Uniform weights, the grid analogue of Lebesgue measure on [0, 1].
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 / self.weights.len() as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_discrete(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(i, &w)| Atom { q: self.point(i), m: w })
                .collect(),
        }
    }

    pub fn truncate(&self, eps: f64) -> Result<DiscreteMeasure> {
        self.to_discrete().truncate(eps)
    }

    fn last_index(&self) -> Option<usize> {
        self.weights.iter().rposition(|&w| w > 0.0)
    }
}

impl Measure for GridMeasure {
    fn phi_function(&self) -> Result<PhiFunction> {
        let atoms: Vec<(f64, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (self.point(i), w))
            .collect();
        let last = self.last_index().unwrap_or(0);
        let breaks: Vec<f64> = (0..=last).map(|i| self.point(i)).collect();
        PhiFunction::build(None, &atoms, &[], &breaks)
    }

    fn support_sup(&self) -> f64 {
        self.last_index().map(|i| self.point(i)).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !(a.q.is_finite() && a.m.is_finite() && (0.0..=1.0).contains(&a.q)) {
                return Err(Error::InvalidMeasure(format!("bad atom ({}, {})", a.q, a.m)));
            }
        }
        atoms.sort_by(|a, b| a.q.total_cmp(&b.q));
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn truncate(&self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let cut = 1.0 - eps;
        let moved: f64 = self.atoms.iter().filter(|a| a.q >= cut).map(|a| a.m).sum();
        let mut atoms: Vec<Atom> = self.atoms.iter().filter(|a| a.q < cut).copied().collect();
        if moved != 0.0 {
            atoms.push(Atom { q: cut, m: moved });
        }
        Self::new(atoms)
    }
}

impl Measure for DiscreteMeasure {
    fn phi_function(&self) -> Result<PhiFunction> {
        let atoms: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.q, a.m)).collect();
        PhiFunction::build(None, &atoms, &[], &[])
    }

    fn support_sup(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.m > 0.0)
            .map(|a| a.q)
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// PhiFunction

/// Piecewise closed-form description of the CDF and of `phi` on
/// `[0, q*]`; beyond `q*` the CDF is 1 and `phi(t) = 1 - t`.
///
/// Breakpoints `x_0 = 0 < x_1 < ... < x_K = q*` cut [0, q*] into pieces on
/// which the CDF is either constant or follows a segment density. Per
/// breakpoint the tables hold the mass strictly to the right (`upper`) and
/// the deficit `d = 1 - x - phi(x)`, both accumulated from the right so
/// that no quantity is formed by cancelling sums of masses.
#[derive(Clone, Debug)]
pub struct PhiFunction {
    model: Option<MixedModel>,
    xs: Vec<f64>,
    atom_mass: Vec<f64>,
    seg: Vec<bool>,
    g: Vec<f64>,
    gp: Vec<f64>,
    upper: Vec<f64>,
    d: Vec<f64>,
    phi: Vec<f64>,
    total_mass: f64,
    min_mass: f64,
}

impl PhiFunction {
    /// `atoms` are `(q, m)` pairs; `segments` are `(r1, r2)` pairs with
    /// `r1 < r2`, densities taken from `model`; `extra` adds breakpoints
    /// that carry no mass.
    pub(crate) fn build(
        model: Option<&MixedModel>,
        atoms: &[(f64, f64)],
        segments: &[(f64, f64)],
        extra: &[f64],
    ) -> Result<Self> {
        if !segments.is_empty() && model.is_none() {
            return Err(Error::InvalidMeasure("segments require a model".into()));
        }
        let seg_mass = |r1: f64, r2: f64| {
            let m = model.expect("checked above");
            m.g_prime(r1) - m.g_prime(r2)
        };
        let mut min_mass = atoms.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
        for &(r1, r2) in segments {
            min_mass = min_mass.min(seg_mass(r1, r2));
        }

        let q_star = atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|a| a.0)
            .chain(segments.iter().filter(|s| seg_mass(s.0, s.1) > 0.0).map(|s| s.1))
            .fold(0.0, f64::max);
        if q_star >= 1.0 {
            return Err(Error::InvalidMeasure(
                "support reaches 1; the measure is not supported away from 1".into(),
            ));
        }

        let mut xs: Vec<f64> = std::iter::once(0.0)
            .chain(atoms.iter().filter(|a| a.1 != 0.0).map(|a| a.0))
            .chain(segments.iter().flat_map(|s| [s.0, s.1]))
            .chain(extra.iter().copied())
            .filter(|&x| x <= q_star)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let n = xs.len();

        let mut atom_mass = vec![0.0; n];
        for &(q, m) in atoms {
            if m != 0.0 {
                let k = xs.partition_point(|&x| x < q);
                if k < n && xs[k] == q {
                    atom_mass[k] += m;
                } else {
                    // atoms beyond q* carry negative mass only
                    return Err(Error::InvalidMeasure(format!("negative mass {m} at {q}")));
                }
            }
        }

        let pieces = n - 1;
        let mut seg = vec![false; pieces];
        for (k, flag) in seg.iter_mut().enumerate() {
            let mid = 0.5 * (xs[k] + xs[k + 1]);
            *flag = segments.iter().any(|&(r1, r2)| r1 <= mid && mid <= r2);
        }
        let mut g = vec![f64::NAN; n];
        let mut gp = vec![f64::NAN; n];
        if let Some(m) = model {
            for k in 0..pieces {
                if seg[k] {
                    for j in [k, k + 1] {
                        if g[j].is_nan() {
                            g[j] = m.g(xs[j]);
                            gp[j] = m.g_prime(xs[j]);
                        }
                    }
                }
            }
        }

        let mut upper = vec![0.0; n];
        let mut d = vec![0.0; n];
        for k in (0..pieces).rev() {
            let dx = xs[k + 1] - xs[k];
            let piece_mass = if seg[k] { gp[k] - gp[k + 1] } else { 0.0 };
            upper[k] = upper[k + 1] + atom_mass[k + 1] + piece_mass;
            d[k] = d[k + 1]
                + if seg[k] {
                    (upper[k] - gp[k]) * dx + (g[k + 1] - g[k])
                } else {
                    upper[k] * dx
                };
        }
        let phi: Vec<f64> = xs.iter().zip(&d).map(|(x, dk)| (1.0 - x) - dk).collect();
        if let Some((k, _)) = phi.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "phi is not positive at {}",
                xs[k]
            )));
        }
        let total_mass = upper[0] + atom_mass[0];

        Ok(Self {
            model: model.cloned(),
            xs,
            atom_mass,
            seg,
            g,
            gp,
            upper,
            d,
            phi,
            total_mass,
            min_mass,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn q_star(&self) -> f64 {
        *self.xs.last().expect("at least the origin")
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Smallest atom or segment mass (negative values signal an invalid measure).
    pub fn min_mass(&self) -> f64 {
        self.min_mass
    }

    pub fn pieces(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn piece_bounds(&self, k: usize) -> (f64, f64) {
        (self.xs[k], self.xs[k + 1])
    }

    pub fn is_segment_piece(&self, k: usize) -> bool {
        self.seg[k]
    }

    pub fn atom_mass_at(&self, k: usize) -> f64 {
        self.atom_mass[k]
    }

    pub fn model(&self) -> Option<&MixedModel> {
        self.model.as_ref()
    }

    /// `phi` and deficit `d = 1 - x - phi` at breakpoint `k`.
    pub fn phi_at_break(&self, k: usize) -> f64 {
        self.phi[k]
    }

    pub fn d_at_break(&self, k: usize) -> f64 {
        self.d[k]
    }

    /// Index of the piece containing `s`, or `None` in the tail `s >= q*`.
    /// Negative arguments map to the first piece.
    pub fn locate(&self, s: f64) -> Option<usize> {
        if s >= self.q_star() {
            return None;
        }
        let k = self.xs.partition_point(|&x| x <= s);
        Some(k.saturating_sub(1).min(self.pieces() - 1))
    }

    fn seg_model(&self) -> &MixedModel {
        self.model.as_ref().expect("segment pieces carry a model")
    }

    /// `1 - cdf(s)` inside piece `k`.
    pub fn remaining_in(&self, k: usize, s: f64) -> f64 {
        if self.seg[k] {
            self.upper[k] - (self.gp[k] - self.seg_model().g_prime(s))
        } else {
            self.upper[k]
        }
    }

    /// `d(s) = 1 - s - phi(s)` inside piece `k`.
    pub fn d_in(&self, k: usize, s: f64) -> f64 {
        let right = self.xs[k + 1] - s;
        if self.seg[k] {
            let m = self.seg_model();
            self.d[k + 1] + (self.upper[k] - self.gp[k]) * right + (self.g[k + 1] - m.g(s))
        } else {
            self.d[k + 1] + self.upper[k] * right
        }
    }

    pub fn phi_in(&self, k: usize, s: f64) -> f64 {
        (1.0 - s) - self.d_in(k, s)
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self.locate(s) {
            None => 1.0,
            Some(k) => 1.0 - self.remaining_in(k, s),
        }
    }

    /// `mu([lo, hi])`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        self.cdf(hi) - self.cdf(lo.next_down())
    }

    pub fn phi(&self, t: f64) -> f64 {
        match self.locate(t) {
            None => 1.0 - t,
            Some(k) => self.phi_in(k, t),
        }
    }

    pub fn deficit(&self, t: f64) -> f64 {
        match self.locate(t) {
            None => 0.0,
            Some(k) => self.d_in(k, t),
        }
    }

    /// `int f dmu`: atoms exactly, segment densities by quadrature.
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> Result<f64> {
        let mut acc: f64 = self
            .xs
            .iter()
            .zip(&self.atom_mass)
            .map(|(&x, &m)| if m != 0.0 { m * f(x) } else { 0.0 })
            .sum();
        for k in 0..self.pieces() {
            if self.seg[k] {
                let m = self.seg_model();
                let density = |s: f64| -m.frak_d(s).unwrap_or(0.0) * f(s);
                acc += quad::integrate(&density, self.xs[k], self.xs[k + 1], tol)?;
            }
        }
        Ok(acc)
    }

    /// Mass-conservation check used by every functional.
    pub fn require_valid(&self, mass_tol: f64) -> Result<()> {
        if (self.total_mass - 1.0).abs() > mass_tol {
            return Err(Error::InvalidMeasure(format!(
                "total mass {} differs from 1",
                self.total_mass
            )));
        }
        if self.min_mass < -mass_tol {
            return Err(Error::InvalidMeasure(format!(
                "negative mass {}",
                self.min_mass
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureDiagnostics {
    /// Total mass minus one.
    pub mass_residual: f64,
    pub negative_masses: usize,
    /// Indices of segments not contained in a nonpositive component.
    pub segment_sign_violations: Vec<usize>,
    /// Inverted segments, overlapping segments, atoms strictly inside segments.
    pub ordering_violations: usize,
    pub support_violation: bool,
    pub ok: bool,
}

/// Tolerance for matching segment endpoints against component boundaries,
/// which are only known to root-enclosure accuracy.
const COMPONENT_SLACK: f64 = 1e-9;

pub fn validate(mu: &ParisiMeasure, pattern: &SignPattern, mass_tol: f64) -> MeasureDiagnostics {
    let mut diag = MeasureDiagnostics {
        mass_residual: mu.total_mass() - 1.0,
        ..Default::default()
    };
    diag.negative_masses = mu.atoms.iter().filter(|a| a.m < 0.0).count()
        + mu.segments.iter().filter(|s| mu.segment_mass(s) < -mass_tol).count();
    for (i, s) in mu.segments.iter().enumerate() {
        let inside = pattern.nonpositive_components.iter().any(|c| {
            c.lo - COMPONENT_SLACK <= s.r1 && s.r2 <= c.hi + COMPONENT_SLACK
        });
        if !inside {
            diag.segment_sign_violations.push(i);
        }
        if s.r1 > s.r2 {
            diag.ordering_violations += 1;
        }
        if let Some(next) = mu.segments.get(i + 1) {
            if next.r1 < s.r2 {
                diag.ordering_violations += 1;
            }
        }
        diag.ordering_violations += mu
            .atoms
            .iter()
            .filter(|a| a.m != 0.0 && s.r1 < a.q && a.q < s.r2)
            .count();
    }
    diag.support_violation = mu.support_sup() >= 1.0;
    diag.ok = diag.mass_residual.abs() <= mass_tol
        && diag.negative_masses == 0
        && diag.segment_sign_violations.is_empty()
        && diag.ordering_violations == 0
        && !diag.support_violation;
    diag
}
