//! Finite-parameter families of candidate measures read off a sign pattern.
//!
//! Each component of the pattern contributes one slot of four parameters
//! `[x1, x2, w1, w2]`:
//! - on a positive component, two atoms `w1 delta_{x1} + w2 delta_{x2}`;
//! - on a nonpositive component, the segment `[x1, x2]` with its closed-form
//!   density plus endpoint atoms `w1 delta_{x1} + w2 delta_{x2}`.
//!
//! Slots are packed component-major in increasing order along [0, 1].
//! When the discriminant vanishes identically the family is a single atom
//! slot spanning [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{segment_mass, Atom, ParisiMeasure, Segment};
use crate::model::MixedModel;
use crate::signs::{ComponentSign, SignKind, SignPattern};

pub const SLOT_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Atoms,
    Segment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzFamily {
    pub slots: Vec<Slot>,
}

/// Flat parameter vector; see the module docs for the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn locations(&self, slot: usize) -> (f64, f64) {
        (self.0[SLOT_DIM * slot], self.0[SLOT_DIM * slot + 1])
    }

    pub fn masses(&self, slot: usize) -> (f64, f64) {
        (self.0[SLOT_DIM * slot + 2], self.0[SLOT_DIM * slot + 3])
    }

    pub fn set_locations(&mut self, slot: usize, x: (f64, f64)) {
        self.0[SLOT_DIM * slot] = x.0;
        self.0[SLOT_DIM * slot + 1] = x.1;
    }

    pub fn set_masses(&mut self, slot: usize, w: (f64, f64)) {
        self.0[SLOT_DIM * slot + 2] = w.0;
        self.0[SLOT_DIM * slot + 3] = w.1;
    }
}

pub fn family_from_pattern(pattern: &SignPattern) -> AnsatzFamily {
    if pattern.kind == SignKind::IdenticallyZero {
        return AnsatzFamily {
            slots: vec![Slot {
                kind: SlotKind::Atoms,
                lo: 0.0,
                hi: 1.0,
            }],
        };
    }
    AnsatzFamily {
        slots: pattern
            .components()
            .into_iter()
            .map(|c| Slot {
                kind: match c.sign {
                    ComponentSign::Positive => SlotKind::Atoms,
                    ComponentSign::Nonpositive => SlotKind::Segment,
                },
                lo: c.lo,
                hi: c.hi,
            })
            .collect(),
    }
}

impl AnsatzFamily {
    pub fn dim(&self) -> usize {
        SLOT_DIM * self.slots.len()
    }

    /// Drops the part of every box above `cap` (slots entirely above it
    /// shrink to the point `cap`, and slots starting above it are removed).
    pub fn capped(&self, cap: f64) -> Self {
        let slots: Vec<Slot> = self
            .slots
            .iter()
            .filter(|s| s.lo <= cap)
            .map(|s| Slot {
                hi: s.hi.min(cap),
                ..*s
            })
            .collect();
        Self { slots }
    }

    pub fn positive_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.kind == SlotKind::Atoms).count()
    }

    /// Locations and masses of every atom-carrying position, in packing order.
    pub fn mass_positions(&self, params: &ParamVector) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.slots.len());
        for (i, slot) in self.slots.iter().enumerate() {
            let (x1, x2) = params.locations(i);
            match slot.kind {
                SlotKind::Atoms => out.extend([x1, x2]),
                SlotKind::Segment => out.extend([x1.min(x2), x1.max(x2)]),
            }
        }
        out
    }

    /// Total density mass of the segments encoded in `params`.
    pub fn segment_mass(&self, params: &ParamVector, model: &MixedModel) -> f64 {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SlotKind::Segment)
            .map(|(i, _)| {
                let (x1, x2) = params.locations(i);
                segment_mass(
                    model,
                    &Segment {
                        r1: x1.min(x2),
                        r2: x1.max(x2),
                    },
                )
            })
            .sum()
    }

    /// Packs a measure already in the family. Atoms on a boundary shared
    /// by two slots go to the lower slot.
    pub fn pack(&self, mu: &ParisiMeasure) -> Result<ParamVector> {
        let mut params = ParamVector(vec![0.0; self.dim()]);
        let mut used_atoms = vec![false; mu.atoms().len()];
        let mut used_segments = vec![false; mu.segments().len()];
        for (i, slot) in self.slots.iter().enumerate() {
            match slot.kind {
                SlotKind::Atoms => {
                    let mut found = Vec::new();
                    for (j, a) in mu.atoms().iter().enumerate() {
                        if !used_atoms[j] && slot.lo <= a.q && a.q <= slot.hi {
                            used_atoms[j] = true;
                            found.push(*a);
                        }
                    }
                    if found.len() > 2 {
                        return Err(Error::Infeasible(format!(
                            "{} atoms in a two-atom slot",
                            found.len()
                        )));
                    }
                    let first = found.first().copied().unwrap_or(Atom { q: slot.lo, m: 0.0 });
                    let second = found.get(1).copied().unwrap_or(Atom { q: first.q, m: 0.0 });
                    params.set_locations(i, (first.q, second.q));
                    params.set_masses(i, (first.m, second.m));
                }
                SlotKind::Segment => {
                    let seg = mu
                        .segments()
                        .iter()
                        .enumerate()
                        .find(|(j, s)| !used_segments[*j] && slot.lo <= s.r1 && s.r2 <= slot.hi);
                    let (r1, r2) = match seg {
                        Some((j, s)) => {
                            used_segments[j] = true;
                            (s.r1, s.r2)
                        }
                        None => {
                            let a = mu
                                .atoms()
                                .iter()
                                .enumerate()
                                .find(|(j, a)| !used_atoms[*j] && slot.lo <= a.q && a.q <= slot.hi);
                            let q = a.map(|(_, a)| a.q).unwrap_or(slot.lo);
                            (q, q)
                        }
                    };
                    let mut w = (0.0, 0.0);
                    for (j, a) in mu.atoms().iter().enumerate() {
                        if used_atoms[j] {
                            continue;
                        }
                        if a.q == r1 {
                            w.0 += a.m;
                            used_atoms[j] = true;
                        } else if a.q == r2 {
                            w.1 += a.m;
                            used_atoms[j] = true;
                        }
                    }
                    params.set_locations(i, (r1, r2));
                    params.set_masses(i, w);
                }
            }
        }
        if used_atoms.iter().any(|u| !u) || used_segments.iter().any(|u| !u) {
            return Err(Error::Infeasible("measure does not fit the family".into()));
        }
        Ok(params)
    }
}

/// Builds the measure encoded by `params` together with the mass residual
/// `total - 1`; the caller enforces the mass constraint.
pub fn realize(
    family: &AnsatzFamily,
    params: &ParamVector,
    model: &MixedModel,
    mass_tol: f64,
) -> Result<(ParisiMeasure, f64)> {
    if params.0.len() != family.dim() {
        return Err(Error::Infeasible(format!(
            "expected {} parameters, got {}",
            family.dim(),
            params.0.len()
        )));
    }
    let mut atoms = Vec::new();
    let mut segments = Vec::new();
    let mut seg_total = 0.0;
    for (i, slot) in family.slots.iter().enumerate() {
        let (x1, x2) = params.locations(i);
        let (w1, w2) = params.masses(i);
        for x in [x1, x2] {
            if !(slot.lo <= x && x <= slot.hi) {
                return Err(Error::Infeasible(format!(
                    "location {x} outside [{}, {}]",
                    slot.lo, slot.hi
                )));
            }
        }
        for w in [w1, w2] {
            if !(w >= 0.0) {
                return Err(Error::Infeasible(format!("negative mass {w}")));
            }
        }
        let (lo, hi, wl, wh) = if x1 <= x2 { (x1, x2, w1, w2) } else { (x2, x1, w2, w1) };
        if slot.kind == SlotKind::Segment && hi > lo {
            let seg = Segment { r1: lo, r2: hi };
            let m = segment_mass(model, &seg);
            if m < -mass_tol {
                return Err(Error::Infeasible(format!(
                    "segment [{lo}, {hi}] has negative mass {m}"
                )));
            }
            seg_total += m;
            segments.push(seg);
        }
        for (q, m) in [(lo, wl), (hi, wh)] {
            if m > 0.0 {
                atoms.push(Atom { q, m });
            }
        }
    }
    if seg_total > 1.0 + mass_tol {
        return Err(Error::Infeasible(format!("segment mass {seg_total} exceeds 1")));
    }
    let mu = ParisiMeasure::new(model.clone(), atoms, segments)?;
    let residual = mu.total_mass() - 1.0;
    Ok((mu, residual))
}

/// Nearest feasible point: locations clamped and ordered within each slot,
/// masses clipped at zero and rescaled onto `sum w = 1 - segment mass`.
pub fn project_feasible(
    family: &AnsatzFamily,
    params: &ParamVector,
    model: &MixedModel,
) -> Result<ParamVector> {
    let mut out = params.clone();
    for (i, slot) in family.slots.iter().enumerate() {
        let (x1, x2) = params.locations(i);
        let (w1, w2) = params.masses(i);
        let (x1, x2) = (x1.clamp(slot.lo, slot.hi), x2.clamp(slot.lo, slot.hi));
        let ((x1, w1), (x2, w2)) = if x1 <= x2 { ((x1, w1), (x2, w2)) } else { ((x2, w2), (x1, w1)) };
        out.set_locations(i, (x1, x2));
        out.set_masses(i, (w1.max(0.0), w2.max(0.0)));
    }
    let seg = family.segment_mass(&out, model);
    if seg > 1.0 {
        return Err(Error::Infeasible(format!(
            "segment mass {seg} exceeds 1; shrink the segments"
        )));
    }
    let target = 1.0 - seg;
    let free: f64 = (0..family.slots.len())
        .map(|i| {
            let (a, b) = out.masses(i);
            a + b
        })
        .sum();
    let slots = family.slots.len();
    for i in 0..slots {
        let (a, b) = out.masses(i);
        let scaled = if free > 0.0 {
            (a * target / free, b * target / free)
        } else {
            let even = target / (2 * slots) as f64;
            (even, even)
        };
        out.set_masses(i, scaled);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::validate;
    use crate::quad;
    use crate::signs::{sign_pattern, DEFAULT_ROOT_TOL};

    fn model(terms: &[(u32, f64)]) -> MixedModel {
        MixedModel::new(terms.to_vec(), 0.0).unwrap()
    }

    fn family_of(m: &MixedModel) -> AnsatzFamily {
        family_from_pattern(&sign_pattern(m, DEFAULT_ROOT_TOL))
    }

    #[test]
    fn family_shapes() {
        let two = family_of(&model(&[(2, 1.0)]));
        assert_eq!(two.slots.len(), 1);
        assert_eq!(two.slots[0].kind, SlotKind::Atoms);
        assert_eq!(two.dim(), 4);

        let three = family_of(&model(&[(3, 1.0)]));
        assert_eq!(three.dim(), 4);
        assert_eq!(three.positive_slots(), 1);

        let mixed = family_of(&model(&[(2, 1.0), (4, 1.0)]));
        assert_eq!(mixed.dim(), 8);
        assert_eq!(mixed.slots[0].kind, SlotKind::Segment);
        assert_eq!(mixed.slots[1].kind, SlotKind::Atoms);
    }

    #[test]
    fn realize_degenerate_cases() {
        let m = model(&[(2, 1.0)]);
        let fam = family_of(&m);
        let (mu, res) = realize(&fam, &ParamVector(vec![0.0, 0.5, 1.0, 0.0]), &m, 1e-10).unwrap();
        assert_eq!(mu.atoms(), &[Atom { q: 0.0, m: 1.0 }]);
        assert_eq!(res, 0.0);

        let mm = model(&[(2, 1.0), (4, 1.0)]);
        let fam = family_of(&mm);
        let p = ParamVector(vec![0.1, 0.1, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let (mu, _) = realize(&fam, &p, &mm, 1e-10).unwrap();
        assert!(mu.segments().is_empty());
        assert_eq!(mu.atoms().len(), 2);
    }

    #[test]
    fn segment_mass_matches_quadrature() {
        let m = model(&[(2, 1.0), (4, 1.0)]);
        let fam = family_of(&m);
        let p = ParamVector(vec![0.05, 0.25, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0]);
        let closed = fam.segment_mass(&p, &m);
        let density = |s: f64| -m.frak_d(s).unwrap();
        let numeric = quad::integrate(&density, 0.05, 0.25, 1e-14).unwrap();
        assert!((closed - numeric).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let m = model(&[(3, 1.0)]);
        let fam = family_of(&m);
        let inside = ParamVector(vec![0.2, 0.6, 0.3, 0.7]);
        assert_eq!(project_feasible(&fam, &inside, &m).unwrap(), inside);
        let swapped = project_feasible(&fam, &ParamVector(vec![0.6, 0.2, 0.7, 0.3]), &m).unwrap();
        assert_eq!(swapped, inside);
        let neg = project_feasible(&fam, &ParamVector(vec![0.2, 0.6, -0.1, 0.5]), &m).unwrap();
        assert_eq!(neg.masses(0), (0.0, 1.0));

        let mm = model(&[(2, 1.0), (4, 1.0)]);
        let fam = family_of(&mm);
        let p = ParamVector(vec![0.05, 0.25, 0.2, 0.2, 0.5, 0.7, 0.1, 0.1]);
        let proj = project_feasible(&fam, &p, &mm).unwrap();
        let (mu, res) = realize(&fam, &proj, &mm, 1e-10).unwrap();
        assert!(res.abs() < 1e-14);
        let pattern = sign_pattern(&mm, DEFAULT_ROOT_TOL);
        assert!(validate(&mu, &pattern, 1e-10).ok);
    }

    #[test]
    fn pack_round_trips() {
        let mm = model(&[(2, 1.0), (4, 1.0)]);
        let fam = family_of(&mm);
        let p = project_feasible(
            &fam,
            &ParamVector(vec![0.05, 0.25, 0.2, 0.2, 0.5, 0.7, 0.1, 0.1]),
            &mm,
        )
        .unwrap();
        let (mu, _) = realize(&fam, &p, &mm, 1e-10).unwrap();
        let packed = fam.pack(&mu).unwrap();
        let (again, _) = realize(&fam, &packed, &mm, 1e-10).unwrap();
        assert_eq!(again, mu);
    }

    #[test]
    fn capped_family_respects_bound() {
        let mm = model(&[(2, 1.0), (4, 1.0)]);
        let fam = family_of(&mm).capped(0.2);
        assert_eq!(fam.slots.len(), 1);
        assert_eq!(fam.slots[0].hi, 0.2);
    }
}
