//! Phase-diagram sweeps over `(beta, h)`: each cell scales the template
//! coefficients by `beta^2` and solves independently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, SolveOptions, SolveStatus};
use crate::model::MixedModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub h: f64,
    #[serde(rename = "F")]
    pub free_energy: Option<f64>,
    pub gap: Option<f64>,
    pub phase: String,
    pub n_atoms: Option<usize>,
    pub n_segments: Option<usize>,
    pub status: String,
}

/// `n` evenly spaced points from `a` to `b` inclusive (`a` alone when `n = 1`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn cell(template: &MixedModel, beta: f64, h: f64, opts: &SolveOptions) -> SweepRow {
    let failed = |msg: String| SweepRow {
        beta,
        h,
        free_energy: None,
        gap: None,
        phase: String::new(),
        n_atoms: None,
        n_segments: None,
        status: format!("error: {msg}"),
    };
    let model = match template.scaled(beta * beta).and_then(|m| m.with_field(h)) {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    match solve(&model, opts) {
        Ok(r) => SweepRow {
            beta,
            h,
            free_energy: Some(r.free_energy),
            gap: Some(r.certificate.gap),
            phase: r.phase.to_string(),
            n_atoms: Some(r.measure.atoms.iter().filter(|a| a.m > 0.0).count()),
            n_segments: Some(r.measure.segments.len()),
            status: match r.status {
                SolveStatus::Certified => "certified".into(),
                SolveStatus::Uncertified => "uncertified".into(),
            },
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Rows come back in beta-major order regardless of scheduling. Runs on
/// the current rayon pool.
pub fn sweep(template: &MixedModel, betas: &[f64], hs: &[f64], opts: &SolveOptions) -> Vec<SweepRow> {
    let cells: Vec<(f64, f64)> = betas
        .iter()
        .flat_map(|&b| hs.iter().map(move |&h| (b, h)))
        .collect();
    cells
        .par_iter()
        .map(|&(b, h)| cell(template, b, h, opts))
        .collect()
}
