//! Acceptance battery. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use cs_core::quad::integrate;
use cs_core::solver::oracle::{grid_oracle, OracleResult};
use cs_core::{
    build_dual, family_from_pattern, mass_gradient, primal_value, project_feasible, realize,
    rs_quick_tests, sign_pattern, solve, validate, Atom, ComponentSign, GridMeasure, Measure,
    MixedModel, ParisiMeasure, PhaseLabel, SignKind, SignPattern, SlotKind, SolveOptions,
    SolveReport, SolveStatus, Tolerances,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn model(terms: &[(u32, f64)], h: f64) -> MixedModel {
    MixedModel::new(terms.to_vec(), h).unwrap()
}

fn xi2_at_one(terms: &[(u32, f64)]) -> f64 {
    terms.iter().map(|&(p, c)| c * (p * (p - 1)) as f64).sum()
}

/// One to three distinct degrees in 2..=6 with random positive weights,
/// scaled so that `xi''(1) = target`.
fn random_terms(rng: &mut ChaCha8Rng, target: f64) -> Vec<(u32, f64)> {
    let mut degrees: Vec<u32> = (2..=6).collect();
    let k = rng.random_range(1..=3);
    let mut terms = Vec::new();
    for _ in 0..k {
        let p = degrees.remove(rng.random_range(0..degrees.len()));
        terms.push((p, rng.random_range(0.1..1.0)));
    }
    terms.sort_by_key(|t| t.0);
    let scale = target / xi2_at_one(&terms);
    terms.iter().map(|&(p, c)| (p, c * scale)).collect()
}

fn atoms(r: &SolveReport) -> Vec<Atom> {
    r.measure.atoms.iter().copied().filter(|a| a.m > 0.0).collect()
}

fn criterion_1() -> Outcome {
    let mut worst_time = 0.0f64;
    for c in [0.05, 0.125, 0.25, 0.4, 0.5] {
        let m = model(&[(2, c)], 0.0);
        let start = Instant::now();
        let r = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        worst_time = worst_time.max(secs);
        let a = atoms(&r);
        let ok = a.len() == 1
            && r.measure.segments.is_empty()
            && a[0].q.abs() <= 1e-8
            && (r.free_energy - c / 2.0).abs() <= 1e-8
            && r.certificate.gap <= 1e-8
            && r.phase == PhaseLabel::Rs
            && secs <= 1.0;
        if !ok {
            return Err(format!(
                "c={c}: atoms={a:?} F={} gap={} phase={} time={secs:.3}s",
                r.free_energy, r.certificate.gap, r.phase
            ));
        }
    }
    Ok(format!("5 instances, slowest {worst_time:.3}s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases: Vec<MixedModel> = (0..20)
        .map(|_| {
            let target = rng.random_range(0.05..=1.0);
            let terms = random_terms(&mut rng, target);
            model(&terms, rng.random_range(0.0..=2.0))
        })
        .collect();
    let start = Instant::now();
    let mut certified = 0;
    for m in &cases {
        let r = solve(m, &SolveOptions::default()).map_err(|e| e.to_string())?;
        if r.status == SolveStatus::Certified {
            certified += 1;
            if atoms(&r).len() != 1 || !r.measure.segments.is_empty() {
                return Err(format!("{m:?}: measure {:?}", r.measure));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        certified == cases.len() && secs <= 60.0,
        format!("{certified}/20 certified with one atom, {secs:.1}s"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<MixedModel> = (0..20)
        .map(|_| {
            let target = rng.random_range(0.1..=4.0);
            let terms = random_terms(&mut rng, target);
            let h = target.sqrt() * rng.random_range(1.0..=1.5);
            model(&terms, h)
        })
        .collect();
    let start = Instant::now();
    let tol = Tolerances::default();
    for m in &cases {
        let diag = rs_quick_tests(m, tol.fp_tol, tol.gap_tol);
        if !diag.strong_field || !diag.roots.iter().any(|r| r.obstacle_ok) {
            return Err(format!("{m:?}: obstacle check failed {diag:?}"));
        }
        let r = solve(m, &SolveOptions::default()).map_err(|e| e.to_string())?;
        if r.phase != PhaseLabel::Rs || r.status != SolveStatus::Certified {
            return Err(format!("{m:?}: phase {} status {}", r.phase, r.status));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs <= 60.0, format!("20/20 obstacle checks and RS solves, {secs:.1}s"))
}

const ROUNDING: f64 = 16.0 * f64::EPSILON;

struct OracleCase {
    model: MixedModel,
    report: SolveReport,
    oracle: OracleResult,
}

fn oracle_battery() -> Result<Vec<OracleCase>, String> {
    let templates: [&[(u32, f64)]; 6] = [
        &[(2, 1.0)],
        &[(3, 0.25)],
        &[(3, 1.0)],
        &[(3, 4.0)],
        &[(4, 1.0)],
        &[(2, 1.0), (4, 1.0)],
    ];
    let models: Vec<MixedModel> = templates
        .iter()
        .flat_map(|t| [0.0, 0.3, 1.0].map(|h| model(t, h)))
        .collect();
    models
        .into_par_iter()
        .map(|m| {
            let report = solve(&m, &SolveOptions::default()).map_err(|e| e.to_string())?;
            let oracle = grid_oracle(&m, 2000, 1e-10).map_err(|e| e.to_string())?;
            Ok(OracleCase {
                model: m,
                report,
                oracle,
            })
        })
        .collect()
}

fn criterion_4(battery: &[OracleCase], secs: f64) -> Outcome {
    let mut worst = 0.0f64;
    for c in battery {
        let f = c.report.free_energy;
        let o = &c.oracle;
        // when the optimum sits on the grid all three values coincide and
        // only rounding separates them
        let slack = ROUNDING * f.abs();
        let inside = o.d_lower - slack <= f && f <= o.p_upper + slack;
        worst = worst.max((f - o.p_upper).abs());
        if !inside || (f - o.p_upper).abs() > 5e-4 || c.report.status != SolveStatus::Certified {
            return Err(format!(
                "{:?}: F={f} bracket=[{}, {}] status={}",
                c.model, o.d_lower, o.p_upper, c.report.status
            ));
        }
    }
    check(
        secs <= 600.0,
        format!("{} models, max |F - P_upper| = {worst:.2e}, {secs:.1}s", battery.len()),
    )
}

/// Positive components as closed intervals; a model with `d = 0` everywhere
/// is treated as one atom-only component on [0, 1].
fn positive_components(pattern: &SignPattern) -> Vec<(f64, f64)> {
    if pattern.kind == SignKind::IdenticallyZero {
        return vec![(0.0, 1.0)];
    }
    pattern
        .positive_components
        .iter()
        .map(|iv| (iv.lo, iv.hi))
        .collect()
}

fn in_positive(pattern: &SignPattern, comp: (f64, f64), q: f64) -> bool {
    let inside = comp.0 <= q && q <= comp.1;
    inside
        && (pattern.kind == SignKind::IdenticallyZero
            || pattern.label_at(q) == ComponentSign::Positive)
}

fn criterion_5(battery: &[OracleCase]) -> Outcome {
    let tol = Tolerances::default();
    for c in battery {
        let pattern = sign_pattern(&c.model, tol.root_tol);
        let mu = c.report.measure().map_err(|e| e.to_string())?;
        let diag = validate(&mu, &pattern, tol.mass_tol);
        if !diag.segment_sign_violations.is_empty() || !diag.ok {
            return Err(format!("{:?}: {diag:?}", c.model));
        }
        if pattern.kind == SignKind::IdenticallyZero && !mu.segments().is_empty() {
            return Err(format!("{:?}: segment with d = 0", c.model));
        }
        for comp in positive_components(&pattern) {
            let solver = mu
                .atoms()
                .iter()
                .filter(|a| a.m > 0.0 && in_positive(&pattern, comp, a.q))
                .count();
            let clusters = c
                .oracle
                .clusters
                .iter()
                .filter(|k| in_positive(&pattern, comp, k.center))
                .count();
            if solver > 2 || clusters > 2 {
                return Err(format!(
                    "{:?} on {comp:?}: {solver} atoms, {clusters} oracle clusters",
                    c.model
                ));
            }
        }
    }
    Ok(format!("{} certified measures and oracle supports conform", battery.len()))
}

/// A random measure from the ansatz family of `m`, with support below 0.95.
fn random_measure(m: &MixedModel, rng: &mut ChaCha8Rng) -> ParisiMeasure {
    let family = family_from_pattern(&sign_pattern(m, 1e-12)).capped(0.95);
    loop {
        let mut p = cs_core::ParamVector(vec![0.0; family.dim()]);
        for (i, s) in family.slots.iter().enumerate() {
            let a = rng.random_range(s.lo..=s.hi);
            let b = rng.random_range(s.lo..=s.hi);
            p.set_locations(i, (a, b));
            p.set_masses(i, (rng.random::<f64>(), rng.random::<f64>()));
            if s.kind == SlotKind::Segment && rng.random_bool(0.3) {
                p.set_locations(i, (a, a));
            }
        }
        let Ok(p) = project_feasible(&family, &p, m) else {
            continue;
        };
        if let Ok((mu, residual)) = realize(&family, &p, m, 1e-10) {
            if residual.abs() <= 1e-12 {
                return mu;
            }
        }
    }
}

fn property_models() -> Vec<MixedModel> {
    vec![
        model(&[(2, 1.0)], 0.0),
        model(&[(3, 2.0)], 0.5),
        model(&[(2, 1.0), (4, 1.0)], 0.0),
        model(&[(2, 4.0), (4, 4.0)], 0.3),
        model(&[(2, 0.3), (3, 1.1), (5, 0.2)], 0.4),
    ]
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut with_segments = 0;
    for m in property_models() {
        for _ in 0..40 {
            let mu = random_measure(&m, &mut rng);
            let nu = random_measure(&m, &mut rng);
            with_segments += usize::from(!mu.segments().is_empty());
            let eta = build_dual(&m, &mu).map_err(|e| e.to_string())?;
            let d = cs_core::dual_value(&m, &eta).map_err(|e| e.to_string())?;
            let p = primal_value(&m, &nu).map_err(|e| e.to_string())?;
            worst = worst.max(d - p);
            if d > p + 1e-8 {
                return Err(format!("{m:?}: D={d} > P={p} for {mu:?} vs {nu:?}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs <= 60.0,
        format!("200 pairs ({with_segments} with segments), max D - P = {worst:.3e}, {secs:.1}s"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identity = 0.0f64;
    let mut antiderivative = 0.0f64;
    let mut tail = 0.0f64;
    let mut ibp = 0.0f64;
    let mut measures = 0;
    for m in property_models() {
        for _ in 0..2 {
            let mu = random_measure(&m, &mut rng);
            measures += 1;
            let eta = build_dual(&m, &mu).map_err(|e| e.to_string())?;
            let phi = mu.phi_function().map_err(|e| e.to_string())?;
            let q_star = mu.support_sup();
            for i in 0..100 {
                let t = rng.random_range(0.0..0.999);
                identity = identity.max((eta.eta2(t) * phi.phi(t).powi(2) - 1.0).abs());
                // the same law through eta', which is assembled from its own tables
                let (a, b) = (t, (t + 0.05).min(0.999));
                let mut cuts: Vec<f64> = phi.breakpoints().iter().copied().filter(|&x| a < x && x < b).collect();
                cuts.insert(0, a);
                cuts.push(b);
                let mut quad = 0.0;
                for w in cuts.windows(2) {
                    quad += integrate(&|s| phi.phi(s).powi(-2), w[0], w[1], 1e-13).map_err(|e| e.to_string())?;
                }
                let diff = eta.eta1(b) - eta.eta1(a);
                antiderivative = antiderivative.max((quad - diff).abs() / diff.abs().max(1.0));
                let s = q_star + (0.999 - q_star) * i as f64 / 100.0;
                tail = tail.max((eta.eta2(s) * (1.0 - s).powi(2) - 1.0).abs());
            }
            for _ in 0..10 {
                let q1 = rng.random_range(0.0..0.99);
                let q2 = rng.random_range(0.0..0.99);
                let lhs = mass_gradient(&m, &mu, q1).map_err(|e| e.to_string())?
                    - mass_gradient(&m, &mu, q2).map_err(|e| e.to_string())?;
                let rhs = 0.5 * (eta.gap(q1) - eta.gap(q2));
                ibp = ibp.max((lhs - rhs).abs());
            }
        }
    }
    check(
        identity <= 1e-12 && antiderivative <= 1e-12 && tail <= 1e-12 && ibp <= 1e-8,
        format!(
            "{measures} measures: eta''phi^2 {identity:.1e}, via eta' {antiderivative:.1e}, \
             tail {tail:.1e}, gradient-gap {ibp:.1e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let models = property_models();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let m = &models[i % models.len()];
        let k = rng.random_range(2..=4);
        let mut qs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.95)).collect();
        qs.sort_by(f64::total_cmp);
        qs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        if qs.len() < 2 {
            qs = vec![0.2, 0.7];
        }
        let raw: Vec<f64> = qs.iter().map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let ws: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let (j, l) = (rng.random_range(0..qs.len()), rng.random_range(0..qs.len()));
        let l = if j == l { (l + 1) % qs.len() } else { l };
        let shifted = |e: f64| {
            let mut w = ws.clone();
            w[j] += e;
            w[l] -= e;
            let atoms = qs.iter().zip(&w).map(|(&q, &m)| Atom { q, m }).collect();
            primal_value(m, &ParisiMeasure::new(m.clone(), atoms, vec![]).unwrap()).unwrap()
        };
        let step = 1e-5;
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        let mu = ParisiMeasure::new(
            m.clone(),
            qs.iter().zip(&ws).map(|(&q, &m)| Atom { q, m }).collect(),
            vec![],
        )
        .unwrap();
        let analytic = mass_gradient(m, &mu, qs[j]).map_err(|e| e.to_string())?
            - mass_gradient(m, &mu, qs[l]).map_err(|e| e.to_string())?;
        let rel = ((fd - analytic) / analytic).abs();
        worst = worst.max(rel);
        if rel > 1e-6 {
            return Err(format!("{m:?} atoms {qs:?} {ws:?}: fd {fd} vs {analytic}"));
        }
    }
    Ok(format!("50 configurations, max relative error {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let template = model(&[(2, 1.0), (4, 1.0)], 0.0);
    let cells: Vec<(f64, f64)> = [1.0, 1.3, 1.6, 2.0, 3.0]
        .iter()
        .flat_map(|&b| [0.0, 0.3].map(|h| (b, h)))
        .collect();
    let reports: Vec<Result<SolveReport, String>> = cells
        .par_iter()
        .map(|&(beta, h)| {
            let m = template.scaled(beta * beta).and_then(|m| m.with_field(h));
            m.and_then(|m| solve(&m, &SolveOptions::default())).map_err(|e| e.to_string())
        })
        .collect();
    let mut found = 0;
    let mut worst = 0.0f64;
    for ((beta, h), r) in cells.iter().zip(reports) {
        let r = r?;
        if r.status != SolveStatus::Certified || r.measure.segments.is_empty() {
            continue;
        }
        found += 1;
        let mu = r.measure().map_err(|e| e.to_string())?;
        let phi = mu.phi_function().map_err(|e| e.to_string())?;
        for s in mu.segments() {
            for i in 0..=1000 {
                let t = s.r1 + (s.r2 - s.r1) * i as f64 / 1000.0;
                worst = worst.max((phi.phi(t) * r.model.xi2(t).sqrt() - 1.0).abs());
            }
        }
        let reported = r.certificate.segment_identity_defect.unwrap_or(f64::INFINITY);
        worst = worst.max(reported);
        if worst > 1e-6 {
            return Err(format!("beta={beta} h={h}: defect {worst:.2e}"));
        }
    }
    if found == 0 {
        return Err("no certified segment in the battery".into());
    }
    Ok(format!("{found} certified fRSB cells, max |phi sqrt(xi'') - 1| = {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let lebesgue = GridMeasure::uniform(1000).map_err(|e| e.to_string())?;
    let mut least = f64::INFINITY;
    for m in property_models() {
        let base = primal_value(&m, &lebesgue).map_err(|e| e.to_string())?;
        for eps in [0.05, 0.1] {
            let cut = lebesgue.truncate(eps).map_err(|e| e.to_string())?;
            let p = primal_value(&m, &cut).map_err(|e| e.to_string())?;
            least = least.min(base - p);
            if base - p < 1e-6 {
                return Err(format!("{m:?} eps={eps}: P drops by only {:.3e}", base - p));
            }
        }
    }
    Ok(format!("5 models x 2 cuts, smallest improvement {least:.3e}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let battery = oracle_battery();
    let battery_secs = start.elapsed().as_secs_f64();
    let from_battery = |f: &dyn Fn(&[OracleCase]) -> Outcome| match &battery {
        Ok(b) => f(b),
        Err(e) => Err(e.clone()),
    };
    let results = [
        ("RS closed form", criterion_1()),
        ("weak coupling battery", criterion_2()),
        ("strong field battery", criterion_3()),
        ("oracle equivalence", from_battery(&|b| criterion_4(b, battery_secs))),
        ("rule of signs", from_battery(&criterion_5)),
        ("weak duality", criterion_6()),
        ("construction identities", criterion_7()),
        ("mass gradient", criterion_8()),
        ("segment identity", criterion_9()),
        ("truncation", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
