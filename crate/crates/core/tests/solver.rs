use cs_core::solver::oracle::grid_oracle;
use cs_core::{
    certify, classify, solve, sweep, varineq_residual, MixedModel, PhaseLabel, SolveOptions,
    SolveStatus,
};

fn model(terms: &[(u32, f64)], h: f64) -> MixedModel {
    MixedModel::new(terms.to_vec(), h).unwrap()
}

#[test]
fn certified_reports_are_consistent() {
    for (terms, h) in [(&[(3, 2.0)][..], 0.0), (&[(2, 1.0), (4, 1.0)][..], 0.3), (&[(2, 2.0)][..], 0.5)] {
        let m = model(terms, h);
        let r = solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        assert!(r.certificate.gap <= r.certificate.tolerances.gap_tol);
        assert_eq!(r.free_energy, r.certificate.primal);
        let mu = r.measure().unwrap();
        assert_eq!(classify(&mu), r.phase);
        assert!(varineq_residual(&m, &mu, 500).unwrap() >= -10.0 * r.certificate.tolerances.gap_tol);
        // the certificate is reproducible from the measure alone
        let again = certify(&m, &mu).unwrap();
        assert!((again.gap - r.certificate.gap).abs() <= 1e-10);
    }
}

#[test]
fn pure_three_spin_uses_at_most_two_atoms() {
    let m = model(&[(3, 2.0)], 0.0);
    let r = solve(&m, &SolveOptions::default()).unwrap();
    assert!(r.measure.atoms.len() <= 2 && r.measure.segments.is_empty());
    let o = grid_oracle(&m, 2000, 1e-10).unwrap();
    assert!((r.free_energy - o.p_upper).abs() <= 5e-4);
    assert!(o.clusters.len() <= 2);
}

#[test]
fn pure_two_spin_never_has_segments() {
    for beta in [0.5, 1.0, 2.0] {
        for h in [0.0, 0.5] {
            let m = model(&[(2, beta * beta)], h);
            let r = solve(&m, &SolveOptions::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Certified);
            assert!(r.measure.atoms.len() <= 2 && r.measure.segments.is_empty());
        }
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let m = model(&[(2, 1.0), (4, 1.0)], 0.3);
    let opts = SolveOptions {
        seed: 17,
        ..Default::default()
    };
    let mut a = solve(&m, &opts).unwrap();
    let mut b = solve(&m, &opts).unwrap();
    a.telemetry.wall_time_s = 0.0;
    b.telemetry.wall_time_s = 0.0;
    assert_eq!(a, b);
}

#[test]
fn zero_budget_is_uncertified_but_reports_a_measure() {
    let m = model(&[(3, 2.0)], 0.0);
    let opts = SolveOptions {
        max_iter: 0,
        ..Default::default()
    };
    let r = solve(&m, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Uncertified);
    assert!(r.measure().is_ok());
    assert!(r.certificate.gap.is_finite());
}

#[test]
fn weak_coupling_sweep_matches_solve() {
    let template = model(&[(2, 1.0)], 0.0);
    let rows = sweep(&template, &[0.6], &[0.2], &SolveOptions::default());
    let r = solve(&model(&[(2, 0.36)], 0.2), &SolveOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].free_energy, Some(r.free_energy));
    assert_eq!(rows[0].phase, r.phase.to_string());
    assert_eq!(r.phase, PhaseLabel::Rs);
}
