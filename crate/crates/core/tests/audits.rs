//! Completeness audits: ddim/dind estimates, involutivity and
//! non-involutivity of the integral families.

use heisenflow::families::family_for;
use heisenflow::heisenberg::MetricSpec;
use heisenflow::poisson::audit;
use heisenflow::systems::{SystemId, SystemKind};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn ll_full_audits_are_complete() {
    for n in 1..=3 {
        let sys = SystemId::new(SystemKind::LlFull, MetricSpec::standard(n), None).unwrap();
        let family = family_for(&sys);
        let report = audit(&family, 40, 11).unwrap();
        assert_eq!(report.ddim, 3 * n + 1, "n={n}");
        assert_eq!(report.dind, n + 1, "n={n}");
        assert_eq!(report.chart_dim, 4 * n + 2);
        assert!(report.complete, "n={n}");
        assert_eq!(Some(report.ddim), family.claimed_ddim);
        assert_eq!(Some(report.dind), family.claimed_dind);
    }
}

#[test]
fn lr_reduced_audit_n3_counts() {
    let sys = SystemId::new(SystemKind::LrReduced, MetricSpec::standard(3), Some(1.0)).unwrap();
    let family = family_for(&sys);
    let report = audit(&family, 50, 7).unwrap();
    assert_eq!(report.ddim, 7); // 3n - 2
    assert_eq!(report.dind, 5); // n + 2
    assert_eq!(report.chart_dim, 12); // 4n
    assert!(report.complete);
}

#[test]
fn lr_reduced_audit_n2_is_commutative() {
    let sys = SystemId::new(SystemKind::LrReduced, MetricSpec::standard(2), Some(1.0)).unwrap();
    let family = family_for(&sys);
    let report = audit(&family, 100, 13).unwrap();
    assert_eq!(report.ddim, 4);
    assert_eq!(report.dind, 4);
    assert_eq!(report.gram_rank, 0);
    assert!(report.gram_max_abs < 1e-9, "gram max {}", report.gram_max_abs);
    assert!(report.complete);
}

#[test]
fn lr_reduced_audit_n1_is_commutative() {
    let sys = SystemId::new(SystemKind::LrReduced, MetricSpec::standard(1), Some(0.7)).unwrap();
    let family = family_for(&sys);
    let report = audit(&family, 100, 17).unwrap();
    assert_eq!(report.ddim, 2);
    assert_eq!(report.dind, 2);
    assert!(report.gram_max_abs < 1e-9);
    assert!(report.complete);
}

#[test]
fn lr_full_audit_low_n_is_commutative_and_complete() {
    for n in 1..=2 {
        let sys = SystemId::new(SystemKind::LrFull, MetricSpec::standard(n), None).unwrap();
        let family = family_for(&sys);
        let report = audit(&family, 60, 19).unwrap();
        assert_eq!(report.ddim, 2 * n + 1, "n={n}");
        assert_eq!(report.dind, 2 * n + 1, "n={n}");
        assert!(report.gram_max_abs < 1e-9, "n={n}: {}", report.gram_max_abs);
        assert!(report.complete);
    }
}

#[test]
fn non_involutivity_witness_n3() {
    // the pair integrals sharing plane 1 do not commute
    let sys = SystemId::new(SystemKind::LrReduced, MetricSpec::standard(3), Some(1.0)).unwrap();
    let family = family_for(&sys);
    let chart = family.chart.clone();
    let tensor = chart.poisson_tensor();
    let f = family.member("It4").unwrap();
    let g = family.member("It5").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut max_abs = 0.0_f64;
    for _ in 0..100 {
        let s = chart.sample_state(&mut rng);
        max_abs = max_abs.max(tensor.bracket(f, g, s.as_slice()).abs());
    }
    assert!(max_abs > 1e-3, "witness too small: {max_abs}");
}

#[test]
fn lr_full_pair_integrals_do_not_commute_at_n3() {
    let sys = SystemId::new(SystemKind::LrFull, MetricSpec::standard(3), None).unwrap();
    let family = family_for(&sys);
    let tensor = sys.poisson_tensor();
    let f = family.member("I4").unwrap();
    let g = family.member("I5").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut max_abs = 0.0_f64;
    for _ in 0..100 {
        let s = sys.sample_state(&mut rng);
        max_abs = max_abs.max(tensor.bracket(f, g, s.as_slice()).abs());
    }
    assert!(max_abs > 1e-3, "witness too small: {max_abs}");
}

#[test]
fn first_integral_property_everywhere() {
    // |{f, H}| < 1e-8 at 200 random points for every member of every family
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    for n in 1..=3 {
        let systems = vec![
            SystemId::new(SystemKind::LlFull, MetricSpec::standard(n), None).unwrap(),
            SystemId::new(SystemKind::LrFull, MetricSpec::standard(n), None).unwrap(),
            SystemId::new(SystemKind::LrReduced, MetricSpec::standard(n), Some(1.2)).unwrap(),
            SystemId::new(SystemKind::LlReduced, MetricSpec::standard(n), Some(1.2)).unwrap(),
        ];
        for sys in systems {
            let family = family_for(&sys);
            let chart = family.chart.clone();
            let tensor = chart.poisson_tensor();
            let h = chart.hamiltonian();
            for _ in 0..200 {
                let s = chart.sample_state(&mut rng);
                for f in &family.members {
                    let v = tensor.bracket(f, &h, s.as_slice()).abs();
                    assert!(v < 1e-8, "{sys} member {}: |{{f,H}}| = {v}", f.name());
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn gram_rank_parity_observed() {
    for (kind, n, c) in [
        (SystemKind::LlFull, 2, None),
        (SystemKind::LrFull, 3, None),
        (SystemKind::LrReduced, 3, Some(1.0)),
    ] {
        let sys = SystemId::new(kind, MetricSpec::standard(n), c).unwrap();
        let family = family_for(&sys);
        // audit asserts even rank internally
        let report = audit(&family, 40, 37).unwrap();
        assert_eq!(report.gram_rank % 2, 0);
    }
}

#[test]
fn audit_reports_serialize() {
    let sys = SystemId::new(SystemKind::LlFull, MetricSpec::standard(1), None).unwrap();
    let report = audit(&family_for(&sys), 30, 5).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"ddim\":4"));
    assert!(json.contains("\"seed\":5"));
    assert!(json.contains("jacobian_svals"));
}
