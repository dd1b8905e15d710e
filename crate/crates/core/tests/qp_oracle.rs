mod common;

use common::{active_set_oracle, random_qp, rel_err, rng};
use fairtrade::qp::{check_kkt, solve_qp, QpStatus};
use rand::Rng;

#[test]
fn random_qps_match_active_set_enumeration() {
    let mut rng = rng(7);
    for case in 0..120 {
        let n = rng.random_range(2..=20);
        let m_eq = rng.random_range(0..=3.min(n - 1));
        let m_in = rng.random_range(1..=10);
        let singular = case % 3 == 0;
        let p = random_qp(&mut rng, n, m_eq, m_in, singular);
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "case {case}: {:?}", s.residuals);
        let r = check_kkt(&p, &s).unwrap();
        assert!(r.all_within(1e-8), "case {case}: {r:?}");
        let oracle = active_set_oracle(&p).expect("feasible by construction");
        assert!(rel_err(s.objective, oracle) <= 1e-6, "case {case}: {} vs {oracle}", s.objective);
        // strong duality at the reported multipliers
        assert!((s.objective - s.dual_objective(&p)).abs() <= 1e-6 * (1.0 + s.objective.abs()));
    }
}

#[test]
fn scaling_the_objective_scales_the_duals() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let p = random_qp(&mut rng, 8, 2, 5, false);
        let base = solve_qp(&p, 1e-10, 50_000).unwrap();
        let alpha = 3.5;
        let mut scaled = p.clone();
        scaled.quad *= alpha;
        scaled.lin *= alpha;
        let s = solve_qp(&scaled, 1e-10, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((&s.x - &base.x).amax() <= 1e-7);
        assert!((&s.eq_duals - &base.eq_duals * alpha).amax() <= 1e-6);
        assert!((&s.ineq_duals - &base.ineq_duals * alpha).amax() <= 1e-6);
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = rng(5);
    let p = random_qp(&mut rng, 12, 2, 8, false);
    let a = solve_qp(&p, 1e-8, 50_000).unwrap();
    let b = solve_qp(&p, 1e-8, 50_000).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.ineq_duals, b.ineq_duals);
}
