mod common;

use common::{central, check_admm, check_result, load, rel_err};
use fairtrade::dispatch::{
    average, baselines, dual_update, run_admm, social_cost_gap, solve_centralized, verify_price_invariance,
    AdmmConfig, DispatchError, DispatchStatus, Solver,
};
use fairtrade::hub::{local_cost, non_trading_baseline};
use fairtrade::pricing::PriceProfile;
use fairtrade::qp::QpSettings;
use fairtrade::scenario::synth::DAYLIGHT;
use rand::Rng;

#[test]
fn averaging_and_dual_examples() {
    assert_eq!(average(5.0, 3.0), 4.0);
    assert_eq!(dual_update(0.0, 1.0, 5.0, 4.0), 1.0);
    assert_eq!(dual_update(2.0, 0.5, 4.0, 4.0), 2.0);
}

#[test]
fn single_hub_network_is_its_baseline() {
    let mut s = load("threehub.scenario");
    s.hubs.truncate(1);
    s.demand.truncate(1);
    s.irradiance.truncate(1);
    s.links.clear();
    let r = solve_centralized(&s, &PriceProfile::zero(&s), &QpSettings::default()).unwrap();
    let (_, j_nt) = non_trading_baseline(&s, 0, &QpSettings::default()).unwrap();
    assert!(rel_err(r.social_cost, j_nt) <= 1e-8, "{} vs {j_nt}", r.social_cost);
    assert!(r.profile.trades.pairs.is_empty());
}

#[test]
fn toy_network_matches_hand_solution() {
    let s = load("two_hub_toy.scenario");
    let (producer, consumer) = (s.hub_index("producer").unwrap(), s.hub_index("consumer").unwrap());
    let (gap, r) = social_cost_gap(&s, &PriceProfile::uniform(&s, 0.18), &central()).unwrap();
    assert!((r.profile.trades.get(consumer, producer, 0) - 25.0).abs() <= 1e-6);
    assert!((gap.w - -2.25).abs() <= 1e-8, "W = {}", gap.w);
    assert!((gap.w_nt - -1.0).abs() <= 1e-8, "W_nt = {}", gap.w_nt);
    assert!(check_result(&s, &r).holds());
}

#[test]
fn toy_admm_agrees_with_central() {
    let s = load("two_hub_toy.scenario");
    let c = PriceProfile::uniform(&s, 0.18);
    let reference = solve_centralized(&s, &c, &QpSettings::default()).unwrap();
    let run = run_admm(&s, &c, &AdmmConfig::for_scenario(&s)).unwrap();
    assert_eq!(run.result.status, DispatchStatus::Converged);
    assert!(rel_err(run.result.social_cost, reference.social_cost) <= 1e-4);
    assert!(run.messages_per_iteration.iter().all(|&m| m == 2));
    assert_eq!(run.result.message_count, 2 * run.result.iterations);
    assert!(check_admm(&s, &run).holds(), "{:?}", check_admm(&s, &run));

    // the dual-residual stop leaves a trade error of about tol/(1 − rate);
    // a tighter tolerance recovers the hand solution
    let tight = AdmmConfig {
        tol: 1e-8,
        max_iter: 100_000,
        ..AdmmConfig::for_scenario(&s)
    };
    let run = run_admm(&s, &c, &tight).unwrap();
    assert!(run.result.profile.trades.max_deviation(&reference.profile.trades) <= 1e-3);
}

/// `Σ_copies (p̂ − p)² + copies·Σ (p^k − p^{k−1})²` per iteration, rebuilt
/// from the message log alone. For exact local solves this is ADMM's
/// monotone quantity `‖Δλ‖²/ρ² + ‖Δz‖²_E` (up to the constant `ρ`).
fn combined_residuals(s: &fairtrade::scenario::Scenario, messages: &[fairtrade::dispatch::RoundMessage]) -> Vec<f64> {
    use std::collections::BTreeMap;
    let mut by_iter: BTreeMap<usize, BTreeMap<(String, String), &fairtrade::dispatch::RoundMessage>> = BTreeMap::new();
    for m in messages {
        by_iter.entry(m.iteration).or_default().insert((m.sender.clone(), m.receiver.clone()), m);
    }
    let hh = s.horizon_hours;
    let mut previous: Option<Vec<f64>> = None;
    let mut out = Vec::new();
    for msgs in by_iter.values() {
        let mut z = Vec::new();
        let mut primal = 0.0;
        for pair in s.pairs() {
            let (a, b) = (s.hubs[pair.i].id.clone(), s.hubs[pair.j].id.clone());
            let from_a = msgs[&(a.clone(), b.clone())];
            let from_b = msgs[&(b, a)];
            for h in 0..hh {
                let zh = 0.5 * (from_a.forward[h] + from_b.reverse[h]);
                primal += (from_a.forward[h] - zh).powi(2)
                    + (from_a.reverse[h] + zh).powi(2)
                    + (from_b.forward[h] + zh).powi(2)
                    + (from_b.reverse[h] - zh).powi(2);
                z.push(zh);
            }
        }
        let dual = previous
            .as_ref()
            .map_or(0.0, |p| 4.0 * p.iter().zip(&z).map(|(u, v)| (u - v).powi(2)).sum::<f64>());
        out.push(primal + dual);
        previous = Some(z);
    }
    out
}

fn assert_monotone_tail(m: &[f64]) {
    let skip = m.len() / 10;
    let floor = 1e-12 * m[skip];
    for (k, w) in m[skip..].windows(2).enumerate() {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-6) + floor,
            "combined residual rose at iteration {}: {:e} -> {:e}",
            skip + k + 2,
            w[0],
            w[1]
        );
    }
}

#[test]
fn toy_combined_residual_is_monotone() {
    let s = load("two_hub_toy.scenario");
    let cfg = AdmmConfig {
        record_messages: true,
        ..AdmmConfig::for_scenario(&s)
    };
    let run = run_admm(&s, &PriceProfile::uniform(&s, 0.18), &cfg).unwrap();
    let m = combined_residuals(&s, &run.messages);
    assert_eq!(m.len(), run.result.iterations);
    assert_monotone_tail(&m);
}

#[test]
fn admm_is_deterministic() {
    let s = load("two_hub_toy.scenario");
    let c = PriceProfile::uniform(&s, 0.1);
    let cfg = AdmmConfig {
        record_messages: true,
        ..AdmmConfig::for_scenario(&s)
    };
    let a = run_admm(&s, &c, &cfg).unwrap();
    let b = run_admm(&s, &c, &cfg).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.messages, b.messages);
}

#[test]
fn admm_rejects_nonpositive_penalty() {
    let s = load("two_hub_toy.scenario");
    let cfg = AdmmConfig {
        rho: 0.0,
        ..AdmmConfig::for_scenario(&s)
    };
    assert!(matches!(run_admm(&s, &PriceProfile::zero(&s), &cfg), Err(DispatchError::Config(_))));
}

#[test]
fn admm_reports_iteration_limit() {
    let s = load("two_hub_toy.scenario");
    let cfg = AdmmConfig {
        max_iter: 2,
        ..AdmmConfig::for_scenario(&s)
    };
    let run = run_admm(&s, &PriceProfile::zero(&s), &cfg).unwrap();
    assert_eq!(run.result.status, DispatchStatus::MaxIterExceeded);
    assert_eq!(run.result.iterations, 2);
    assert_eq!(run.result.trace.len(), 2);
}

#[test]
fn disconnected_network_messages_follow_links() {
    let s = load("disconnected.scenario");
    let c = PriceProfile::uniform(&s, 0.18);
    let run = run_admm(&s, &c, &AdmmConfig::for_scenario(&s)).unwrap();
    let links = s.pairs().len();
    assert!(run.messages_per_iteration.iter().all(|&m| m == 2 * links));
    let reference = solve_centralized(&s, &c, &QpSettings::default()).unwrap();
    assert!(rel_err(run.result.social_cost, reference.social_cost) <= 1e-4);
}

#[test]
fn identical_prices_give_identical_minimizers() {
    let s = load("threehub.scenario");
    let c = PriceProfile::uniform(&s, 0.18);
    let (report, _) = verify_price_invariance(&s, &[c.clone(), c], 1e-3, &central()).unwrap();
    assert_eq!(report.max_trade_deviation, 0.0);
    assert_eq!(report.max_setpoint_deviation, 0.0);
    assert!(report.passed);
}

#[test]
fn zero_and_positive_prices_give_the_same_trades() {
    let s = load("threehub.scenario");
    let prices = [PriceProfile::zero(&s), PriceProfile::uniform(&s, 0.18)];
    let (report, _) = verify_price_invariance(&s, &prices, 1e-3, &central()).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn invariance_needs_two_profiles() {
    let s = load("two_hub_toy.scenario");
    assert!(verify_price_invariance(&s, &[PriceProfile::zero(&s)], 1e-3, &central()).is_err());
}

#[test]
fn random_price_profiles_leave_trades_unchanged() {
    let s = load("threehub.scenario");
    let mut rng = common::rng(11);
    let mut prices = vec![PriceProfile::zero(&s)];
    for _ in 0..3 {
        let mut c = PriceProfile::zero(&s);
        for p in &mut c.pairs {
            for v in &mut p.values {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        prices.push(c);
    }
    let (report, results) = verify_price_invariance(&s, &prices, 1e-3, &central()).unwrap();
    assert!(report.passed, "{report:?}");
    for r in &results {
        assert!(check_result(&s, r).holds(), "{:?}", check_result(&s, r));
    }
}

#[test]
fn self_sufficient_network_does_not_trade() {
    let s = load("self_sufficient.scenario");
    let (gap, r) = social_cost_gap(&s, &PriceProfile::zero(&s), &central()).unwrap();
    assert!(r.profile.trades.max_abs() <= 1e-6);
    assert!(gap.reduction_fraction.abs() <= 1e-9, "{}", gap.reduction_fraction);
}

#[test]
fn trading_never_raises_social_cost() {
    for name in ["threehub", "two_hub_toy", "self_sufficient", "disconnected"] {
        let s = load(&format!("{name}.scenario"));
        for price in [0.0, 0.1, 0.18, 0.2] {
            let (gap, r) = social_cost_gap(&s, &PriceProfile::uniform(&s, price), &central()).unwrap();
            assert!(gap.w <= gap.w_nt + 1e-6 * gap.w_nt.abs(), "{name} at {price}: {gap:?}");
            assert!(check_result(&s, &r).holds(), "{name}: {:?}", check_result(&s, &r));
        }
    }
}

#[test]
fn threehub_trades_only_without_sun() {
    let s = load("threehub.scenario");
    let (gap, r) = social_cost_gap(&s, &PriceProfile::uniform(&s, 0.18), &central()).unwrap();
    assert!(gap.reduction_fraction > 0.0 && gap.reduction_fraction < 0.10, "{}", gap.reduction_fraction);
    let traded = |h: usize| r.profile.trades.pairs.iter().any(|p| p.values[h].abs() > 1e-6);
    assert!((0..24).any(traded));
    for h in DAYLIGHT {
        assert!(!traded(h), "trade at daylight hour {h}");
    }
    // hub 1 is the exporter
    assert!((0..24).all(|h| r.profile.trades.net_import(0, h) <= 1e-6));
}

#[test]
fn social_cost_is_sum_of_hub_costs_and_prices_cancel() {
    let s = load("threehub.scenario");
    let c = PriceProfile::uniform(&s, 0.2);
    let r = solve_centralized(&s, &c, &QpSettings::default()).unwrap();
    let sum: f64 = r.hub_costs().iter().sum();
    assert!(rel_err(r.social_cost, sum) <= 1e-9);

    let zero = PriceProfile::zero(&s);
    let w0: f64 = (0..3)
        .map(|i| local_cost(&s, i, &r.profile.hubs[i], &r.profile.trades, &zero).total)
        .sum();
    assert!((w0 - r.social_cost).abs() <= 1e-9 * r.social_cost.abs());
    let payments: f64 = r.costs.iter().map(|c| c.trade_payments).sum();
    assert!(payments.abs() <= 1e-9 * r.social_cost.abs());
}

#[test]
fn baselines_match_per_hub_solves() {
    let s = load("threehub.scenario");
    let j = baselines(&s, &QpSettings::default()).unwrap();
    let total: f64 = j.iter().sum();
    assert!(j.iter().all(|v| *v > 0.0));
    let (gap, _) = social_cost_gap(&s, &PriceProfile::zero(&s), &Solver::Central(QpSettings::default())).unwrap();
    assert!(rel_err(gap.w_nt, total) <= 1e-12);
}

#[test]
fn threehub_admm_matches_central() {
    let s = load("threehub.scenario");
    let c = PriceProfile::uniform(&s, 0.18);
    let reference = solve_centralized(&s, &c, &QpSettings::default()).unwrap();
    let cfg = AdmmConfig {
        record_messages: true,
        ..AdmmConfig::for_scenario(&s)
    };
    let run = run_admm(&s, &c, &cfg).unwrap();
    let r = &run.result;
    assert_eq!(r.status, DispatchStatus::Converged);
    assert!(rel_err(r.social_cost, reference.social_cost) <= 1e-4);
    let n = s.num_hubs();
    assert!(run.messages_per_iteration.iter().all(|&m| m == n * (n - 1)));
    assert_eq!(r.message_count, n * (n - 1) * r.iterations);
    let check = check_admm(&s, &run);
    assert!(check.holds(), "{check:?}");

    assert_eq!(run.messages.len(), r.message_count);
    assert_monotone_tail(&combined_residuals(&s, &run.messages));
}

