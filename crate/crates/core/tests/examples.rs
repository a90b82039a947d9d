// Every example runs and shows what it claims to show.

mod cost_model {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cost_model.rs"));
}
mod svd_truncation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/svd_truncation.rs"));
}
mod surrogate_calibration {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/surrogate_calibration.rs"));
}
mod ucb_dual {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ucb_dual.rs"));
}
mod energy_allocation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/energy_allocation.rs"));
}
mod mobility_fallback {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mobility_fallback.rs"));
}
mod simulate_scenario {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/simulate_scenario.rs"));
}

use approx::assert_relative_eq;
use fedrank::engine::ClientOutcome;

#[test]
fn cost_model_grows_with_rank() {
    let rows = cost_model::run_example().unwrap();
    assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 8, 200]);
    for w in rows.windows(2) {
        assert!(w[1].accuracy > w[0].accuracy);
        assert!(w[1].latency > w[0].latency);
        assert!(w[1].energy > w[0].energy);
    }
}

#[test]
fn svd_residual_equals_tail() {
    let rows = svd_truncation::run_example().unwrap();
    for r in &rows {
        assert_relative_eq!(r.residual, r.tail.max(0.0), epsilon = 1e-9, max_relative = 1e-9);
    }
    assert!(rows.windows(2).all(|w| w[1].residual <= w[0].residual));
}

#[test]
fn surrogate_fit_is_exact_on_three_anchors() {
    let (fit, curve) = surrogate_calibration::run_example().unwrap();
    assert!(fit.max_abs_error < 1e-9);
    assert!(curve.validate().is_ok());
}

#[test]
fn ucb_dual_beats_uniform() {
    let o = ucb_dual::run_example().unwrap();
    assert_eq!(o.best_arms.len(), 3);
    assert!(o.ucb_regret * 3.0 < o.uniform_regret, "{} vs {}", o.ucb_regret, o.uniform_regret);
    assert!(o.ucb_violation >= 0.0);
}

#[test]
fn reserve_is_handed_out_on_period_boundaries() {
    let trace = energy_allocation::run_example().unwrap();
    assert_eq!(trace[0], [2.0, 2.0, 2.0]);
    assert_eq!(trace[1], trace[0], "round 1 is off-period");
    assert_ne!(trace[2], trace[1]);
    for row in &trace {
        assert!(row.iter().all(|&e| e <= 7.0));
        assert!(row.iter().sum::<f64>() <= 10.0);
    }
}

#[test]
fn short_dwell_triggers_fallbacks() {
    let (counts, events) = mobility_fallback::run_example().unwrap();
    assert!(!events.is_empty());
    let total = counts.early_upload + counts.migrated + counts.abandoned + counts.lost;
    assert_eq!(total as usize, events.len());
    for e in &events {
        assert!((0.0..=1.0).contains(&e.progress));
        if e.outcome == ClientOutcome::Migrated {
            assert_eq!(e.strategy, Some(fedrank::mobility::FallbackStrategy::Migration));
        }
    }
}

#[test]
fn simulate_writes_outputs() {
    let (summary, dir) = simulate_scenario::run_example().unwrap();
    assert_eq!(summary.rounds, 20);
    assert_eq!(summary.decisions, 180);
    for f in ["config.toml", "rounds.csv", "decisions.csv", "budget.csv", "regret.csv", "summary.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    std::fs::remove_dir_all(dir).unwrap();
}
