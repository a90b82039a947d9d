//! Reference implementations the library is checked against. Nothing here
//! calls into the code under test beyond building inputs.

#![allow(dead_code)]

use fedrank::config::{validate_scenario, ScenarioConfig, ValidatedScenario};
use fedrank::domain::Rank;
use fedrank::engine::{run_with_seed, Policy};

/// Singular values of a row-major `rows × cols` matrix by one-sided Jacobi
/// rotations, sorted descending.
pub fn jacobi_singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols);
    // work on columns of the taller orientation
    let (m, n, mut a) = if rows >= cols {
        let mut cm = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                cm[j * rows + i] = data[i * cols + j];
            }
        }
        (rows, cols, cm)
    } else {
        (cols, rows, data.to_vec())
    };
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = (p * m, q * m);
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..m {
                    alpha += a[cp + k] * a[cp + k];
                    beta += a[cq + k] * a[cq + k];
                    gamma += a[cp + k] * a[cq + k];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                // signum(0.0) is 1, giving the 45° rotation
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (a[cp + k], a[cq + k]);
                    a[cp + k] = c * x - s * y;
                    a[cq + k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| a[j * m..(j + 1) * m].iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// One task on one RSU with `vehicles` parked clients, candidate ranks
/// `ranks` and `rounds` rounds. Parked clients take part in every round.
pub fn parked_scenario(vehicles: usize, ranks: &[u32], rounds: u32) -> ValidatedScenario {
    let mut c = ScenarioConfig::default_scenario();
    c.scenario.ranks = ranks.to_vec();
    c.scenario.rounds = rounds;
    c.rsus.truncate(1);
    c.tasks.truncate(1);
    let task = c.tasks[0].name.clone();
    c.vehicles.retain(|v| v.task.as_deref() == Some(task.as_str()));
    c.vehicles.truncate(vehicles);
    for v in &mut c.vehicles {
        v.trajectory = None;
    }
    c.budget.e_total = 20;
    c.budget.reserve = 0;
    validate_scenario(c).expect("parked scenario is valid")
}

/// Per-vehicle best fixed arm against the per-round prices `lambdas`, found by
/// running every joint fixed assignment through the engine and scoring each
/// vehicle on its own logged decisions. Ties go to the lower arm.
pub fn exhaustive_best_arms(scenario: &ValidatedScenario, seed: u64, lambdas: &[f64]) -> Vec<usize> {
    let v = scenario.vehicles.len();
    let arms = scenario.ranks.len();
    // a vehicle's score must not depend on what the others play
    let mut table: Vec<Vec<Option<f64>>> = vec![vec![None; arms]; v];
    for code in 0..arms.pow(v as u32) {
        let mut digits = Vec::with_capacity(v);
        let mut rest = code;
        for _ in 0..v {
            digits.push(rest % arms);
            rest /= arms;
        }
        let ranks: Vec<Rank> = digits.iter().map(|&d| scenario.ranks.get(d)).collect();
        let result = run_with_seed(scenario, &Policy::Assigned(ranks), seed).expect("replay runs");
        let mut score = vec![0.0; v];
        for (record, &lambda) in result.records.iter().zip(lambdas) {
            for c in &record.tasks[0].clients {
                score[c.vehicle.index()] += c.decision.reward - lambda * c.decision.energy;
            }
        }
        for (vehicle, &arm) in digits.iter().enumerate() {
            match table[vehicle][arm] {
                Some(prev) => assert_eq!(prev, score[vehicle], "vehicle {vehicle} arm {arm} coupled to others"),
                None => table[vehicle][arm] = Some(score[vehicle]),
            }
        }
    }
    table
        .iter()
        .map(|row| {
            let mut best = 0;
            for arm in 1..arms {
                if row[arm].unwrap() > row[best].unwrap() {
                    best = arm;
                }
            }
            best
        })
        .collect()
}
