// Vehicles with short dwell times leave RSU coverage mid-round. Each
// predicted departure is settled by the cheapest of early upload, migration
// to an idle vehicle in the zone, or abandoning the update.

use fedrank::config::{validate_scenario, ScenarioConfig};
use fedrank::engine::{run_with_seed, ClientOutcome, FallbackCounts, Policy};
use fedrank::mobility::FallbackStrategy;

pub struct FallbackEvent {
    pub round: u32,
    pub vehicle: String,
    pub progress: f64,
    pub strategy: Option<FallbackStrategy>,
    pub outcome: ClientOutcome,
}

pub fn run_example() -> fedrank::Result<(FallbackCounts, Vec<FallbackEvent>)> {
    let config = ScenarioConfig::default_scenario().with_overrides(&[
        "mobility.source.params.dwell_min_s=20".into(),
        "mobility.source.params.dwell_max_s=90".into(),
        "mobility.departure_horizon_s=60".into(),
    ])?;
    let scenario = validate_scenario(config)?;
    let result = run_with_seed(&scenario, &Policy::FixedRank(scenario.ranks.max()), 4)?;
    let mut events = Vec::new();
    for record in &result.records {
        for task in &record.tasks {
            for c in task.clients.iter().filter(|c| c.outcome != ClientOutcome::Completed) {
                events.push(FallbackEvent {
                    round: record.round,
                    vehicle: scenario.vehicles[c.vehicle.index()].name.clone(),
                    progress: c.progress,
                    strategy: c.fallback.map(|f| f.strategy),
                    outcome: c.outcome,
                });
            }
        }
    }
    Ok((result.summary.fallbacks, events))
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    let (counts, events) = run_example()?;
    for e in &events {
        println!(
            "round {:>2} {:<9} flagged with {:>5.1}% of its work done by exit: {:?} -> {:?}",
            e.round,
            e.vehicle,
            100.0 * e.progress,
            e.strategy,
            e.outcome
        );
    }
    println!("{counts:?}");
    Ok(())
}
