// UCB-DUAL against every fixed rank and uniform random ranks on the default
// scenario, median cumulative reward over five seeds.

use fedrank::config::{validate_scenario, ScenarioConfig};
use fedrank::engine::{run_comparative, Policy};
use fedrank::metrics::median;

pub fn run_example() -> fedrank::Result<Vec<(String, f64)>> {
    let scenario = validate_scenario(ScenarioConfig::default_scenario())?;
    let mut policies = vec![Policy::UcbDual];
    policies.extend(scenario.ranks.iter().map(Policy::FixedRank));
    policies.push(Policy::RandomRank);
    let mut rewards = vec![Vec::new(); policies.len()];
    for seed in 1..=5 {
        for (i, r) in run_comparative(&scenario, &policies, seed)?.iter().enumerate() {
            rewards[i].push(r.summary.cumulative_reward);
        }
    }
    Ok(policies.iter().zip(&rewards).map(|(p, r)| (p.to_string(), median(r))).collect())
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    for (policy, reward) in run_example()? {
        println!("{policy:<16} {reward:>10.1}");
    }
    Ok(())
}
