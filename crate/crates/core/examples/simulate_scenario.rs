// One UCB-DUAL run of the built-in three-task scenario, writing the same
// files as `fedrank run` into a temporary directory.

use std::path::PathBuf;

use fedrank::cli::write_run;
use fedrank::config::{validate_scenario, ScenarioConfig};
use fedrank::engine::{run_with_seed, Policy, RunSummary};

pub fn run_example() -> fedrank::Result<(RunSummary, PathBuf)> {
    let scenario = validate_scenario(ScenarioConfig::default_scenario())?;
    let result = run_with_seed(&scenario, &Policy::UcbDual, scenario.seed())?;
    let dir = std::env::temp_dir().join(format!("fedrank-example-{}", std::process::id()));
    write_run(&scenario, &result, &dir)?;
    Ok((result.summary, dir))
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    let (summary, dir) = run_example()?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("outputs in {}", dir.display());
    Ok(())
}
