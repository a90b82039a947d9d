// UCB-DUAL on a stationary three-agent, four-arm instance, against uniform
// random play, with regret measured against the best fixed arm per agent.

use fedrank::metrics::{oracle_best_fixed, regret_curve, simulate, StationaryInstance, SynthPolicy, SynthTuning, DEFAULT_ORACLE_LIMIT};

pub struct Outcome {
    pub ucb_regret: f64,
    pub ucb_violation: f64,
    pub uniform_regret: f64,
    pub best_arms: Vec<usize>,
}

pub fn run_example() -> fedrank::Result<Outcome> {
    let instance = StationaryInstance::default_with_seed(3);
    let horizon = 2000;
    let series = |policy| -> fedrank::Result<_> {
        let log = simulate(&instance, policy, horizon, SynthTuning::default())?;
        let oracle = oracle_best_fixed(&instance, &log, DEFAULT_ORACLE_LIMIT)?;
        Ok((regret_curve(&instance, &log, &oracle)?, oracle))
    };
    let (ucb, oracle) = series(SynthPolicy::UcbDual)?;
    let (uniform, _) = series(SynthPolicy::Uniform)?;
    Ok(Outcome {
        ucb_regret: ucb.total_regret(),
        ucb_violation: ucb.total_violation(),
        uniform_regret: uniform.total_regret(),
        best_arms: oracle.iter().map(|f| f.arm).collect(),
    })
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    let o = run_example()?;
    println!("best fixed arms per agent: {:?}", o.best_arms);
    println!("UCB-DUAL regret {:.1}, violation {:.1}", o.ucb_regret, o.ucb_violation);
    println!("uniform  regret {:.1}", o.uniform_regret);
    Ok(())
}
