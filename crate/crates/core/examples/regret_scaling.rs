// Does regret grow like sqrt(M ln M) and violation like sqrt(M)? Medians over
// five seeds at three horizons, with an always-worst-arm control that must
// fail the same check.

use fedrank::cli::{verify_theorem, TheoremReport};
use fedrank::metrics::SynthTuning;

pub fn run_example() -> fedrank::Result<TheoremReport> {
    verify_theorem(&[1024, 4096, 16384], 5, 1, SynthTuning::default(), 2.0)
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    let report = run_example()?;
    println!("regret ratios     {:?}", report.ucb_dual.regret_ratios);
    println!("violation ratios  {:?}", report.ucb_dual.violation_ratios);
    println!("control ratios    {:?}", report.always_worst.regret_ratios);
    println!("passed: {}", report.passed);
    Ok(())
}
