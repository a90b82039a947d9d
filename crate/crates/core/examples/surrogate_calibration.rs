// Fit the saturating accuracy curve to measured (rank, accuracy) anchors and
// sample a few noisy rounds from it.

use fedrank::cli::table_anchors;
use fedrank::domain::{Rank, RoundIndex};
use fedrank::rng::{keyed, Stream};
use fedrank::surrogate::{fit_curve, AccuracyCurve, CurveFit};

pub fn run_example() -> fedrank::Result<(CurveFit, AccuracyCurve)> {
    let fit = fit_curve(&table_anchors())?;
    let curve = fit.curve(AccuracyCurve::SEQ.noise_sigma, AccuracyCurve::SEQ.progress_rate);
    Ok((fit, curve))
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    let (fit, curve) = run_example()?;
    println!("a_max {:.5}  a_gap {:.5}  c {:.5}  rms {:.2e}", fit.a_max, fit.a_gap, fit.c_rate, fit.rms_residual);
    for (rank, measured) in table_anchors() {
        println!("rank {:>3}: measured {:.4}, fitted {:.4}", rank, measured, curve.converged(rank));
    }
    let rank = Rank::new(8)?;
    let mut rng = keyed(1, Stream::Accuracy, [0, 0, 0]);
    let mut m = RoundIndex::first();
    for _ in 0..5 {
        println!("round {}: q = {:.4}", m.get(), curve.accuracy(rank, m, &mut rng));
        m = m.next();
    }
    Ok(())
}
