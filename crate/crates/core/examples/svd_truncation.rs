// Truncating a random update matrix to LoRA factors and comparing the residual
// with the discarded singular values.

use fedrank::domain::Rank;
use fedrank::lowrank::{singular_values, svd_truncate, truncation_error, DenseMatrix};
use fedrank::rng::{keyed, Stream};
use rand_distr::{Distribution, StandardNormal};

pub struct TruncationRow {
    pub rank: u32,
    pub residual: f64,
    /// sqrt of the sum of squared singular values past `rank`.
    pub tail: f64,
}

pub fn run_example() -> fedrank::Result<Vec<TruncationRow>> {
    let mut rng = keyed(11, Stream::GlobalInit, [0, 0, 0]);
    let delta = DenseMatrix::from_fn(64, 64, |_, _| StandardNormal.sample(&mut rng));
    let sigma = singular_values(&delta);
    let mut rows = Vec::new();
    for r in [1u32, 2, 4, 8, 16, 32, 64] {
        let adapter = svd_truncate(&delta, Rank::new(r)?)?;
        let tail = sigma[r as usize..].iter().map(|s| s * s).sum::<f64>().sqrt();
        rows.push(TruncationRow { rank: r, residual: truncation_error(&delta, &adapter)?, tail });
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> fedrank::Result<()> {
    for row in run_example()? {
        println!("rank {:>2}  |Δ - BA| = {:>10.6}  tail = {:>10.6}", row.rank, row.residual, row.tail);
    }
    Ok(())
}
