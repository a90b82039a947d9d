//! Calibrated accuracy-versus-rank response standing in for real fine-tuning.
//!
//! Converged accuracy saturates exponentially in rank,
//! `a_max − a_gap · exp(−c_rate · η)`, and is reached over rounds through the
//! factor `1 − exp(−progress_rate · m)`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Rank, RoundIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyCurve {
    pub a_max: f64,
    pub a_gap: f64,
    pub c_rate: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub progress_rate: f64,
}

impl AccuracyCurve {
    /// Sequence classification, fitted to the three measured (rank, best
    /// accuracy) points 1 → 73.329 %, 8 → 81.443 %, 200 → 83.069 %.
    pub const SEQ: AccuracyCurve = AccuracyCurve {
        a_max: 0.830_69,
        a_gap: 0.125_782_895_439_708,
        c_rate: 0.255_731_158_075_49,
        noise_sigma: 0.005,
        progress_rate: 3.0,
    };

    /// Token classification: higher ceiling, more rank-hungry.
    pub const TOKEN: AccuracyCurve = AccuracyCurve {
        a_max: 0.90,
        a_gap: 0.16,
        c_rate: 0.20,
        noise_sigma: 0.005,
        progress_rate: 2.5,
    };

    /// Multiple choice: lower ceiling, saturates early.
    pub const CHOICE: AccuracyCurve = AccuracyCurve {
        a_max: 0.70,
        a_gap: 0.12,
        c_rate: 0.35,
        noise_sigma: 0.008,
        progress_rate: 3.5,
    };

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.a_max > 0.0 && self.a_max <= 1.0) {
            return Err("a_max must lie in (0, 1]".into());
        }
        if !(self.a_gap.is_finite() && self.a_gap >= 0.0) {
            return Err("a_gap must be ≥ 0".into());
        }
        if !(self.c_rate.is_finite() && self.c_rate > 0.0) {
            return Err("c_rate must be > 0".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err("noise_sigma must be ≥ 0".into());
        }
        if !(self.progress_rate.is_finite() && self.progress_rate > 0.0) {
            return Err("progress_rate must be > 0".into());
        }
        Ok(())
    }

    /// Accuracy after unlimited training at `eta`.
    pub fn converged(&self, eta: Rank) -> f64 {
        self.a_max - self.a_gap * (-self.c_rate * eta.get() as f64).exp()
    }

    /// Noise-free accuracy after `rounds` (possibly fractional) rounds.
    pub fn mean_at(&self, eta: Rank, rounds: f64) -> f64 {
        (self.converged(eta) * (1.0 - (-self.progress_rate * rounds).exp())).clamp(0.0, 1.0)
    }

    /// Observed accuracy in round `m`, with Gaussian noise drawn from `rng`.
    pub fn accuracy<R: Rng + ?Sized>(&self, eta: Rank, m: RoundIndex, rng: &mut R) -> f64 {
        let base = self.converged(eta) * (1.0 - (-self.progress_rate * m.get() as f64).exp());
        let noise = if self.noise_sigma > 0.0 {
            Normal::new(0.0, self.noise_sigma)
                .expect("validated sigma")
                .sample(rng)
        } else {
            0.0
        };
        (base + noise).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveFit {
    pub a_max: f64,
    pub a_gap: f64,
    pub c_rate: f64,
    /// Root-mean-square residual over the anchors.
    pub rms_residual: f64,
    pub max_abs_error: f64,
}

impl CurveFit {
    /// Fitted rank response with the given round dynamics.
    pub fn curve(&self, noise_sigma: f64, progress_rate: f64) -> AccuracyCurve {
        AccuracyCurve {
            a_max: self.a_max,
            a_gap: self.a_gap,
            c_rate: self.c_rate,
            noise_sigma,
            progress_rate,
        }
    }
}

const C_MIN: f64 = 1e-4;
const C_MAX: f64 = 20.0;
const GRID: usize = 400;
const MAX_ITERS: usize = 200;

/// For a fixed rate the model is linear in `(a_max, a_gap)`; solve that by
/// least squares and return the residual sum of squares.
fn linear_part(anchors: &[(f64, f64)], c: f64) -> Option<(f64, f64, f64)> {
    let n = anchors.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, q) in anchors {
        let x = -(-c * r).exp();
        sx += x;
        sxx += x * x;
        sy += q;
        sxy += x * q;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let gap = (n * sxy - sx * sy) / det;
    let a_max = (sy - gap * sx) / n;
    let ssr = anchors
        .iter()
        .map(|&(r, q)| {
            let e = a_max - gap * (-c * r).exp() - q;
            e * e
        })
        .sum();
    Some((a_max, gap, ssr))
}

/// Least-squares fit of `(a_max, a_gap, c_rate)` to `(rank, accuracy)` anchors.
///
/// The rate is found by a log-spaced grid scan followed by golden-section
/// refinement; the two linear parameters are solved exactly for each rate.
pub fn fit_curve(anchors: &[(Rank, f64)]) -> Result<CurveFit> {
    if anchors.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "curve fit needs at least 3 anchors, got {}",
            anchors.len()
        )));
    }
    let mut ranks: Vec<u32> = anchors.iter().map(|(r, _)| r.get()).collect();
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.len() != anchors.len() {
        return Err(Error::InvalidArgument("curve anchors need distinct ranks".into()));
    }
    let pts: Vec<(f64, f64)> = anchors.iter().map(|(r, q)| (r.get() as f64, *q)).collect();
    let ssr = |log_c: f64| linear_part(&pts, log_c.exp()).map_or(f64::INFINITY, |v| v.2);

    let (lo, hi) = (C_MIN.ln(), C_MAX.ln());
    let step = (hi - lo) / (GRID - 1) as f64;
    let best = (0..GRID)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| ssr(*a).total_cmp(&ssr(*b)))
        .expect("non-empty grid");
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (ssr(x1), ssr(x2));
    let mut iters = 0;
    while b - a > 1e-13 {
        if iters == MAX_ITERS {
            let residual = (f1.min(f2) / pts.len() as f64).sqrt();
            return Err(Error::FitDiverged { residual });
        }
        iters += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = ssr(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = ssr(x2);
        }
    }
    let c = (0.5 * (a + b)).exp();
    let (a_max, a_gap, total) = linear_part(&pts, c).ok_or(Error::FitDiverged { residual: f64::NAN })?;
    if !total.is_finite() {
        return Err(Error::FitDiverged { residual: f64::INFINITY });
    }
    let max_abs_error = pts
        .iter()
        .map(|&(r, q)| (a_max - a_gap * (-c * r).exp() - q).abs())
        .fold(0.0, f64::max);
    Ok(CurveFit {
        a_max,
        a_gap,
        c_rate: c,
        rms_residual: (total / pts.len() as f64).sqrt(),
        max_abs_error,
    })
}

/// Reads `rank,accuracy` rows (optional header). Accuracies given in percent
/// (any value above 1) are converted to fractions.
pub fn load_anchors(path: &Path) -> Result<Vec<(Rank, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Parse(format!("anchor row {} needs rank,accuracy", line + 1)));
        }
        let rank: u32 = match record[0].parse() {
            Ok(r) => r,
            Err(_) if line == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("anchor row {}: bad rank", line + 1))),
        };
        let acc: f64 = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("anchor row {}: bad accuracy", line + 1)))?;
        out.push((Rank::new(rank)?, acc));
    }
    if out.iter().any(|(_, a)| *a > 1.0) {
        for (_, a) in &mut out {
            *a /= 100.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rank(v: u32) -> Rank {
        Rank::new(v).unwrap()
    }

    fn table_anchors() -> Vec<(Rank, f64)> {
        vec![(rank(1), 0.73329), (rank(8), 0.81443), (rank(200), 0.83069)]
    }

    #[test]
    fn seq_default_hits_measured_points() {
        for (r, q) in table_anchors() {
            assert!((AccuracyCurve::SEQ.converged(r) - q).abs() <= 0.005);
        }
        // large-round limit of the noise-free path
        let q = AccuracyCurve::SEQ.mean_at(rank(8), 1e6);
        assert!((q - 0.81443).abs() <= 0.005);
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let curve = AccuracyCurve { noise_sigma: 0.0, ..AccuracyCurve::SEQ };
        let m = RoundIndex::new(3).unwrap();
        let a = curve.accuracy(rank(4), m, &mut ChaCha8Rng::seed_from_u64(1));
        let b = curve.accuracy(rank(4), m, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
    }

    #[test]
    fn untrained_is_zero() {
        assert_eq!(AccuracyCurve::SEQ.mean_at(rank(16), 0.0), 0.0);
    }

    #[test]
    fn default_curves_valid() {
        for c in [AccuracyCurve::SEQ, AccuracyCurve::TOKEN, AccuracyCurve::CHOICE] {
            c.validate().unwrap();
        }
        assert!(AccuracyCurve { a_max: 1.2, ..AccuracyCurve::SEQ }.validate().is_err());
    }

    #[test]
    fn diminishing_returns() {
        let c = AccuracyCurve::SEQ;
        assert!(c.converged(rank(8)) - c.converged(rank(1)) > c.converged(rank(200)) - c.converged(rank(8)));
    }

    #[test]
    fn fit_exact_model() {
        let truth = AccuracyCurve { a_max: 0.9, a_gap: 0.3, c_rate: 0.4, ..AccuracyCurve::SEQ };
        let anchors: Vec<_> = [1, 2, 4, 8, 16].iter().map(|&r| (rank(r), truth.converged(rank(r)))).collect();
        let fit = fit_curve(&anchors).unwrap();
        assert!(fit.rms_residual <= 1e-9, "{fit:?}");
        assert!((fit.c_rate - 0.4).abs() < 1e-6);
    }

    #[test]
    fn fit_table_anchors() {
        let fit = fit_curve(&table_anchors()).unwrap();
        assert!(fit.max_abs_error <= 0.005);
        assert!((fit.a_max - AccuracyCurve::SEQ.a_max).abs() < 1e-6);
        assert!((fit.c_rate - AccuracyCurve::SEQ.c_rate).abs() < 1e-6);
    }

    #[test]
    fn fit_needs_three_distinct() {
        assert!(fit_curve(&table_anchors()[..2]).is_err());
        let dup = vec![(rank(1), 0.7), (rank(1), 0.71), (rank(8), 0.8)];
        assert!(fit_curve(&dup).is_err());
    }

    #[test]
    fn anchors_csv_percent_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.csv");
        std::fs::write(&path, "rank,accuracy\n1,73.329\n8,81.443\n200,83.069\n").unwrap();
        let anchors = load_anchors(&path).unwrap();
        assert_eq!(anchors.len(), 3);
        assert!((anchors[0].1 - 0.73329).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn bounded_and_monotone(seed in 0u64..1000, m in 1u32..200, r in 1u32..300) {
            let c = AccuracyCurve::TOKEN;
            let q = c.accuracy(rank(r), RoundIndex::new(m).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed));
            proptest::prop_assert!((0.0..=1.0).contains(&q));
            let quiet = AccuracyCurve { noise_sigma: 0.0, ..c };
            proptest::prop_assert!(quiet.mean_at(rank(r + 1), m as f64) >= quiet.mean_at(rank(r), m as f64));
        }
    }
}
