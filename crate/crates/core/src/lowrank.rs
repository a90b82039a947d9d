//! SVD truncation of a dense update into LoRA factors and data-weighted
//! aggregation of client adapters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::Rank;
use crate::error::{Error, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("matrix must be non-empty, got {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}×{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        DenseMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}×{} by {}×{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[p * rhs.cols..(p + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(rhs)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix { data, ..*self })
    }

    /// `self += weight · rhs`.
    pub fn add_scaled(&mut self, rhs: &DenseMatrix, weight: f64) -> Result<()> {
        self.check_same_shape(rhs)?;
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += weight * b;
        }
        Ok(())
    }

    fn check_same_shape(&self, rhs: &DenseMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Dimension(format!(
                "shape {:?} does not match {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// LoRA factors `B (d×η)` and `A (η×k)` with `Δθ ≈ B · A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub b: DenseMatrix,
    pub a: DenseMatrix,
    pub rank: Rank,
}

impl LoraAdapter {
    pub fn product(&self) -> DenseMatrix {
        self.b
            .matmul(&self.a)
            .expect("adapter factors have consistent inner dimension")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }
}

/// Singular triplets sorted by descending singular value with deterministic
/// signs: ties keep the decomposition's column order and the first non-zero
/// component of each left singular vector is positive.
struct SortedSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v_t: DMatrix<f64>,
    order: Vec<usize>,
}

fn sorted_svd(m: &DenseMatrix) -> SortedSvd {
    let svd = m.to_nalgebra().svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut u = svd.u.expect("left singular vectors requested");
    let mut v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    for col in 0..sigma.len() {
        let lead = u.column(col).iter().copied().find(|v| *v != 0.0).unwrap_or(0.0);
        if lead < 0.0 {
            u.column_mut(col).neg_mut();
            v_t.row_mut(col).neg_mut();
        }
    }
    SortedSvd { u, sigma, v_t, order }
}

/// Singular values in descending order.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let s = sorted_svd(m);
    s.order.iter().map(|&i| s.sigma[i]).collect()
}

/// Best rank-`eta` factorization of `delta`: `B = U_η Σ_η`, `A = V_ηᵀ`.
pub fn svd_truncate(delta: &DenseMatrix, eta: Rank) -> Result<LoraAdapter> {
    let (d, k) = delta.shape();
    if !eta.fits(d, k) {
        return Err(Error::Dimension(format!(
            "rank {eta} exceeds min({d}, {k}) of the update"
        )));
    }
    let s = sorted_svd(delta);
    let r = eta.as_usize();
    let top = &s.order[..r];
    let b = DenseMatrix::from_fn(d, r, |i, j| s.u[(i, top[j])] * s.sigma[top[j]]);
    let a = DenseMatrix::from_fn(r, k, |i, j| s.v_t[(top[i], j)]);
    Ok(LoraAdapter { b, a, rank: eta })
}

/// `‖delta − B·A‖_F`.
pub fn truncation_error(delta: &DenseMatrix, adapter: &LoraAdapter) -> Result<f64> {
    Ok(delta.sub(&adapter.product())?.frobenius_norm())
}

/// Data-weighted average of client products `Σ_v (|D_v| / |D|) · B_v A_v`.
///
/// Clients may use different ranks; their dense products share the `d×k`
/// shape. Summation follows slice order, so callers pass clients sorted by id.
pub fn aggregate(updates: &[(LoraAdapter, f64)]) -> Result<DenseMatrix> {
    let (first, _) = updates.first().ok_or(Error::Empty("aggregate needs at least one update"))?;
    let (d, k) = first.shape();
    let mut total = 0.0;
    for (adapter, size) in updates {
        if adapter.shape() != (d, k) {
            return Err(Error::Dimension(format!(
                "adapter product {:?} does not match {:?}",
                adapter.shape(),
                (d, k)
            )));
        }
        if !(size.is_finite() && *size > 0.0) {
            return Err(Error::InvalidArgument(format!("data size must be > 0, got {size}")));
        }
        total += size;
    }
    let mut out = DenseMatrix::zeros(d, k);
    for (adapter, size) in updates {
        out.add_scaled(&adapter.product(), size / total)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn rank(v: u32) -> Rank {
        Rank::new(v).unwrap()
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn diagonal_truncation() {
        let m = DenseMatrix::diag(&[3.0, 2.0, 1.0]);
        let full = svd_truncate(&m, rank(3)).unwrap();
        assert!(truncation_error(&m, &full).unwrap() <= 1e-10);
        let one = svd_truncate(&m, rank(1)).unwrap();
        assert_relative_eq!(truncation_error(&m, &one).unwrap(), 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rank_above_min_dim_rejected() {
        let m = gaussian(4, 3, 1);
        assert!(matches!(svd_truncate(&m, rank(4)), Err(Error::Dimension(_))));
    }

    #[test]
    fn factor_shapes_and_sign_convention() {
        let m = gaussian(8, 6, 2);
        let ad = svd_truncate(&m, rank(2)).unwrap();
        assert_eq!(ad.b.shape(), (8, 2));
        assert_eq!(ad.a.shape(), (2, 6));
        for j in 0..2 {
            let lead = (0..8).map(|i| ad.b.get(i, j)).find(|v| *v != 0.0).unwrap();
            assert!(lead > 0.0);
        }
        // deterministic output
        assert_eq!(ad, svd_truncate(&m, rank(2)).unwrap());
    }

    #[test]
    fn aggregate_single_and_identical() {
        let m = gaussian(5, 4, 3);
        let ad = svd_truncate(&m, rank(2)).unwrap();
        let one = aggregate(&[(ad.clone(), 7.0)]).unwrap();
        assert_eq!(one, ad.product());
        let two = aggregate(&[(ad.clone(), 1.0), (ad.clone(), 9.0)]).unwrap();
        for (x, y) in two.as_slice().iter().zip(ad.product().as_slice()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn aggregate_weighted_two_by_two() {
        // M1 = [1,2]ᵀ[1,0] , M2 = [0,1]ᵀ[3,1]
        let a1 = LoraAdapter {
            b: DenseMatrix::from_row_major(2, 1, vec![1.0, 2.0]).unwrap(),
            a: DenseMatrix::from_row_major(1, 2, vec![1.0, 0.0]).unwrap(),
            rank: rank(1),
        };
        let a2 = LoraAdapter {
            b: DenseMatrix::from_row_major(2, 1, vec![0.0, 1.0]).unwrap(),
            a: DenseMatrix::from_row_major(1, 2, vec![3.0, 1.0]).unwrap(),
            rank: rank(1),
        };
        let out = aggregate(&[(a1, 1.0), (a2, 3.0)]).unwrap();
        // 0.25·[[1,0],[2,0]] + 0.75·[[0,0],[3,1]]
        let expected = [0.25, 0.0, 0.5 + 2.25, 0.75];
        for (x, y) in out.as_slice().iter().zip(expected) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate(&[]), Err(Error::Empty(_))));
        let a = svd_truncate(&gaussian(4, 4, 5), rank(1)).unwrap();
        let b = svd_truncate(&gaussian(4, 3, 6), rank(1)).unwrap();
        assert!(matches!(aggregate(&[(a.clone(), 1.0), (b, 1.0)]), Err(Error::Dimension(_))));
        assert!(aggregate(&[(a, 0.0)]).is_err());
    }

    #[test]
    fn heterogeneous_ranks_aggregate_without_padding() {
        let m = gaussian(6, 6, 9);
        let low = svd_truncate(&m, rank(1)).unwrap();
        let high = svd_truncate(&m, rank(4)).unwrap();
        let out = aggregate(&[(low, 2.0), (high, 2.0)]).unwrap();
        assert_eq!(out.shape(), (6, 6));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn error_non_increasing_in_rank(seed in 0u64..10_000, d in 2usize..10, k in 2usize..10) {
            let m = gaussian(d, k, seed);
            let mut prev = f64::INFINITY;
            for r in 1..=d.min(k) as u32 {
                let e = truncation_error(&m, &svd_truncate(&m, rank(r)).unwrap()).unwrap();
                prop_assert!(e <= prev + 1e-10);
                prev = e;
            }
            prop_assert!(prev <= 1e-8 * m.frobenius_norm());
        }

        #[test]
        fn aggregate_is_convex(seed in 0u64..10_000, sizes in proptest::collection::vec(0.1f64..100.0, 1..5)) {
            let updates: Vec<_> = sizes.iter().enumerate().map(|(i, &s)| {
                let m = gaussian(5, 4, seed * 31 + i as u64);
                (svd_truncate(&m, rank(1 + (i as u32 % 3))).unwrap(), s)
            }).collect();
            let out = aggregate(&updates).unwrap();
            let bound = updates.iter().map(|(a, _)| a.product().frobenius_norm()).fold(0.0, f64::max);
            prop_assert!(out.frobenius_norm() <= bound * (1.0 + 1e-12));
            let total: f64 = sizes.iter().sum();
            let wsum: f64 = sizes.iter().map(|s| s / total).sum();
            prop_assert!((wsum - 1.0).abs() <= 1e-12);
        }
    }
}
