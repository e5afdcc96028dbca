//! Row-queryable thin matrices with length-square sampling inside columns.
//!
//! The rejection sampler and the inner-product estimator only need three
//! things from a basis `V ∈ ℝ^{n×k'}`: a row `V(l,:)`, a column's squared
//! norm, and a draw `l ∝ V(l,j)²`. [`RowBasis`] captures that surface so the
//! same code runs against a materialized [`DenseBasis`] or an implicit sketch
//! (see [`crate::sketch::ImplicitView`]).

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::matstore::{SampledMatrix, SquareTree};

pub trait RowBasis: Sync {
    fn n_rows(&self) -> usize;

    /// Number of columns `k'`.
    fn rank(&self) -> usize;

    fn entry(&self, l: usize, i: usize) -> f64;

    fn row_into(&self, l: usize, out: &mut [f64]);

    fn row(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rank()];
        self.row_into(l, &mut out);
        out
    }

    fn col_norm_sq(&self, i: usize) -> f64;

    /// Row index `l` with probability `V(l,i)² / ‖V(:,i)‖²`.
    fn sample_in_col(&self, i: usize, rng: &mut dyn RngCore) -> Result<usize>;
}

/// Fully materialized basis with one [`SquareTree`] per column.
#[derive(Debug, Clone)]
pub struct DenseBasis {
    n: usize,
    k: usize,
    /// Row-major `n × k`.
    data: Vec<f64>,
    cols: Vec<SquareTree>,
}

impl DenseBasis {
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("basis columns differ in length".into()));
        }
        let mut data = vec![0.0; n * k];
        for (i, col) in columns.iter().enumerate() {
            for (l, &v) in col.iter().enumerate() {
                data[l * k + i] = v;
            }
        }
        let cols = columns.iter().map(|c| SquareTree::from_values(c)).collect();
        Ok(Self { n, k, data, cols })
    }

    pub fn from_matrix(v: &DMatrix<f64>) -> Self {
        let columns: Vec<Vec<f64>> = v.column_iter().map(|c| c.iter().copied().collect()).collect();
        Self::from_columns(&columns).expect("matrix columns share a length")
    }

    /// Top-`k` exact left singular vectors of `h`, computed densely. Used as
    /// the reference basis in oracle comparisons.
    pub fn exact_left_singular(h: &SampledMatrix, k: usize) -> Result<Self> {
        let dense = h.to_dense();
        let dim = dense.nrows().max(dense.ncols()) as f64;
        let svd = dense.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let smax = order.first().map_or(0.0, |&o| svd.singular_values[o]);
        let tol = smax * 1e-12 * dim;
        let achieved = order.iter().filter(|&&o| svd.singular_values[o] > tol).count();
        if achieved < k {
            return Err(Error::RankDeficient { requested: k, achieved });
        }
        let columns: Vec<Vec<f64>> = order[..k]
            .iter()
            .map(|&o| u.column(o).iter().copied().collect())
            .collect();
        Self::from_columns(&columns)
    }

    /// Materializes any basis (O(n·k') row queries).
    pub fn materialize<B: RowBasis + ?Sized>(basis: &B) -> Self {
        let (n, k) = (basis.n_rows(), basis.rank());
        let mut data = vec![0.0; n * k];
        for l in 0..n {
            basis.row_into(l, &mut data[l * k..(l + 1) * k]);
        }
        let cols = (0..k)
            .map(|i| SquareTree::from_values(&(0..n).map(|l| data[l * k + i]).collect::<Vec<_>>()))
            .collect();
        Self { n, k, data, cols }
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|l| self.data[l * self.k + i]).collect()
    }

    /// `V x` as a dense n-vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.k.max(1))
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl RowBasis for DenseBasis {
    fn n_rows(&self) -> usize {
        self.n
    }

    fn rank(&self) -> usize {
        self.k
    }

    fn entry(&self, l: usize, i: usize) -> f64 {
        self.data[l * self.k + i]
    }

    fn row_into(&self, l: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[l * self.k..(l + 1) * self.k]);
    }

    fn col_norm_sq(&self, i: usize) -> f64 {
        self.cols[i].total()
    }

    fn sample_in_col(&self, i: usize, rng: &mut dyn RngCore) -> Result<usize> {
        let tree = &self.cols[i];
        if tree.total() <= 0.0 {
            return Err(Error::ZeroWeight("basis column"));
        }
        Ok(tree.sample(rng))
    }
}

/// Dense `V` evaluated through any [`RowBasis`]; `O(n·k')` row queries.
pub fn dense_mul_vec<B: RowBasis + ?Sized>(basis: &B, x: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; basis.rank()];
    (0..basis.n_rows())
        .map(|l| {
            basis.row_into(l, &mut row);
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_basis_of_identity_is_orthonormal() {
        let h = SampledMatrix::from_dense(&DMatrix::from_diagonal_element(4, 4, 1.0));
        let b = DenseBasis::exact_left_singular(&h, 3).unwrap();
        for i in 0..3 {
            assert!((b.col_norm_sq(i) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            DenseBasis::exact_left_singular(&SampledMatrix::build(&[(0, 0, 1.0)], 3, 3).unwrap(), 2),
            Err(Error::RankDeficient { requested: 2, achieved: 1 })
        ));
    }

    #[test]
    fn rows_and_mul_vec_agree() {
        let b = DenseBasis::from_columns(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]]).unwrap();
        assert_eq!(b.row(1), vec![2.0, -1.0]);
        assert_eq!(b.mul_vec(&[1.0, 1.0]), vec![1.0, 1.0, 3.0]);
        assert_eq!(dense_mul_vec(&b, &[1.0, 1.0]), vec![1.0, 1.0, 3.0]);
        let again = DenseBasis::materialize(&b);
        assert_eq!(again.data, b.data);
    }
}
