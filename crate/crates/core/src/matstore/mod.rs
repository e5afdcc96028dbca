//! Length-square sampling store over a real matrix.
//!
//! [`SampledMatrix`] keeps one [`SquareTree`] per row and per column (over the
//! nonzero entries only) plus a tree over the row norms and one over the
//! column norms. Entry queries are `O(log m)`, norm queries `O(1)`, and every
//! sampling primitive is a single root-to-leaf descent.

mod io;
mod tree;

pub use io::{load_csv, load_matrix_market, parse_csv, parse_matrix_market, write_csv};
pub use tree::SquareTree;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct SparseLine {
    idx: Vec<usize>,
    tree: SquareTree,
}

impl SparseLine {
    fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let idx = entries.iter().map(|e| e.0).collect();
        let vals: Vec<f64> = entries.iter().map(|e| e.1).collect();
        Self {
            idx,
            tree: SquareTree::from_values(&vals),
        }
    }

    fn get(&self, j: usize) -> f64 {
        match self.idx.binary_search(&j) {
            Ok(p) => self.tree.value(p),
            Err(_) => 0.0,
        }
    }

    fn norm_sq(&self) -> f64 {
        self.tree.total()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.idx[self.tree.sample(rng)]
    }
}

/// Immutable matrix with length-square sampling access in both orientations.
#[derive(Debug, Clone)]
pub struct SampledMatrix {
    n: usize,
    m: usize,
    rows: Vec<SparseLine>,
    cols: Vec<SparseLine>,
    row_norms: SquareTree,
    col_norms: SquareTree,
}

impl SampledMatrix {
    /// Builds the store from `(row, col, value)` triplets. Zeros may be
    /// omitted; explicit zeros are dropped.
    pub fn build(triplets: &[(usize, usize, f64)], n: usize, m: usize) -> Result<Self> {
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for &(i, j, v) in triplets {
            if i >= n {
                return Err(Error::IndexOutOfRange { what: "row", index: i, bound: n });
            }
            if j >= m {
                return Err(Error::IndexOutOfRange { what: "column", index: j, bound: m });
            }
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite entry at ({i}, {j})")));
            }
            row_entries[i].push((j, v));
        }
        for (i, entries) in row_entries.iter_mut().enumerate() {
            entries.sort_unstable_by_key(|e| e.0);
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateEntry { row: i, col: w[0].0 });
            }
            entries.retain(|e| e.1 != 0.0);
            for &(j, v) in entries.iter() {
                col_entries[j].push((i, v));
            }
        }
        let rows: Vec<SparseLine> = row_entries.into_iter().map(SparseLine::new).collect();
        let cols: Vec<SparseLine> = col_entries.into_iter().map(SparseLine::new).collect();
        let row_norms = SquareTree::from_weights(&rows.iter().map(SparseLine::norm_sq).collect::<Vec<_>>());
        let col_norms = SquareTree::from_weights(&cols.iter().map(SparseLine::norm_sq).collect::<Vec<_>>());
        Ok(Self { n, m, rows, cols, row_norms, col_norms })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let (n, m) = dense.shape();
        let triplets: Vec<_> = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = dense[(i, j)];
                (v != 0.0).then_some((i, j, v))
            })
            .collect();
        Self::build(&triplets, n, m).expect("dense input has valid indices")
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.m
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.idx.len()).sum()
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "row", index: i, bound: self.n })
        }
    }

    fn check_col(&self, j: usize) -> Result<()> {
        if j < self.m {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "column", index: j, bound: self.m })
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        self.check_row(i)?;
        self.check_col(j)?;
        Ok(self.rows[i].get(j))
    }

    /// Unchecked variant of [`entry`](Self::entry) for hot loops that already
    /// hold valid indices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(j)
    }

    pub fn row_norm_sq(&self, i: usize) -> Result<f64> {
        self.check_row(i)?;
        Ok(self.row_norms.square(i))
    }

    pub fn col_norm_sq(&self, j: usize) -> Result<f64> {
        self.check_col(j)?;
        Ok(self.col_norms.square(j))
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.row_norms.total()
    }

    /// Row `i` with probability `‖H(i,:)‖² / ‖H‖_F²`.
    pub fn sample_row_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.row_norms.total() <= 0.0 {
            return Err(Error::ZeroWeight("matrix"));
        }
        Ok(self.row_norms.sample(rng))
    }

    /// Column `j` with probability `‖H(:,j)‖² / ‖H‖_F²`.
    pub fn sample_col_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.col_norms.total() <= 0.0 {
            return Err(Error::ZeroWeight("matrix"));
        }
        Ok(self.col_norms.sample(rng))
    }

    /// Column `j` with probability `H(i,j)² / ‖H(i,:)‖²`.
    pub fn sample_index_in_row<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.check_row(i)?;
        if self.rows[i].norm_sq() <= 0.0 {
            return Err(Error::ZeroWeight("row"));
        }
        Ok(self.rows[i].sample(rng))
    }

    /// Row `i` with probability `H(i,j)² / ‖H(:,j)‖²`.
    pub fn sample_index_in_col<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<usize> {
        self.check_col(j)?;
        if self.cols[j].norm_sq() <= 0.0 {
            return Err(Error::ZeroWeight("column"));
        }
        Ok(self.cols[j].sample(rng))
    }

    /// Nonzero `(col, value)` pairs of row `i`, ascending by column.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let line = &self.rows[i];
        line.idx.iter().enumerate().map(move |(p, &j)| (j, line.tree.value(p)))
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| self.row_entries(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.m);
        for (i, j, v) in self.to_triplets() {
            d[(i, j)] = v;
        }
        d
    }

    /// `x ↦ H x` computed densely.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Full-tree audit: every internal node equals the sum of its children,
    /// and the three routes to `‖H‖_F²` agree to `1e-10` relative.
    pub fn audit(&self) -> bool {
        let trees_ok = self.rows.iter().chain(&self.cols).all(|l| l.tree.audit())
            && self.row_norms.audit()
            && self.col_norms.audit();
        let frob = self.frob_norm_sq();
        let via_cols = self.col_norms.total();
        let via_leaves: f64 = (0..self.n).map(|i| self.row_norms.square(i)).sum();
        let tol = 1e-10 * frob.max(f64::MIN_POSITIVE);
        trees_ok && (frob - via_cols).abs() <= tol && (frob - via_leaves).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SampledMatrix {
        SampledMatrix::build(&[(0, 0, 3.0), (0, 1, 4.0), (1, 1, 5.0)], 2, 2).unwrap()
    }

    #[test]
    fn single_entry() {
        let h = SampledMatrix::build(&[(0, 0, 1.0)], 1, 1).unwrap();
        assert_eq!(h.frob_norm_sq(), 1.0);
    }

    #[test]
    fn norms_match_dense_arithmetic() {
        let h = small();
        assert_eq!(h.frob_norm_sq(), 50.0);
        assert_eq!(h.row_norm_sq(0).unwrap(), 25.0);
        assert_eq!(h.col_norm_sq(1).unwrap(), 41.0);
        assert_eq!(h.entry(1, 0).unwrap(), 0.0);
        assert_eq!(h.entry(0, 1).unwrap(), 4.0);
        assert!(h.audit());
    }

    #[test]
    fn identity_off_diagonal_is_zero() {
        let h = SampledMatrix::from_dense(&DMatrix::identity(2, 2));
        assert_eq!(h.entry(0, 1).unwrap(), 0.0);
        assert_eq!(h.entry(1, 1).unwrap(), 1.0);
    }

    #[test]
    fn zero_matrix_refuses_to_sample() {
        let h = SampledMatrix::build(&[], 2, 2).unwrap();
        assert_eq!(h.frob_norm_sq(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(h.sample_row_index(&mut rng), Err(Error::ZeroWeight(_))));
        assert!(matches!(h.sample_col_index(&mut rng), Err(Error::ZeroWeight(_))));
        assert!(matches!(h.sample_index_in_row(0, &mut rng), Err(Error::ZeroWeight(_))));
        assert!(matches!(h.sample_index_in_col(1, &mut rng), Err(Error::ZeroWeight(_))));
    }

    #[test]
    fn rejects_bad_triplets() {
        assert!(matches!(
            SampledMatrix::build(&[(2, 0, 1.0)], 2, 2),
            Err(Error::IndexOutOfRange { what: "row", .. })
        ));
        assert!(matches!(
            SampledMatrix::build(&[(0, 5, 1.0)], 2, 2),
            Err(Error::IndexOutOfRange { what: "column", .. })
        ));
        assert!(matches!(
            SampledMatrix::build(&[(0, 1, 1.0), (0, 1, 2.0)], 2, 2),
            Err(Error::DuplicateEntry { row: 0, col: 1 })
        ));
        assert!(small().entry(0, 2).is_err());
        assert!(small().row_norm_sq(7).is_err());
    }

    #[test]
    fn within_row_sampling_law() {
        // row [3, 4]: P(col 1) = 16/25
        let h = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| h.sample_index_in_row(0, &mut rng).unwrap() == 1)
            .count();
        let freq = ones as f64 / draws as f64;
        assert!((freq - 0.64).abs() < 0.01, "{freq}");
        // column 0 holds a single entry
        for _ in 0..100 {
            assert_eq!(h.sample_index_in_col(0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn triplet_export_round_trips() {
        let h = small();
        let again = SampledMatrix::build(&h.to_triplets(), 2, 2).unwrap();
        assert_eq!(again.to_dense(), h.to_dense());
    }
}
