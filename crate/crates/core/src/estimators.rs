//! Median-of-means inner-product estimates for the projected coordinates
//! `q̂ = Ṽᵀ(H B)` and the norms needed to compare the two projected
//! distributions.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::RowBasis;
use crate::error::{Error, Result};
use crate::matstore::{SampledMatrix, SquareTree};
use crate::rng;
use crate::sketch::ImplicitBasis;

/// Draw budget for one median-of-means estimate: `n_groups` groups of
/// `group_size` i.i.d. draws each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n_groups: usize,
    pub group_size: usize,
    /// Target additive precision the budget was sized for (informational).
    pub eps: f64,
    /// Failure probability the group count was sized for.
    pub delta: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::with_group_size(1000, 0.05)
    }
}

impl EstimatorConfig {
    /// `⌈8 ln(1/δ)⌉` groups: the median is off only if half the groups are,
    /// and each group fails with probability at most 1/4.
    pub fn groups_for(delta: f64) -> usize {
        (8.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize
    }

    pub fn with_group_size(group_size: usize, delta: f64) -> Self {
        Self {
            n_groups: Self::groups_for(delta),
            group_size: group_size.max(1),
            eps: f64::NAN,
            delta,
        }
    }

    /// Budget guaranteeing `|estimate − vᵀHB| ≤ eps` with probability
    /// `1 − delta`. Each draw has second moment at most `(‖H‖_F‖v‖‖B‖)²`, so
    /// `4 (‖H‖_F‖v‖‖B‖)² / ε²` draws per group put each group mean within
    /// `eps` with probability ≥ 3/4 (Chebyshev).
    pub fn sized(eps: f64, delta: f64, frob_norm: f64, v_norm: f64, b_norm: f64) -> Self {
        let scale = frob_norm * v_norm * b_norm;
        let group_size = (4.0 * scale * scale / (eps * eps)).ceil().max(1.0) as usize;
        Self {
            n_groups: Self::groups_for(delta),
            group_size,
            eps,
            delta,
        }
    }

    pub fn total_draws(&self) -> usize {
        self.n_groups * self.group_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.group_size == 0 {
            return Err(Error::InvalidConfig("estimator groups and group size must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig("estimator delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Median of the group means of `draws` (laid out group after group).
pub fn median_of_means(draws: &[f64], n_groups: usize) -> (f64, Vec<f64>) {
    let group_size = draws.len() / n_groups;
    let mut means: Vec<f64> = draws
        .chunks_exact(group_size)
        .take(n_groups)
        .map(|g| g.iter().sum::<f64>() / group_size as f64)
        .collect();
    let report = means.clone();
    means.sort_by(f64::total_cmp);
    let mid = means.len() / 2;
    let med = if means.len() % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    };
    (med, report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerProductEstimate {
    pub value: f64,
    pub group_means: Vec<f64>,
    pub draws: usize,
}

/// Estimates `ṽᵢᵀ H B` where `ṽᵢ` is column `i` of `basis`.
///
/// Draws `(j, l)` with probability `ṽᵢ(j)² B(l)² / (‖ṽᵢ‖²‖B‖²)` and averages
/// `Z = ‖ṽᵢ‖‖B‖ H(j,l) / (ṽᵢ(j) B(l))`, whose mean is exactly the inner
/// product. `‖ṽᵢ‖` comes from the basis (exact or estimated, per basis).
pub fn inner_product_estimate(
    h: &SampledMatrix,
    basis: &dyn RowBasis,
    i: usize,
    b: &SquareTree,
    cfg: &EstimatorConfig,
    rng: &mut dyn RngCore,
) -> Result<InnerProductEstimate> {
    cfg.validate()?;
    if basis.n_rows() != h.n_rows() || b.len() != h.n_cols() {
        return Err(Error::DimensionMismatch("basis, matrix and projection disagree".into()));
    }
    let v_norm_sq = basis.col_norm_sq(i);
    if !(v_norm_sq > 0.0) {
        return Err(Error::ZeroWeight("basis column"));
    }
    if !(b.total() > 0.0) {
        return Err(Error::ZeroWeight("projection vector"));
    }
    let scale = (v_norm_sq * b.total()).sqrt();
    let total = cfg.total_draws();
    let mut draws = Vec::with_capacity(total);
    for _ in 0..total {
        let j = basis.sample_in_col(i, rng)?;
        let l = b.sample(rng);
        let denom = basis.entry(j, i) * b.value(l);
        if denom == 0.0 {
            return Err(Error::ZeroProbabilityDraw { row: j, col: l });
        }
        draws.push(scale * h.get(j, l) / denom);
    }
    let (value, group_means) = median_of_means(&draws, cfg.n_groups);
    Ok(InnerProductEstimate { value, group_means, draws: total })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateEstimate {
    pub q_hat: Vec<f64>,
    pub per_coordinate_draws: usize,
    /// Set when the projection vector is zero and no estimate was drawn.
    pub degenerate: bool,
}

/// `q̂(i)` for every basis column, each from its own stream keyed by
/// `(seed, path.., i)`.
pub fn build_q_hat(
    h: &SampledMatrix,
    basis: &dyn RowBasis,
    b: &SquareTree,
    cfg: &EstimatorConfig,
    seed: u64,
    path: &[u64],
) -> Result<CoordinateEstimate> {
    let k = basis.rank();
    if k == 0 {
        return Err(Error::InvalidConfig("basis is empty".into()));
    }
    if b.total() <= 0.0 {
        return Ok(CoordinateEstimate { q_hat: vec![0.0; k], per_coordinate_draws: 0, degenerate: true });
    }
    let q_hat = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut key = path.to_vec();
            key.push(i as u64);
            let mut r = rng::stream(seed, &key);
            inner_product_estimate(h, basis, i, b, cfg, &mut r).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoordinateEstimate { q_hat, per_coordinate_draws: cfg.total_draws(), degenerate: false })
}

/// `Vᵀ(H b)` evaluated densely.
pub fn exact_q(h: &SampledMatrix, basis: &dyn RowBasis, b: &[f64]) -> Vec<f64> {
    let hb = h.mul_vec(b);
    let mut q = vec![0.0; basis.rank()];
    let mut row = vec![0.0; basis.rank()];
    for (l, &x) in hb.iter().enumerate() {
        if x != 0.0 {
            basis.row_into(l, &mut row);
            for (qi, ri) in q.iter_mut().zip(&row) {
                *qi += ri * x;
            }
        }
    }
    q
}

/// Exact `‖ṽᵢ‖²` by dense evaluation (`O(n·s)` queries).
pub fn basis_norm_sq_exact(h: &SampledMatrix, basis: &ImplicitBasis, i: usize) -> Result<f64> {
    (0..basis.n)
        .map(|j| basis.basis_entry(h, i, j).map(|v| v * v))
        .sum()
}

/// Sampled estimate of `‖ṽᵢ‖² = ‖R wᵢ‖²` with `wᵢ = ωᵢ/σᵢ`.
///
/// Rows `j` of `R` are drawn by squared norm (uniform sampled column, then a
/// row within it), and `‖R‖_F² (R(j,:)wᵢ)² / ‖R(j,:)‖²` is averaged; its
/// mean is `‖R wᵢ‖²` and it is bounded by `‖R‖_F²‖wᵢ‖²`.
pub fn basis_norm_sq_sampled(
    h: &SampledMatrix,
    basis: &ImplicitBasis,
    i: usize,
    cfg: &EstimatorConfig,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    cfg.validate()?;
    if i >= basis.rank() {
        return Err(Error::IndexOutOfRange { what: "basis column", index: i, bound: basis.rank() });
    }
    let s = basis.s();
    let mut mult = vec![0usize; basis.core_cols.len()];
    let mut scale = vec![0.0; basis.core_cols.len()];
    for (t, c) in basis.col_idx.iter().enumerate() {
        let b = basis.core_cols.binary_search(c).expect("sampled column in core");
        mult[b] += 1;
        scale[b] = basis.col_scale[t];
    }
    let r_frob: f64 = basis
        .col_idx
        .iter()
        .zip(&basis.col_scale)
        .map(|(&c, &cs)| h.col_norm_sq(c).map(|n| n * cs * cs))
        .sum::<Result<f64>>()?;
    let weights = &basis.col_weights[i];
    let total = cfg.total_draws();
    let mut draws = Vec::with_capacity(total);
    for _ in 0..total {
        let t = rng.random_range(0..s);
        let j = h.sample_index_in_col(basis.col_idx[t], rng)?;
        let mut value = 0.0;
        let mut row_sq = 0.0;
        for (b, &c) in basis.core_cols.iter().enumerate() {
            let x = h.get(j, c);
            value += x * weights[b];
            let r = x * scale[b];
            row_sq += mult[b] as f64 * r * r;
        }
        draws.push(r_frob * value * value / row_sq);
    }
    Ok(median_of_means(&draws, cfg.n_groups).0)
}

/// `‖Ĥ_t‖² ≈ Σᵢ q̂(i)² ‖ṽᵢ‖²`, treating `ṼᵀṼ` as diagonal.
pub fn approx_proj_norm(q_hat: &[f64], basis_norms_sq: &[f64]) -> f64 {
    q_hat.iter().zip(basis_norms_sq).map(|(q, n)| q * q * n).sum()
}

/// `ξ̂ = ‖X̂_t‖² / ‖Ŷ_t‖²`. `None` when either norm vanishes, i.e. the
/// projection annihilated the data and the subproblem is degenerate.
pub fn xi_estimate(norm_x_sq: f64, norm_y_sq: f64) -> Option<f64> {
    let ok = |v: f64| v > 0.0 && v.is_finite();
    (ok(norm_x_sq) && ok(norm_y_sq)).then(|| norm_x_sq / norm_y_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::DenseBasis;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_case_is_exact() {
        let h = SampledMatrix::from_dense(&DMatrix::identity(3, 3));
        let v = DenseBasis::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let b = SquareTree::from_values(&[1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = inner_product_estimate(&h, &v, 0, &b, &EstimatorConfig::with_group_size(10, 0.05), &mut rng).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.group_means.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn single_atom_distribution() {
        let h = SampledMatrix::build(&[(0, 0, 2.0)], 2, 2).unwrap();
        let v = DenseBasis::from_columns(&[vec![1.0, 0.0]]).unwrap();
        let b = SquareTree::from_values(&[1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = inner_product_estimate(&h, &v, 0, &b, &EstimatorConfig::default(), &mut rng).unwrap();
        assert_eq!(est.value, 2.0);
    }

    #[test]
    fn q_hat_on_identity_basis() {
        let h = SampledMatrix::from_dense(&DMatrix::identity(2, 2));
        let v = DenseBasis::from_matrix(&DMatrix::identity(2, 2));
        let b = SquareTree::from_values(&[1.0, 0.0]);
        let est = build_q_hat(&h, &v, &b, &EstimatorConfig::default(), 9, &[0]).unwrap();
        // Z draws only ever land on (0, 0) for coordinate 0; coordinate 1
        // draws rows with H(1, 0) = 0.
        assert_eq!(est.q_hat, vec![1.0, 0.0]);
        assert!(!est.degenerate);
        let k1 = DenseBasis::from_columns(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(build_q_hat(&h, &k1, &b, &EstimatorConfig::default(), 9, &[0]).unwrap().q_hat.len(), 1);
    }

    #[test]
    fn zero_projection_is_flagged() {
        let h = SampledMatrix::from_dense(&DMatrix::identity(2, 2));
        let v = DenseBasis::from_matrix(&DMatrix::identity(2, 2));
        let b = SquareTree::from_values(&[0.0, 0.0]);
        let est = build_q_hat(&h, &v, &b, &EstimatorConfig::default(), 1, &[]).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.q_hat, vec![0.0, 0.0]);
    }

    #[test]
    fn norm_helpers() {
        assert_eq!(approx_proj_norm(&[3.0, 4.0], &[1.0, 1.0]), 25.0);
        assert_eq!(xi_estimate(2.0, 2.0), Some(1.0));
        assert_eq!(xi_estimate(0.0, 2.0), None);
        // X_t = 2 Y_t entrywise → ‖X_t‖² = 4 ‖Y_t‖².
        let y_t = [0.5, 1.5, -1.0];
        let nx: f64 = y_t.iter().map(|v| (2.0 * v) * (2.0 * v)).sum();
        let ny: f64 = y_t.iter().map(|v| v * v).sum();
        assert_eq!(xi_estimate(nx, ny), Some(4.0));
    }

    #[test]
    fn median_of_means_even_and_odd() {
        let (m, g) = median_of_means(&[1.0, 1.0, 5.0, 5.0, 3.0, 3.0], 3);
        assert_eq!(g, vec![1.0, 5.0, 3.0]);
        assert_eq!(m, 3.0);
        let (m, _) = median_of_means(&[1.0, 2.0, 3.0, 10.0], 4);
        assert_eq!(m, 2.5);
    }

    #[test]
    fn sizing_rule() {
        let cfg = EstimatorConfig::sized(0.1, 0.05, 2.0, 1.0, 1.0);
        assert_eq!(cfg.n_groups, 24);
        assert_eq!(cfg.group_size, 1600);
    }
}
