//! Subsampled implicit SVD.
//!
//! `s` columns of `H` are drawn by column norm and rescaled into `R`
//! (`n × s`, never formed); `s` rows of `R` are then drawn and rescaled
//! into `C` (`s × s`). The top right singular pairs `(σᵢ, ωᵢ)` of `C` define
//! the approximate left singular vectors `ṽᵢ = R ωᵢ / σᵢ`, which are only
//! ever evaluated entry by entry.
//!
//! Draws are with replacement, so `C` repeats rows and columns. Grouping the
//! repeats gives `C = Q_r M Q_cᵀ` with `Q_r`, `Q_c` orthonormal indicator
//! matrices and `M` the distinct-index core; the singular values of `M` are
//! those of `C` and `ω = Q_c w`. Only the core is decomposed and stored.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::basis::RowBasis;
use crate::error::{Error, Result};
use crate::matstore::{SampledMatrix, SquareTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Number of sampled columns (and rows).
    pub s: usize,
    /// Target rank.
    pub k: usize,
    /// Keep only singular values at or above this floor (still capped at `k`).
    pub sigma_floor: Option<f64>,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(s: usize, k: usize, seed: u64) -> Self {
        Self { s, k, sigma_floor: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("sketch rank k must be positive".into()));
        }
        if self.s < self.k {
            return Err(Error::InvalidConfig(format!(
                "sample count s = {} is below rank k = {}",
                self.s, self.k
            )));
        }
        if let Some(f) = self.sigma_floor {
            if !(f >= 0.0) {
                return Err(Error::InvalidConfig("sigma_floor must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Implicit description of the approximate left singular basis `Ṽ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitBasis {
    pub n: usize,
    pub m: usize,
    pub col_idx: Vec<usize>,
    pub col_scale: Vec<f64>,
    pub row_idx: Vec<usize>,
    pub row_scale: Vec<f64>,
    /// Distinct sampled row indices, ascending.
    pub core_rows: Vec<usize>,
    /// Distinct sampled column indices, ascending.
    pub core_cols: Vec<usize>,
    /// Row-major `core_rows.len() × core_cols.len()` compressed `C`.
    pub core: Vec<f64>,
    /// Retained singular values of `C`, non-increasing.
    pub sigma: Vec<f64>,
    /// Right singular vectors of `C`, one length-`s` vector per retained value.
    pub omega: Vec<Vec<f64>>,
    /// `ṽᵢ = Σ_b col_weights[i][b] · H(:, core_cols[b])`, i.e. `ωᵢ` folded
    /// over repeated columns with the column scales and `1/σᵢ` applied.
    pub col_weights: Vec<Vec<f64>>,
}

fn multiplicities(idx: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut distinct: Vec<usize> = idx.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let slot: Vec<usize> = idx
        .iter()
        .map(|i| distinct.binary_search(i).expect("index is present"))
        .collect();
    let mut mult = vec![0usize; distinct.len()];
    for &p in &slot {
        mult[p] += 1;
    }
    (distinct, slot, mult)
}

/// Runs the two-stage length-square subsampling and decomposes `C`.
pub fn subsample<R: Rng + ?Sized>(h: &SampledMatrix, cfg: &SketchConfig, rng: &mut R) -> Result<ImplicitBasis> {
    cfg.validate()?;
    let frob = h.frob_norm_sq();
    if frob <= 0.0 {
        return Err(Error::ZeroWeight("matrix"));
    }
    let s = cfg.s;
    let sf = s as f64;

    let mut col_idx = Vec::with_capacity(s);
    let mut col_scale = Vec::with_capacity(s);
    for _ in 0..s {
        let c = h.sample_col_index(rng)?;
        let p = h.col_norm_sq(c)? / frob;
        col_idx.push(c);
        col_scale.push(1.0 / (sf * p).sqrt());
    }
    let (core_cols, col_slot, col_mult) = multiplicities(&col_idx);
    let mut scale_of_col = vec![0.0; core_cols.len()];
    for (t, &b) in col_slot.iter().enumerate() {
        scale_of_col[b] = col_scale[t];
    }

    // Second stage: uniform column t of R, then row j ∝ R(j,t)² = H(j,c_t)²·scale².
    let mut row_idx = Vec::with_capacity(s);
    for _ in 0..s {
        let t = rng.random_range(0..s);
        row_idx.push(h.sample_index_in_col(col_idx[t], rng)?);
    }
    let (core_rows, row_slot, row_mult) = multiplicities(&row_idx);

    let r_frob: f64 = core_cols
        .iter()
        .zip(&col_mult)
        .zip(&scale_of_col)
        .map(|((&c, &mult), &cs)| mult as f64 * cs * cs * h.col_norm_sq(c).expect("sampled column"))
        .sum();

    let (ur, uc) = (core_rows.len(), core_cols.len());
    let mut hsub = vec![0.0; ur * uc];
    let mut scale_of_row = vec![0.0; ur];
    for (a, &j) in core_rows.iter().enumerate() {
        let mut r_row_sq = 0.0;
        for (b, &c) in core_cols.iter().enumerate() {
            let v = h.get(j, c);
            hsub[a * uc + b] = v;
            let rv = v * scale_of_col[b];
            r_row_sq += col_mult[b] as f64 * rv * rv;
        }
        scale_of_row[a] = 1.0 / (sf * r_row_sq / r_frob).sqrt();
    }
    let row_scale: Vec<f64> = row_slot.iter().map(|&a| scale_of_row[a]).collect();

    let mut core = vec![0.0; ur * uc];
    for a in 0..ur {
        let ra = scale_of_row[a] * (row_mult[a] as f64).sqrt();
        for b in 0..uc {
            let cb = scale_of_col[b] * (col_mult[b] as f64).sqrt();
            core[a * uc + b] = ra * hsub[a * uc + b] * cb;
        }
    }

    let m_core = DMatrix::from_row_slice(ur, uc, &core);
    let svd = m_core.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = order.first().map_or(0.0, |&o| svd.singular_values[o]);
    let tol = smax * 1e-10;
    let nonzero = order.iter().filter(|&&o| svd.singular_values[o] > tol).count();
    let keep = match cfg.sigma_floor {
        Some(floor) => order
            .iter()
            .take(cfg.k.min(nonzero))
            .take_while(|&&o| svd.singular_values[o] >= floor)
            .count(),
        None => cfg.k,
    };
    if keep == 0 || nonzero < keep {
        return Err(Error::RankDeficient { requested: cfg.k, achieved: nonzero.min(keep) });
    }

    let mut sigma = Vec::with_capacity(keep);
    let mut omega = Vec::with_capacity(keep);
    let mut col_weights = Vec::with_capacity(keep);
    for &o in &order[..keep] {
        let sv = svd.singular_values[o];
        let mut w: Vec<f64> = v_t.row(o).iter().copied().collect();
        // Sign convention: largest-magnitude component positive.
        let pivot = w
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        omega.push(col_slot.iter().map(|&b| w[b] / (col_mult[b] as f64).sqrt()).collect());
        col_weights.push(
            (0..uc)
                .map(|b| (col_mult[b] as f64).sqrt() * scale_of_col[b] * w[b] / sv)
                .collect(),
        );
        sigma.push(sv);
    }

    Ok(ImplicitBasis {
        n: h.n_rows(),
        m: h.n_cols(),
        col_idx,
        col_scale,
        row_idx,
        row_scale,
        core_rows,
        core_cols,
        core,
        sigma,
        omega,
        col_weights,
    })
}

impl ImplicitBasis {
    pub fn s(&self) -> usize {
        self.col_idx.len()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn check_store(&self, h: &SampledMatrix) -> Result<()> {
        if h.n_rows() != self.n || h.n_cols() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "basis built for {}x{}, store is {}x{}",
                self.n,
                self.m,
                h.n_rows(),
                h.n_cols()
            )));
        }
        Ok(())
    }

    /// `ṽᵢ(j)`, costing one entry query per distinct sampled column.
    pub fn basis_entry(&self, h: &SampledMatrix, i: usize, j: usize) -> Result<f64> {
        self.check_store(h)?;
        if i >= self.rank() {
            return Err(Error::IndexOutOfRange { what: "basis column", index: i, bound: self.rank() });
        }
        if j >= self.n {
            return Err(Error::IndexOutOfRange { what: "row", index: j, bound: self.n });
        }
        Ok(self.entry_unchecked(h, i, j))
    }

    fn entry_unchecked(&self, h: &SampledMatrix, i: usize, j: usize) -> f64 {
        self.core_cols
            .iter()
            .zip(&self.col_weights[i])
            .map(|(&c, &w)| h.get(j, c) * w)
            .sum()
    }

    fn row_unchecked(&self, h: &SampledMatrix, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (b, &c) in self.core_cols.iter().enumerate() {
            let v = h.get(j, c);
            if v != 0.0 {
                for (o, w) in out.iter_mut().zip(&self.col_weights) {
                    *o += v * w[b];
                }
            }
        }
    }

    /// Dense `s × s` matrix `C(t,u) = row_scale[t] · H(row_idx[t], col_idx[u]) · col_scale[u]`.
    pub fn c_dense(&self, h: &SampledMatrix) -> DMatrix<f64> {
        let s = self.s();
        DMatrix::from_fn(s, s, |t, u| {
            self.row_scale[t] * h.get(self.row_idx[t], self.col_idx[u]) * self.col_scale[u]
        })
    }

    /// Dense `n × s` matrix `R(:,u) = H(:, col_idx[u]) · col_scale[u]`.
    pub fn r_dense(&self, h: &SampledMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.s(), |j, u| h.get(j, self.col_idx[u]) * self.col_scale[u])
    }

    /// Dense `n × k'` evaluation of `Ṽ`.
    pub fn v_dense(&self, h: &SampledMatrix) -> DMatrix<f64> {
        let k = self.rank();
        let mut v = DMatrix::zeros(self.n, k);
        let mut row = vec![0.0; k];
        for j in 0..self.n {
            self.row_unchecked(h, j, &mut row);
            for i in 0..k {
                v[(j, i)] = row[i];
            }
        }
        v
    }

    /// `max_{i,j} |ṽᵢᵀṽⱼ − δᵢⱼ|`, evaluated densely.
    pub fn orthonormality_defect(&self, h: &SampledMatrix) -> f64 {
        let v = self.v_dense(h);
        let gram = v.transpose() * &v;
        let k = self.rank();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `‖ṼṼᵀH − H‖_F / ‖H‖_F`, evaluated densely.
    pub fn relative_residual(&self, h: &SampledMatrix) -> f64 {
        let v = self.v_dense(h);
        let hd = h.to_dense();
        let proj = &v * (v.transpose() * &hd);
        (proj - &hd).norm() / hd.norm()
    }

    /// Exact `‖ṽᵢ‖²` for every retained vector (`O(n · s)` queries).
    pub fn exact_norms_sq(&self, h: &SampledMatrix) -> Vec<f64> {
        let v = self.v_dense(h);
        v.column_iter().map(|c| c.norm_squared()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: ImplicitBasis = serde_json::from_str(text)?;
        let s = b.col_idx.len();
        let k = b.sigma.len();
        let consistent = b.col_scale.len() == s
            && b.row_idx.len() == s
            && b.row_scale.len() == s
            && b.core.len() == b.core_rows.len() * b.core_cols.len()
            && b.omega.len() == k
            && b.omega.iter().all(|w| w.len() == s)
            && b.col_weights.len() == k
            && b.col_weights.iter().all(|w| w.len() == b.core_cols.len());
        if !consistent {
            return Err(Error::DimensionMismatch("inconsistent basis document".into()));
        }
        Ok(b)
    }
}

/// Sample count `⌈85² k² κ⁴ ln(8n/η) ‖H‖_F² / (9 ε²)⌉` for the TV-distance
/// guarantee. Reporting only; never used as a default.
pub fn theoretical_sample_count(k: usize, kappa: f64, n: usize, frob_norm: f64, eps: f64, eta: f64) -> f64 {
    sample_count_with_power(2, k, kappa, n, frob_norm, eps, eta)
}

/// Same bound with `k³` in place of `k²`, as stated for the projected
/// approximation guarantee. Reported alongside [`theoretical_sample_count`].
pub fn theoretical_sample_count_cubic(k: usize, kappa: f64, n: usize, frob_norm: f64, eps: f64, eta: f64) -> f64 {
    sample_count_with_power(3, k, kappa, n, frob_norm, eps, eta)
}

fn sample_count_with_power(p: i32, k: usize, kappa: f64, n: usize, frob_norm: f64, eps: f64, eta: f64) -> f64 {
    let raw = 85.0f64.powi(2) * (k as f64).powi(p) * kappa.powi(4) * (8.0 * n as f64 / eta).ln()
        * frob_norm.powi(2)
        / (9.0 * eps * eps);
    raw.ceil()
}

/// Couples an [`ImplicitBasis`] with its store so it can be used wherever a
/// [`RowBasis`] is expected, without materializing `Ṽ`.
///
/// Column draws `l ∝ ṽᵢ(l)²` use rejection sampling on top of the store's
/// column trees: pick a sampled column `b ∝ wᵢ(b)²‖H(:,c_b)‖²`, pick
/// `l ∝ H(l,c_b)²`, accept with probability `ṽᵢ(l)² / (uᵢ Σ_b wᵢ(b)² H(l,c_b)²)`
/// where `uᵢ` counts the nonzero weights.
pub struct ImplicitView<'a> {
    basis: &'a ImplicitBasis,
    store: &'a SampledMatrix,
    norms_sq: Vec<f64>,
    proposal: Vec<SquareTree>,
    support: Vec<usize>,
    pub iteration_cap: u64,
}

impl<'a> ImplicitView<'a> {
    /// View with caller-supplied column norms (exact or estimated).
    pub fn with_norms(basis: &'a ImplicitBasis, store: &'a SampledMatrix, norms_sq: Vec<f64>) -> Result<Self> {
        basis.check_store(store)?;
        if norms_sq.len() != basis.rank() {
            return Err(Error::DimensionMismatch("one norm per basis vector required".into()));
        }
        let proposal: Vec<SquareTree> = basis
            .col_weights
            .iter()
            .map(|w| {
                let weights: Vec<f64> = w
                    .iter()
                    .zip(&basis.core_cols)
                    .map(|(&wb, &c)| wb * wb * store.col_norm_sq(c).expect("sampled column"))
                    .collect();
                SquareTree::from_weights(&weights)
            })
            .collect();
        let support = basis
            .col_weights
            .iter()
            .map(|w| w.iter().filter(|x| **x != 0.0).count())
            .collect();
        Ok(Self { basis, store, norms_sq, proposal, support, iteration_cap: 1_000_000 })
    }

    /// View with exact column norms (`O(n · s)` preprocessing).
    pub fn exact(basis: &'a ImplicitBasis, store: &'a SampledMatrix) -> Result<Self> {
        let norms = basis.exact_norms_sq(store);
        Self::with_norms(basis, store, norms)
    }
}

impl RowBasis for ImplicitView<'_> {
    fn n_rows(&self) -> usize {
        self.basis.n
    }

    fn rank(&self) -> usize {
        self.basis.rank()
    }

    fn entry(&self, l: usize, i: usize) -> f64 {
        self.basis.entry_unchecked(self.store, i, l)
    }

    fn row_into(&self, l: usize, out: &mut [f64]) {
        self.basis.row_unchecked(self.store, l, out);
    }

    fn col_norm_sq(&self, i: usize) -> f64 {
        self.norms_sq[i]
    }

    fn sample_in_col(&self, i: usize, rng: &mut dyn RngCore) -> Result<usize> {
        let tree = &self.proposal[i];
        if tree.total() <= 0.0 {
            return Err(Error::ZeroWeight("basis column"));
        }
        let weights = &self.basis.col_weights[i];
        let u = self.support[i] as f64;
        for _ in 0..self.iteration_cap {
            let b = tree.sample(rng);
            let l = self.store.sample_index_in_col(self.basis.core_cols[b], rng)?;
            let mut value = 0.0;
            let mut spread = 0.0;
            for (&c, &w) in self.basis.core_cols.iter().zip(weights) {
                let x = self.store.get(l, c) * w;
                value += x;
                spread += x * x;
            }
            let accept = value * value / (u * spread);
            if rng.random::<f64>() < accept {
                return Ok(l);
            }
        }
        Err(Error::RejectionCap {
            iterations: self.iteration_cap,
            acceptance_bound: 1.0 / u,
        })
    }
}
