//! Sampling from `P_{Vq}(l) = (V(l,:)q)² / ‖Vq‖²` without forming `Vq`, and
//! the post-selection rule that turns draws from the two projected
//! distributions into one anchor index.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::basis::RowBasis;
use crate::error::{Error, Result};
use crate::matstore::SquareTree;

pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000;

/// A law over `[n]` that can be sampled and queried at single indices.
pub trait VecDistribution: Sync {
    fn support_len(&self) -> usize;

    fn draw(&self, rng: &mut dyn RngCore) -> Result<usize>;

    fn prob_of(&self, l: usize) -> f64;
}

/// `(V(l,:)q)² / norm_sq`.
pub fn prob_of_index(basis: &dyn RowBasis, q: &[f64], norm_sq: f64, l: usize) -> f64 {
    let row = basis.row(l);
    let dot: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
    dot * dot / norm_sq
}

/// One exact draw from `P_{Vq}` by rejection.
///
/// Each round picks a column `j ∝ ‖V(:,j)‖²`, a row `l ∝ V(l,j)²`, and
/// accepts `l` with probability `(V(l,:)q)² / (‖V(l,:)‖²‖q‖²)`. The proposal
/// marginal is `‖V(l,:)‖²/‖V‖_F²`, so accepted draws follow `P_{Vq}` exactly;
/// the expected number of rounds is `‖V‖_F²‖q‖² / ‖Vq‖²`.
///
/// Returns the index and the number of rounds used.
pub fn thin_matvec_sample(
    basis: &dyn RowBasis,
    col_norms: &SquareTree,
    q: &[f64],
    cap: u64,
    rng: &mut dyn RngCore,
) -> Result<(usize, u64)> {
    let q_sq: f64 = q.iter().map(|x| x * x).sum();
    if !(q_sq > 0.0) || !(col_norms.total() > 0.0) {
        return Err(Error::ZeroWeight("projected vector"));
    }
    let mut row = vec![0.0; basis.rank()];
    for round in 1..=cap {
        let j = col_norms.sample(rng);
        let l = basis.sample_in_col(j, rng)?;
        basis.row_into(l, &mut row);
        let dot: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
        let row_sq: f64 = row.iter().map(|x| x * x).sum();
        if rng.random::<f64>() * row_sq * q_sq < dot * dot {
            return Ok((l, round));
        }
    }
    Err(Error::RejectionCap {
        iterations: cap,
        acceptance_bound: f64::NAN,
    })
}

/// [`VecDistribution`] over `Vq` backed by [`thin_matvec_sample`].
pub struct ThinMatvec<'a> {
    basis: &'a dyn RowBasis,
    col_norms: SquareTree,
    q: Vec<f64>,
    norm_sq: f64,
    pub iteration_cap: u64,
    rounds: AtomicU64,
    draws: AtomicU64,
}

impl<'a> ThinMatvec<'a> {
    /// `norm_sq` normalizes [`prob_of`](VecDistribution::prob_of); pass the
    /// exact `‖Vq‖²` when available or the diagonal approximation otherwise.
    pub fn new(basis: &'a dyn RowBasis, q: Vec<f64>, norm_sq: f64) -> Result<Self> {
        if q.len() != basis.rank() {
            return Err(Error::DimensionMismatch(format!(
                "q has {} entries, basis rank is {}",
                q.len(),
                basis.rank()
            )));
        }
        let weights: Vec<f64> = (0..basis.rank()).map(|j| basis.col_norm_sq(j)).collect();
        Ok(Self {
            basis,
            col_norms: SquareTree::from_weights(&weights),
            q,
            norm_sq,
            iteration_cap: DEFAULT_ITERATION_CAP,
            rounds: AtomicU64::new(0),
            draws: AtomicU64::new(0),
        })
    }

    /// Expected rounds per draw, `‖V‖_F²‖q‖² / ‖Vq‖²`, using `norm_sq` for `‖Vq‖²`.
    pub fn expected_rounds(&self) -> f64 {
        let q_sq: f64 = self.q.iter().map(|x| x * x).sum();
        self.col_norms.total() * q_sq / self.norm_sq
    }

    /// Mean rejection rounds per accepted draw so far.
    pub fn mean_rounds(&self) -> f64 {
        let d = self.draws.load(Ordering::Relaxed);
        if d == 0 {
            0.0
        } else {
            self.rounds.load(Ordering::Relaxed) as f64 / d as f64
        }
    }
}

impl VecDistribution for ThinMatvec<'_> {
    fn support_len(&self) -> usize {
        self.basis.n_rows()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Result<usize> {
        let (l, rounds) = thin_matvec_sample(self.basis, &self.col_norms, &self.q, self.iteration_cap, rng)?;
        self.rounds.fetch_add(rounds, Ordering::Relaxed);
        self.draws.fetch_add(1, Ordering::Relaxed);
        Ok(l)
    }

    fn prob_of(&self, l: usize) -> f64 {
        prob_of_index(self.basis, &self.q, self.norm_sq, l)
    }
}

/// Exact law from a dense vector, `P(l) = x(l)² / ‖x‖²`.
#[derive(Debug, Clone)]
pub struct DenseDistribution {
    tree: SquareTree,
}

impl DenseDistribution {
    pub fn from_vector(x: &[f64]) -> Self {
        Self { tree: SquareTree::from_values(x) }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.tree.len()).map(|l| self.prob_of(l)).collect()
    }
}

impl VecDistribution for DenseDistribution {
    fn support_len(&self) -> usize {
        self.tree.len()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Result<usize> {
        if !(self.tree.total() > 0.0) {
            return Err(Error::ZeroWeight("dense distribution"));
        }
        Ok(self.tree.sample(rng))
    }

    fn prob_of(&self, l: usize) -> f64 {
        self.tree.square(l) / self.tree.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelectConfig {
    pub n_x: usize,
    pub n_y: usize,
    /// Separation threshold ε the draw counts were sized for.
    pub eps_gap: f64,
    /// Minimum top probability ε_T.
    pub eps_t: f64,
}

impl PostSelectConfig {
    /// `⌈2 ln(8/δ) / ε²⌉` draws per distribution.
    pub fn draws_for(eps_gap: f64, delta: f64) -> usize {
        (2.0 * (8.0 / delta).ln() / (eps_gap * eps_gap)).ceil() as usize
    }

    pub fn sized(eps_gap: f64, eps_t: f64, delta: f64) -> Self {
        let n = Self::draws_for(eps_gap, delta);
        Self { n_x: n, n_y: n, eps_gap, eps_t }
    }

    pub fn with_draws(n_x: usize, n_y: usize) -> Self {
        Self { n_x, n_y, eps_gap: f64::NAN, eps_t: f64::NAN }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::InvalidConfig("post-selection draw counts must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PostSelectConfig {
    fn default() -> Self {
        Self::with_draws(4096, 4096)
    }
}

/// Result of one approximately solved subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemOutcome {
    pub anchor: usize,
    /// Probability of the most frequent X index.
    pub c_star: f64,
    pub xi_hat: f64,
    /// `(index, count)` of distinct X draws, count descending.
    pub x_counts: Vec<(usize, u32)>,
    /// `(index, count)` of distinct Y draws, count descending.
    pub y_counts: Vec<(usize, u32)>,
    /// Every sampled Y index fell below `ξ̂·C*`; the most frequent one was
    /// returned instead. Still votes.
    pub all_infeasible: bool,
    /// The projection vanished; excluded from voting.
    pub degenerate: bool,
    pub mean_rounds_x: f64,
    pub mean_rounds_y: f64,
}

impl SubproblemOutcome {
    pub fn degenerate(anchor: usize) -> Self {
        Self {
            anchor,
            c_star: f64::NAN,
            xi_hat: f64::NAN,
            x_counts: Vec::new(),
            y_counts: Vec::new(),
            all_infeasible: false,
            degenerate: true,
            mean_rounds_x: 0.0,
            mean_rounds_y: 0.0,
        }
    }
}

fn histogram(dist: &dyn VecDistribution, draws: usize, rng: &mut dyn RngCore) -> Result<Vec<(usize, u32)>> {
    let mut counts: HashMap<usize, u32> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(dist.draw(rng)?).or_default() += 1;
    }
    let mut out: Vec<(usize, u32)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Picks `argmin_z (count(z)/N_Y − threshold)_+` over sampled `z`, where
/// `(x)_+ = ∞` for negative `x`. Ties go to the larger count, then the
/// smaller index. `counts` must be sorted by count descending, index
/// ascending. Returns `(index, all_infeasible)`.
pub fn select_from_counts(counts: &[(usize, u32)], n_draws: usize, threshold: f64) -> (usize, bool) {
    let mut best: Option<(f64, u32, usize)> = None;
    for &(z, c) in counts {
        let gap = c as f64 / n_draws as f64 - threshold;
        if gap < 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bg, bc, bz)) => gap < bg || (gap == bg && (c > bc || (c == bc && z < bz))),
        };
        if better {
            best = Some((gap, c, z));
        }
    }
    match best {
        Some((_, _, z)) => (z, false),
        None => (counts[0].0, true),
    }
}

/// Post-selection: the most frequent of `N_X` X-draws fixes
/// `C* = P_X(I_{X,1})`; the anchor is then chosen among `N_Y` Y-draws by
/// [`select_from_counts`] with threshold `ξ̂·C*`.
pub fn heuristic_post_select(
    dist_x: &dyn VecDistribution,
    dist_y: &dyn VecDistribution,
    xi_hat: f64,
    cfg: &PostSelectConfig,
    rng: &mut dyn RngCore,
) -> Result<SubproblemOutcome> {
    cfg.validate()?;
    let x_counts = histogram(dist_x, cfg.n_x, rng)?;
    let c_star = dist_x.prob_of(x_counts[0].0);
    let y_counts = histogram(dist_y, cfg.n_y, rng)?;
    let (anchor, all_infeasible) = select_from_counts(&y_counts, cfg.n_y, xi_hat * c_star);
    Ok(SubproblemOutcome {
        anchor,
        c_star,
        xi_hat,
        x_counts,
        y_counts,
        all_infeasible,
        degenerate: false,
        mean_rounds_x: 0.0,
        mean_rounds_y: 0.0,
    })
}

/// `argmin_i (p_y(i) − ξ max p_x)_+` over the full support, ties to the
/// smaller index; falls back to `argmax p_y` (flagged) when every entry is
/// infeasible.
pub fn exact_selection(p_x: &[f64], p_y: &[f64], xi: f64) -> (usize, bool) {
    let threshold = xi * p_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in p_y.iter().enumerate() {
        let gap = p - threshold;
        if gap >= 0.0 && best.is_none_or(|(bg, _)| gap < bg) {
            best = Some((gap, i));
        }
    }
    match best {
        Some((_, i)) => (i, false),
        None => {
            let mut arg = 0;
            for (i, &p) in p_y.iter().enumerate() {
                if p > p_y[arg] {
                    arg = i;
                }
            }
            (arg, true)
        }
    }
}
