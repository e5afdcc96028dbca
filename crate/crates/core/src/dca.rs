//! Divide-and-conquer anchoring.
//!
//! `p` random one-dimensional projections each produce one candidate anchor,
//! either exactly from dense projections or approximately from the sampled
//! pipeline; the `k` most voted indices form the anchor set.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{dense_mul_vec, DenseBasis, RowBasis};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorConfig};
use crate::matstore::{SampledMatrix, SquareTree};
use crate::rng::{self, ROLE_NORMS, ROLE_POST_SELECT, ROLE_PROJECTIONS, ROLE_QHAT_X, ROLE_QHAT_Y, ROLE_SKETCH_X, ROLE_SKETCH_Y};
use crate::sampler::{self, DenseDistribution, PostSelectConfig, SubproblemOutcome, ThinMatvec};
use crate::sketch::{self, ImplicitBasis, ImplicitView, SketchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "camelCase")]
pub enum Ensemble {
    Gaussian,
    UnitBasis,
    DataRow,
    UniformNonneg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub b: Vec<f64>,
    pub ensemble: Ensemble,
    pub seed: u64,
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// `p` unit projection vectors of length `m`; vector `t` depends only on
/// `(master_seed, t)`.
pub fn generate_projections(
    m: usize,
    p: usize,
    ensemble: Ensemble,
    master_seed: u64,
    data: Option<&SampledMatrix>,
) -> Result<Vec<ProjectionSpec>> {
    if p == 0 {
        return Err(Error::InvalidConfig("at least one projection is required".into()));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("projection dimension must be positive".into()));
    }
    if ensemble == Ensemble::DataRow {
        match data {
            None => return Err(Error::InvalidConfig("dataRow ensemble needs a data matrix".into())),
            Some(d) if d.n_cols() != m => {
                return Err(Error::DimensionMismatch(format!(
                    "data matrix has {} columns, projections need {m}",
                    d.n_cols()
                )))
            }
            _ => {}
        }
    }
    (0..p)
        .map(|t| {
            let seed = rng::derive_seed(master_seed, &[ROLE_PROJECTIONS, t as u64]);
            let mut r = rng::stream(master_seed, &[ROLE_PROJECTIONS, t as u64]);
            let b = loop {
                let raw: Vec<f64> = match ensemble {
                    Ensemble::Gaussian => (0..m).map(|_| r.sample(StandardNormal)).collect(),
                    Ensemble::UniformNonneg => (0..m).map(|_| r.random::<f64>()).collect(),
                    Ensemble::UnitBasis => {
                        let mut e = vec![0.0; m];
                        e[r.random_range(0..m)] = 1.0;
                        e
                    }
                    Ensemble::DataRow => {
                        let d = data.expect("checked above");
                        let i = d.sample_row_index(&mut r)?;
                        let mut row = vec![0.0; m];
                        for (j, v) in d.row_entries(i) {
                            row[j] = v;
                        }
                        row
                    }
                };
                if raw.iter().any(|x| *x != 0.0) {
                    break normalize(raw);
                }
            };
            Ok(ProjectionSpec { b, ensemble, seed })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOutcome {
    pub anchor: usize,
    /// No Y projection reached `max X_t`; `argmax Y_t` was returned.
    pub degenerate: bool,
}

/// Dense one-dimensional subproblem:
/// `argmin_i (Y_t(i) − max_j X_t(j))_+` with `(x)_+ = ∞` for `x < 0`.
pub fn solve_subproblem_exact(x: &SampledMatrix, y: &SampledMatrix, b: &[f64]) -> ExactOutcome {
    let x_t = x.mul_vec(b);
    let y_t = y.mul_vec(b);
    exact_from_projections(&x_t, &y_t)
}

pub(crate) fn exact_from_projections(x_t: &[f64], y_t: &[f64]) -> ExactOutcome {
    let top = x_t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(f64, usize)> = None;
    for (i, &v) in y_t.iter().enumerate() {
        let gap = v - top;
        if gap >= 0.0 && best.is_none_or(|(bg, _)| gap < bg) {
            best = Some((gap, i));
        }
    }
    match best {
        Some((_, anchor)) => ExactOutcome { anchor, degenerate: false },
        None => {
            let mut arg = 0;
            for (i, &v) in y_t.iter().enumerate() {
                if v > y_t[arg] {
                    arg = i;
                }
            }
            ExactOutcome { anchor: arg, degenerate: true }
        }
    }
}

/// How `q̂` is obtained in the approximate subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QMode {
    /// Median-of-means inner-product estimates.
    Sampled,
    /// `Vᵀ(H B)` evaluated densely.
    Exact,
}

/// How the anchor is read off the two projected distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SelectMode {
    /// Finite draws and post-selection.
    PostSelect,
    /// Exact dense probabilities and exact normalizers.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemConfig {
    pub estimator: EstimatorConfig,
    pub post_select: PostSelectConfig,
    pub q_mode: QMode,
    pub select_mode: SelectMode,
    pub iteration_cap: u64,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            post_select: PostSelectConfig::default(),
            q_mode: QMode::Sampled,
            select_mode: SelectMode::PostSelect,
            iteration_cap: sampler::DEFAULT_ITERATION_CAP,
        }
    }
}

/// One side (X or Y) of an approximate subproblem.
pub struct Side<'a> {
    pub store: &'a SampledMatrix,
    pub basis: &'a dyn RowBasis,
}

fn basis_norms(basis: &dyn RowBasis) -> Vec<f64> {
    (0..basis.rank()).map(|i| basis.col_norm_sq(i)).collect()
}

/// Approximate subproblem `t`: estimate `q̂` for both sides, compare the
/// induced distributions `P_{Ṽq̂}` through post-selection (or exactly, when
/// `select_mode` is [`SelectMode::Dense`]).
pub fn solve_subproblem_approx(
    x: &Side<'_>,
    y: &Side<'_>,
    b: &[f64],
    cfg: &SubproblemConfig,
    seed: u64,
    t: usize,
) -> Result<SubproblemOutcome> {
    let t64 = t as u64;
    let b_tree = SquareTree::from_values(b);
    let q_for = |side: &Side<'_>, role: u64| -> Result<Option<Vec<f64>>> {
        match cfg.q_mode {
            QMode::Exact => Ok(Some(estimators::exact_q(side.store, side.basis, b))),
            QMode::Sampled => {
                let est = estimators::build_q_hat(side.store, side.basis, &b_tree, &cfg.estimator, seed, &[t64, role])?;
                Ok((!est.degenerate).then_some(est.q_hat))
            }
        }
    };
    // With Y = X (same store, same basis) one estimate serves both sides.
    let same_side = std::ptr::eq(x.store, y.store)
        && std::ptr::addr_eq(x.basis as *const dyn RowBasis, y.basis as *const dyn RowBasis);
    let q_x = q_for(x, ROLE_QHAT_X)?;
    let q_y = if same_side { q_x.clone() } else { q_for(y, ROLE_QHAT_Y)? };
    let (Some(q_x), Some(q_y)) = (q_x, q_y) else {
        return Ok(SubproblemOutcome::degenerate(0));
    };

    match cfg.select_mode {
        SelectMode::Dense => {
            let hx = dense_mul_vec(x.basis, &q_x);
            let hy = dense_mul_vec(y.basis, &q_y);
            let nx: f64 = hx.iter().map(|v| v * v).sum();
            let ny: f64 = hy.iter().map(|v| v * v).sum();
            let Some(xi) = estimators::xi_estimate(nx, ny) else {
                return Ok(SubproblemOutcome::degenerate(0));
            };
            let px = DenseDistribution::from_vector(&hx).probabilities();
            let py = DenseDistribution::from_vector(&hy).probabilities();
            let c_star = px.iter().copied().fold(0.0, f64::max);
            let (anchor, all_infeasible) = sampler::exact_selection(&px, &py, xi);
            Ok(SubproblemOutcome {
                anchor,
                c_star,
                xi_hat: xi,
                x_counts: Vec::new(),
                y_counts: Vec::new(),
                all_infeasible,
                degenerate: false,
                mean_rounds_x: 0.0,
                mean_rounds_y: 0.0,
            })
        }
        SelectMode::PostSelect => {
            let nx = estimators::approx_proj_norm(&q_x, &basis_norms(x.basis));
            let ny = estimators::approx_proj_norm(&q_y, &basis_norms(y.basis));
            let Some(xi) = estimators::xi_estimate(nx, ny) else {
                return Ok(SubproblemOutcome::degenerate(0));
            };
            let mut dist_x = ThinMatvec::new(x.basis, q_x, nx)?;
            let mut dist_y = ThinMatvec::new(y.basis, q_y, ny)?;
            dist_x.iteration_cap = cfg.iteration_cap;
            dist_y.iteration_cap = cfg.iteration_cap;
            let mut r = rng::stream(seed, &[t64, ROLE_POST_SELECT]);
            let mut out = sampler::heuristic_post_select(&dist_x, &dist_y, xi, &cfg.post_select, &mut r)?;
            out.mean_rounds_x = dist_x.mean_rounds();
            out.mean_rounds_y = dist_y.mean_rounds();
            Ok(out)
        }
    }
}

/// Final anchors and their vote shares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSet {
    /// `k` indices into the rows of Y, highest score first.
    pub indices: Vec<usize>,
    /// Vote share `ĝᵢ` for every row of Y.
    pub scores: Vec<f64>,
    pub outcomes: Vec<SubproblemOutcome>,
}

impl AnchorSet {
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    pub fn n_degenerate(&self) -> usize {
        self.outcomes.iter().filter(|o| o.degenerate).count()
    }
}

/// Votes: `ĝᵢ = #{t : Â_t = i} / p'` over the `p'` non-degenerate outcomes,
/// then the `k` largest scores (ties to the smaller index).
pub fn conquer(outcomes: Vec<SubproblemOutcome>, n_y: usize, k: usize) -> Result<AnchorSet> {
    let mut counts = vec![0usize; n_y];
    let mut used = 0usize;
    for o in outcomes.iter().filter(|o| !o.degenerate) {
        if o.anchor >= n_y {
            return Err(Error::IndexOutOfRange { what: "anchor", index: o.anchor, bound: n_y });
        }
        counts[o.anchor] += 1;
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoUsableSubproblems);
    }
    let available = counts.iter().filter(|&&c| c > 0).count();
    if k > available {
        return Err(Error::VoteShortfall { requested: k, available });
    }
    let scores: Vec<f64> = counts.iter().map(|&c| c as f64 / used as f64).collect();
    let mut order: Vec<usize> = (0..n_y).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(AnchorSet { indices: order, scores, outcomes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    Exact,
    Approx,
}

/// How the approximate pipeline reads the implicit basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "camelCase")]
pub enum BasisAccess {
    /// Evaluate `Ṽ` once into a dense table with per-column trees.
    Materialized,
    /// Query `Ṽ` through the sketch on every access.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub k: usize,
    /// Number of subproblems; `None` uses [`default_subproblems`].
    pub p: Option<usize>,
    pub mode: Mode,
    pub ensemble: Ensemble,
    /// Sketch sample count `s` (approx mode).
    pub s: usize,
    /// Sketch rank; defaults to `k`.
    pub sketch_rank: Option<usize>,
    pub sigma_floor: Option<f64>,
    pub basis_access: BasisAccess,
    pub subproblem: SubproblemConfig,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub seed: u64,
}

impl SolveConfig {
    pub fn new(k: usize, mode: Mode) -> Self {
        Self {
            k,
            p: None,
            mode,
            ensemble: Ensemble::Gaussian,
            s: 4000,
            sketch_rank: None,
            sigma_floor: None,
            basis_access: BasisAccess::Materialized,
            subproblem: SubproblemConfig::default(),
            workers: None,
            seed: rng::DEFAULT_SEED,
        }
    }

    pub fn subproblems(&self) -> usize {
        self.p.unwrap_or_else(|| default_subproblems(self.k))
    }
}

/// `⌈k log₂ k⌉ · 10`, at least 1.
pub fn default_subproblems(k: usize) -> usize {
    let kf = k as f64;
    (((kf * kf.log2()).ceil() as usize) * 10).max(1)
}

pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

struct Prepared {
    sketch: ImplicitBasis,
    dense: Option<DenseBasis>,
    norms: Vec<f64>,
}

fn prepare_side(h: &SampledMatrix, cfg: &SolveConfig, role: u64) -> Result<Prepared> {
    let rank = cfg.sketch_rank.unwrap_or(cfg.k);
    let sk_cfg = SketchConfig { s: cfg.s, k: rank, sigma_floor: cfg.sigma_floor, seed: cfg.seed };
    let mut r = rng::stream(cfg.seed, &[role]);
    let sketch = sketch::subsample(h, &sk_cfg, &mut r)?;
    match cfg.basis_access {
        BasisAccess::Materialized => {
            let dense = DenseBasis::from_matrix(&sketch.v_dense(h));
            Ok(Prepared { sketch, dense: Some(dense), norms: Vec::new() })
        }
        BasisAccess::Implicit => {
            let norms = if h.n_rows() <= 10_000 {
                sketch.exact_norms_sq(h)
            } else {
                (0..sketch.rank())
                    .map(|i| {
                        let mut r = rng::stream(cfg.seed, &[role, ROLE_NORMS, i as u64]);
                        estimators::basis_norm_sq_sampled(h, &sketch, i, &cfg.subproblem.estimator, &mut r)
                    })
                    .collect::<Result<_>>()?
            };
            Ok(Prepared { sketch, dense: None, norms })
        }
    }
}

fn view<'a>(p: &'a Prepared, h: &'a SampledMatrix, cap: u64) -> Result<Box<dyn RowBasis + 'a>> {
    Ok(match &p.dense {
        Some(d) => Box::new(d.clone()),
        None => {
            let mut v = ImplicitView::with_norms(&p.sketch, h, p.norms.clone())?;
            v.iteration_cap = cap;
            Box::new(v)
        }
    })
}

/// Full pipeline. `y = None` means `Y = X` (the separable NMF setting), in
/// which case one sketch serves both sides.
pub fn solve(x: &SampledMatrix, y: Option<&SampledMatrix>, cfg: &SolveConfig) -> Result<AnchorSet> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let y_store = y.unwrap_or(x);
    if y_store.n_cols() != x.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} columns, Y has {}",
            x.n_cols(),
            y_store.n_cols()
        )));
    }
    let p = cfg.subproblems();
    let projections = generate_projections(x.n_cols(), p, cfg.ensemble, cfg.seed, Some(x))?;

    let outcomes = match cfg.mode {
        Mode::Exact => with_workers(cfg.workers, || {
            projections
                .par_iter()
                .map(|proj| {
                    let e = solve_subproblem_exact(x, y_store, &proj.b);
                    let mut o = SubproblemOutcome::degenerate(e.anchor);
                    o.degenerate = false;
                    o.all_infeasible = e.degenerate;
                    o
                })
                .collect::<Vec<_>>()
        })?,
        Mode::Approx => {
            let px = prepare_side(x, cfg, ROLE_SKETCH_X)?;
            let py = match y {
                Some(ys) => Some(prepare_side(ys, cfg, ROLE_SKETCH_Y)?),
                None => None,
            };
            let cap = cfg.subproblem.iteration_cap;
            let vx = view(&px, x, cap)?;
            let vy = match &py {
                Some(p) => Some(view(p, y_store, cap)?),
                None => None,
            };
            let side_x = Side { store: x, basis: vx.as_ref() };
            let side_y = Side { store: y_store, basis: vy.as_deref().unwrap_or(vx.as_ref()) };
            with_workers(cfg.workers, || {
                projections
                    .par_iter()
                    .enumerate()
                    .map(|(t, proj)| {
                        solve_subproblem_approx(&side_x, &side_y, &proj.b, &cfg.subproblem, cfg.seed, t)
                            .map_err(|e| e.in_subproblem(t))
                    })
                    .collect::<Result<Vec<_>>>()
            })??
        }
    };
    conquer(outcomes, y_store.n_rows(), cfg.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn rows(data: &[&[f64]]) -> SampledMatrix {
        let n = data.len();
        let m = data[0].len();
        SampledMatrix::from_dense(&DMatrix::from_fn(n, m, |i, j| data[i][j]))
    }

    #[test]
    fn exact_subproblem_hand_case() {
        let y = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let x = rows(&[&[0.5, 0.5]]);
        let out = solve_subproblem_exact(&x, &y, &[1.0, 0.0]);
        assert_eq!(out, ExactOutcome { anchor: 0, degenerate: false });
    }

    #[test]
    fn exact_subproblem_self_cone_and_single_row() {
        let y = rows(&[&[0.2, 0.9], &[0.7, 0.1], &[0.4, 0.4]]);
        assert_eq!(solve_subproblem_exact(&y, &y, &[1.0, 0.0]).anchor, 1);
        let one = rows(&[&[0.3, 0.3]]);
        assert_eq!(solve_subproblem_exact(&one, &one, &[0.0, 1.0]).anchor, 0);
        let low = rows(&[&[0.1, 0.0]]);
        let out = solve_subproblem_exact(&rows(&[&[1.0, 0.0]]), &low, &[1.0, 0.0]);
        assert!(out.degenerate);
    }

    fn vote(anchor: usize) -> SubproblemOutcome {
        let mut o = SubproblemOutcome::degenerate(anchor);
        o.degenerate = false;
        o
    }

    #[test]
    fn conquer_counts_and_breaks_ties() {
        let set = conquer(vec![vote(1), vote(1), vote(2), vote(3)], 4, 2).unwrap();
        assert_eq!(set.indices, vec![1, 2]);
        assert_eq!(set.scores, vec![0.0, 0.5, 0.25, 0.25]);
        let same = conquer(vec![vote(2); 5], 4, 1).unwrap();
        assert_eq!(same.indices, vec![2]);
    }

    #[test]
    fn conquer_errors() {
        assert!(matches!(
            conquer(vec![vote(1), vote(1)], 3, 2),
            Err(Error::VoteShortfall { requested: 2, available: 1 })
        ));
        assert!(matches!(
            conquer(vec![SubproblemOutcome::degenerate(0)], 3, 1),
            Err(Error::NoUsableSubproblems)
        ));
        // degenerate outcomes are dropped from the denominator
        let set = conquer(vec![vote(0), SubproblemOutcome::degenerate(2)], 3, 1).unwrap();
        assert_eq!(set.scores, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn projections_are_unit_and_reproducible() {
        for ens in [Ensemble::Gaussian, Ensemble::UnitBasis, Ensemble::UniformNonneg] {
            let a = generate_projections(100, 3, ens, 42, None).unwrap();
            let b = generate_projections(100, 3, ens, 42, None).unwrap();
            assert_eq!(a, b);
            for p in &a {
                let norm: f64 = p.b.iter().map(|x| x * x).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
        let e = generate_projections(3, 1, Ensemble::UnitBasis, 1, None).unwrap();
        assert_eq!(e[0].b.iter().filter(|x| **x == 1.0).count(), 1);
        assert!(generate_projections(3, 1, Ensemble::DataRow, 1, None).is_err());
        let d = rows(&[&[0.0, 3.0, 4.0]]);
        let dr = generate_projections(3, 2, Ensemble::DataRow, 1, Some(&d)).unwrap();
        assert_eq!(dr[0].b, vec![0.0, 0.6, 0.8]);
        assert!(generate_projections(3, 0, Ensemble::Gaussian, 1, None).is_err());
    }

    #[test]
    fn default_p() {
        assert_eq!(default_subproblems(10), 340);
        assert_eq!(default_subproblems(1), 1);
        assert_eq!(default_subproblems(2), 20);
    }
}
