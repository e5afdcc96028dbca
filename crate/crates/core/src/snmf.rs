//! Near-separable NMF benchmark: synthetic instances, recovery rate,
//! reconstruction error, and sweeps over sample count and noise level.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dca::{self, BasisAccess, Ensemble, Mode, SolveConfig};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::matstore::SampledMatrix;
use crate::rng;
use crate::sampler::PostSelectConfig;

#[derive(Debug, Clone)]
pub struct SnmfInstance {
    /// `n × m` data matrix, rows permuted.
    pub x: DMatrix<f64>,
    /// Row positions of the anchors in `x`, ascending.
    pub true_anchors: Vec<usize>,
    pub mu: f64,
    pub seed: u64,
    /// Row `r` of `x` is row `perm[r]` of `f · x_a + noise`.
    pub perm: Vec<usize>,
    /// `[I_k; U]`, unpermuted.
    pub f: DMatrix<f64>,
    pub x_a: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl SnmfInstance {
    pub fn store(&self) -> SampledMatrix {
        SampledMatrix::from_dense(&self.x)
    }
}

fn l1_rows_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
    for mut row in a.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    a
}

/// `X = F·X_A + N` with `F = [I_k; U]`, `X_A` and `U` uniform on `[0,1]`
/// then ℓ1-row-normalized, `N` i.i.d. normal with standard deviation `mu`.
/// Rows are shuffled afterwards; entries are not clipped.
pub fn generate_synthetic(n: usize, m: usize, k: usize, mu: f64, seed: u64) -> Result<SnmfInstance> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("need 0 < k <= n, got k = {k}, n = {n}")));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("m must be positive".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise level must be finite and nonnegative, got {mu}")));
    }
    let mut r = rng::stream(seed, &[]);
    let x_a = l1_rows_uniform(k, m, &mut r);
    let u = l1_rows_uniform(n - k, k, &mut r);
    let mut f = DMatrix::zeros(n, k);
    for i in 0..k {
        f[(i, i)] = 1.0;
    }
    f.view_mut((k, 0), (n - k, k)).copy_from(&u);
    let noise = if mu > 0.0 {
        let normal = Normal::new(0.0, mu).expect("valid normal");
        DMatrix::from_fn(n, m, |_, _| normal.sample(&mut r))
    } else {
        DMatrix::zeros(n, m)
    };
    let clean = &f * &x_a + &noise;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);
    let x = DMatrix::from_fn(n, m, |row, col| clean[(perm[row], col)]);
    let mut true_anchors: Vec<usize> = (0..n).filter(|&row| perm[row] < k).collect();
    true_anchors.sort_unstable();
    Ok(SnmfInstance { x, true_anchors, mu, seed, perm, f, x_a, noise })
}

/// `|A ∩ Â| / |A|`.
pub fn recovery_rate(true_anchors: &[usize], found: &[usize]) -> f64 {
    if true_anchors.is_empty() {
        return 0.0;
    }
    let hits = true_anchors.iter().filter(|a| found.contains(a)).count();
    hits as f64 / true_anchors.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnlsConfig {
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub rel_tol: f64,
}

impl Default for NnlsConfig {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-8 }
    }
}

/// Nonnegative `F` (`n × |anchors|`) approximately minimizing
/// `‖X − F·X(anchors,:)‖_F`, by projected gradient per row with step `1/L`,
/// `L = λ_max(X_A X_Aᵀ)`.
pub fn nnls_encode(x: &DMatrix<f64>, anchor_rows: &[usize], cfg: &NnlsConfig) -> Result<DMatrix<f64>> {
    if anchor_rows.is_empty() {
        return Err(Error::InvalidConfig("no anchor rows to encode with".into()));
    }
    if let Some(&bad) = anchor_rows.iter().find(|&&a| a >= x.nrows()) {
        return Err(Error::IndexOutOfRange { what: "anchor", index: bad, bound: x.nrows() });
    }
    let x_a = x.select_rows(anchor_rows);
    let gram = &x_a * x_a.transpose();
    let lip = SymmetricEigen::new(gram.clone()).eigenvalues.max();
    let k = anchor_rows.len();
    if !(lip > 0.0) {
        return Ok(DMatrix::zeros(x.nrows(), k));
    }
    let step = 1.0 / lip;
    // c_r = X_A x_r for every row at once: (n × k)
    let lin = x * x_a.transpose();
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|r| {
            let c: Vec<f64> = lin.row(r).iter().copied().collect();
            let xr_sq = x.row(r).norm_squared();
            // ½‖x_r − fᵀX_A‖² = ½ fᵀGf − cᵀf + ½‖x_r‖²
            let objective = |f: &[f64]| -> f64 {
                let mut quad = 0.0;
                for i in 0..k {
                    let gi: f64 = (0..k).map(|j| gram[(i, j)] * f[j]).sum();
                    quad += f[i] * gi;
                }
                0.5 * quad - c.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + 0.5 * xr_sq
            };
            let mut f = vec![0.0; k];
            let mut prev = objective(&f);
            for _ in 0..cfg.max_iter {
                let grad: Vec<f64> = (0..k)
                    .map(|i| (0..k).map(|j| gram[(i, j)] * f[j]).sum::<f64>() - c[i])
                    .collect();
                for (fi, gi) in f.iter_mut().zip(&grad) {
                    *fi = (*fi - step * gi).max(0.0);
                }
                let obj = objective(&f);
                let scale = prev.abs().max(f64::MIN_POSITIVE);
                if (prev - obj).abs() / scale < cfg.rel_tol {
                    break;
                }
                prev = obj;
            }
            f
        })
        .collect();
    Ok(DMatrix::from_fn(x.nrows(), k, |r, i| rows[r][i]))
}

/// `‖X − F·X(anchors,:)‖_F` with `F` from [`nnls_encode`].
pub fn reconstruction_error(x: &DMatrix<f64>, anchor_rows: &[usize], cfg: &NnlsConfig) -> Result<f64> {
    let f = nnls_encode(x, anchor_rows, cfg)?;
    let x_a = x.select_rows(anchor_rows);
    Ok((x - f * x_a).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub mu: f64,
    pub p: usize,
    pub s: usize,
    pub mode: Mode,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub n_x: usize,
    pub n_y: usize,
    pub estimator: EstimatorConfig,
    pub basis_access: BasisAccess,
    pub workers: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 500,
            k: 10,
            mu: 0.0,
            p: 100,
            s: 4000,
            mode: Mode::Approx,
            seed: rng::DEFAULT_SEED,
            ensemble: Ensemble::Gaussian,
            n_x: 4096,
            n_y: 4096,
            estimator: EstimatorConfig::default(),
            basis_access: BasisAccess::Materialized,
            workers: None,
        }
    }
}

impl BenchConfig {
    pub fn solve_config(&self) -> SolveConfig {
        let mut cfg = SolveConfig::new(self.k, self.mode);
        cfg.p = Some(self.p);
        cfg.ensemble = self.ensemble;
        cfg.s = self.s;
        cfg.basis_access = self.basis_access;
        cfg.subproblem.estimator = self.estimator;
        cfg.subproblem.post_select = PostSelectConfig::with_draws(self.n_x, self.n_y);
        cfg.workers = self.workers;
        cfg.seed = rng::derive_seed(self.seed, &[0x501e]);
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubproblemSummary {
    pub degenerate: usize,
    pub all_infeasible: usize,
    /// Fraction of non-degenerate votes that hit a true anchor.
    pub anchor_hit_rate: f64,
    pub mean_rounds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub config: BenchConfig,
    pub rho: f64,
    pub recon_err: f64,
    pub wall_ms: u64,
    pub found: Vec<usize>,
    pub true_anchors: Vec<usize>,
    pub error: Option<String>,
    pub diagnostics: Option<SubproblemSummary>,
}

/// Generate, solve, score. A failed solve is recorded, not propagated.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchRecord> {
    let inst = generate_synthetic(cfg.n, cfg.m, cfg.k, cfg.mu, cfg.seed)?;
    let store = inst.store();
    let start = Instant::now();
    let solved = dca::solve(&store, None, &cfg.solve_config());
    let wall_ms = start.elapsed().as_millis() as u64;
    let (found, error, diagnostics) = match solved {
        Ok(set) => {
            let voting: Vec<_> = set.outcomes.iter().filter(|o| !o.degenerate).collect();
            let hits = voting.iter().filter(|o| inst.true_anchors.binary_search(&o.anchor).is_ok()).count();
            let rounds: f64 = voting.iter().map(|o| 0.5 * (o.mean_rounds_x + o.mean_rounds_y)).sum();
            let summary = SubproblemSummary {
                degenerate: set.n_degenerate(),
                all_infeasible: set.outcomes.iter().filter(|o| o.all_infeasible).count(),
                anchor_hit_rate: hits as f64 / voting.len().max(1) as f64,
                mean_rounds: rounds / voting.len().max(1) as f64,
            };
            (set.sorted_indices(), None, Some(summary))
        }
        Err(e) => (Vec::new(), Some(e.to_string()), None),
    };
    let (rho, recon_err) = if found.is_empty() {
        (0.0, f64::NAN)
    } else {
        (
            recovery_rate(&inst.true_anchors, &found),
            reconstruction_error(&inst.x, &found, &NnlsConfig::default())?,
        )
    };
    Ok(BenchRecord {
        config: *cfg,
        rho,
        recon_err,
        wall_ms,
        found,
        true_anchors: inst.true_anchors,
        error,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub s: Vec<usize>,
    pub mu: Vec<f64>,
    pub seeds: usize,
}

/// Seed of replicate `r`; shared across grid cells so that cells differ
/// only in `s` and `mu`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    rng::derive_seed(master, &[0x5eed, r as u64])
}

/// Every `(mu, s, replicate)` cell of the grid, run concurrently.
pub fn sweep(base: &BenchConfig, grid: &SweepGrid) -> Result<Vec<BenchRecord>> {
    if grid.s.is_empty() || grid.mu.is_empty() || grid.seeds == 0 {
        return Err(Error::InvalidConfig("sweep grid has an empty axis".into()));
    }
    let mut cells = Vec::new();
    for &mu in &grid.mu {
        for &s in &grid.s {
            for r in 0..grid.seeds {
                cells.push(BenchConfig { mu, s, seed: replicate_seed(base.seed, r), ..*base });
            }
        }
    }
    dca::with_workers(base.workers, || {
        cells
            .par_iter()
            .map(|c| run_bench(&BenchConfig { workers: None, ..*c }).map(|mut rec| {
                rec.config.workers = base.workers;
                rec
            }))
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub mu: f64,
    pub s: usize,
    pub runs: usize,
    pub rho_median: f64,
    pub rho_var: f64,
    pub recon_median: f64,
    pub recon_var: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Median and sample variance of `rho` and `recon_err` per `(mu, s)` cell,
/// in first-seen order.
pub fn summarize(records: &[BenchRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(f64, usize)> = Vec::new();
    for r in records {
        let key = (r.config.mu, r.config.s);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(mu, s)| {
            let cell: Vec<&BenchRecord> = records.iter().filter(|r| r.config.mu == mu && r.config.s == s).collect();
            let rho: Vec<f64> = cell.iter().map(|r| r.rho).collect();
            let recon: Vec<f64> = cell.iter().map(|r| r.recon_err).collect();
            CellSummary {
                mu,
                s,
                runs: cell.len(),
                rho_median: median(&rho),
                rho_var: variance(&rho),
                recon_median: median(&recon),
                recon_var: variance(&recon),
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    n: usize,
    m: usize,
    k: usize,
    mu: f64,
    p: usize,
    s: usize,
    mode: &'a str,
    seed: u64,
    rho: f64,
    recon_err: f64,
    wall_ms: u64,
}

/// One CSV row per record: `n,m,k,mu,p,s,mode,seed,rho,recon_err,wall_ms`.
/// With `omit_timing`, `wall_ms` is written as 0 so repeated runs are
/// byte-identical.
pub fn records_to_csv(records: &[BenchRecord], omit_timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let c = &r.config;
        w.serialize(CsvRow {
            n: c.n,
            m: c.m,
            k: c.k,
            mu: c.mu,
            p: c.p,
            s: c.s,
            mode: match c.mode {
                Mode::Exact => "exact",
                Mode::Approx => "approx",
            },
            seed: c.seed,
            rho: r.rho,
            recon_err: r.recon_err,
            wall_ms: if omit_timing { 0 } else { r.wall_ms },
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
