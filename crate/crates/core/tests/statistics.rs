//! Distributional checks against dense oracles: χ² goodness of fit, total
//! variation, unbiasedness and concentration trends.

use conehull::basis::{DenseBasis, RowBasis};
use conehull::estimators::{self, EstimatorConfig};
use conehull::matstore::{SampledMatrix, SquareTree};
use conehull::rng;
use conehull::sampler::{self, DenseDistribution, PostSelectConfig, ThinMatvec, VecDistribution};
use conehull::sketch::{self, ImplicitView, SketchConfig};
use conehull::snmf;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const DRAWS: usize = 100_000;

/// p-value of Pearson's χ² statistic. The cells with the smallest expected
/// counts are pooled until the pool expects at least 5. Atoms with zero
/// probability must never be drawn.
fn chi2_p(counts: &[u32], probs: &[f64]) -> f64 {
    let total = counts.iter().sum::<u32>() as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for (&c, &p) in counts.iter().zip(probs) {
        if p == 0.0 {
            assert_eq!(c, 0, "zero-probability atom drawn");
        } else {
            cells.push((c as f64, p * total));
        }
    }
    cells.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut stat = 0.0;
    let mut dof_cells = 0;
    for (c, e) in cells {
        if exp < 5.0 {
            obs += c;
            exp += e;
            continue;
        }
        stat += (c - e).powi(2) / e;
        dof_cells += 1;
    }
    if exp > 0.0 {
        stat += (obs - exp).powi(2) / exp;
        dof_cells += 1;
    }
    if dof_cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((dof_cells - 1) as f64).unwrap().cdf(stat)
}

fn tv(counts: &[u32], probs: &[f64]) -> f64 {
    let total: u32 = counts.iter().sum();
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / total as f64 - p).abs()).sum::<f64>()
}

fn tally(n: usize, mut draw: impl FnMut() -> usize) -> Vec<u32> {
    let mut c = vec![0u32; n];
    for _ in 0..DRAWS {
        c[draw()] += 1;
    }
    c
}

fn gaussian(n: usize, m: usize, r: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| r.sample(StandardNormal))
}

#[test]
fn row_sampling_follows_row_norms() {
    let h = SampledMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
    let mut r = rng::stream(1, &[]);
    let c = tally(2, || h.sample_row_index(&mut r).unwrap());
    assert!(chi2_p(&c, &[0.2, 0.8]) > 0.001);

    let eye = SampledMatrix::from_dense(&DMatrix::identity(7, 7));
    let c = tally(7, || eye.sample_row_index(&mut r).unwrap());
    assert!(chi2_p(&c, &[1.0 / 7.0; 7]) > 0.001);

    let row = SampledMatrix::from_dense(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0]));
    let c = tally(2, || row.sample_index_in_row(0, &mut r).unwrap());
    assert!(chi2_p(&c, &[9.0 / 25.0, 16.0 / 25.0]) > 0.001);
}

#[test]
fn store_sampling_matches_dense_law() {
    let mut r = rng::stream(2, &[]);
    for n in [5, 17, 32] {
        let d = gaussian(n, 9, &mut r);
        let h = SampledMatrix::from_dense(&d);
        let frob = d.norm_squared();
        let rows: Vec<f64> = d.row_iter().map(|x| x.norm_squared() / frob).collect();
        let cols: Vec<f64> = d.column_iter().map(|x| x.norm_squared() / frob).collect();
        let cr = tally(n, || h.sample_row_index(&mut r).unwrap());
        let cc = tally(9, || h.sample_col_index(&mut r).unwrap());
        assert!(tv(&cr, &rows) < 0.01 && chi2_p(&cr, &rows) > 0.001, "rows, n = {n}");
        assert!(tv(&cc, &cols) < 0.01 && chi2_p(&cc, &cols) > 0.001, "cols, n = {n}");
        let col3: Vec<f64> = d.column(3).iter().map(|x| x * x / d.column(3).norm_squared()).collect();
        let cin = tally(n, || h.sample_index_in_col(3, &mut r).unwrap());
        assert!(chi2_p(&cin, &col3) > 0.001, "within column, n = {n}");
    }
}

#[test]
fn thin_matvec_on_identity() {
    let v = DenseBasis::from_matrix(&DMatrix::identity(2, 2));
    let dist = ThinMatvec::new(&v, vec![3.0, 4.0], 25.0).unwrap();
    let mut r = rng::stream(3, &[]);
    let c = tally(2, || dist.draw(&mut r).unwrap());
    assert!(chi2_p(&c, &[0.36, 0.64]) > 0.001);
    assert!((dist.prob_of(1) - 0.64).abs() < 1e-15);
}

#[test]
fn thin_matvec_is_exact_and_fast_enough() {
    let mut r = rng::stream(4, &[]);
    for trial in 0..5 {
        let v = gaussian(8, 3, &mut r);
        let q: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
        let basis = DenseBasis::from_matrix(&v);
        let hv = basis.mul_vec(&q);
        let norm: f64 = hv.iter().map(|x| x * x).sum();
        let probs = DenseDistribution::from_vector(&hv).probabilities();
        let dist = ThinMatvec::new(&basis, q.clone(), norm).unwrap();
        let c = tally(8, || dist.draw(&mut r).unwrap());
        assert!(tv(&c, &probs) < 0.01, "trial {trial}");
        assert!(chi2_p(&c, &probs) > 0.001, "trial {trial}");
        let q_sq: f64 = q.iter().map(|x| x * x).sum();
        let bound = 3.0 * v.norm_squared() * q_sq / norm;
        assert!(dist.mean_rounds() <= bound, "rounds {} > {bound}", dist.mean_rounds());
        assert!((dist.expected_rounds() - v.norm_squared() * q_sq / norm).abs() < 1e-9 * bound);
    }
}

#[test]
fn implicit_view_column_law() {
    let mut r = rng::stream(5, &[]);
    let d = DMatrix::from_fn(20, 12, |_, _| r.random::<f64>());
    let h = SampledMatrix::from_dense(&d);
    let b = sketch::subsample(&h, &SketchConfig::new(60, 3, 5), &mut r).unwrap();
    let view = ImplicitView::exact(&b, &h).unwrap();
    let v = b.v_dense(&h);
    for i in 0..3 {
        let col = v.column(i);
        let probs: Vec<f64> = col.iter().map(|x| x * x / col.norm_squared()).collect();
        let c = tally(20, || view.sample_in_col(i, &mut r).unwrap());
        assert!(chi2_p(&c, &probs) > 0.001, "column {i}");
        assert!(tv(&c, &probs) < 0.01);
    }
}

#[test]
fn raw_inner_product_draws_are_unbiased() {
    let mut r = rng::stream(6, &[]);
    let d = DMatrix::from_fn(8, 8, |_, _| r.random::<f64>());
    let h = SampledMatrix::from_dense(&d);
    let v: Vec<f64> = (0..8).map(|_| r.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..8).map(|_| r.sample(StandardNormal)).collect();
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v: Vec<f64> = v.iter().map(|x| x / vn).collect();
    let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let b: Vec<f64> = b.iter().map(|x| x / bn).collect();
    let basis = DenseBasis::from_columns(std::slice::from_ref(&v)).unwrap();
    let exact = estimators::exact_q(&h, &basis, &b)[0];
    // One group of 10⁶ draws: the estimate is the plain mean.
    let cfg = EstimatorConfig { n_groups: 1, group_size: 1_000_000, eps: f64::NAN, delta: 0.5 };
    let est = estimators::inner_product_estimate(&h, &basis, 0, &SquareTree::from_values(&b), &cfg, &mut r).unwrap();
    assert!((est.value - exact).abs() <= 0.02 * exact.abs(), "{} vs {exact}", est.value);
}

#[test]
fn sampled_basis_norm_is_close() {
    let mut r = rng::stream(7, &[]);
    let d = gaussian(40, 30, &mut r);
    let h = SampledMatrix::from_dense(&d);
    let b = sketch::subsample(&h, &SketchConfig::new(2000, 2, 7), &mut r).unwrap();
    let exact = b.exact_norms_sq(&h);
    let cfg = EstimatorConfig::with_group_size(4000, 0.05);
    for i in 0..2 {
        let est = estimators::basis_norm_sq_sampled(&h, &b, i, &cfg, &mut r).unwrap();
        assert!((est - exact[i]).abs() < 0.1 * exact[i], "{est} vs {}", exact[i]);
        assert!((estimators::basis_norm_sq_exact(&h, &b, i).unwrap() - exact[i]).abs() < 1e-12);
    }
}

#[test]
fn ctc_is_unbiased_for_rtr() {
    let mut r = rng::stream(8, &[]);
    let d = DMatrix::from_fn(6, 5, |_, _| r.random::<f64>() + 0.1);
    let h = SampledMatrix::from_dense(&d);
    let trials = 200;
    let s = 4;
    let mut sum = DMatrix::<f64>::zeros(s, s);
    let mut sum_sq = DMatrix::<f64>::zeros(s, s);
    for t in 0..trials {
        let b = sketch::subsample(&h, &SketchConfig::new(s, 1, t), &mut rng::stream(8, &[t])).unwrap();
        let c = b.c_dense(&h);
        let rm = b.r_dense(&h);
        let diff = c.transpose() * &c - rm.transpose() * &rm;
        sum += &diff;
        sum_sq += diff.component_mul(&diff);
    }
    let n = trials as f64;
    let mean = &sum / n;
    for idx in 0..s * s {
        let var = sum_sq[idx] / n - mean[idx] * mean[idx];
        let se = (var / n).sqrt();
        assert!(mean[idx].abs() <= 4.0 * se + 1e-12, "entry {idx}: mean {} se {se}", mean[idx]);
    }
}

#[test]
fn sketch_improves_with_more_samples() {
    let k = 4;
    let sizes = [250, 1000, 4000];
    let mut defects = vec![Vec::new(); 3];
    let mut residuals = vec![Vec::new(); 3];
    for seed in 0..10u64 {
        let mut r = rng::stream(9, &[seed]);
        let h = SampledMatrix::from_dense(&(gaussian(200, k, &mut r) * gaussian(k, 200, &mut r)));
        for (a, &s) in sizes.iter().enumerate() {
            let b = sketch::subsample(&h, &SketchConfig::new(s, k, seed), &mut rng::stream(9, &[seed, s as u64])).unwrap();
            defects[a].push(b.orthonormality_defect(&h));
            residuals[a].push(b.relative_residual(&h));
        }
    }
    let d: Vec<f64> = defects.iter().map(|v| snmf::median(v)).collect();
    let res: Vec<f64> = residuals.iter().map(|v| snmf::median(v)).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0]), "defect medians {d:?}");
    assert!(res.windows(2).all(|w| w[1] <= w[0]), "residual medians {res:?}");
}

#[test]
fn post_selection_recovers_exact_argmin() {
    let p_x = [0.5, 0.3, 0.2];
    let p_y = [0.05, 0.4, 0.55];
    let xi = 0.5;
    let (want, infeasible) = sampler::exact_selection(&p_x, &p_y, xi);
    assert_eq!((want, infeasible), (1, false));
    let dist_x = DenseDistribution::from_vector(&p_x.map(f64::sqrt));
    let dist_y = DenseDistribution::from_vector(&p_y.map(f64::sqrt));
    let delta = 0.1;
    let cfg = PostSelectConfig::sized(0.1, 0.1, delta);
    let mut hits = 0;
    for trial in 0..200u64 {
        let mut r = rng::stream(10, &[trial]);
        let out = sampler::heuristic_post_select(&dist_x, &dist_y, xi, &cfg, &mut r).unwrap();
        assert!(out.y_counts.iter().any(|&(z, _)| z == out.anchor));
        if out.anchor == want {
            hits += 1;
        }
    }
    assert!(hits as f64 >= (1.0 - delta) * 200.0, "{hits}/200");
}

#[test]
fn post_selection_converges_with_many_draws() {
    let mut r = rng::stream(11, &[]);
    let x: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
    let y: Vec<f64> = (0..9).map(|_| r.random::<f64>() * 1.5).collect();
    let dx = DenseDistribution::from_vector(&x);
    let dy = DenseDistribution::from_vector(&y);
    let nx: f64 = x.iter().map(|v| v * v).sum();
    let ny: f64 = y.iter().map(|v| v * v).sum();
    let xi = estimators::xi_estimate(nx, ny).unwrap();
    let (want, _) = sampler::exact_selection(&dx.probabilities(), &dy.probabilities(), xi);
    let out = sampler::heuristic_post_select(&dx, &dy, xi, &PostSelectConfig::with_draws(400_000, 400_000), &mut r).unwrap();
    assert_eq!(out.anchor, want);
}
