//! Rejection sampling from P(l) ∝ (V q)_l² touching one row of V per
//! round, and post-selection comparing two such distributions.

use conehull::basis::DenseBasis;
use conehull::estimators;
use conehull::rng;
use conehull::sampler::{self, DenseDistribution, PostSelectConfig, ThinMatvec, VecDistribution};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> conehull::Result<()> {
    let mut r = rng::stream(3, &[]);
    let v = DMatrix::from_fn(8, 3, |_, _| r.sample::<f64, _>(StandardNormal));
    let basis = DenseBasis::from_matrix(&v);
    let q = vec![0.5, -1.0, 2.0];
    let hv = basis.mul_vec(&q);
    let norm_sq: f64 = hv.iter().map(|x| x * x).sum();
    let dist = ThinMatvec::new(&basis, q, norm_sq)?;

    let draws = 50_000;
    let mut counts = [0usize; 8];
    for _ in 0..draws {
        counts[dist.draw(&mut r)?] += 1;
    }
    println!("  l   exact P   empirical");
    for (l, &c) in counts.iter().enumerate() {
        println!("{l:>3}   {:.4}    {:.4}", dist.prob_of(l), c as f64 / draws as f64);
    }
    println!("rounds per draw: {:.2} observed, {:.2} expected", dist.mean_rounds(), dist.expected_rounds());

    // Post-selection: which Y index sits just above the top X value?
    let x = [0.9, 0.2, 0.4];
    let y = [1.0, 0.3, 0.95, 0.1];
    let xi = estimators::xi_estimate(x.iter().map(|v| v * v).sum(), y.iter().map(|v| v * v).sum()).unwrap();
    let (dx, dy) = (DenseDistribution::from_vector(&x), DenseDistribution::from_vector(&y));
    let out = sampler::heuristic_post_select(&dx, &dy, xi, &PostSelectConfig::sized(0.05, 0.05, 0.05), &mut r)?;
    let (exact, _) = sampler::exact_selection(&dx.probabilities(), &dy.probabilities(), xi);
    println!("post-selected anchor {} (exact {exact}), C* = {:.3}, xi = {:.3}", out.anchor, out.c_star, out.xi_hat);
    Ok(())
}
