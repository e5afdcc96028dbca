//! Median-of-means estimates of vᵀ H B from entry-squared draws, against
//! the dense value, for a growing per-group budget.

use conehull::basis::DenseBasis;
use conehull::estimators::{self, EstimatorConfig};
use conehull::matstore::{SampledMatrix, SquareTree};
use conehull::rng;
use nalgebra::DMatrix;
use rand::Rng;

fn main() -> conehull::Result<()> {
    let mut r = rng::stream(11, &[]);
    let h_dense = DMatrix::from_fn(8, 8, |_, _| r.random::<f64>());
    let h = SampledMatrix::from_dense(&h_dense);
    let basis = DenseBasis::exact_left_singular(&h, 2)?;
    let b: Vec<f64> = vec![1.0 / 8f64.sqrt(); 8];
    let b_tree = SquareTree::from_values(&b);

    let exact = estimators::exact_q(&h, &basis, &b);
    println!("exact q = {exact:.5?}");
    for group_size in [10, 100, 1000, 10_000] {
        let cfg = EstimatorConfig::with_group_size(group_size, 0.05);
        let est = estimators::inner_product_estimate(&h, &basis, 0, &b_tree, &cfg, &mut r)?;
        println!(
            "{} groups x {group_size:>5}: estimate {:.5}  error {:.2e}",
            cfg.n_groups,
            est.value,
            (est.value - exact[0]).abs()
        );
    }

    let frob = h.frob_norm_sq().sqrt();
    let sized = EstimatorConfig::sized(0.01, 0.05, frob, 1.0, 1.0);
    println!("budget for eps = 0.01, delta = 0.05: {} draws", sized.total_draws());
    let q = estimators::build_q_hat(&h, &basis, &b_tree, &sized, 11, &[0])?;
    println!("q_hat = {:.5?} (degenerate: {})", q.q_hat, q.degenerate);
    Ok(())
}
