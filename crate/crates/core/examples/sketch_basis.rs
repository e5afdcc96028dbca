//! Subsampled implicit SVD of a low-rank matrix: how close the implicit
//! basis is to orthonormal, how much of H it captures, and what the
//! worst-case sample-count formulas would ask for instead.

use conehull::matstore::SampledMatrix;
use conehull::rng;
use conehull::sketch::{self, SketchConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> conehull::Result<()> {
    let (n, k) = (200, 5);
    let mut r = rng::stream(7, &[]);
    let a = DMatrix::from_fn(n, k, |_, _| r.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(k, n, |_, _| r.sample::<f64, _>(StandardNormal));
    let h = SampledMatrix::from_dense(&(a * b));

    println!("    s  distinct cols  defect    residual");
    for s in [250, 1000, 4000] {
        let basis = sketch::subsample(&h, &SketchConfig::new(s, k, 7), &mut r)?;
        println!(
            "{s:>5}  {:>13}  {:.4}    {:.4}",
            basis.core_cols.len(),
            basis.orthonormality_defect(&h),
            basis.relative_residual(&h)
        );
    }

    let basis = sketch::subsample(&h, &SketchConfig::new(1000, k, 7), &mut r)?;
    println!("sigma = {:.3?}", basis.sigma);
    println!("ṽ₀(0) = {:.5}", basis.basis_entry(&h, 0, 0)?);

    let frob = h.frob_norm_sq().sqrt();
    let sq = sketch::theoretical_sample_count(k, 2.0, n, frob, 0.5, 0.1);
    let cubic = sketch::theoretical_sample_count_cubic(k, 2.0, n, frob, 0.5, 0.1);
    println!("worst-case sample counts (kappa = 2, eps = 0.5, eta = 0.1): {sq:.3e} (k²), {cubic:.3e} (k³)");
    Ok(())
}
