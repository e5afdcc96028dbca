//! Divide-and-conquer anchoring on a synthetic separable instance, exact
//! and sampled, plus a separate candidate matrix Y.

use std::time::Instant;

use conehull::dca::{self, Mode, SolveConfig};
use conehull::matstore::SampledMatrix;
use conehull::snmf;
use nalgebra::DMatrix;

fn main() -> conehull::Result<()> {
    let inst = snmf::generate_synthetic(500, 500, 10, 0.0, 1)?;
    let x = inst.store();
    println!("true anchors: {:?}", inst.true_anchors);

    for (mode, s) in [(Mode::Exact, 0), (Mode::Approx, 4000)] {
        let mut cfg = SolveConfig::new(10, mode);
        cfg.p = Some(100);
        if s > 0 {
            cfg.s = s;
        }
        let start = Instant::now();
        let set = dca::solve(&x, None, &cfg)?;
        println!(
            "{mode:?}: {:?}  recovery {:.1}  ({:.1} s, {} degenerate)",
            set.sorted_indices(),
            snmf::recovery_rate(&inst.true_anchors, &set.indices),
            start.elapsed().as_secs_f64(),
            set.n_degenerate()
        );
    }

    // Anchors chosen from a different matrix: X mixes rows of Y.
    let y = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.3, 0.4]);
    let mix = DMatrix::from_row_slice(2, 4, &[0.5, 0.5, 0.0, 0.0, 0.1, 0.0, 0.2, 0.7]);
    let x = &mix * &y;
    let mut cfg = SolveConfig::new(3, Mode::Exact);
    cfg.p = Some(50);
    let set = dca::solve(&SampledMatrix::from_dense(&x), Some(&SampledMatrix::from_dense(&y)), &cfg)?;
    println!("rows of Y covering X: {:?}, vote shares {:.2?}", set.sorted_indices(), set.scores);
    Ok(())
}
