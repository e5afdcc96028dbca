//! Length-square sampling from a sparse store: every draw is one tree
//! descent, and the empirical law matches the row-norm distribution.

use conehull::matstore::SampledMatrix;
use conehull::rng;

fn main() -> conehull::Result<()> {
    let triplets = [(0, 0, 3.0), (0, 1, 4.0), (1, 1, 5.0), (2, 0, -1.0), (2, 2, 2.0)];
    let h = SampledMatrix::build(&triplets, 3, 3)?;
    println!("‖H‖_F² = {}", h.frob_norm_sq());

    let mut r = rng::stream(rng::DEFAULT_SEED, &[]);
    let draws = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[h.sample_row_index(&mut r)?] += 1;
    }
    println!("row  ‖H(i,:)‖²  exact P   empirical");
    for (i, &c) in counts.iter().enumerate() {
        let norm = h.row_norm_sq(i)?;
        println!("{i:>3}  {norm:>9}  {:>7.4}   {:>9.4}", norm / h.frob_norm_sq(), c as f64 / draws as f64);
    }

    let j = h.sample_index_in_row(0, &mut r)?;
    println!("one draw from row 0 (P(col 1) = 16/25): column {j}, entry {}", h.entry(0, j)?);
    println!("tree audit: {}", h.audit());
    Ok(())
}
