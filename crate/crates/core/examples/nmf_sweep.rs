//! A small benchmark sweep over sketch size and noise, printed as the
//! per-cell medians and variances plus the tidy CSV.

use conehull::dca::Mode;
use conehull::snmf::{self, BenchConfig, SweepGrid};

fn main() -> conehull::Result<()> {
    let base = BenchConfig { n: 200, m: 150, k: 5, p: 40, mode: Mode::Approx, n_x: 2048, n_y: 2048, ..BenchConfig::default() };
    let grid = SweepGrid { s: vec![500, 2000], mu: vec![0.0, 0.5, 2.0], seeds: 3 };
    let records = snmf::sweep(&base, &grid)?;

    println!("   mu      s   rho med   rho var   recon med");
    for c in snmf::summarize(&records) {
        println!("{:>5} {:>6}   {:>7.2}   {:>7.3}   {:>9.3e}", c.mu, c.s, c.rho_median, c.rho_var, c.recon_median);
    }
    println!();
    print!("{}", snmf::records_to_csv(&records, false)?);
    Ok(())
}
