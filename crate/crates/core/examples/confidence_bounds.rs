//! Clopper-Pearson lower bounds and the radii they buy.
//!
//! `cargo run --example confidence_bounds -- [alpha] [sigma]`

use certsmooth::numerics::{clopper_pearson_lower, gaussian_cdf, gaussian_quantile};
use certsmooth::smoothing::radius_from_lower;

fn main() -> certsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map(|s| s.parse().expect("alpha")).unwrap_or(0.001);
    let sigma: f64 = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(0.25);

    println!("n\tk/n\tp_lower\tradius");
    for n in [100u64, 1_000, 10_000, 100_000] {
        for frac in [0.6, 0.9, 0.99, 1.0] {
            let k = (frac * n as f64).round() as u64;
            let lo = clopper_pearson_lower(k, n, alpha)?;
            let r = if lo > 0.5 { radius_from_lower(lo, sigma)? } else { 0.0 };
            println!("{n}\t{frac}\t{lo:.6}\t{r:.4}");
        }
    }

    // all-correct at N samples caps the radius at sigma * Φ⁻¹(alpha^(1/N))
    println!("\nradius ceiling by N (k = n):");
    for n in [100u64, 1_000, 10_000, 100_000] {
        let lo = alpha.powf(1.0 / n as f64);
        println!("  N = {n:>6}: {:.4}", sigma * gaussian_quantile(lo)?);
    }
    println!("\nΦ(1.96) = {:.6}", gaussian_cdf(1.96)?);
    Ok(())
}
