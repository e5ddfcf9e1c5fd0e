//! Monte Carlo certification of a linear halfspace classifier, where the
//! smoothed probability is known in closed form.
//!
//! `cargo run --release --example mc_certify -- [sigma] [n]`

use certsmooth::model::BaseClassifier;
use certsmooth::numerics::gaussian_cdf;
use certsmooth::smoothing::{certify_mc, SmoothingParams};

/// Class 1 when the first coordinate is positive.
struct Halfspace;

impl BaseClassifier for Halfspace {
    fn input_dim(&self) -> usize {
        2
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn classify(&self, x: &[f64]) -> certsmooth::Result<usize> {
        Ok(usize::from(x[0] > 0.0))
    }
}

fn main() -> certsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let sigma: f64 = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(0.5);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(10_000);
    let params = SmoothingParams::new(sigma, n, 100, 0.001, 17)?;

    println!("x0\ttrue_p\tp_lower\tradius\ttrue_radius\tdecision");
    for (i, x0) in [0.02, 0.1, 0.25, 0.5, 1.0, -0.3].into_iter().enumerate() {
        let out = certify_mc(&Halfspace, &[x0, 0.0], &params.for_example(i as u64))?;
        let p = gaussian_cdf(x0.abs() / sigma)?;
        println!(
            "{x0}\t{p:.4}\t{:.4}\t{:.4}\t{:.4}\t{:?}",
            out.p_a_lower,
            out.radius,
            x0.abs(),
            out.decision
        );
    }
    Ok(())
}
