//! Test-side reference implementations. They share no code with the crate:
//! the normal CDF is a Gauss-Legendre quadrature of the density, and
//! binomial tails are ratios of pmf sums built outward from the mode.

#![allow(dead_code)]

const GL5_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Φ(x) = 1/2 ± ∫_0^|x| φ(t) dt, five-point Gauss-Legendre on 2000 panels.
pub fn phi(x: f64) -> f64 {
    let panels = 2000;
    let h = x.abs() / panels as f64;
    let mut integral = 0.0;
    for i in 0..panels {
        let mid = (i as f64 + 0.5) * h;
        for (t, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let u = mid + 0.5 * h * t;
            integral += w * 0.5 * h * (-0.5 * u * u).exp();
        }
    }
    integral /= (2.0 * std::f64::consts::PI).sqrt();
    if x >= 0.0 {
        0.5 + integral
    } else {
        0.5 - integral
    }
}

/// Unnormalised Binomial(n, p) pmf, 1 at the mode, by the ratio recurrence
/// walked outward from the mode.
fn relative_pmf(n: u64, p: f64) -> Vec<f64> {
    let mode = (((n + 1) as f64 * p).floor() as u64).min(n);
    let odds = p / (1.0 - p);
    let mut r = vec![0.0; n as usize + 1];
    r[mode as usize] = 1.0;
    for j in mode..n {
        r[j as usize + 1] = r[j as usize] * (n - j) as f64 / (j + 1) as f64 * odds;
    }
    for j in (1..=mode).rev() {
        r[j as usize - 1] = r[j as usize] * j as f64 / (n - j + 1) as f64 / odds;
    }
    r
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn exact_sf(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 || p >= 1.0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    let r = relative_pmf(n, p);
    let tail: f64 = r[k as usize..].iter().sum();
    let head: f64 = r[..k as usize].iter().sum();
    tail / (head + tail)
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`.
pub fn exact_cdf(k: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let r = relative_pmf(n, p);
    let head: f64 = r[..=k as usize].iter().sum();
    let tail: f64 = r[k as usize + 1..].iter().sum();
    head / (head + tail)
}

/// One-sided Clopper-Pearson lower bound: the `p` solving
/// `P(X >= k | n, p) = alpha`, found by bisection until the bracket is
/// narrower than 1e-14.
pub fn cp_lower(k: u64, n: u64, alpha: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if exact_sf(k, n, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest absolute difference relative to `max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

use certsmooth::model::{loss_value, Loss, Network};

/// Central finite differences of the loss, per parameter, laid out like
/// `Gradients::flatten`.
pub fn numeric_gradient(net: &Network, x: &[f64], target: &[f64], loss: Loss, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let layers = net.layers().to_vec();
    for li in 0..layers.len() {
        let count = layers[li].weights.len() + layers[li].bias.len();
        for pi in 0..count {
            let eval = |delta: f64| {
                let mut ls = layers.clone();
                let l = &mut ls[li];
                if pi < l.weights.len() {
                    l.weights[pi] += delta;
                } else {
                    l.bias[pi - l.weights.len()] += delta;
                }
                let n = Network::from_layers(ls, net.head()).unwrap();
                loss_value(&n, x, target, loss).unwrap()
            };
            out.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    out
}
