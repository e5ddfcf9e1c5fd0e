mod common;

use certsmooth::numerics::{
    binomial_cdf, binomial_sf, binomial_two_sided_pvalue, clopper_pearson_lower, gaussian_cdf, gaussian_quantile,
    js_divergence, SimplexVector,
};
use common::{cp_lower, exact_cdf, phi};

#[test]
fn gaussian_cdf_matches_erfc_oracle() {
    for i in -800..=800 {
        let x = i as f64 / 100.0;
        let got = gaussian_cdf(x).unwrap();
        assert!((got - phi(x)).abs() <= 1e-12, "x = {x}: {got} vs {}", phi(x));
    }
    assert!((gaussian_cdf(1.0).unwrap() - 0.8413447460685429).abs() <= 1e-15);
    assert!(gaussian_cdf(f64::NAN).is_err());
    assert!(gaussian_cdf(f64::INFINITY).is_err());
}

#[test]
fn quantile_inverts_the_oracle() {
    assert!((gaussian_quantile(0.8413447460685429).unwrap() - 1.0).abs() <= 1e-8);
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        let x = gaussian_quantile(p).unwrap();
        assert!((phi(x) - p).abs() <= 1e-9, "p = {p}");
    }
    for p in [1e-12, 1e-9, 1e-6, 1.0 - 1e-6, 1.0 - 1e-9] {
        let x = gaussian_quantile(p).unwrap();
        assert!((phi(x) - p).abs() <= 1e-14, "p = {p}");
        let back = gaussian_cdf(x).unwrap();
        assert!(((back - p) / p.min(1.0 - p)).abs() <= 1e-9, "p = {p}");
    }
    assert!(gaussian_quantile(0.0).is_err());
    assert!(gaussian_quantile(1.0).is_err());
}

#[test]
fn binomial_cdf_matches_direct_summation() {
    let v = binomial_cdf(50, 100, 0.5).unwrap();
    assert!((v - exact_cdf(50, 100, 0.5)).abs() <= 1e-12);
    for (n, p) in [(10u64, 0.3), (100, 0.07), (1000, 0.5), (1000, 0.999), (20_000, 0.25)] {
        for k in [0, 1, n / 3, n / 2, n - 1, n] {
            let got = binomial_cdf(k, n, p).unwrap();
            let want = exact_cdf(k, n, p);
            assert!((got - want).abs() <= 1e-12, "cdf({k}, {n}, {p}) = {got}, oracle {want}");
            if k >= 1 {
                let sf = binomial_sf(k, n, p).unwrap();
                assert!((sf - (1.0 - exact_cdf(k - 1, n, p))).abs() <= 1e-12);
            }
        }
    }
    assert!((binomial_cdf(0, 40, 0.2).unwrap() - 0.8f64.powi(40)).abs() <= 1e-15);
    assert_eq!(binomial_cdf(7, 7, 0.4).unwrap(), 1.0);
    assert!(binomial_cdf(8, 7, 0.4).is_err());
}

#[test]
fn clopper_pearson_examples() {
    for n in [1u64, 10, 100, 1000] {
        for alpha in [0.05, 0.001] {
            assert_eq!(clopper_pearson_lower(0, n, alpha).unwrap(), 0.0);
            let closed = alpha.powf(1.0 / n as f64);
            assert!((clopper_pearson_lower(n, n, alpha).unwrap() - closed).abs() <= 1e-12);
        }
    }
    let v = clopper_pearson_lower(99, 100, 0.001).unwrap();
    assert!((v - cp_lower(99, 100, 0.001)).abs() <= 1e-10, "{v}");
    assert!(clopper_pearson_lower(5, 4, 0.05).is_err());
    assert!(clopper_pearson_lower(1, 4, 0.0).is_err());
    assert!(clopper_pearson_lower(1, 0, 0.5).is_err());
}

#[test]
fn clopper_pearson_monotonicity() {
    for n in [10u64, 137, 1000] {
        for alpha in [0.05, 0.01, 0.001] {
            let mut prev = -1.0;
            for k in 0..=n {
                let v = clopper_pearson_lower(k, n, alpha).unwrap();
                assert!(v >= prev, "not monotone at k = {k}, n = {n}");
                prev = v;
            }
        }
        for k in [1, n / 2, n] {
            let loose = clopper_pearson_lower(k, n, 0.05).unwrap();
            let tight = clopper_pearson_lower(k, n, 0.001).unwrap();
            assert!(tight <= loose);
        }
    }
}

#[test]
fn two_sided_pvalue_by_enumeration() {
    assert_eq!(binomial_two_sided_pvalue(7, 7).unwrap(), 1.0);
    assert!((binomial_two_sided_pvalue(2, 0).unwrap() - 0.5).abs() <= 1e-15);
    let want = 2.0 * 0.5f64.powi(100);
    let got = binomial_two_sided_pvalue(100, 0).unwrap();
    assert!(((got - want) / want).abs() <= 1e-12);
    // 2 * P(X >= 8 | 10, 1/2) = 2 * 56 / 1024
    assert!((binomial_two_sided_pvalue(8, 2).unwrap() - 112.0 / 1024.0).abs() <= 1e-15);
    assert!(binomial_two_sided_pvalue(0, 0).is_err());
    assert_eq!(binomial_two_sided_pvalue(2, 8).unwrap(), binomial_two_sided_pvalue(8, 2).unwrap());
}

#[test]
fn js_reference_values() {
    let p = SimplexVector::new(vec![0.5, 0.5]).unwrap();
    let q = SimplexVector::new(vec![1.0, 0.0]).unwrap();
    // M = (0.75, 0.25); JS = 0.5 KL(p||M) + 0.5 KL(q||M)
    let kl_p = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
    let kl_q = (1.0f64 / 0.75).ln();
    let want = 0.5 * (kl_p + kl_q);
    assert!((js_divergence(&p, &q).unwrap() - want).abs() <= 1e-15);
    let e0 = SimplexVector::new(vec![1.0, 0.0, 0.0]).unwrap();
    let e1 = SimplexVector::new(vec![0.0, 1.0, 0.0]).unwrap();
    assert!((js_divergence(&e0, &e1).unwrap() - std::f64::consts::LN_2).abs() <= 1e-15);
    assert!(js_divergence(&p, &e0).is_err());
}
