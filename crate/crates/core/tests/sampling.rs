use sdlevy::rng::{par_samples, sample_exponential, sample_gamma, sample_poisson_arrivals, sample_uniform, GammaParams};
use sdlevy::stats::{ks_two_sample, Significance};
use sdlevy::RngStream;
use statrs::distribution::{ContinuousCDF, Gamma};

/// One-sample Kolmogorov distance against an exact CDF.
fn ks_one_sample(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// c(0.001) / sqrt(n)
fn one_sample_threshold(n: usize) -> f64 {
    Significance::Permille.kolmogorov_quantile() / (n as f64).sqrt()
}

#[test]
fn gamma_sampler_matches_reference_cdf() {
    let n = 100_000;
    for (k, &(shape, rate)) in [(0.3, 1.0), (1.0, 2.0), (4.5, 0.5)].iter().enumerate() {
        let p = GammaParams::new(shape, rate).unwrap();
        let x = par_samples(&RngStream::family(100 + k as u64, "gamma-cdf"), n, |s| sample_gamma(p, s));
        let oracle = Gamma::new(shape, rate).unwrap();
        let d = ks_one_sample(x, |v| oracle.cdf(v));
        assert!(d < one_sample_threshold(n), "shape {shape}: D = {d}");
    }
}

#[test]
fn gamma_three_is_sum_of_three_exponentials() {
    let n = 100_000;
    let p = GammaParams::new(3.0, 1.0).unwrap();
    let a = par_samples(&RngStream::family(5, "gamma3"), n, |s| sample_gamma(p, s));
    let b = par_samples(&RngStream::family(5, "exp-sum"), n, |s| {
        (0..3).map(|_| sample_exponential(1.0, s)).sum::<f64>()
    });
    let ks = ks_two_sample(&a, &b, Significance::Permille).unwrap();
    assert!(ks.pass, "{ks:?}");
}

#[test]
fn power_uniform_mean() {
    let n = 1_000_000;
    let x = par_samples(&RngStream::family(6, "pow-u"), n, |s| sample_uniform(s).sqrt());
    let m = x.iter().sum::<f64>() / n as f64;
    assert!((m - 2.0 / 3.0).abs() < 0.002, "{m}");
}

#[test]
fn third_arrival_is_gamma_three() {
    let n = 100_000;
    let direct = GammaParams::new(3.0, 2.0).unwrap();
    let tau3 = par_samples(&RngStream::family(7, "arrivals"), n, |s| {
        let t = sample_poisson_arrivals(2.0, 40.0, s).unwrap();
        t[2]
    });
    let g = par_samples(&RngStream::family(7, "gamma-3-2"), n, |s| sample_gamma(direct, s));
    let ks = ks_two_sample(&tau3, &g, Significance::Permille).unwrap();
    assert!(ks.pass, "{ks:?}");
    let oracle = Gamma::new(3.0, 2.0).unwrap();
    assert!(ks_one_sample(tau3, |v| oracle.cdf(v)) < one_sample_threshold(n));
}

#[test]
fn poisson_rejects_bad_arguments() {
    let mut s = RngStream::new(1, 1);
    assert!(sample_poisson_arrivals(1.0, 0.0, &mut s).is_err());
    assert!(sample_poisson_arrivals(-1.0, 1.0, &mut s).is_err());
}

#[test]
fn streams_are_uncorrelated() {
    let n = 100_000;
    let a = par_samples(&RngStream::new(11, 0), 1, |s| (0..n).map(|_| sample_uniform(s)).collect::<Vec<_>>());
    let b = par_samples(&RngStream::new(11, 1), 1, |s| (0..n).map(|_| sample_uniform(s)).collect::<Vec<_>>());
    let r = sdlevy::stats::correlation(&a[0], &b[0]);
    assert!(r.abs() < 3.0 / (n as f64).sqrt(), "{r}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let root = RngStream::family(12, "threads");
    let p = GammaParams::new(0.7, 1.0).unwrap();
    let many = par_samples(&root, 5000, |s| sample_gamma(p, s));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| par_samples(&root, 5000, |s| sample_gamma(p, s)));
    let serial: Vec<f64> = (0..5000).map(|i| sample_gamma(p, &mut root.derive(i))).collect();
    assert_eq!(many, one);
    assert_eq!(many, serial);
}
