//! Statistical checks that turn distributional identities into verdicts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Significance levels supported by [`ks_two_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Significance {
    /// 0.01
    Percent,
    /// 0.001
    Permille,
}

impl Significance {
    pub fn level(self) -> f64 {
        match self {
            Significance::Percent => 0.01,
            Significance::Permille => 0.001,
        }
    }

    /// Upper `level` quantile `c` of the Kolmogorov distribution,
    /// `2 Σ_{k≥1} (-1)^{k-1} e^{-2k²c²} = level`.
    pub fn kolmogorov_quantile(self) -> f64 {
        kolmogorov_quantile(self.level())
    }
}

impl TryFrom<f64> for Significance {
    type Error = String;

    fn try_from(v: f64) -> std::result::Result<Self, String> {
        if v == 0.01 {
            Ok(Significance::Percent)
        } else if v == 0.001 {
            Ok(Significance::Permille)
        } else {
            Err(format!("significance must be 0.01 or 0.001, got {v}"))
        }
    }
}

impl From<Significance> for f64 {
    fn from(s: Significance) -> f64 {
        s.level()
    }
}

/// Kolmogorov survival function `P(K > c)`.
pub fn kolmogorov_survival(c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * c * c).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn kolmogorov_quantile(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.3, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Smallest sample size accepted by [`ks_two_sample`].
pub const KS_MIN_SAMPLES: usize = 100;

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `sup_x |F_a(x) - F_b(x)|` over two sorted samples.
pub fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Threshold `c(sig)·sqrt((n+m)/(nm))` from the asymptotic Kolmogorov law.
pub fn ks_threshold(n: usize, m: usize, significance: Significance) -> f64 {
    let (n, m) = (n as f64, m as f64);
    significance.kolmogorov_quantile() * ((n + m) / (n * m)).sqrt()
}

/// Two-sample KS test; passes when `D < threshold`.
pub fn ks_two_sample(a: &[f64], b: &[f64], significance: Significance) -> Result<KsResult> {
    let need = KS_MIN_SAMPLES;
    if a.len() < need || b.len() < need {
        return Err(Error::InsufficientSamples {
            need,
            got: a.len().min(b.len()),
        });
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(invalid("KS samples contain NaN"));
    }
    let statistic = ks_statistic_sorted(&sorted(a), &sorted(b));
    let threshold = ks_threshold(a.len(), b.len(), significance);
    Ok(KsResult {
        statistic,
        threshold,
        pass: statistic < threshold,
    })
}

/// Empirical CDF of a sorted sample at `x`.
pub fn ecdf_at(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Closed-form characteristic functions used as references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CharFn {
    /// `(1 - iu/λ)^{-α}`
    Gamma { shape: f64, rate: f64 },
    /// `e^{iuv}`
    PointMass { value: f64 },
    /// `e^{iuμ - σ²u²/2}`
    Normal { mean: f64, variance: f64 },
}

impl CharFn {
    pub fn eval(&self, u: f64) -> Complex64 {
        match *self {
            CharFn::Gamma { shape, rate } => {
                let base = Complex64::new(1.0, -u / rate);
                (-shape * base.ln()).exp()
            }
            CharFn::PointMass { value } => Complex64::new(0.0, u * value).exp(),
            CharFn::Normal { mean, variance } => {
                Complex64::new(-0.5 * variance * u * u, u * mean).exp()
            }
        }
    }
}

/// `n⁻¹ Σ e^{iux_j}`.
pub fn empirical_cf(samples: &[f64], u: f64) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &x in samples {
        let (s, c) = (u * x).sin_cos();
        re += c;
        im += s;
    }
    let n = samples.len() as f64;
    Complex64::new(re / n, im / n)
}

/// `max_{u ∈ grid} |φ̂(u) - φ(u)|`.
pub fn ecf_distance(samples: &[f64], cf: &CharFn, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|u| !u.is_finite()) {
        return Err(invalid("ECF grid must be nonempty and finite"));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    Ok(grid
        .iter()
        .map(|&u| (empirical_cf(samples, u) - cf.eval(u)).norm())
        .fold(0.0, f64::max))
}

/// `{-5, -4.5, …, 5}`.
pub fn default_ecf_grid() -> Vec<f64> {
    (-10..=10).map(|k| 0.5 * k as f64).collect()
}

/// Pass band of [`ecf_distance`]: `5/sqrt(n)`.
pub fn ecf_band(n: usize) -> f64 {
    5.0 / (n as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Pearson correlation; zero when either side is constant.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn median(x: &[f64]) -> f64 {
    let s = sorted(x);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Result of [`independence_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceResult {
    pub n: usize,
    pub max_abs_corr: f64,
    /// `3/sqrt(n)`.
    pub band: f64,
    pub pass: bool,
}

/// Smallest paired sample accepted by [`independence_diagnostic`].
pub const INDEPENDENCE_MIN_SAMPLES: usize = 1000;

/// Largest absolute correlation between `{clip(x, ±10), 1[x > med x]}` and
/// the same transforms of `y`.
pub fn independence_diagnostic(x: &[f64], y: &[f64]) -> Result<IndependenceResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < INDEPENDENCE_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            need: INDEPENDENCE_MIN_SAMPLES,
            got: x.len(),
        });
    }
    let transforms = |v: &[f64]| -> [Vec<f64>; 2] {
        let med = median(v);
        [
            v.iter().map(|a| a.clamp(-10.0, 10.0)).collect(),
            v.iter().map(|&a| if a > med { 1.0 } else { 0.0 }).collect(),
        ]
    };
    let (tx, ty) = (transforms(x), transforms(y));
    let mut max_abs_corr: f64 = 0.0;
    for a in &tx {
        for b in &ty {
            max_abs_corr = max_abs_corr.max(correlation(a, b).abs());
        }
    }
    let band = 3.0 / (x.len() as f64).sqrt();
    Ok(IndependenceResult {
        n: x.len(),
        max_abs_corr,
        band,
        pass: max_abs_corr <= band,
    })
}

/// A single scalar check: `value` against `target`, with an optional
/// tolerance band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, value: f64, target: f64, pass: bool) -> Self {
        Self {
            label: label.into(),
            value,
            target,
            tolerance: None,
            pass,
        }
    }

    /// Passes when `|value - target| ≤ tolerance`.
    pub fn within(label: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            target,
            tolerance: Some(tolerance),
            pass: (value - target).abs() <= tolerance,
        }
    }

    /// Passes when `value ≤ bound`.
    pub fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(label, value, bound, value <= bound)
    }
}

/// Sample mean within `n_se` standard errors of `expected`.
pub fn mean_check(label: impl Into<String>, x: &[f64], expected: f64, n_se: f64) -> Check {
    Check::within(label, mean(x), expected, n_se * std_error(x))
}

/// `E[X²]` within `n_se` standard errors of `expected`.
pub fn second_moment_check(label: impl Into<String>, x: &[f64], expected: f64, n_se: f64) -> Check {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    mean_check(label, &sq, expected, n_se)
}

/// Sample variance within `n_se` standard errors of `expected`, using
/// `SE² ≈ (m₄ - s⁴)/n`.
pub fn variance_check(label: impl Into<String>, x: &[f64], expected: f64, n_se: f64) -> Check {
    let m = mean(x);
    let v = variance(x);
    let m4 = x.iter().map(|a| (a - m).powi(4)).sum::<f64>() / x.len() as f64;
    let se = ((m4 - v * v).max(0.0) / x.len() as f64).sqrt();
    Check::within(label, v, expected, n_se * se)
}

/// Difference of two sample means within `n_se` combined standard errors of 0.
pub fn two_sample_mean_check(label: impl Into<String>, a: &[f64], b: &[f64], n_se: f64) -> Check {
    let se = (std_error(a).powi(2) + std_error(b).powi(2)).sqrt();
    Check::within(label, mean(a) - mean(b), 0.0, n_se * se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub side: String,
    pub n: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
}

impl MomentRow {
    pub fn of(side: &str, x: &[f64]) -> Self {
        Self {
            side: side.to_string(),
            n: x.len(),
            mean: mean(x),
            mean_se: std_error(x),
            variance: variance(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceEntry {
    pub label: String,
    #[serde(flatten)]
    pub result: IndependenceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub key: String,
    pub value: f64,
}

/// Collected evidence for one distributional claim.
///
/// The verdict is `pass` iff the KS test (if any) passes and every check and
/// independence diagnostic passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub n: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<KsResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<Significance>,
    pub moments: Vec<MomentRow>,
    pub checks: Vec<Check>,
    pub independence: Vec<IndependenceEntry>,
    pub notes: Vec<Note>,
    pub verdict: Verdict,
    pub seed: u64,
    pub fingerprint: String,
}

impl StatReport {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            n: 0,
            m: 0,
            ks: None,
            significance: None,
            moments: Vec::new(),
            checks: Vec::new(),
            independence: Vec::new(),
            notes: Vec::new(),
            verdict: Verdict::Pass,
            seed,
            fingerprint: String::new(),
        }
    }

    fn refresh(&mut self) {
        let ok = self.ks.is_none_or(|k| k.pass)
            && self.checks.iter().all(|c| c.pass)
            && self.independence.iter().all(|i| i.result.pass);
        self.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    }

    /// Runs the KS test of `a` against `b` and records both moment rows.
    pub fn ks_compare(&mut self, a: &[f64], b: &[f64], significance: Significance) -> Result<KsResult> {
        let ks = ks_two_sample(a, b, significance)?;
        self.n = a.len();
        self.m = b.len();
        self.ks = Some(ks);
        self.significance = Some(significance);
        self.moments.push(MomentRow::of("a", a));
        self.moments.push(MomentRow::of("b", b));
        self.refresh();
        Ok(ks)
    }

    pub fn push_check(&mut self, check: Check) {
        self.checks.push(check);
        self.refresh();
    }

    pub fn push_independence(&mut self, label: impl Into<String>, result: IndependenceResult) {
        self.independence.push(IndependenceEntry {
            label: label.into(),
            result,
        });
        self.refresh();
    }

    pub fn note(&mut self, key: impl Into<String>, value: f64) {
        self.notes.push(Note {
            key: key.into(),
            value,
        });
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "name,n,m,ks_statistic,ks_threshold,checks_passed,checks_total,verdict,seed,fingerprint";

    /// One-line CSV summary matching [`StatReport::CSV_HEADER`].
    pub fn csv_summary(&self) -> String {
        let (d, thr) = self
            .ks
            .map(|k| (format!("{:.16e}", k.statistic), format!("{:.16e}", k.threshold)))
            .unwrap_or_default();
        let total = self.checks.len() + self.independence.len();
        let passed = self.checks.iter().filter(|c| c.pass).count()
            + self.independence.iter().filter(|i| i.result.pass).count();
        let verdict = match self.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.name, self.n, self.m, d, thr, passed, total, verdict, self.seed, self.fingerprint
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{par_samples, sample_gamma, GammaParams, RngStream};

    #[test]
    fn kolmogorov_constants() {
        assert!((Significance::Percent.kolmogorov_quantile() - 1.6276).abs() < 1e-4);
        assert!((Significance::Permille.kolmogorov_quantile() - 1.9495).abs() < 1e-4);
        let thr = ks_threshold(100_000, 100_000, Significance::Permille);
        assert!((thr - 0.0087).abs() < 5e-5, "{thr}");
    }

    #[test]
    fn threshold_scaling() {
        let a = ks_threshold(1000, 1000, Significance::Permille);
        let b = ks_threshold(2000, 2000, Significance::Permille);
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        assert!(ks_threshold(500, 5000, Significance::Percent) > ks_threshold(5000, 5000, Significance::Percent));
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let r = ks_two_sample(&x, &x, Significance::Permille).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn ks_hand_computed() {
        // a = {1..=100}, b = {51..=150}: D = 0.5
        let a: Vec<f64> = (1..=100).map(f64::from).collect();
        let b: Vec<f64> = (51..=150).map(f64::from).collect();
        assert!((ks_two_sample(&a, &b, Significance::Percent).unwrap().statistic - 0.5).abs() < 1e-15);
        assert!(ks_two_sample(&a[..50], &b, Significance::Percent).is_err());
    }

    #[test]
    fn gamma_power_check() {
        let root = RngStream::family(9, "power");
        let g2 = GammaParams::new(2.0, 1.0).unwrap();
        let g22 = GammaParams::new(2.2, 1.0).unwrap();
        let a = par_samples(&root.derive(0), 100_000, |s| sample_gamma(g2, s));
        let b = par_samples(&root.derive(1), 100_000, |s| sample_gamma(g2, s));
        let c = par_samples(&root.derive(2), 100_000, |s| sample_gamma(g22, s));
        assert!(ks_two_sample(&a, &b, Significance::Permille).unwrap().pass);
        assert!(!ks_two_sample(&a, &c, Significance::Permille).unwrap().pass);
    }

    #[test]
    fn ecf_gamma_and_point_mass() {
        let root = RngStream::family(10, "ecf");
        let g = GammaParams::new(2.0, 1.0).unwrap();
        let x = par_samples(&root, 100_000, |s| sample_gamma(g, s));
        let grid = default_ecf_grid();
        let d = ecf_distance(&x, &CharFn::Gamma { shape: 2.0, rate: 1.0 }, &grid).unwrap();
        assert!(d <= ecf_band(x.len()), "{d}");
        let wrong = ecf_distance(&x, &CharFn::Gamma { shape: 2.5, rate: 1.0 }, &grid).unwrap();
        assert!(wrong > ecf_band(x.len()));
        let zeros = vec![0.0; 1000];
        assert_eq!(ecf_distance(&zeros, &CharFn::PointMass { value: 0.0 }, &grid).unwrap(), 0.0);
        assert!(ecf_distance(&zeros, &CharFn::PointMass { value: 0.0 }, &[]).is_err());
    }

    #[test]
    fn gamma_cf_matches_numeric_fourier_transform() {
        // ∫ e^{iux} f_{α,λ}(x) dx by midpoint rule on (0, 60]
        let (alpha, lambda) = (2.0f64, 1.5f64);
        let f = |x: f64| lambda.powf(alpha) * x.powf(alpha - 1.0) * (-lambda * x).exp(); // Γ(2) = 1
        let h = 1e-4;
        for u in [-3.0f64, -0.5, 0.7, 2.0] {
            let (mut re, mut im) = (0.0, 0.0);
            let mut x = 0.5 * h;
            while x < 60.0 {
                let w = f(x) * h;
                re += w * (u * x).cos();
                im += w * (u * x).sin();
                x += h;
            }
            let cf = CharFn::Gamma { shape: alpha, rate: lambda }.eval(u);
            assert!((cf - Complex64::new(re, im)).norm() < 1e-6);
        }
    }

    #[test]
    fn independence_null_and_control() {
        let root = RngStream::family(11, "indep");
        let x = par_samples(&root.derive(0), 10_000, crate::rng::sample_standard_normal);
        let y = par_samples(&root.derive(1), 10_000, crate::rng::sample_standard_normal);
        assert!(independence_diagnostic(&x, &y).unwrap().pass);
        let same = independence_diagnostic(&x, &x).unwrap();
        assert!(!same.pass);
        assert!(same.max_abs_corr > 0.99);
        assert!(independence_diagnostic(&x[..10], &y[..10]).is_err());
        assert!(independence_diagnostic(&x, &y[..5000]).is_err());
    }

    #[test]
    fn report_verdict_and_serialization() {
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let mut r = StatReport::new("demo", 7);
        r.ks_compare(&x, &x, Significance::Permille).unwrap();
        assert!(r.passed());
        r.push_check(Check::at_most("residual", 2.0, 1.0));
        assert!(!r.passed());
        let json = r.to_json();
        let back: StatReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(json.contains("\"significance\": 0.001"));
        let line = r.csv_summary();
        assert_eq!(line.split(',').count(), StatReport::CSV_HEADER.split(',').count());
        assert!(line.contains(",fail,7,"));
    }

    #[test]
    fn significance_serde() {
        assert_eq!(serde_json::from_str::<Significance>("0.01").unwrap(), Significance::Percent);
        assert!(serde_json::from_str::<Significance>("0.05").is_err());
    }
}
