//! Lévy paths on a finite horizon: a compound Poisson part, a linear drift
//! and an optional Brownian part.
//!
//! Jump conventions: a jump at time `t` belongs to `(0, t]`, so
//! [`JumpPath::path_value`] is right-continuous and includes it while
//! [`JumpPath::path_value_left`] does not.
//!
//! The Brownian part is never discretized on a grid. The path keeps a list
//! of cells `(a, b]` and for each stores the pair
//! `(W(b) - W(a), ∫_(a,b] e^{-(s-a)} dW(s))`, which is jointly Gaussian with
//! a closed-form covariance. Cells are created lazily and refined by exact
//! Gaussian conditioning when a new breakpoint is requested, so every query
//! against the same path sees one consistent realization.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{
    arrivals_unchecked, sample_exponential, sample_gamma, sample_standard_normal, sample_uniform,
    GammaParams, RngStream,
};

/// Law of the jump sizes of the compound Poisson part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    PointMass { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Discrete law on `values`; `weights` default to uniform.
    Table {
        values: Vec<f64>,
        #[serde(default)]
        weights: Vec<f64>,
    },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(invalid(format!("exponential rate must be positive, got {rate}")));
                }
            }
            JumpLaw::Gamma { shape, rate } => {
                GammaParams::new(*shape, *rate)?;
            }
            JumpLaw::PointMass { value } => {
                if !value.is_finite() {
                    return Err(invalid("point mass must be finite"));
                }
            }
            JumpLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(invalid(format!("uniform law needs finite low < high, got [{low}, {high}]")));
                }
            }
            JumpLaw::Table { values, weights } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("table law needs a nonempty list of finite values"));
                }
                if !weights.is_empty() {
                    if weights.len() != values.len() {
                        return Err(Error::LengthMismatch(values.len(), weights.len()));
                    }
                    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
                        || weights.iter().sum::<f64>() <= 0.0
                    {
                        return Err(invalid("table weights must be nonnegative with positive sum"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draw one jump size. Assumes the law has been validated.
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => sample_exponential(*rate, stream),
            JumpLaw::Gamma { shape, rate } => sample_gamma(
                GammaParams::new(*shape, *rate).expect("validated gamma law"),
                stream,
            ),
            JumpLaw::PointMass { value } => *value,
            JumpLaw::Uniform { low, high } => low + (high - low) * sample_uniform(stream),
            JumpLaw::Table { values, weights } => {
                let u = sample_uniform(stream);
                if weights.is_empty() {
                    let i = ((u * values.len() as f64) as usize).min(values.len() - 1);
                    return values[i];
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w / total;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => 1.0 / rate,
            JumpLaw::Gamma { shape, rate } => shape / rate,
            JumpLaw::PointMass { value } => *value,
            JumpLaw::Uniform { low, high } => 0.5 * (low + high),
            JumpLaw::Table { values, weights } => table_expect(values, weights, |v| v),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => 2.0 / (rate * rate),
            JumpLaw::Gamma { shape, rate } => shape * (shape + 1.0) / (rate * rate),
            JumpLaw::PointMass { value } => value * value,
            JumpLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            JumpLaw::Table { values, weights } => table_expect(values, weights, |v| v * v),
        }
    }

    /// `E|J|`, or an upper bound for it.
    pub fn mean_abs(&self) -> f64 {
        match self {
            JumpLaw::Uniform { low, high } => {
                if *low >= 0.0 || *high <= 0.0 {
                    self.mean().abs()
                } else {
                    (low * low + high * high) / (2.0 * (high - low))
                }
            }
            JumpLaw::Table { values, weights } => table_expect(values, weights, f64::abs),
            JumpLaw::PointMass { value } => value.abs(),
            _ => self.mean(),
        }
    }
}

fn table_expect(values: &[f64], weights: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    if weights.is_empty() {
        values.iter().map(|&v| f(v)).sum::<f64>() / values.len() as f64
    } else {
        let total: f64 = weights.iter().sum();
        values.iter().zip(weights).map(|(&v, w)| f(v) * w).sum::<f64>() / total
    }
}

fn default_zero() -> f64 {
    0.0
}

fn no_jumps() -> JumpLaw {
    JumpLaw::PointMass { value: 0.0 }
}

/// Distributional description of a Lévy process
/// `Y(t) = drift·t + σ W(t) + Σ_{k ≤ N(t)} J_k` with `N` Poisson(`jump_rate`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    #[serde(default = "default_zero")]
    pub jump_rate: f64,
    #[serde(default = "no_jumps")]
    pub jump_law: JumpLaw,
    #[serde(default = "default_zero")]
    pub drift: f64,
    /// Variance rate `σ²` of the Brownian part.
    #[serde(default = "default_zero")]
    pub gauss_var: f64,
}

impl LevyModel {
    /// BDLP of the gamma(α, λ) law: `λ^{-1} Y₀(αt)` with `Y₀` a rate-one
    /// compound Poisson process with Exp(1) jumps, i.e. jumps at rate `α`
    /// with Exp(λ) sizes.
    pub fn gamma_bdlp(alpha: f64, lambda: f64) -> Self {
        Self {
            jump_rate: alpha,
            jump_law: JumpLaw::Exponential { rate: lambda },
            drift: 0.0,
            gauss_var: 0.0,
        }
    }

    pub fn compound_poisson(jump_rate: f64, jump_law: JumpLaw) -> Self {
        Self {
            jump_rate,
            jump_law,
            drift: 0.0,
            gauss_var: 0.0,
        }
    }

    pub fn gaussian(gauss_var: f64) -> Self {
        Self {
            jump_rate: 0.0,
            jump_law: no_jumps(),
            drift: 0.0,
            gauss_var,
        }
    }

    pub fn drift_only(drift: f64) -> Self {
        Self {
            jump_rate: 0.0,
            jump_law: no_jumps(),
            drift,
            gauss_var: 0.0,
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_gauss_var(mut self, gauss_var: f64) -> Self {
        self.gauss_var = gauss_var;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jump_rate >= 0.0 && self.jump_rate.is_finite()) {
            return Err(invalid(format!("jump rate must be nonnegative, got {}", self.jump_rate)));
        }
        if !(self.gauss_var >= 0.0 && self.gauss_var.is_finite()) {
            return Err(invalid(format!("Gaussian variance rate must be nonnegative, got {}", self.gauss_var)));
        }
        if !self.drift.is_finite() {
            return Err(invalid("drift must be finite"));
        }
        self.jump_law.validate()
    }

    /// `E[Y(1)]`.
    pub fn mean_at_one(&self) -> f64 {
        self.drift + self.jump_rate * self.jump_law.mean()
    }

    /// `Var[Y(1)]`.
    pub fn variance_at_one(&self) -> f64 {
        self.gauss_var + self.jump_rate * self.jump_law.second_moment()
    }

    /// Upper bound for `E|Y(1)|`.
    pub fn mean_abs_bound(&self) -> f64 {
        self.drift.abs()
            + self.jump_rate * self.jump_law.mean_abs()
            + (2.0 * self.gauss_var / std::f64::consts::PI).sqrt()
    }

    pub fn has_gaussian(&self) -> bool {
        self.gauss_var > 0.0
    }

    /// No drift and no Brownian part: the path only moves by jumps.
    pub fn is_purely_discontinuous(&self) -> bool {
        self.drift == 0.0 && self.gauss_var == 0.0
    }
}

/// A Borel set of jump sizes bounded away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSet {
    /// `{|x| ≥ a}`
    AbsAtLeast { a: f64 },
    /// `{x ≥ a}`
    AtLeast { a: f64 },
    /// `{x ∈ [low, high]}`
    Interval { low: f64, high: f64 },
}

impl JumpSet {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpSet::AbsAtLeast { a } | JumpSet::AtLeast { a } => a > 0.0 && a.is_finite(),
            JumpSet::Interval { low, high } => low > 0.0 && low.is_finite() && high >= low,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotSeparated(self.to_string()))
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            JumpSet::AbsAtLeast { a } => x.abs() >= a,
            JumpSet::AtLeast { a } => x >= a,
            JumpSet::Interval { low, high } => x >= low && x <= high,
        }
    }
}

impl fmt::Display for JumpSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpSet::AbsAtLeast { a } => write!(f, "{{|x| >= {a}}}"),
            JumpSet::AtLeast { a } => write!(f, "{{x >= {a}}}"),
            JumpSet::Interval { low, high } => write!(f, "[{low}, {high}]"),
        }
    }
}

/// Covariance of `(ΔW, ∫_0^h e^{-u} dW(u))` over a cell of length `h`, unit variance rate.
fn cell_cov(h: f64) -> [f64; 3] {
    let a = -(-h).exp_m1();
    let b = -0.5 * (-2.0 * h).exp_m1();
    [h, a, b]
}

/// Cholesky factor `[l11, l21, l22]` of a 2×2 covariance `[c11, c21, c22]`.
fn chol2(c: [f64; 3], h: f64) -> [f64; 3] {
    let l11 = c[0].sqrt();
    if l11 == 0.0 {
        return [0.0, 0.0, c[2].max(0.0).sqrt()];
    }
    let l21 = c[1] / l11;
    // c22 - l21² = b - a²/h, which cancels badly for short cells
    let schur = if h < 1e-4 {
        h * h * h / 12.0 * (1.0 - h)
    } else {
        (c[2] - l21 * l21).max(0.0)
    };
    [l11, l21, schur.sqrt()]
}

/// Lazily materialized Brownian part; see the module docs.
#[derive(Debug, Clone)]
struct GaussCache {
    sigma: f64,
    stream: RngStream,
    /// Right endpoints of the cells; cell `i` is `(ends[i-1], ends[i]]`.
    ends: Vec<f64>,
    dw: Vec<f64>,
    local: Vec<f64>,
}

impl GaussCache {
    fn new(gauss_var: f64, stream: RngStream) -> Self {
        Self {
            sigma: gauss_var.sqrt(),
            stream,
            ends: Vec::new(),
            dw: Vec::new(),
            local: Vec::new(),
        }
    }

    fn start(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.ends[i - 1]
        }
    }

    fn covered(&self) -> f64 {
        self.ends.last().copied().unwrap_or(0.0)
    }

    fn cover(&mut self, t: f64) {
        let a = self.covered();
        if t <= a {
            return;
        }
        let h = t - a;
        let l = chol2(cell_cov(h), h);
        let z1 = sample_standard_normal(&mut self.stream);
        let z2 = sample_standard_normal(&mut self.stream);
        self.ends.push(t);
        self.dw.push(self.sigma * l[0] * z1);
        self.local.push(self.sigma * (l[1] * z1 + l[2] * z2));
    }

    /// Make `t` a cell boundary, refining an existing cell if necessary.
    fn breakpoint(&mut self, t: f64) {
        if t <= 0.0 {
            return;
        }
        self.cover(t);
        let i = self.ends.partition_point(|&e| e < t);
        if self.ends[i] == t {
            return;
        }
        let a = self.start(i);
        let h1 = t - a;
        let h2 = self.ends[i] - t;
        let (w, l) = (self.dw[i], self.local[i]);
        let s2 = self.sigma * self.sigma;
        // X1 = (W1, L1), X2 = (W2, e^{-h1} L2); X1 + X2 = (w, l) is known.
        let c1 = cell_cov(h1).map(|c| c * s2);
        let e1 = (-h1).exp();
        let c2 = {
            let c = cell_cov(h2);
            [c[0] * s2, c[1] * s2 * e1, c[2] * s2 * e1 * e1]
        };
        let sum = [c1[0] + c2[0], c1[1] + c2[1], c1[2] + c2[2]];
        let det = sum[0] * sum[2] - sum[1] * sum[1];
        let (w1, l1) = if det > 1e-300 && det > 1e-14 * sum[0] * sum[2] {
            // Σ⁻¹ = [s22, -s21; -s21, s11] / det
            let inv = [sum[2] / det, -sum[1] / det, sum[0] / det];
            // gain G = C1 Σ⁻¹
            let g11 = c1[0] * inv[0] + c1[1] * inv[1];
            let g12 = c1[0] * inv[1] + c1[1] * inv[2];
            let g21 = c1[1] * inv[0] + c1[2] * inv[1];
            let g22 = c1[1] * inv[1] + c1[2] * inv[2];
            let mean = [g11 * w + g12 * l, g21 * w + g22 * l];
            // conditional covariance K = G C2
            let k11 = g11 * c2[0] + g12 * c2[1];
            let k21 = 0.5 * (g21 * c2[0] + g22 * c2[1] + g11 * c2[1] + g12 * c2[2]);
            let k22 = g21 * c2[1] + g22 * c2[2];
            let l11 = k11.max(0.0).sqrt();
            let (l21, l22) = if l11 > 0.0 {
                let l21 = k21 / l11;
                (l21, (k22 - l21 * l21).max(0.0).sqrt())
            } else {
                (0.0, k22.max(0.0).sqrt())
            };
            let z1 = sample_standard_normal(&mut self.stream);
            let z2 = sample_standard_normal(&mut self.stream);
            (mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2)
        } else {
            let frac = h1 / (h1 + h2);
            (w * frac, l * frac)
        };
        let w2 = w - w1;
        let l2 = (l - l1) / e1;
        self.ends.insert(i, t);
        self.dw[i] = w2;
        self.local[i] = l2;
        self.dw.insert(i, w1);
        self.local.insert(i, l1);
    }

    fn w_at(&mut self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.breakpoint(t);
        let n = self.ends.partition_point(|&e| e <= t);
        self.dw[..n].iter().sum()
    }

    /// `∫_(0,t] e^{-s} dW(s)`.
    fn discounted(&mut self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.breakpoint(t);
        let n = self.ends.partition_point(|&e| e <= t);
        (0..n).map(|i| (-self.start(i)).exp() * self.local[i]).sum()
    }

    /// Cells after `tau`, re-based at zero.
    fn shifted(&mut self, tau: f64, horizon: f64) -> GaussCache {
        self.cover(horizon);
        self.breakpoint(tau);
        let first = self.ends.partition_point(|&e| e <= tau);
        let stream = self.stream.derive(tau.to_bits());
        GaussCache {
            sigma: self.sigma,
            stream,
            ends: self.ends[first..].iter().map(|&e| e - tau).collect(),
            dw: self.dw[first..].to_vec(),
            local: self.local[first..].to_vec(),
        }
    }
}

/// A realized Lévy trajectory on `[0, horizon]`.
///
/// The Brownian part, when present, is cached behind a `RefCell`: queries
/// take `&self` but may refine the cache. The path can move between threads
/// but is not `Sync`.
#[derive(Debug, Clone)]
pub struct JumpPath {
    horizon: f64,
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    drift: f64,
    gauss_var: f64,
    gauss: Option<RefCell<GaussCache>>,
}

impl JumpPath {
    /// Pure-jump path from explicit jumps.
    pub fn from_jumps(horizon: f64, jumps: &[(f64, f64)], drift: f64) -> Result<Self> {
        let (times, sizes): (Vec<f64>, Vec<f64>) = jumps.iter().copied().unzip();
        Self::from_parts(horizon, times, sizes, drift, 0.0, None)
    }

    /// Path with a Brownian part whose realization is drawn from `stream`
    /// as it is queried.
    pub fn with_gaussian(
        horizon: f64,
        jumps: &[(f64, f64)],
        drift: f64,
        gauss_var: f64,
        stream: RngStream,
    ) -> Result<Self> {
        let (times, sizes): (Vec<f64>, Vec<f64>) = jumps.iter().copied().unzip();
        Self::from_parts(horizon, times, sizes, drift, gauss_var, Some(stream))
    }

    fn from_parts(
        horizon: f64,
        jump_times: Vec<f64>,
        jump_sizes: Vec<f64>,
        drift: f64,
        gauss_var: f64,
        stream: Option<RngStream>,
    ) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be finite and nonnegative, got {horizon}")));
        }
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::LengthMismatch(jump_times.len(), jump_sizes.len()));
        }
        if jump_times.iter().any(|&t| !(t > 0.0 && t <= horizon))
            || jump_times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid("jump times must be strictly increasing in (0, horizon]"));
        }
        if jump_sizes.iter().any(|s| !s.is_finite()) || !drift.is_finite() {
            return Err(invalid("jump sizes and drift must be finite"));
        }
        if !(gauss_var >= 0.0 && gauss_var.is_finite()) {
            return Err(invalid("Gaussian variance rate must be nonnegative"));
        }
        let gauss = if gauss_var > 0.0 {
            let stream = stream.ok_or_else(|| invalid("Gaussian path needs a stream"))?;
            Some(RefCell::new(GaussCache::new(gauss_var, stream)))
        } else {
            None
        };
        Ok(Self {
            horizon,
            jump_times,
            jump_sizes,
            drift,
            gauss_var,
            gauss,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jump_times.iter().copied().zip(self.jump_sizes.iter().copied())
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn gauss_var(&self) -> f64 {
        self.gauss_var
    }

    pub fn has_gaussian(&self) -> bool {
        self.gauss.is_some()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// Number of jumps in `(0, t]`.
    pub fn jumps_through(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// `Y(t)`, right-continuous.
    pub fn path_value(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let n = self.jumps_through(t);
        Ok(self.drift * t + self.jump_sizes[..n].iter().sum::<f64>() + self.gaussian_value(t))
    }

    /// `Y(t-)`.
    pub fn path_value_left(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let n = self.jump_times.partition_point(|&s| s < t);
        Ok(self.drift * t + self.jump_sizes[..n].iter().sum::<f64>() + self.gaussian_value(t))
    }

    /// Brownian part `σW(t)`; zero for pure-jump paths.
    pub fn gaussian_value(&self, t: f64) -> f64 {
        self.gauss.as_ref().map_or(0.0, |g| g.borrow_mut().w_at(t))
    }

    /// `∫_(0,t] e^{-s} σ dW(s)`; zero for pure-jump paths.
    pub fn discounted_gaussian(&self, t: f64) -> f64 {
        self.gauss.as_ref().map_or(0.0, |g| g.borrow_mut().discounted(t))
    }

    /// Materialized Brownian cells as `(right endpoint, ΔW, local discounted increment)`.
    pub fn gaussian_cells(&self) -> Vec<(f64, f64, f64)> {
        self.gauss.as_ref().map_or_else(Vec::new, |g| {
            let g = g.borrow();
            (0..g.ends.len()).map(|i| (g.ends[i], g.dw[i], g.local[i])).collect()
        })
    }

    /// The shifted process `Y_τ(t) = Y(t + τ) - Y(τ)` on `[0, horizon - τ]`.
    pub fn shift_path(&self, tau: f64) -> Result<JumpPath> {
        if !(tau >= 0.0 && tau <= self.horizon) {
            return Err(Error::TimeOutOfRange {
                t: tau,
                horizon: self.horizon,
            });
        }
        if tau == 0.0 {
            return Ok(self.clone());
        }
        let first = self.jumps_through(tau);
        let horizon = self.horizon - tau;
        let gauss = self
            .gauss
            .as_ref()
            .map(|g| RefCell::new(g.borrow_mut().shifted(tau, self.horizon)));
        Ok(JumpPath {
            horizon,
            jump_times: self.jump_times[first..].iter().map(|&t| t - tau).collect(),
            jump_sizes: self.jump_sizes[first..].to_vec(),
            drift: self.drift,
            gauss_var: self.gauss_var,
            gauss,
        })
    }

    /// Splits a pure-jump path into the jumps falling in `set` and the rest.
    /// The drift stays with the rest.
    pub fn thin_path(&self, set: &JumpSet) -> Result<(JumpPath, JumpPath)> {
        if self.has_gaussian() {
            return Err(Error::GaussianPart("thinning"));
        }
        set.validate()?;
        let mut in_set = (Vec::new(), Vec::new());
        let mut rest = (Vec::new(), Vec::new());
        for (t, s) in self.jumps() {
            let side = if set.contains(s) { &mut in_set } else { &mut rest };
            side.0.push(t);
            side.1.push(s);
        }
        Ok((
            JumpPath {
                horizon: self.horizon,
                jump_times: in_set.0,
                jump_sizes: in_set.1,
                drift: 0.0,
                gauss_var: 0.0,
                gauss: None,
            },
            JumpPath {
                horizon: self.horizon,
                jump_times: rest.0,
                jump_sizes: rest.1,
                drift: self.drift,
                gauss_var: 0.0,
                gauss: None,
            },
        ))
    }

    /// Appends the model's jumps on `(horizon, new_horizon]`, drawn from `stream`.
    /// The Brownian part extends itself lazily.
    pub fn extend(&mut self, model: &LevyModel, new_horizon: f64, stream: &mut RngStream) -> Result<()> {
        if !(new_horizon.is_finite() && new_horizon >= self.horizon) {
            return Err(invalid(format!(
                "cannot extend a path on [0, {}] to {new_horizon}",
                self.horizon
            )));
        }
        let span = new_horizon - self.horizon;
        if model.jump_rate > 0.0 && span > 0.0 {
            let base = self.horizon;
            for t in arrivals_unchecked(model.jump_rate, span, stream) {
                let t = base + t;
                // rounding can collapse base + t onto the previous time
                if self.jump_times.last().is_some_and(|&last| t <= last) || t > new_horizon {
                    continue;
                }
                self.jump_times.push(t);
                self.jump_sizes.push(model.jump_law.sample(stream));
            }
        }
        self.horizon = new_horizon;
        Ok(())
    }
}

/// Simulates `model` on `(0, horizon]`.
///
/// Arrival times are drawn first, then one jump size per arrival, then (for
/// models with a Brownian part) a child stream is split off for it.
pub fn simulate_path(model: &LevyModel, horizon: f64, stream: &mut RngStream) -> Result<JumpPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    simulate_segment(model, horizon, stream)
}

/// Like [`simulate_path`] but accepts a zero horizon (an empty path).
pub(crate) fn simulate_segment(model: &LevyModel, horizon: f64, stream: &mut RngStream) -> Result<JumpPath> {
    model.validate()?;
    let times = if model.jump_rate > 0.0 && horizon > 0.0 {
        arrivals_unchecked(model.jump_rate, horizon, stream)
    } else {
        Vec::new()
    };
    let sizes: Vec<f64> = times.iter().map(|_| model.jump_law.sample(stream)).collect();
    let gauss_stream = model.has_gaussian().then(|| stream.split());
    JumpPath::from_parts(horizon, times, sizes, model.drift, model.gauss_var, gauss_stream)
}

/// Documented JSON shape of a path, for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub horizon: f64,
    /// `[time, size]` pairs.
    pub jumps: Vec<[f64; 2]>,
    pub drift: f64,
    pub gauss_var: f64,
    /// Materialized Brownian cells `[right endpoint, ΔW, local discounted increment]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauss_cells: Option<Vec<[f64; 3]>>,
    /// `[seed, stream_id, counter]` of the stream that refines the Brownian part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauss_stream: Option<[u64; 3]>,
}

impl From<&JumpPath> for PathRecord {
    fn from(p: &JumpPath) -> Self {
        let (gauss_cells, gauss_stream) = match &p.gauss {
            Some(g) => {
                let g = g.borrow();
                (
                    Some((0..g.ends.len()).map(|i| [g.ends[i], g.dw[i], g.local[i]]).collect()),
                    Some([g.stream.seed(), g.stream.stream_id(), g.stream.counter()]),
                )
            }
            None => (None, None),
        };
        PathRecord {
            horizon: p.horizon,
            jumps: p.jumps().map(|(t, s)| [t, s]).collect(),
            drift: p.drift,
            gauss_var: p.gauss_var,
            gauss_cells,
            gauss_stream,
        }
    }
}

impl TryFrom<PathRecord> for JumpPath {
    type Error = Error;

    fn try_from(r: PathRecord) -> Result<Self> {
        let stream = r.gauss_stream.map(|[seed, id, ctr]| RngStream::at(seed, id, ctr));
        let stream = match (r.gauss_var > 0.0, stream) {
            (true, None) => return Err(invalid("Gaussian path record without gauss_stream")),
            (_, s) => s,
        };
        let (times, sizes) = r.jumps.iter().map(|j| (j[0], j[1])).unzip();
        let path = JumpPath::from_parts(r.horizon, times, sizes, r.drift, r.gauss_var, stream)?;
        if let (Some(g), Some(cells)) = (&path.gauss, r.gauss_cells) {
            let mut g = g.borrow_mut();
            let mut prev = 0.0;
            for [end, dw, local] in cells {
                if !(end > prev && end.is_finite()) {
                    return Err(invalid("Gaussian cells must have increasing endpoints"));
                }
                prev = end;
                g.ends.push(end);
                g.dw.push(dw);
                g.local.push(local);
            }
        }
        Ok(path)
    }
}

impl JumpPath {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&PathRecord::from(self)).expect("path record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: PathRecord = serde_json::from_str(s).map_err(|e| invalid(format!("path JSON: {e}")))?;
        JumpPath::try_from(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jumpy() -> JumpPath {
        JumpPath::from_jumps(5.0, &[(0.5, 1.0), (1.5, -2.0), (3.0, 0.25)], 0.1).unwrap()
    }

    #[test]
    fn value_at_zero_and_at_jumps() {
        let p = jumpy();
        assert_eq!(p.path_value(0.0).unwrap(), 0.0);
        let right = p.path_value(1.5).unwrap();
        let left = p.path_value_left(1.5).unwrap();
        assert!((right - left - (-2.0)).abs() < 1e-15);
        assert!((right - (0.15 + 1.0 - 2.0)).abs() < 1e-15);
        assert!(p.path_value(5.1).is_err());
        assert!(p.path_value(-0.1).is_err());
    }

    #[test]
    fn drift_only_value() {
        let p = JumpPath::from_jumps(4.0, &[], 1.5).unwrap();
        assert_eq!(p.path_value(2.0).unwrap(), 3.0);
        let mut s = RngStream::new(1, 1);
        let sim = simulate_path(&LevyModel::drift_only(2.0), 3.0, &mut s).unwrap();
        assert_eq!(sim.jump_count(), 0);
        assert_eq!(sim.path_value(1.5).unwrap(), 3.0);
    }

    #[test]
    fn rejects_bad_jump_times() {
        assert!(JumpPath::from_jumps(1.0, &[(0.5, 1.0), (0.5, 1.0)], 0.0).is_err());
        assert!(JumpPath::from_jumps(1.0, &[(1.5, 1.0)], 0.0).is_err());
        assert!(JumpPath::from_jumps(1.0, &[(0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn simulate_rejects_nonpositive_horizon() {
        let mut s = RngStream::new(1, 1);
        assert!(simulate_path(&LevyModel::gamma_bdlp(1.0, 1.0), 0.0, &mut s).is_err());
        assert!(simulate_path(&LevyModel::gamma_bdlp(1.0, 1.0), -1.0, &mut s).is_err());
    }

    #[test]
    fn shift_identity_and_full() {
        let p = jumpy();
        let same = p.shift_path(0.0).unwrap();
        assert_eq!(same.jump_times(), p.jump_times());
        assert_eq!(same.horizon(), p.horizon());
        let end = p.shift_path(5.0).unwrap();
        assert_eq!(end.horizon(), 0.0);
        assert_eq!(end.jump_count(), 0);
        assert!(p.shift_path(5.5).is_err());
    }

    #[test]
    fn shift_at_jump_excludes_it() {
        let p = jumpy();
        let s = p.shift_path(1.5).unwrap();
        assert_eq!(s.jump_count(), 1);
        assert!((s.jump_times()[0] - 1.5).abs() < 1e-15);
        for t in [0.0, 0.7, 2.0, 3.5] {
            let expect = p.path_value(t + 1.5).unwrap() - p.path_value(1.5).unwrap();
            assert!((s.path_value(t).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn thinning_partitions() {
        let p = jumpy();
        let (a, rest) = p.thin_path(&JumpSet::AbsAtLeast { a: 0.9 }).unwrap();
        assert_eq!(a.jump_sizes(), &[1.0, -2.0]);
        assert_eq!(rest.jump_sizes(), &[0.25]);
        assert_eq!(a.drift(), 0.0);
        assert_eq!(rest.drift(), 0.1);
        let (all, none) = p.thin_path(&JumpSet::AbsAtLeast { a: 1e-9 }).unwrap();
        assert_eq!(all.jump_count(), 3);
        assert_eq!(none.jump_count(), 0);
        assert!(p.thin_path(&JumpSet::AtLeast { a: 0.0 }).is_err());
        assert!(p.thin_path(&JumpSet::Interval { low: -1.0, high: 1.0 }).is_err());
    }

    #[test]
    fn thinning_refuses_gaussian() {
        let mut s = RngStream::new(2, 2);
        let p = simulate_path(&LevyModel::gaussian(1.0), 1.0, &mut s).unwrap();
        assert!(matches!(
            p.thin_path(&JumpSet::AtLeast { a: 1.0 }),
            Err(Error::GaussianPart(_))
        ));
    }

    #[test]
    fn gaussian_cache_is_consistent_under_refinement() {
        let mut s = RngStream::new(3, 3);
        let p = simulate_path(&LevyModel::gaussian(2.0), 10.0, &mut s).unwrap();
        let total_w = p.gaussian_value(10.0);
        let total_g = p.discounted_gaussian(10.0);
        // refining must not change already realized totals
        let _ = p.gaussian_value(3.3);
        let _ = p.discounted_gaussian(7.1);
        let _ = p.discounted_gaussian(0.01);
        assert!((p.gaussian_value(10.0) - total_w).abs() < 1e-12);
        assert!((p.discounted_gaussian(10.0) - total_g).abs() < 1e-12);
        // additivity across a shift
        let tau = 4.2;
        let head = p.discounted_gaussian(tau);
        let shifted = p.shift_path(tau).unwrap();
        let tail = shifted.discounted_gaussian(shifted.horizon());
        assert!((head + (-tau).exp() * tail - total_g).abs() < 1e-12);
        let w_tail = shifted.gaussian_value(shifted.horizon());
        assert!((p.gaussian_value(tau) + w_tail - total_w).abs() < 1e-12);
    }

    #[test]
    fn extend_keeps_order() {
        let model = LevyModel::gamma_bdlp(3.0, 1.0);
        let mut s = RngStream::new(4, 4);
        let mut p = simulate_path(&model, 1.0, &mut s).unwrap();
        p.extend(&model, 5.0, &mut s).unwrap();
        assert_eq!(p.horizon(), 5.0);
        assert!(p.jump_times().windows(2).all(|w| w[0] < w[1]));
        assert!(p.jump_times().iter().all(|&t| t > 0.0 && t <= 5.0));
        assert!(p.extend(&model, 4.0, &mut s).is_err());
    }

    #[test]
    fn json_round_trip_with_gaussian() {
        let mut s = RngStream::new(5, 5);
        let model = LevyModel::gamma_bdlp(1.0, 1.0).with_gauss_var(0.5).with_drift(0.3);
        let p = simulate_path(&model, 2.0, &mut s).unwrap();
        let _ = p.discounted_gaussian(1.0);
        let q = JumpPath::from_json(&p.to_json()).unwrap();
        assert_eq!(q.jump_times(), p.jump_times());
        assert_eq!(q.jump_sizes(), p.jump_sizes());
        assert_eq!(q.gaussian_cells(), p.gaussian_cells());
        assert_eq!(q.path_value(2.0).unwrap(), p.path_value(2.0).unwrap());
        let json = p.to_json();
        assert!(json.contains("\"horizon\":2.0"));
        assert!(json.contains("\"jumps\":["));
    }

    #[test]
    fn table_law() {
        let law = JumpLaw::Table {
            values: vec![1.0, 2.0],
            weights: vec![0.0, 1.0],
        };
        law.validate().unwrap();
        let mut s = RngStream::new(6, 6);
        assert!((0..100).all(|_| law.sample(&mut s) == 2.0));
        assert_eq!(law.mean(), 2.0);
        let bad = JumpLaw::Table {
            values: vec![1.0],
            weights: vec![1.0, 2.0],
        };
        assert!(bad.validate().is_err());
    }
}
