//! The eight experiments. Each one draws its samples from streams labelled
//! by experiment and sub-case under the configured seed, so reruns are
//! byte-identical and sub-cases never share randomness.

use sdlevy::decomposition::{
    check_pathwise_identity, decompose, first_value_identity, restricted_jump_identity, DecompositionRecord, PATHWISE_TOL,
};
use sdlevy::discount::{eval_by_parts, eval_jump_sum, sample_discounted_integral, TruncationPolicy};
use sdlevy::levy::{simulate_path, JumpLaw, JumpSet, LevyModel};
use sdlevy::operator::{
    min_real_eigenvalue, operator_decompose, sample_operator_integral, OperatorDriver, OperatorModel,
    OPERATOR_PATHWISE_TOL,
};
use sdlevy::perpetuity::{
    beta_gamma_identity_samples, first_jump_factor_samples, gamma_series_law, iterate_to_stationarity,
    sample_backward_series, selfdecomposable_as_perpetuity, PerpetuityCheck,
};
use sdlevy::rng::{
    par_samples, sample_exponential, sample_gamma, sample_standard_normal, sample_uniform, GammaParams,
};
use sdlevy::stats::{
    correlation, default_ecf_grid, ecdf_at, ecf_band, ecf_distance, empirical_cf, independence_diagnostic,
    ks_two_sample, mean_check, second_moment_check, CharFn, Check, StatReport, KS_MIN_SAMPLES,
};
use sdlevy::{Error, RngStream};

use crate::config::{
    operator_model, q_matrix, Corollary2Params, Corollary3Params, ExperimentConfig, GammaBdlpParams,
    NullCalibrationParams, OperatorParams, Params, PerpetuityParams, PerpetuityReference, Prop1Params, Prop1Part,
    Theorem1Params,
};
use crate::CliError;

/// One point of an empirical-CDF comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfPoint {
    pub comparison: String,
    pub x: f64,
    pub f_a: f64,
    pub f_b: f64,
}

/// Empirical characteristic functions of both sides (and the exact one when known) at `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcfPoint {
    pub comparison: String,
    pub u: f64,
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub exact: Option<(f64, f64)>,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub reports: Vec<StatReport>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub cdf: Vec<CdfPoint>,
    pub ecf: Vec<EcfPoint>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(StatReport::passed)
    }
}

const CDF_POINTS: usize = 101;

struct Recorder<'a> {
    cfg: &'a ExperimentConfig,
    fingerprint: String,
    reports: Vec<StatReport>,
    columns: Vec<(String, Vec<f64>)>,
    cdf: Vec<CdfPoint>,
    ecf: Vec<EcfPoint>,
}

fn runtime(context: impl std::fmt::Display, e: Error) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Self {
            cfg,
            fingerprint: cfg.fingerprint(),
            reports: Vec::new(),
            columns: Vec::new(),
            cdf: Vec::new(),
            ecf: Vec::new(),
        }
    }

    fn root(&self, label: &str) -> RngStream {
        RngStream::family(self.cfg.seed, &format!("{}/{label}", self.cfg.experiment.name()))
    }

    fn report(&self, name: impl Into<String>) -> StatReport {
        StatReport::new(name, self.cfg.seed).with_fingerprint(self.fingerprint.clone())
    }

    fn column(&mut self, name: impl Into<String>, values: &[f64]) {
        let keep = values.len().min(self.cfg.csv_rows);
        self.columns.push((name.into(), values[..keep].to_vec()));
    }

    /// KS of `a` against `b`, plus the ECF distance of `a` to `exact` when
    /// given, and the plot tables for both.
    fn compare(&mut self, name: &str, a: &[f64], b: &[f64], exact: Option<&CharFn>) -> Result<StatReport, CliError> {
        let mut r = self.report(name);
        r.ks_compare(a, b, self.cfg.significance).map_err(|e| runtime(name, e))?;
        let grid = default_ecf_grid();
        if let Some(cf) = exact {
            let d = ecf_distance(a, cf, &grid).map_err(|e| runtime(name, e))?;
            r.push_check(Check::at_most("ecf distance to exact", d, ecf_band(a.len())));
        }
        self.tables(name, a, b, exact);
        Ok(r)
    }

    fn tables(&mut self, name: &str, a: &[f64], b: &[f64], exact: Option<&CharFn>) {
        let mut sa = a.to_vec();
        let mut sb = b.to_vec();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let mut pooled: Vec<f64> = sa.iter().chain(&sb).copied().collect();
        pooled.sort_by(f64::total_cmp);
        for i in 0..CDF_POINTS {
            let idx = (i * (pooled.len() - 1)) / (CDF_POINTS - 1);
            let x = pooled[idx];
            self.cdf.push(CdfPoint {
                comparison: name.to_string(),
                x,
                f_a: ecdf_at(&sa, x),
                f_b: ecdf_at(&sb, x),
            });
        }
        for u in default_ecf_grid() {
            let ea = empirical_cf(a, u);
            let eb = empirical_cf(b, u);
            self.ecf.push(EcfPoint {
                comparison: name.to_string(),
                u,
                a: (ea.re, ea.im),
                b: (eb.re, eb.im),
                exact: exact.map(|cf| {
                    let z = cf.eval(u);
                    (z.re, z.im)
                }),
            });
        }
    }

    fn push(&mut self, r: StatReport) {
        self.reports.push(r);
    }

    fn finish(self) -> Outcome {
        Outcome {
            config: self.cfg.clone(),
            fingerprint: self.fingerprint,
            reports: self.reports,
            columns: self.columns,
            cdf: self.cdf,
            ecf: self.ecf,
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut rec = Recorder::new(cfg);
    match &cfg.params {
        Params::GammaBdlp(p) => gamma_bdlp(&mut rec, p)?,
        Params::Theorem1(p) => theorem1(&mut rec, p)?,
        Params::Corollary2(p) => corollary2(&mut rec, p)?,
        Params::Corollary3(p) => corollary3(&mut rec, p)?,
        Params::Prop1(p) => prop1(&mut rec, p)?,
        Params::Perpetuity(p) => perpetuity(&mut rec, p)?,
        Params::Operator(p) => operator(&mut rec, p)?,
        Params::NullCalibration(p) => null_calibration(&mut rec, p)?,
    }
    Ok(rec.finish())
}

/// The law of `∫ e^{-s} dY(s)` when it is known in closed form.
enum Reference {
    Gamma(GammaParams),
    Normal { mean: f64, variance: f64 },
    Simulation,
}

fn reference_for(model: &LevyModel) -> Reference {
    match model.jump_law {
        JumpLaw::Exponential { rate } if model.jump_rate > 0.0 && model.drift == 0.0 && model.gauss_var == 0.0 => {
            Reference::Gamma(GammaParams::new(model.jump_rate, rate).expect("validated model"))
        }
        _ if model.jump_rate == 0.0 => Reference::Normal {
            mean: model.drift,
            variance: model.gauss_var / 2.0,
        },
        _ => Reference::Simulation,
    }
}

/// Independent draws from the law of `X` and its exact characteristic
/// function when available.
fn reference_samples(
    model: &LevyModel,
    policy: &TruncationPolicy,
    n: usize,
    root: &RngStream,
) -> Result<(Vec<f64>, Option<CharFn>), CliError> {
    Ok(match reference_for(model) {
        Reference::Gamma(p) => (
            par_samples(root, n, |s| sample_gamma(p, s)),
            Some(CharFn::Gamma {
                shape: p.shape(),
                rate: p.rate(),
            }),
        ),
        Reference::Normal { mean, variance } => (
            par_samples(root, n, |s| mean + variance.sqrt() * sample_standard_normal(s)),
            Some(if variance > 0.0 {
                CharFn::Normal { mean, variance }
            } else {
                CharFn::PointMass { value: mean }
            }),
        ),
        Reference::Simulation => {
            let mut out = Vec::with_capacity(n);
            for x in par_samples(root, n, |s| sample_discounted_integral(model, policy, s)) {
                out.push(x.map_err(|e| runtime("reference sampler", e))?);
            }
            (out, None)
        }
    })
}

/// Runs `f` on `n` streams. Realizations whose stopping time falls beyond
/// the horizon cap are dropped and counted; more than 1% of them is an error.
fn collect<T: Send>(
    root: &RngStream,
    n: usize,
    context: &str,
    f: impl Fn(&mut RngStream) -> sdlevy::Result<T> + Sync + Send,
) -> Result<(Vec<T>, usize), CliError> {
    let mut kept = Vec::with_capacity(n);
    let mut dropped = 0;
    let mut last = None;
    for r in par_samples(root, n, f) {
        match r {
            Ok(v) => kept.push(v),
            Err(e @ Error::InsufficientHorizon { .. }) => {
                dropped += 1;
                last = Some(e);
            }
            Err(e) => return Err(runtime(context, e)),
        }
    }
    if dropped * 100 > n || kept.len() < KS_MIN_SAMPLES.min(n) {
        return Err(runtime(
            format!("{context} ({dropped} of {n} realizations never stopped)"),
            last.expect("at least one drop"),
        ));
    }
    Ok((kept, dropped))
}

fn max_relative_residual(records: &[DecompositionRecord]) -> f64 {
    records
        .iter()
        .map(|r| check_pathwise_identity(r) / (1.0 + r.x_total.abs()))
        .fold(0.0, f64::max)
}

fn record_columns(rec: &mut Recorder, prefix: &str, records: &[DecompositionRecord]) {
    let pick = |f: fn(&DecompositionRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    rec.column(format!("{prefix}.tau"), &pick(|r| r.tau));
    rec.column(format!("{prefix}.x_tau"), &pick(|r| r.x_tau));
    rec.column(format!("{prefix}.discount"), &pick(|r| r.discount));
    rec.column(format!("{prefix}.x_prime"), &pick(|r| r.x_prime));
    rec.column(format!("{prefix}.x_total"), &pick(|r| r.x_total));
    rec.column(format!("{prefix}.residual"), &pick(check_pathwise_identity));
}

fn gamma_bdlp(rec: &mut Recorder, p: &GammaBdlpParams) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let policy = rec.cfg.truncation;
    for c in &p.cases {
        let name = format!("gamma-bdlp(alpha={},lambda={})", c.alpha, c.lambda);
        let model = LevyModel::gamma_bdlp(c.alpha, c.lambda);
        let (integral, _) = collect(&rec.root(&format!("{name}/integral")), n, &name, |s| {
            sample_discounted_integral(&model, &policy, s)
        })?;
        let g = GammaParams::new(c.alpha, c.lambda).expect("validated");
        let direct = par_samples(&rec.root(&format!("{name}/direct")), n, |s| sample_gamma(g, s));
        let cf = CharFn::Gamma {
            shape: c.alpha,
            rate: c.lambda,
        };
        let r = rec.compare(&name, &integral, &direct, Some(&cf))?;
        rec.push(r);
        rec.column(format!("{name}.integral"), &integral);
        rec.column(format!("{name}.direct"), &direct);
    }
    Ok(())
}

fn theorem1(rec: &mut Recorder, p: &Theorem1Params) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let policy = rec.cfg.truncation;
    let (reference, cf) = reference_samples(&p.model, &policy, n, &rec.root("reference"))?;
    for rule in &p.rules {
        let label = format!("theorem1/{rule}");
        let (records, dropped) = collect(&rec.root(&label), n, &label, |s| decompose(&p.model, rule, &policy, s))?;
        let total: Vec<f64> = records.iter().map(|r| r.x_total).collect();
        let prime: Vec<f64> = records.iter().map(|r| r.x_prime).collect();
        let x_tau: Vec<f64> = records.iter().map(|r| r.x_tau).collect();
        let disc: Vec<f64> = records.iter().map(|r| r.discount).collect();

        let mut r = rec.compare(&format!("{label}/x_total"), &total, &reference, cf.as_ref())?;
        r.push_check(Check::at_most("max relative residual", max_relative_residual(&records), PATHWISE_TOL));
        r.note("dropped", dropped as f64);
        rec.push(r);

        let mut r = rec.compare(&format!("{label}/x_prime"), &prime, &reference, cf.as_ref())?;
        let ind = |a: &[f64]| independence_diagnostic(a, &prime).map_err(|e| runtime(&label, e));
        r.push_independence("(x_tau, x_prime)", ind(&x_tau)?);
        r.push_independence("(discount, x_prime)", ind(&disc)?);
        rec.push(r);
        record_columns(rec, &label, &records);
    }
    rec.column("reference", &reference);
    Ok(())
}

/// A compound-Poisson model with randomly drawn rate, jump law and drift.
fn random_compound_poisson(s: &mut RngStream) -> LevyModel {
    let rate = 0.5 + 4.5 * sample_uniform(s);
    let law = if sample_uniform(s) < 0.5 {
        JumpLaw::Exponential {
            rate: 0.5 + 1.5 * sample_uniform(s),
        }
    } else {
        JumpLaw::Uniform { low: -2.0, high: 3.0 }
    };
    LevyModel::compound_poisson(rate, law).with_drift(2.0 * sample_uniform(s) - 1.0)
}

fn corollary2(rec: &mut Recorder, p: &Corollary2Params) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let policy = rec.cfg.truncation;
    for rule in &p.rules {
        let label = format!("corollary2/{rule}");
        let (records, dropped) = collect(&rec.root(&label), n, &label, |s| decompose(&p.model, rule, &policy, s))?;
        let mut r = rec.report(&label);
        r.n = records.len();
        r.push_check(Check::at_most("max relative residual", max_relative_residual(&records), PATHWISE_TOL));
        r.note("dropped", dropped as f64);
        rec.push(r);
        record_columns(rec, &label, &records);
    }
    if p.evaluator_paths > 0 {
        let label = "evaluator-equivalence";
        let horizon = policy.horizon;
        let times = p.evaluator_times;
        let (gaps, _) = collect(&rec.root(label), p.evaluator_paths, label, |s| {
            let model = random_compound_poisson(s);
            let path = simulate_path(&model, horizon, s)?;
            let mut worst: f64 = 0.0;
            for _ in 0..times {
                let t = horizon * sample_uniform(s);
                let a = eval_jump_sum(&path, t)?;
                let b = eval_by_parts(&path, t)?;
                worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            }
            Ok(worst)
        })?;
        let mut r = rec.report(label);
        r.n = gaps.len();
        r.push_check(Check::at_most("max relative gap", gaps.iter().copied().fold(0.0, f64::max), PATHWISE_TOL));
        r.note("times_per_path", times as f64);
        rec.push(r);
        rec.column("evaluator.max_relative_gap", &gaps);
    }
    Ok(())
}

/// Rate of the thinned process `Y(·; A)` when the jump law is exponential.
fn thinned_rate(model: &LevyModel, set: &JumpSet) -> Option<f64> {
    let JumpLaw::Exponential { rate } = model.jump_law else {
        return None;
    };
    let p = match *set {
        JumpSet::AtLeast { a } | JumpSet::AbsAtLeast { a } => (-rate * a).exp(),
        JumpSet::Interval { low, high } => (-rate * low).exp() - (-rate * high).exp(),
    };
    Some(model.jump_rate * p)
}

fn corollary3(rec: &mut Recorder, p: &Corollary3Params) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let policy = rec.cfg.truncation;
    let (reference, cf) = reference_samples(&p.model, &policy, n, &rec.root("reference"))?;

    let label = "corollary3/first-value";
    let (splits, _) = collect(&rec.root(label), n, label, |s| first_value_identity(&p.model, &policy, s))?;
    let pick = |f: fn(&sdlevy::decomposition::FirstJumpSplit) -> f64| splits.iter().map(f).collect::<Vec<f64>>();
    let (lhs, disc, jump, tail) = (pick(|s| s.lhs), pick(|s| s.discount), pick(|s| s.jump), pick(|s| s.tail));
    let worst = splits.iter().map(|s| s.residual() / (1.0 + s.lhs.abs())).fold(0.0, f64::max);
    let mut r = rec.compare(label, &lhs, &reference, cf.as_ref())?;
    r.push_check(Check::at_most("max relative residual", worst, PATHWISE_TOL));
    r.push_independence("(discount, tail)", independence_diagnostic(&disc, &tail).map_err(|e| runtime(label, e))?);
    r.push_independence("(jump, tail)", independence_diagnostic(&jump, &tail).map_err(|e| runtime(label, e))?);
    rec.push(r);
    for (name, v) in [("tau", pick(|s| s.tau)), ("discount", disc), ("jump", jump), ("tail", tail), ("lhs", lhs), ("rhs", pick(|s| s.rhs))] {
        rec.column(format!("{label}.{name}"), &v);
    }

    let label = "corollary3/restricted";
    let set = p.set;
    let (out, _) = collect(&rec.root(label), n, label, |s| restricted_jump_identity(&p.model, &set, &policy, s))?;
    let mut worst: f64 = 0.0;
    let mut series_gap: f64 = 0.0;
    let mut gaps = Vec::new();
    let mut sizes = Vec::new();
    for (split, thinned) in &out {
        worst = worst.max(split.residual() / (1.0 + split.lhs.abs()));
        let series: f64 = thinned.jumps().map(|(t, x)| (-t).exp() * x).sum();
        series_gap = series_gap.max((series - split.lhs).abs() / (1.0 + split.lhs.abs()));
        let times = thinned.jump_times();
        if times.len() >= 2 {
            gaps.push(times[1] - times[0]);
            sizes.push(thinned.jump_sizes()[1]);
        }
    }
    let taus: Vec<f64> = out.iter().map(|(s, _)| s.tau).collect();
    let mut r = match thinned_rate(&p.model, &set) {
        Some(rate) => {
            let exp = par_samples(&rec.root("restricted/exp"), taus.len(), |s| sample_exponential(rate, s));
            let cf = CharFn::Gamma { shape: 1.0, rate };
            rec.compare(&format!("{label}/tau"), &taus, &exp, Some(&cf))?
        }
        None => rec.report(label),
    };
    r.push_check(Check::at_most("max relative residual", worst, PATHWISE_TOL));
    r.push_check(Check::at_most("max relative series gap", series_gap, PATHWISE_TOL));
    if gaps.len() >= KS_MIN_SAMPLES {
        let c = correlation(&gaps, &sizes);
        r.push_check(Check::at_most("|corr(gap, size)|", c.abs(), 3.0 / (gaps.len() as f64).sqrt()));
    }
    rec.push(r);
    rec.column(format!("{label}.tau"), &taus);
    rec.column(format!("{label}.lhs"), &out.iter().map(|(s, _)| s.lhs).collect::<Vec<_>>());
    rec.column(format!("{label}.gap"), &gaps);
    rec.column(format!("{label}.size"), &sizes);
    rec.column("reference", &reference);
    Ok(())
}

fn prop1(rec: &mut Recorder, p: &Prop1Params) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    for &lambda in &p.lambdas {
        for &alpha in &p.alphas {
            let g = GammaParams::new(alpha, lambda).expect("validated");
            let cf = CharFn::Gamma { shape: alpha, rate: lambda };
            let case = format!("alpha={alpha},lambda={lambda}");
            let direct = par_samples(&rec.root(&format!("{case}/direct")), n, |s| sample_gamma(g, s));
            for part in &p.parts {
                let (name, x) = match part {
                    Prop1Part::BetaGamma => {
                        let (_, rhs) = beta_gamma_identity_samples(alpha, lambda, n, &rec.root(&format!("{case}/beta-gamma")))
                            .map_err(|e| runtime(&case, e))?;
                        (format!("prop1/beta-gamma({case})"), rhs)
                    }
                    Prop1Part::FirstJumpFactor => {
                        let x = first_jump_factor_samples(alpha, lambda, p.factor, n, &rec.root(&format!("{case}/factor")))
                            .map_err(|e| runtime(&case, e))?;
                        (format!("prop1/first-jump-factor({case})"), x)
                    }
                    Prop1Part::Series => {
                        let law = gamma_series_law(alpha, lambda);
                        let tol = p.series_tail_tol;
                        let (x, _) = collect(&rec.root(&format!("{case}/series")), n, &case, |s| {
                            sample_backward_series(&law, tol, s)
                        })?;
                        (format!("prop1/series({case})"), x)
                    }
                };
                let mut r = rec.compare(&name, &x, &direct, Some(&cf))?;
                r.push_check(mean_check("mean", &x, alpha / lambda, 3.0));
                if *part != Prop1Part::Series {
                    r.push_check(second_moment_check("second moment", &x, alpha * (alpha + 1.0) / (lambda * lambda), 3.0));
                }
                rec.push(r);
                rec.column(&name, &x);
            }
            rec.column(format!("prop1/direct({case})"), &direct);
        }
    }
    Ok(())
}

fn perpetuity(rec: &mut Recorder, p: &PerpetuityParams) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let policy = rec.cfg.truncation;
    match p {
        PerpetuityParams::Selfdecomposable { models, n_steps } => {
            for (i, model) in models.iter().enumerate() {
                let label = format!("perpetuity/model{i}");
                let check = PerpetuityCheck {
                    n,
                    n_steps: *n_steps,
                    significance: rec.cfg.significance,
                };
                let out = selfdecomposable_as_perpetuity(model, &policy, check, &rec.root(&label))
                    .map_err(|e| runtime(&label, e))?;
                let mut r = out.report;
                r.name = label.clone();
                r.fingerprint = rec.fingerprint.clone();
                let cf = match reference_for(model) {
                    Reference::Gamma(g) => Some(CharFn::Gamma {
                        shape: g.shape(),
                        rate: g.rate(),
                    }),
                    Reference::Normal { mean, variance } if variance > 0.0 => Some(CharFn::Normal { mean, variance }),
                    _ => None,
                };
                if let Some(cf) = &cf {
                    let d = ecf_distance(&out.stationary, cf, &default_ecf_grid()).map_err(|e| runtime(&label, e))?;
                    r.push_check(Check::at_most("ecf distance to exact", d, ecf_band(n)));
                }
                rec.tables(&label, &out.stationary, &out.direct, cf.as_ref());
                rec.push(r);
                rec.column(format!("{label}.stationary"), &out.stationary);
                rec.column(format!("{label}.direct"), &out.direct);
                rec.column(format!("{label}.discount"), &out.discounts);
            }
        }
        PerpetuityParams::Law {
            law,
            n_steps,
            z0,
            reference,
        } => {
            let label = "perpetuity/law";
            let (chains, _) = collect(&rec.root("chains"), n, label, |s| iterate_to_stationarity(law, *z0, *n_steps, s))?;
            let (reference, cf) = match reference {
                PerpetuityReference::Gamma { shape, rate } => {
                    let g = GammaParams::new(*shape, *rate).expect("validated");
                    (
                        par_samples(&rec.root("reference"), n, |s| sample_gamma(g, s)),
                        Some(CharFn::Gamma {
                            shape: *shape,
                            rate: *rate,
                        }),
                    )
                }
                PerpetuityReference::BackwardSeries { tail_tol } => {
                    let (x, _) = collect(&rec.root("reference"), n, label, |s| sample_backward_series(law, *tail_tol, s))?;
                    (x, None)
                }
            };
            let mut r = rec.compare(label, &chains, &reference, cf.as_ref())?;
            r.note("n_steps", *n_steps as f64);
            rec.push(r);
            rec.column(format!("{label}.chain"), &chains);
            rec.column(format!("{label}.reference"), &reference);
        }
    }
    Ok(())
}

fn operator(rec: &mut Recorder, p: &OperatorParams) -> Result<(), CliError> {
    let model = operator_model(p)?;
    let d = model.dimension();
    let policy = rec.cfg.truncation;
    let n = rec.cfg.n_samples;

    for (k, rule) in p.rules.iter().enumerate() {
        let label = format!("operator/{rule}");
        let (records, dropped) = collect(&rec.root(&label), p.n_paths, &label, |s| operator_decompose(&model, rule, &policy, s))?;
        let worst = records.iter().map(|r| r.relative_residual()).fold(0.0, f64::max);
        let mut r = rec.report(&label);
        r.n = records.len();
        r.push_check(Check::at_most("max relative residual", worst, OPERATOR_PATHWISE_TOL));
        r.note("dropped", dropped as f64);
        rec.push(r);
        rec.column(format!("{label}.tau"), &records.iter().map(|r| r.tau).collect::<Vec<_>>());
        rec.column(format!("{label}.residual"), &records.iter().map(|r| r.relative_residual()).collect::<Vec<_>>());
        if k == 0 && records.len() >= KS_MIN_SAMPLES {
            let direct = collect(&rec.root("marginal/direct"), records.len(), "direct", |s| {
                sample_operator_integral(&model, &policy, s)
            })?
            .0;
            for i in 0..d {
                let total: Vec<f64> = records.iter().map(|r| r.x_total[i]).collect();
                let reference: Vec<f64> = direct.iter().map(|x| x[i]).collect();
                let r = rec.compare(&format!("{label}/x_total[{i}]"), &total, &reference, None)?;
                rec.push(r);
            }
        }
    }

    let label = "operator/mean";
    let (x, _) = collect(&rec.root(label), n, label, |s| sample_operator_integral(&model, &policy, s))?;
    let expected = model.mean().map_err(|e| runtime(label, e))?;
    let mut r = rec.report(label);
    r.n = x.len();
    for i in 0..d {
        let xi: Vec<f64> = x.iter().map(|v| v[i]).collect();
        r.push_check(mean_check(format!("E[X_{i}] = (Q^-1 E[Y(1)])_{i}"), &xi, expected[i], 3.0));
        rec.column(format!("{label}.x[{i}]"), &xi);
    }
    rec.push(r);

    let mut r = rec.report("operator/spectral-gate");
    for (k, probe) in p.gate_probes.iter().enumerate() {
        let (dim, flat) = q_matrix(probe)?;
        let driver = OperatorDriver::Independent {
            coordinates: vec![LevyModel::gamma_bdlp(1.0, 1.0); dim],
        };
        let min_re = min_real_eigenvalue(&nalgebra_rows(dim, &flat)).map_err(|e| runtime("gate probe", e))?;
        let rejected = matches!(OperatorModel::from_rows(dim, &flat, driver), Err(Error::Spectral { .. }));
        r.push_check(Check::new(format!("probe {k} rejected (min Re eig)"), min_re, 0.0, rejected));
    }
    let own = min_real_eigenvalue(model.q()).map_err(|e| runtime("Q", e))?;
    r.push_check(Check::new("configured Q accepted (min Re eig)", own, 0.0, own > sdlevy::operator::SPECTRAL_TOL));
    rec.push(r);
    Ok(())
}

fn nalgebra_rows(d: usize, flat: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(d, d, flat)
}

fn null_calibration(rec: &mut Recorder, p: &NullCalibrationParams) -> Result<(), CliError> {
    let n = rec.cfg.n_samples;
    let sig = rec.cfg.significance;
    let g = GammaParams::new(p.shape, p.rate).expect("validated");
    let mut stats = Vec::with_capacity(p.repetitions);
    let mut thresholds = Vec::with_capacity(p.repetitions);
    let mut failures = 0;
    for k in 0..p.repetitions {
        let a = par_samples(&rec.root(&format!("rep{k}/a")), n, |s| sample_gamma(g, s));
        let b = par_samples(&rec.root(&format!("rep{k}/b")), n, |s| sample_gamma(g, s));
        let ks = ks_two_sample(&a, &b, sig).map_err(|e| runtime("null pair", e))?;
        failures += usize::from(!ks.pass);
        stats.push(ks.statistic);
        thresholds.push(ks.threshold);
    }
    let mut r = rec.report("null-calibration");
    r.n = n;
    r.m = n;
    r.significance = Some(sig);
    r.push_check(Check::at_most("KS failures", failures as f64, p.max_failures as f64));
    r.note("repetitions", p.repetitions as f64);
    rec.push(r);
    rec.column("null.ks_statistic", &stats);
    rec.column("null.ks_threshold", &thresholds);

    let base = par_samples(&rec.root("control/base"), n, |s| sample_gamma(g, s));
    let shifted_law = GammaParams::new(p.shifted_shape, p.rate).expect("validated");
    let shifted = par_samples(&rec.root("control/shifted"), n, |s| sample_gamma(shifted_law, s));
    let ks = ks_two_sample(&base, &shifted, sig).map_err(|e| runtime("shifted control", e))?;
    let mut r = rec.report("control/shifted-law");
    r.n = n;
    r.m = n;
    r.push_check(Check::new("KS rejects the shifted law (D vs threshold)", ks.statistic, ks.threshold, !ks.pass));
    rec.tables("control/shifted-law", &base, &shifted, None);
    rec.push(r);

    let ind = independence_diagnostic(&base, &base).map_err(|e| runtime("independence control", e))?;
    let mut r = rec.report("control/identical-pairs");
    r.n = n;
    r.push_check(Check::new("dependence of y = x detected (max |corr| vs band)", ind.max_abs_corr, ind.band, !ind.pass));
    rec.push(r);

    let wrong = CharFn::Gamma {
        shape: p.shifted_shape,
        rate: p.rate,
    };
    let dist = ecf_distance(&base, &wrong, &default_ecf_grid()).map_err(|e| runtime("ecf control", e))?;
    let band = ecf_band(n);
    let mut r = rec.report("control/wrong-shape-ecf");
    r.n = n;
    r.push_check(Check::new("ECF distance to a wrong CF exceeds the band", dist, band, dist > band));
    rec.push(r);
    rec.column("control.base", &base);
    rec.column("control.shifted", &shifted);
    Ok(())
}
