use proptest::prelude::*;
use sdlevy::decomposition::{evaluate_stopping, StoppingRule};
use sdlevy::discount::{eval_by_parts, eval_jump_sum, sample_discounted_integral, TruncationPolicy};
use sdlevy::levy::{simulate_path, JumpLaw, JumpPath, JumpSet, LevyModel, PathRecord};
use sdlevy::rng::{par_samples, sample_exponential, sample_gamma, sample_uniform, GammaParams};
use sdlevy::stats::{correlation, ks_two_sample, mean, std_error, Significance};
use sdlevy::RngStream;

#[test]
fn mean_of_y_at_one() {
    let model = LevyModel::gamma_bdlp(2.0, 1.5);
    let y1 = par_samples(&RngStream::family(1, "y1"), 100_000, |s| {
        simulate_path(&model, 1.0, s).unwrap().path_value(1.0).unwrap()
    });
    assert!((mean(&y1) - 2.0 / 1.5).abs() < 3.0 * std_error(&y1));
}

#[test]
fn void_probability() {
    let model = LevyModel::compound_poisson(1.0, JumpLaw::Exponential { rate: 1.0 });
    let empty = par_samples(&RngStream::family(2, "void"), 100_000, |s| {
        f64::from(simulate_path(&model, 1.0, s).unwrap().jump_count() == 0)
    });
    let p = (-1.0f64).exp();
    let se = (p * (1.0 - p) / empty.len() as f64).sqrt();
    assert!((mean(&empty) - p).abs() < 3.0 * se);
}

#[test]
fn drift_only_path_is_linear() {
    let mut s = RngStream::new(3, 3);
    let p = simulate_path(&LevyModel::drift_only(1.5), 5.0, &mut s).unwrap();
    assert_eq!(p.jump_count(), 0);
    assert_eq!(p.path_value(2.0).unwrap(), 3.0);
    assert_eq!(p.path_value(0.0).unwrap(), 0.0);
}

#[test]
fn shift_at_first_jump_is_memoryless() {
    let model = LevyModel::gamma_bdlp(2.0, 1.0);
    let n = 100_000;
    let shifted_first = par_samples(&RngStream::family(4, "shifted"), n, |s| {
        let p = simulate_path(&model, 40.0, s).unwrap();
        let q = p.shift_path(p.jump_times()[0]).unwrap();
        q.jump_times()[0]
    });
    let fresh = par_samples(&RngStream::family(4, "fresh"), n, |s| {
        simulate_path(&model, 40.0, s).unwrap().jump_times()[0]
    });
    let ks = ks_two_sample(&shifted_first, &fresh, Significance::Permille).unwrap();
    assert!(ks.pass, "{ks:?}");
    let exp = par_samples(&RngStream::family(4, "exp"), n, |s| sample_exponential(2.0, s));
    assert!(ks_two_sample(&shifted_first, &exp, Significance::Permille).unwrap().pass);
}

#[test]
fn thinning_counts_are_poisson_and_independent() {
    let (alpha, lambda, a) = (3.0, 1.0, 0.8);
    let model = LevyModel::gamma_bdlp(alpha, lambda);
    let set = JumpSet::AtLeast { a };
    let counts = par_samples(&RngStream::family(5, "thin"), 100_000, |s| {
        let p = simulate_path(&model, 1.0, s).unwrap();
        let (in_set, rest) = p.thin_path(&set).unwrap();
        (in_set.jump_count() as f64, rest.jump_count() as f64)
    });
    let (a_cnt, r_cnt): (Vec<f64>, Vec<f64>) = counts.into_iter().unzip();
    let expected = alpha * (-lambda * a).exp();
    assert!((mean(&a_cnt) - expected).abs() < 3.0 * std_error(&a_cnt));
    let r = correlation(&a_cnt, &r_cnt);
    assert!(r.abs() < 3.0 / (a_cnt.len() as f64).sqrt(), "corr {r}");
}

#[test]
fn thinned_first_arrival_rate() {
    let (alpha, lambda, a) = (2.0, 1.0, 1.0);
    let model = LevyModel::gamma_bdlp(alpha, lambda);
    let rule = StoppingRule::FirstJumpIn { set: JumpSet::AtLeast { a } };
    let n = 100_000;
    let tau = par_samples(&RngStream::family(6, "tau-a"), n, |s| {
        let p = simulate_path(&model, 60.0, s).unwrap();
        evaluate_stopping(&rule, &p, s).unwrap()
    });
    let rate = alpha * (-lambda * a).exp();
    let exp = par_samples(&RngStream::family(6, "exp"), n, |s| sample_exponential(rate, s));
    let ks = ks_two_sample(&tau, &exp, Significance::Permille).unwrap();
    assert!(ks.pass, "{ks:?}");
}

#[test]
fn first_jump_time_is_exponential() {
    let model = LevyModel::gamma_bdlp(0.5, 1.0);
    let n = 100_000;
    let tau = par_samples(&RngStream::family(7, "tau0"), n, |s| {
        let p = simulate_path(&model, 80.0, s).unwrap();
        evaluate_stopping(&StoppingRule::FirstJump, &p, s).unwrap_or(f64::INFINITY)
    });
    let exp = par_samples(&RngStream::family(7, "exp"), n, |s| sample_exponential(0.5, s));
    assert!(ks_two_sample(&tau, &exp, Significance::Permille).unwrap().pass);
}

#[test]
fn gamma_bdlp_integral_matches_gamma() {
    let policy = TruncationPolicy::default();
    let n = 100_000;
    let model = LevyModel::gamma_bdlp(2.0, 1.0);
    let x = par_samples(&RngStream::family(8, "bdlp"), n, |s| sample_discounted_integral(&model, &policy, s).unwrap());
    let p = GammaParams::new(2.0, 1.0).unwrap();
    let g = par_samples(&RngStream::family(8, "gamma"), n, |s| sample_gamma(p, s));
    assert!(ks_two_sample(&x, &g, Significance::Permille).unwrap().pass);
}

#[test]
fn evaluators_agree_on_random_paths() {
    let models = [
        LevyModel::gamma_bdlp(2.0, 1.0),
        LevyModel::compound_poisson(5.0, JumpLaw::Uniform { low: -3.0, high: 2.0 }).with_drift(-0.4),
        LevyModel::compound_poisson(0.5, JumpLaw::Table { values: vec![-1.0, 0.0, 7.0], weights: vec![] }),
    ];
    for (k, model) in models.iter().enumerate() {
        let worst = par_samples(&RngStream::family(9 + k as u64, "eval"), 2000, |s| {
            let p = simulate_path(model, 20.0, s).unwrap();
            (0..5)
                .map(|_| {
                    let t = 20.0 * sample_uniform(s);
                    let a = eval_jump_sum(&p, t).unwrap();
                    let b = eval_by_parts(&p, t).unwrap();
                    (a - b).abs() / (1.0 + a.abs())
                })
                .fold(0.0, f64::max)
        });
        let worst = worst.into_iter().fold(0.0, f64::max);
        assert!(worst <= 1e-10, "model {k}: {worst}");
    }
}

fn arb_path() -> impl Strategy<Value = JumpPath> {
    (1.0f64..30.0, prop::collection::vec((0.0f64..1.0, -5.0f64..5.0), 0..40), -2.0f64..2.0).prop_map(
        |(horizon, raw, drift)| {
            let mut times: Vec<f64> = raw.iter().map(|(u, _)| u * horizon).filter(|&t| t > 0.0).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let jumps: Vec<(f64, f64)> = times.iter().zip(raw.iter()).map(|(&t, &(_, s))| (t, s)).collect();
            JumpPath::from_jumps(horizon, &jumps, drift).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn path_json_round_trip(p in arb_path()) {
        let q = JumpPath::from_json(&p.to_json()).unwrap();
        let rec = PathRecord::from(&q);
        prop_assert_eq!(&rec, &PathRecord::from(&p));
        prop_assert_eq!(p.jump_times(), q.jump_times());
        prop_assert_eq!(p.jump_sizes(), q.jump_sizes());
        prop_assert_eq!(p.horizon(), q.horizon());
        prop_assert_eq!(p.drift(), q.drift());
    }

    #[test]
    fn thinning_partitions_the_jumps(p in arb_path(), a in 0.1f64..4.0) {
        let set = JumpSet::AbsAtLeast { a };
        let (in_set, rest) = p.thin_path(&set).unwrap();
        prop_assert_eq!(in_set.jump_count() + rest.jump_count(), p.jump_count());
        prop_assert!(in_set.jump_sizes().iter().all(|&x| x.abs() >= a));
        prop_assert!(rest.jump_sizes().iter().all(|&x| x.abs() < a));
        let t = p.horizon();
        let whole = eval_jump_sum(&p, t).unwrap();
        let parts = eval_jump_sum(&in_set, t).unwrap() + eval_jump_sum(&rest, t).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn evaluators_agree(p in arb_path(), u in 0.0f64..=1.0) {
        let t = u * p.horizon();
        let a = eval_jump_sum(&p, t).unwrap();
        let b = eval_by_parts(&p, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn shift_preserves_increments(p in arb_path(), u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let tau = u * p.horizon();
        let q = p.shift_path(tau).unwrap();
        let t = v * q.horizon();
        let lhs = q.path_value(t).unwrap();
        let rhs = p.path_value((t + tau).min(p.horizon())).unwrap() - p.path_value(tau).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}
