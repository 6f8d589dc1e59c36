//! Acceptance suite: runs every criterion config under `configs/acceptance`
//! through the same code path as `sdlevy run` and prints one verdict line per
//! criterion. Exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use sdlevy_cli::{load_config, run_and_write, Outcome};

struct Criterion {
    number: u32,
    title: &'static str,
    config: &'static str,
    /// Report names (or prefixes) that must be present in the outcome.
    required: &'static [&'static str],
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        number: 1,
        title: "gamma BDLP identity",
        config: "c1-gamma-bdlp.json",
        required: &[
            "gamma-bdlp(alpha=0.5,lambda=1)",
            "gamma-bdlp(alpha=1,lambda=1)",
            "gamma-bdlp(alpha=2,lambda=1)",
            "gamma-bdlp(alpha=2,lambda=3)",
        ],
    },
    Criterion {
        number: 2,
        title: "pathwise recombination identity",
        config: "c2-pathwise.json",
        required: &[
            "corollary2/FixedTime(0.7)",
            "corollary2/FirstJump",
            "corollary2/FirstJumpIn",
            "corollary2/KthJump(3)",
            "corollary2/IndependentRandomTime",
        ],
    },
    Criterion {
        number: 3,
        title: "stopping-time decomposition laws and independence",
        config: "c3-theorem1.json",
        required: &["theorem1/FirstJump/x_total", "theorem1/FirstJump/x_prime"],
    },
    Criterion {
        number: 4,
        title: "gamma beta-gamma and first-jump factorizations",
        config: "c4-prop1-factorizations.json",
        required: &["prop1/beta-gamma", "prop1/first-jump-factor"],
    },
    Criterion {
        number: 5,
        title: "gamma backward-series sampler",
        config: "c5-prop1-series.json",
        required: &["prop1/series"],
    },
    Criterion {
        number: 6,
        title: "perpetuity iteration reaches the selfdecomposable law",
        config: "c6-perpetuity.json",
        required: &["perpetuity/model0", "perpetuity/model1"],
    },
    Criterion {
        number: 7,
        title: "integration-by-parts and jump-sum evaluators agree",
        config: "c7-evaluators.json",
        required: &["evaluator-equivalence"],
    },
    Criterion {
        number: 8,
        title: "operator decomposition at d=2",
        config: "c8-operator.json",
        required: &["operator/FixedTime", "operator/mean", "operator/spectral-gate"],
    },
    Criterion {
        number: 9,
        title: "null calibration and negative controls",
        config: "c9-null-calibration.json",
        required: &[
            "null-calibration",
            "control/shifted-law",
            "control/identical-pairs",
            "control/wrong-shape-ecf",
        ],
    },
];

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance")
}

fn summarize(outcome: &Outcome) -> (usize, usize, Vec<String>) {
    let total = outcome.reports.len();
    let passed = outcome.reports.iter().filter(|r| r.passed()).count();
    let mut detail = Vec::new();
    for r in outcome.reports.iter().filter(|r| !r.passed()) {
        if let Some(ks) = r.ks.filter(|ks| !ks.pass) {
            detail.push(format!("{}: KS D={:.5} > {:.5}", r.name, ks.statistic, ks.threshold));
        }
        for c in r.checks.iter().filter(|c| !c.pass) {
            detail.push(format!("{}: {} = {:e} (target {:e})", r.name, c.label, c.value, c.target));
        }
        for e in r.independence.iter().filter(|e| !e.result.pass) {
            detail.push(format!("{}: independence {} max|corr| = {:.5} > {:.5}", r.name, e.label, e.result.max_abs_corr, e.result.band));
        }
    }
    (passed, total, detail)
}

fn run_one(c: &Criterion, out: &Path) -> (bool, String, Vec<String>) {
    let dir = out.join(format!("criterion{}", c.number));
    let cfg = match load_config(&config_dir().join(c.config), None, Some(dir)) {
        Ok(cfg) => cfg,
        Err(e) => return (false, format!("config error: {e}"), Vec::new()),
    };
    let (outcome, paths) = match run_and_write(&cfg) {
        Ok(x) => x,
        Err(e) => return (false, format!("run error: {e}"), Vec::new()),
    };
    let (passed, total, mut detail) = summarize(&outcome);
    for name in c.required {
        if !outcome.reports.iter().any(|r| r.name.starts_with(name)) {
            detail.push(format!("missing report {name}"));
        }
    }
    if paths.len() != 4 || !paths.iter().all(|p| p.is_file()) {
        detail.push("artifacts not written".to_string());
    }
    let ok = outcome.passed() && detail.is_empty();
    (ok, format!("{passed}/{total} reports pass, seed {}", cfg.seed), detail)
}

fn main() -> ExitCode {
    let out = tempfile::tempdir().expect("temporary directory");
    let mut failures = 0;
    let start = Instant::now();
    for c in CRITERIA {
        let t = Instant::now();
        let (ok, summary, detail) = run_one(c, out.path());
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {verdict}  {}  ({summary}, {:.1}s)",
            c.number,
            c.title,
            t.elapsed().as_secs_f64()
        );
        for d in detail {
            println!("    {d}");
        }
        if !ok {
            failures += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria pass ({:.1}s)",
        CRITERIA.len() - failures,
        CRITERIA.len(),
        start.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
