//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line; run with `cargo test --release --test acceptance -- --nocapture` to
//! see them all.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use levy_coupling::harness::{run_experiment, ExperimentConfig, Report};

fn config(experiment: &str, settings: &[(&str, &str)]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { experiment: experiment.into(), seed: 20240601, ..Default::default() };
    for (k, v) in settings {
        cfg.set(k, v).unwrap();
    }
    cfg
}

fn timed(cfg: &ExperimentConfig) -> (Report, Duration) {
    let start = Instant::now();
    let rep = run_experiment(cfg).expect("experiment runs");
    (rep, start.elapsed())
}

/// Prints the criterion line and panics when any listed check failed.
fn conclude(id: u32, title: &str, checks: &[(&str, bool, String)]) {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let status = if failed.is_empty() { "PASS" } else { "FAIL" };
    let detail: Vec<String> = checks.iter().map(|c| format!("{}: {}", c.0, c.2)).collect();
    println!("criterion {id}: {status} {title} ({})", detail.join("; "));
    assert!(failed.is_empty(), "criterion {id} failed: {failed:?}");
}

fn all_pass(rep: &Report, prefix: &str) -> (bool, String) {
    let picked: Vec<_> = rep.verdicts.iter().filter(|v| v.name.starts_with(prefix)).collect();
    let bad: Vec<&str> = picked.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    let ok = !picked.is_empty() && bad.is_empty();
    (ok, format!("{} checks, failing {:?}", picked.len(), bad))
}

fn within_time(elapsed: Duration, limit_s: u64) -> (&'static str, bool, String) {
    ("runtime", elapsed.as_secs() < limit_s, format!("{:.1}s of {limit_s}s", elapsed.as_secs_f64()))
}

fn lemma1_reports() -> &'static [(Report, Duration)] {
    static R: OnceLock<Vec<(Report, Duration)>> = OnceLock::new();
    R.get_or_init(|| {
        ["2", "3"]
            .iter()
            .map(|d| timed(&config("lemma1-moments", &[("d", d), ("n", "16"), ("samples", "100000"), ("n_sub", "1024")])))
            .collect()
    })
}

#[test]
fn criterion_01_increment_moments() {
    let mut checks = Vec::new();
    for (rep, t) in lemma1_reports() {
        let d = &rep.config["d"];
        for prefix in ["var_zeta", "var_k", "cov_"] {
            let (ok, msg) = all_pass(rep, prefix);
            checks.push((prefix, ok, format!("d={d} {msg}")));
        }
        checks.push(within_time(*t, 120));
    }
    conclude(1, "variances 1/(12N), 1/(12N^2) and vanishing covariances", &checks);
}

#[test]
fn criterion_02_surrogate_second_moments() {
    let mut checks = Vec::new();
    for (rep, t) in lemma1_reports() {
        let d = &rep.config["d"];
        for prefix in ["var_a", "var_b"] {
            let (ok, msg) = all_pass(rep, prefix);
            checks.push((prefix, ok, format!("d={d} {msg}")));
        }
        checks.push(within_time(*t, 120));
    }
    conclude(2, "Var A and Var B against 1/(4N^2) and each other", &checks);
}

#[test]
fn criterion_03_matrix_identities() {
    let cfg = config("matrix-identities", &[("d", "3"), ("n", "16"), ("samples", "10000"), ("sets", "1000"), ("n_sub", "64")]);
    let (rep, t) = timed(&cfg);
    let mut checks = Vec::new();
    for name in ["gram_identity_residual", "gram_eigmin", "he_inverse_norm_max"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:e}", v.estimate)));
    }
    checks.push(within_time(t, 60));
    conclude(3, "Gram identity, eigenvalue floor 1/12, inverse norm 12", &checks);
}

#[test]
fn criterion_04_operator_calculus() {
    let (rep, t) = timed(&config("lsigma-roundtrip", &[("samples", "100")]));
    let mut checks = Vec::new();
    for name in ["hermite_eigen_residual", "lsigma_roundtrip_residual"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:e}", v.estimate)));
    }
    checks.push(within_time(t, 30));
    conclude(4, "Hermite eigenfunctions and inversion roundtrip", &checks);
}

#[test]
fn criterion_05_smap() {
    let (rep, t) = timed(&config("smap-roundtrip", &[("samples", "100")]));
    let mut checks = Vec::new();
    for name in ["smap_roundtrip_residual", "smap_centering_residual", "scaling_s1_residual", "scaling_s2_residual"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:e}", v.estimate)));
    }
    checks.push(within_time(t, 30));
    conclude(5, "S-map roundtrip, closed-form scaling case, centring", &checks);
}

#[test]
fn criterion_06_expansion_order() {
    let (rep, t) = timed(&config("expansion-moments", &[("samples", "1000000")]));
    let mut checks = Vec::new();
    for name in ["order_ratio_n1", "order_ratio_n2"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:.4}", v.estimate)));
    }
    checks.push(within_time(t, 120));
    conclude(6, "discrepancy ratio 2^(n+1) between eps 0.04 and 0.02", &checks);
}

#[test]
fn criterion_07_wasserstein() {
    let (rep, t) = timed(&config("wasserstein-sanity", &[("samples", "100000"), ("p", "2")]));
    let mut checks = Vec::new();
    for name in ["gaussian_shift_wp", "assignment_vs_quantile_1d", "density_bound_dominates_w1"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:e}", v.estimate)));
    }
    checks.push(within_time(t, 60));
    conclude(7, "Gaussian shift, assignment versus quantile, density bound", &checks);
}

fn rate_report() -> &'static (Report, Duration) {
    static R: OnceLock<(Report, Duration)> = OnceLock::new();
    R.get_or_init(|| {
        timed(&config(
            "coupling-rate",
            &[
                ("d", "2"),
                ("m_range", "4..9"),
                ("samples", "2000"),
                ("n_sub", "1024"),
                ("p", "2"),
                ("subcoupler", "edgeworth"),
                ("kappa", "4"),
            ],
        ))
    })
}

#[test]
fn criterion_08_rate_separation() {
    let (rep, t) = rate_report();
    let mut checks = Vec::new();
    for name in ["slope_independent", "slope_edgeworth", "slope_stderr_edgeworth"] {
        let v = rep.verdict(name).unwrap();
        checks.push((name, v.pass, format!("{:.4}", v.estimate)));
    }
    let (ok, msg) = all_pass(rep, "edgeworth_below_independent");
    checks.push(("below_baseline", ok, msg));
    checks.push(within_time(*t, 900));
    conclude(8, "independent slope in [-0.6,-0.4], edgeworth slope <= -0.75", &checks);
}

#[test]
fn criterion_09_marginal_fidelity() {
    let (rep, t) = rate_report();
    let mut checks = Vec::new();
    for prefix in ["fidelity_mean", "fidelity_cov", "fidelity_fourth_cumulant"] {
        let (ok, msg) = all_pass(rep, prefix);
        checks.push((prefix, ok, msg));
    }
    checks.push(within_time(*t, 900));
    conclude(9, "whitened leaf Z mean, covariance and fourth cumulant", &checks);
}

#[test]
fn criterion_10_determinism() {
    let cases: [(&str, &[(&str, &str)]); 4] = [
        ("lemma1-moments", &[("samples", "20000"), ("n_sub", "64")]),
        ("expansion-moments", &[("samples", "50000")]),
        ("wasserstein-sanity", &[("samples", "20000")]),
        ("coupling-rate", &[("m_range", "4..7"), ("samples", "40"), ("n_sub", "32")]),
    ];
    let mut checks = Vec::new();
    for (name, settings) in cases {
        let bytes: Vec<Vec<u8>> = ["1", "3"]
            .iter()
            .map(|w| {
                let mut cfg = config(name, settings);
                cfg.set("workers", w).unwrap();
                run_experiment(&cfg).unwrap().results_csv().unwrap()
            })
            .collect();
        checks.push((name, bytes[0] == bytes[1], format!("{} bytes", bytes[0].len())));
    }
    conclude(10, "results.csv identical for 1 and 3 workers", &checks);
}
