use std::fs;

use nalgebra::DMatrix;
use tobit_select::bootstrap::BootstrapSpec;
use tobit_select::cli::{self, ingest_text, subsample, synthetic_affairs_csv};
use tobit_select::criteria::{bqcv, eic, BiasConstantMode, CriterionId};
use tobit_select::rng::Stream;
use tobit_select::selection::{best_subset, nested_scan, CandidateFamily};
use tobit_select::simulation::{gen_dataset, monte_carlo, SimulationConfig, TABLE_CENSORING};
use tobit_select::tobit::{fit_mle, CensoredDataset, FitOptions};
use tobit_select::Mechanism;

const NORMAL: BiasConstantMode = BiasConstantMode::Normalized;

fn tobit_data(n: usize, beta: &[f64], seed: u64) -> CensoredDataset {
    let mut s = Stream::new(seed);
    let q = beta.len();
    let x = DMatrix::from_fn(n, q - 1, |_, _| s.standard_normal());
    let y = (0..n)
        .map(|i| {
            let mean = beta[0] + (1..q).map(|j| beta[j] * x[(i, j - 1)]).sum::<f64>();
            (mean + s.standard_normal()).max(0.0)
        })
        .collect();
    let names = (1..q).map(|j| format!("x{j}")).collect();
    CensoredDataset::with_intercept(y, x, names).unwrap()
}

fn fitted(data: &CensoredDataset) -> tobit_select::TobitFit {
    let fit = fit_mle(data, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    fit
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn eic_standard_error_shrinks_like_root_b() {
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..20 {
        let data = tobit_data(100, &[0.3, 0.6, -0.4], 1000 + seed);
        let fit = fitted(&data);
        let se = |b: usize| {
            let spec = BootstrapSpec::new(Mechanism::Parametric, b, seed);
            eic(1, &data, &fit, &spec, NORMAL).unwrap().bias_se.unwrap()
        };
        small += se(50);
        large += se(200);
    }
    let ratio = large / small;
    assert!((0.3..=0.7).contains(&ratio), "SE ratio {ratio}");
}

#[test]
fn bqcv_is_not_far_below_in_sample_deviance() {
    let data = tobit_data(200, &[0.2, 0.5, 0.5], 7);
    let fit = fitted(&data);
    let spec = BootstrapSpec::new(Mechanism::Nonparametric, 400, 11);
    let score = bqcv(&data, &fit, &spec).unwrap();
    let se = score.bias_se.unwrap();
    assert!(score.value >= fit.deviance() - 3.0 * se, "{} vs {}", score.value, fit.deviance());
}

#[test]
fn eic_is_stable_in_replicate_count() {
    let data = tobit_data(150, &[0.0, 0.7, 0.3, 0.0], 21);
    let fit = fitted(&data);
    for mech in Mechanism::ALL {
        for which in 1..=5 {
            let at = |b: usize| eic(which, &data, &fit, &BootstrapSpec::new(mech, b, 5), NORMAL).unwrap();
            let (a, b) = (at(200), at(400));
            let se = a.bias_se.unwrap().hypot(b.bias_se.unwrap());
            assert!((a.value - b.value).abs() < 4.0 * se, "EIC{which} {mech:?}: {} vs {}", a.value, b.value);
        }
    }
}

#[test]
fn bic_recovers_true_dimension_at_large_n() {
    let cfg = SimulationConfig::table(1, 2000).unwrap();
    let data = gen_dataset(&cfg, 0).unwrap();
    let spec = cfg.bootstrap_spec(0);
    let res = nested_scan(&data, CriterionId::BIC, cfg.max_k, &spec, NORMAL).unwrap();
    assert_eq!(res.d_hat, 4);
    assert_eq!(res.chosen, CandidateFamily::nested(6));
}

#[test]
fn pure_noise_selects_no_regressor() {
    let data = tobit_data(500, &[0.0, 0.0, 0.0, 0.0], 3);
    let spec = BootstrapSpec::new(Mechanism::Nonparametric, 2, 0);
    for max_k in [2, 5] {
        let res = nested_scan(&data, CriterionId::BIC, max_k, &spec, NORMAL).unwrap();
        assert_eq!(res.d_hat, 0, "max_k = {max_k}");
    }
}

#[test]
fn subset_search_dominates_nested_scan() {
    let data = tobit_data(120, &[0.1, 0.2, 0.8, 0.0, 0.5], 9);
    let spec = BootstrapSpec::new(Mechanism::Nonparametric, 2, 0);
    let nested = nested_scan(&data, CriterionId::AIC, 6, &spec, NORMAL).unwrap();
    let subset = best_subset(&data, CriterionId::AIC, &spec, NORMAL, &[0, 1, 2, 3, 4]).unwrap();
    for row in &subset.rows {
        let (_, best) = row.best.as_ref().unwrap();
        let same = nested.scores.iter().find(|s| s.family == CandidateFamily::nested(row.d + 2)).unwrap();
        assert!(best.value <= same.value + 1e-9, "d = {}", row.d);
        if row.d == 0 || row.d == 4 {
            assert_eq!(row.evaluated, 1);
            assert!((best.value - same.value).abs() < 1e-9);
        }
    }
    assert!(subset.best_value <= nested.scores.iter().map(|s| s.value).fold(f64::INFINITY, f64::min) + 1e-9);
}

#[test]
fn intercept_only_range_has_one_candidate() {
    let data = tobit_data(60, &[0.5, 0.5, 0.5], 1);
    let spec = BootstrapSpec::new(Mechanism::Nonparametric, 2, 0);
    let rep = best_subset(&data, CriterionId::BIC, &spec, NORMAL, &[0]).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].evaluated, 1);
    assert_eq!(rep.best, CandidateFamily::subset(vec![]));
}

#[test]
fn caption_intercepts_imply_caption_censoring() {
    for t in 1..=4 {
        let cfg = SimulationConfig::table(t, 100_000).unwrap();
        let implied = cfg.censoring_rate().unwrap();
        assert!((implied - TABLE_CENSORING[t - 1]).abs() < 0.01, "table {t}: {implied}");
        let empirical = gen_dataset(&cfg, 0).unwrap().censoring_rate();
        let se = (implied * (1.0 - implied) / 100_000.0).sqrt();
        assert!((empirical - implied).abs() < 4.0 * se, "table {t}: {empirical} vs {implied}");
    }
}

fn small_config(runs: usize) -> SimulationConfig {
    let mut cfg = SimulationConfig::table(1, 80).unwrap();
    cfg.runs = runs;
    cfg.replicates = 4;
    cfg.criteria = vec![CriterionId::BIC, CriterionId::AIC, CriterionId::BCV];
    cfg.seed = 42;
    cfg
}

#[test]
fn monte_carlo_is_deterministic() {
    let cfg = small_config(4);
    assert_eq!(monte_carlo(&cfg).unwrap(), monte_carlo(&cfg).unwrap());
}

#[test]
fn single_run_counts_sum_to_one() {
    let table = monte_carlo(&small_config(1)).unwrap();
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        assert_eq!(row.total(), 1);
    }
}

#[test]
fn cli_simulation_rows_sum_to_runs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("tiny");
    cli::run([
        "tobit-select", "simulate", "--table", "1", "--n", "60", "--M", "2", "--B", "2",
        "--criterion", "bic", "--output", prefix.to_str().unwrap(),
    ])
    .unwrap();
    let tsv = fs::read_to_string(dir.path().join("tiny.tsv")).unwrap();
    let rows = data_rows(&tsv);
    assert_eq!(rows.len(), 1);
    let counts: usize = rows[0].split('\t').skip(1).map(|c| c.parse::<usize>().unwrap()).sum();
    assert_eq!(counts, 2);
    assert!(dir.path().join("tiny.risk.csv").exists());
    assert!(dir.path().join("tiny.meta.toml").exists());
}

#[test]
fn cli_default_simulation_reports_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("desk");
    cli::run([
        "tobit-select", "simulate", "--table", "1", "--n", "50", "--M", "1", "--B", "3",
        "--output", prefix.to_str().unwrap(),
    ])
    .unwrap();
    let tsv = fs::read_to_string(dir.path().join("desk.tsv")).unwrap();
    assert_eq!(data_rows(&tsv).len(), 23);
}

#[test]
fn subsample_is_seeded() {
    let text = synthetic_affairs_csv(601, 3);
    let data = ingest_text(&text, "affairs", &[]).unwrap();
    assert_eq!(data.n(), 601);
    assert_eq!(data.q(), 9);
    let a = subsample(&data, 130, 17).unwrap();
    assert_eq!(a, subsample(&data, 130, 17).unwrap());
    assert_ne!(a, subsample(&data, 130, 18).unwrap());
    assert_eq!(a.n(), 130);
    assert!(subsample(&data, 602, 17).is_err());
}

#[test]
fn cli_select_writes_report_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("affairs.csv");
    fs::write(&input, synthetic_affairs_csv(200, 5)).unwrap();
    let out = dir.path().join("sel.txt");
    let written = cli::run([
        "tobit-select", "select", "--input", input.to_str().unwrap(), "--response", "affairs",
        "--criterion", "bic,aic", "--mode", "nested", "--output", out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(written.outputs, vec![out.clone()]);
    let first = fs::read_to_string(&out).unwrap();
    let meta = written.meta.unwrap();
    cli::run(["tobit-select", "rerun", "--meta", meta.to_str().unwrap(), "--output", out.to_str().unwrap()]).unwrap();
    assert_eq!(first, fs::read_to_string(&out).unwrap());
}
