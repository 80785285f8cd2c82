use std::path::Path;
use std::process::Command;

use icr::commands::{self, Method};
use icr::config::ExperimentConfig;
use icr::io;
use icr::parallel::{apply_sqrt_threads, par_apply_sqrt, with_threads};
use icr_core::{Chart, ChartSpec, IcrModel, Kernel, RefinementSpec};

fn cfg(overrides: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    for o in overrides {
        c.apply_override(o).unwrap();
    }
    c
}

fn small() -> ExperimentConfig {
    cfg(&["chart.kind=identity", "spec.n_csz=3", "spec.n_fsz=2", "spec.n_lvl=2", "spec.n0=12"])
}

#[test]
fn sample_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&["seed=42", "sample.count=2"]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let rows = commands::sample(&c, 1, &a).unwrap();
    commands::sample(&c, 1, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(rows.len(), 400);
    assert_eq!(io::read_samples(&a).unwrap(), rows);
    assert_eq!(rows[200].index, 0);
    // parallel sampling writes the same bytes
    let p = dir.path().join("p.csv");
    commands::sample(&c, 4, &p).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&p).unwrap());
}

#[test]
fn sample_spread_matches_kernel_variance() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&["chart.kind=identity", "spec.n_csz=3", "spec.n_fsz=2", "spec.n_lvl=2", "spec.n0=12", "sample.count=1000", "kernel.amplitude=2.5"]);
    let rows = commands::sample(&c, 1, &dir.path().join("s.csv")).unwrap();
    let values: Vec<f64> = rows.iter().filter(|r| r.index == 17).map(|r| r.value).collect();
    assert_eq!(values.len(), 1000);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sigma = 2.5f64.sqrt();
    // standard error of a Gaussian sample std is sigma / sqrt(2 (n - 1))
    assert!((std - sigma).abs() <= 5.0 * sigma / (2.0 * (n - 1.0)).sqrt(), "{std} vs {sigma}");
}

#[test]
fn parallel_apply_is_bit_identical() {
    let k = Kernel::matern32(1.0).unwrap();
    let cases = [
        (RefinementSpec::auto_depth(1 << 16, 3, 2, 8).unwrap(), ChartSpec::from(Chart::Identity)),
        (RefinementSpec::new(13, 8, 5, 4).unwrap(), ChartSpec::LogExperiment { spacing_ratio: 50.0 }),
    ];
    for (spec, chart) in cases {
        let model = IcrModel::build(k, chart, &spec).unwrap();
        let xi = model.draw_latent(5);
        let seq = model.apply_sqrt(&xi).unwrap();
        for threads in [2, 3, 8] {
            let par = with_threads(threads, || par_apply_sqrt(&model, &xi)).unwrap().unwrap();
            assert_eq!(par, seq);
            assert_eq!(with_threads(threads, || apply_sqrt_threads(&model, &xi, threads)).unwrap().unwrap(), seq);
        }
    }
}

#[test]
fn compare_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    for method in [Method::Icr, Method::Kiss] {
        let r = commands::compare(&c, method, dir.path()).unwrap();
        assert_eq!(r.n, 36);
        let back: io::CompareReport = io::read_json(&dir.path().join(format!("compare_{method}.json"))).unwrap();
        assert_eq!(back, r);
        let truth = io::read_matrix(&dir.path().join("cov_true.csv")).unwrap();
        let approx = io::read_matrix(&dir.path().join(format!("cov_{method}.csv"))).unwrap();
        let delta = io::read_matrix(&dir.path().join(format!("delta_{method}.csv"))).unwrap();
        assert_eq!(truth.coords, approx.coords);
        assert_eq!(delta.values, (&approx.values - &truth.values).abs());
        let mae = delta.values.sum() / (36.0 * 36.0);
        assert!((mae - r.mae).abs() <= 1e-15);
    }
    let (_, k, _) = commands::approx_covariance(&c, Method::Icr).unwrap();
    let path = dir.path().join("cov.csv");
    commands::covariance(&c, Method::Icr, &path).unwrap();
    assert_eq!(io::read_matrix(&path).unwrap().values, k);
}

#[test]
fn base_only_compare_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&["spec.n_lvl=0", "spec.n0=64"]);
    let r = commands::compare(&c, Method::Icr, dir.path()).unwrap();
    assert!(r.mae <= 1e-6 && r.kl.unwrap() <= 1e-6);
}

#[test]
fn select_params_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sel.json");
    let one = commands::select_params(&cfg(&["select.candidates=5:2"]), &path).unwrap();
    assert_eq!(one.winner, (5, 2));
    let all = commands::select_params(&cfg(&[]), &path).unwrap();
    assert_eq!(io::read_json::<io::SelectionReport>(&path).unwrap(), all);
    let unreachable: Vec<_> = all.candidates.iter().filter(|c| !c.reachable).map(|c| (c.n_csz, c.n_fsz)).collect();
    assert_eq!(unreachable, [(3, 2), (3, 4), (5, 6)]);
    assert!(all.candidates.iter().all(|c| c.reachable == c.kl.is_some()));
    assert_eq!(all.winner, (5, 4));
}

#[test]
fn bench_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let c = cfg(&["chart.kind=identity", "spec.n_csz=3", "spec.n_fsz=2", "bench.sizes=1024,2048", "bench.reps=3", "kiss.padding=0"]);
    for method in [Method::Icr, Method::Kiss] {
        let rows = commands::bench(&c, method, 1, &path).unwrap();
        assert_eq!(io::read_bench(&path).unwrap(), rows);
        for r in &rows {
            let (lo, mid, hi) = (r.min_ms.unwrap(), r.median_ms.unwrap(), r.max_ms.unwrap());
            assert!(lo <= mid && mid <= hi);
            assert!(r.build_ms.unwrap() >= 0.0);
        }
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), [1024, 2048]);
    }
}

#[test]
fn bench_logs_skipped_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let c = cfg(&["bench.sizes=0,512", "bench.reps=3"]);
    let rows = commands::bench(&c, Method::Icr, 1, &path).unwrap();
    assert!(rows[0].median_ms.is_none() && rows[0].params.starts_with("skipped"));
    assert!(rows[1].median_ms.is_some());
    assert_eq!(io::read_bench(&path).unwrap(), rows);
}

#[test]
fn matrix_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let model = commands::build_model(&small()).unwrap();
    let rows = commands::dump_matrices(&model, &path).unwrap();
    assert_eq!(io::read_entries(&path).unwrap(), rows);
    // identity chart: every level is broadcast, 3x2 R plus 2x2 sqrtD per level
    assert_eq!(rows.len(), 2 * (6 + 4));
    assert!(rows.iter().all(|r| r.broadcast && r.window == 0));
    let m = model.level_matrices(1).window(0);
    let r01 = rows.iter().find(|r| r.level == 1 && r.matrix == "R" && r.row == 0 && r.col == 1).unwrap();
    assert_eq!(r01.value, m.r_matrix()[(0, 1)]);
}

fn icr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_icr")).args(args).env_remove("ICR_THREADS").output().unwrap()
}

#[test]
fn binary_reports_errors_on_one_line() {
    let out = icr(&["sample", "--set", "spec.nlvl=3"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("spec.nlvl") && err.contains("spec.n_lvl"));
}

#[test]
fn binary_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(&conf, "chart.kind = identity\nspec.n_csz = 3\nspec.n_fsz = 2\nspec.n_lvl = 2\nspec.n0 = 12\n").unwrap();
    let conf = conf.to_str().unwrap();
    let out_file = dir.path().join("s.csv");
    let out = icr(&["sample", "--config", conf, "--seed", "3", "--out", out_file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(io::read_samples(&out_file).unwrap().len(), 36);

    let out = icr(&["compare", "--config", conf, "--method", "kiss", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(Path::new(&dir.path().join("delta_kiss.csv")).exists());

    let out = icr(&["show-config", "--config", conf, "--set", "kiss.padding=0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("kiss.padding = 0") && text.contains("spec.n0 = 12"));
}
