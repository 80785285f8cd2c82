//! Subcommand drivers shared by the binary and the tests.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use icr_core::{
    compare_covariances, implicit_covariance, select_refinement_params, true_covariance, IcrModel,
    Matrix, RefinementSpec, SizePolicy,
};
use log::{info, warn};
use serde_json::json;

use crate::bench::{time_ms, time_reps};
use crate::config::ExperimentConfig;
use crate::io::{self, BenchRow, CandidateRow, CompareReport, MatrixEntry, SampleRow, SelectionReport};
use crate::kiss::{build_kiss, kiss_covariance, kiss_forward_pass, KissModel};
use crate::parallel::{apply_sqrt_threads, apply_sqrt_threads_with, with_threads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Icr,
    Kiss,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Icr => "icr",
            Method::Kiss => "kiss",
        })
    }
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<IcrModel> {
    Ok(IcrModel::build(cfg.kernel()?, cfg.chart()?, &cfg.spec()?)?)
}

/// Writes every level's refinement matrices as long-form CSV.
pub fn dump_matrices(model: &IcrModel, path: &Path) -> Result<Vec<MatrixEntry>> {
    let mut rows = Vec::new();
    for level in 1..=model.spec().n_lvl {
        let lm = model.level_matrices(level);
        let broadcast = lm.is_broadcast();
        let windows = if broadcast { 1 } else { lm.window_count() };
        for window in 0..windows {
            let m = lm.window(window);
            let (c, f) = (m.n_csz(), m.n_fsz());
            for (name, values, cols) in [("R", m.r(), c), ("sqrtD", m.sqrt_d(), f)] {
                for (k, &value) in values.iter().enumerate() {
                    let (row, col) = (k / cols, k % cols);
                    rows.push(MatrixEntry { level, window, broadcast, matrix: name.into(), row, col, value });
                }
            }
        }
    }
    io::write_entries(path, &rows)?;
    Ok(rows)
}

/// KISS model on the same output locations as the ICR model.
pub fn build_kiss_for(cfg: &ExperimentConfig, model: &IcrModel) -> Result<KissModel> {
    let x = model.modeled_coords();
    let m = cfg.kiss_m.unwrap_or(x.len());
    Ok(build_kiss(cfg.kernel()?, &x, m, cfg.kiss_padding, cfg.kiss_jitter())?)
}

fn icr_params(model: &IcrModel) -> serde_json::Value {
    let s = model.spec();
    json!({
        "n0": s.n0,
        "n_lvl": s.n_lvl,
        "n_csz": s.n_csz,
        "n_fsz": s.n_fsz,
        "keep": s.keep,
        "jitter": s.jitter,
        "chart": format!("{:?}", model.chart()),
        "kernel": format!("{:?}", model.kernel()),
    })
}

fn kiss_params(k: &KissModel) -> serde_json::Value {
    json!({
        "m": k.inducing_count(),
        "padding": k.padding(),
        "jitter": k.diag_jitter(),
        "clipped": k.clipped_count(),
    })
}

pub fn sample(cfg: &ExperimentConfig, threads: usize, out: &Path) -> Result<Vec<SampleRow>> {
    let model = build_model(cfg)?;
    let euclid = model.euclidean_coords();
    let modeled = model.modeled_coords();
    let mut rows = Vec::with_capacity(cfg.sample_count * model.size());
    for k in 0..cfg.sample_count as u64 {
        let xi = model.draw_latent(cfg.seed.wrapping_add(k));
        let s = with_threads(threads, || apply_sqrt_threads(&model, &xi, threads))??;
        rows.extend(s.iter().enumerate().map(|(i, &value)| SampleRow {
            index: i,
            euclidean_coord: euclid[i],
            modeled_coord: modeled[i],
            value,
        }));
    }
    io::write_samples(out, &rows)?;
    info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(rows)
}

/// Approximate covariance of `method` plus the model it was built on.
pub fn approx_covariance(cfg: &ExperimentConfig, method: Method) -> Result<(IcrModel, Matrix, serde_json::Value)> {
    let model = build_model(cfg)?;
    Ok(match method {
        Method::Icr => {
            let k = implicit_covariance(&model)?;
            let p = icr_params(&model);
            (model, k, p)
        }
        Method::Kiss => {
            let kiss = build_kiss_for(cfg, &model)?;
            (model, kiss_covariance(&kiss)?, kiss_params(&kiss))
        }
    })
}

pub fn covariance(cfg: &ExperimentConfig, method: Method, out: &Path) -> Result<Matrix> {
    let (model, k, _) = approx_covariance(cfg, method)?;
    io::write_matrix(out, &model.modeled_coords(), &k)?;
    Ok(k)
}

/// Writes `compare_<method>.json`, `cov_true.csv`, `cov_<method>.csv` and
/// `delta_<method>.csv` (absolute differences) into `dir`.
pub fn compare(cfg: &ExperimentConfig, method: Method, dir: &Path) -> Result<CompareReport> {
    let (model, approx, params) = approx_covariance(cfg, method)?;
    let truth = true_covariance(&model)?;
    let c = compare_covariances(&truth, &approx)?;
    let report = CompareReport {
        n: c.n,
        method: method.to_string(),
        mae: c.mae,
        max_abs_err: c.max_abs_err,
        max_diag_err: c.max_diag_err,
        kl: c.kl_true_from_approx.is_finite().then_some(c.kl_true_from_approx),
        params,
    };
    let x = model.modeled_coords();
    io::write_matrix(&dir.join("cov_true.csv"), &x, &truth)?;
    io::write_matrix(&dir.join(format!("cov_{method}.csv")), &x, &approx)?;
    io::write_matrix(&dir.join(format!("delta_{method}.csv")), &x, &(approx - &truth).abs())?;
    io::write_json(&dir.join(format!("compare_{method}.json")), &report)?;
    Ok(report)
}

pub fn select_params(cfg: &ExperimentConfig, out: &Path) -> Result<SelectionReport> {
    let n = match (cfg.n, cfg.n0) {
        (Some(n), _) => n,
        (None, Some(_)) => cfg.spec()?.modeled_size()?,
        (None, None) => anyhow::bail!("select-params needs spec.n"),
    };
    let sel = select_refinement_params(cfg.kernel()?, &cfg.chart()?, &cfg.candidates, n, cfg.n_lvl, cfg.policy)?;
    let report = SelectionReport {
        n,
        n_lvl: cfg.n_lvl,
        policy: match cfg.policy {
            SizePolicy::Exact => "exact".into(),
            SizePolicy::CropCentered => "crop".into(),
        },
        winner: sel.winner,
        candidates: sel
            .table
            .iter()
            .map(|r| CandidateRow {
                n_csz: r.n_csz,
                n_fsz: r.n_fsz,
                n0: r.spec.map(|s| s.n0),
                kl: r.kl().filter(|k| k.is_finite()),
                mae: r.comparison.map(|c| c.mae),
                reachable: r.reachable(),
            })
            .collect(),
    };
    io::write_json(out, &report)?;
    Ok(report)
}

/// ICR spec used by the benchmark for `n` points.
pub fn bench_spec(cfg: &ExperimentConfig, n: usize) -> Result<RefinementSpec> {
    let mut spec = RefinementSpec::auto_depth(n, cfg.n_csz, cfg.n_fsz, cfg.bench_min_base)?;
    spec.jitter = cfg.jitter;
    Ok(spec)
}

fn bench_one(cfg: &ExperimentConfig, method: Method, n: usize, threads: usize) -> Result<BenchRow> {
    let kernel = cfg.kernel()?;
    let spec = bench_spec(cfg, n)?;
    let chart = cfg.chart()?;
    let (model, build_ms) = time_ms(|| IcrModel::build(kernel, chart, &spec));
    let model = model?;
    Ok(match method {
        Method::Icr => {
            let xi = model.draw_latent(cfg.seed);
            let mut buffers = model.buffers();
            let t = with_threads(threads, || {
                time_reps(cfg.bench_reps, || apply_sqrt_threads_with(&model, &xi, threads, &mut buffers).map(|s| s[0]))
            })?;
            BenchRow {
                method: method.to_string(),
                n,
                params: format!("n0={} n_lvl={} n_csz={} n_fsz={}", spec.n0, spec.n_lvl, spec.n_csz, spec.n_fsz),
                build_ms: Some(build_ms),
                median_ms: Some(t.median_ms),
                min_ms: Some(t.min_ms),
                max_ms: Some(t.max_ms),
                threads,
            }
        }
        Method::Kiss => {
            let s = model.sample(cfg.seed);
            let (kiss, build_ms) = time_ms(|| build_kiss_for(cfg, &model));
            let kiss = kiss?;
            let t = with_threads(threads, || {
                time_reps(cfg.bench_reps, || {
                    kiss_forward_pass(&kiss, &s, cfg.cg_iters, cfg.probes, cfg.lanczos_iters, cfg.seed)
                })
            })?;
            BenchRow {
                method: method.to_string(),
                n,
                params: format!(
                    "m={} padding={} cg_iters={} probes={} lanczos_iters={}",
                    kiss.inducing_count(),
                    kiss.padding(),
                    cfg.cg_iters,
                    cfg.probes,
                    cfg.lanczos_iters
                ),
                build_ms: Some(build_ms),
                median_ms: Some(t.median_ms),
                min_ms: Some(t.min_ms),
                max_ms: Some(t.max_ms),
                threads,
            }
        }
    })
}

/// Times every size in `bench.sizes`. Sizes that fail to build are logged
/// and written with empty timings.
pub fn bench(cfg: &ExperimentConfig, method: Method, threads: usize, out: &Path) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(cfg.bench_sizes.len());
    for &n in &cfg.bench_sizes {
        match bench_one(cfg, method, n, threads) {
            Ok(row) => {
                info!("{method} n={n}: median {:.3} ms", row.median_ms.unwrap_or(f64::NAN));
                rows.push(row);
            }
            Err(e) => {
                warn!("{method} n={n} skipped: {e:#}");
                rows.push(BenchRow {
                    method: method.to_string(),
                    n,
                    params: format!("skipped: {e}"),
                    build_ms: None,
                    median_ms: None,
                    min_ms: None,
                    max_ms: None,
                    threads,
                });
            }
        }
    }
    io::write_bench(out, &rows).context("writing benchmark table")?;
    Ok(rows)
}
