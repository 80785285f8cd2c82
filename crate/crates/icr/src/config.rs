//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Later assignments
//! win, so `--set key=value` overrides are applied after the file.

use std::fmt;
use std::path::PathBuf;

use icr_core::{Chart, ChartSpec, Kernel, KernelFamily, RefinementSpec, SizePolicy, PRESETS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`; valid keys: {}", KEYS.join(", "))]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error(transparent)]
    Core(#[from] icr_core::Error),
}

pub const KEYS: &[&str] = &[
    "kernel.family",
    "kernel.rho",
    "kernel.amplitude",
    "chart",
    "chart.kind",
    "chart.family",
    "chart.scale",
    "chart.offset",
    "chart.r0",
    "chart.a",
    "chart.spacing_ratio",
    "spec.n_csz",
    "spec.n_fsz",
    "spec.n_lvl",
    "spec.n",
    "spec.n0",
    "spec.policy",
    "spec.jitter",
    "select.candidates",
    "kiss.m",
    "kiss.padding",
    "kiss.jitter",
    "kiss.cg_iters",
    "kiss.probes",
    "kiss.lanczos_iters",
    "bench.sizes",
    "bench.reps",
    "bench.threads",
    "bench.min_base",
    "sample.count",
    "seed",
    "output",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Identity,
    Affine,
    Log,
    LogExperiment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel_family: KernelFamily,
    pub rho: f64,
    pub amplitude: f64,
    pub chart_kind: ChartKind,
    pub chart_scale: f64,
    pub chart_offset: f64,
    pub chart_r0: f64,
    pub chart_a: f64,
    pub spacing_ratio: f64,
    pub n_csz: usize,
    pub n_fsz: usize,
    pub n_lvl: usize,
    /// Final size; the base size is solved for when `n0` is unset.
    pub n: Option<usize>,
    pub n0: Option<usize>,
    pub policy: SizePolicy,
    pub jitter: Option<f64>,
    pub candidates: Vec<(usize, usize)>,
    /// `None` means one inducing point per data point.
    pub kiss_m: Option<usize>,
    pub kiss_padding: f64,
    /// Defaults to `1e-6 * amplitude`.
    pub kiss_jitter: Option<f64>,
    pub cg_iters: usize,
    pub probes: usize,
    pub lanczos_iters: usize,
    pub bench_sizes: Vec<usize>,
    pub bench_reps: usize,
    pub bench_threads: Option<usize>,
    pub bench_min_base: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// The log-spaced Matern-3/2 accuracy experiment at `N = 200`.
    fn default() -> Self {
        Self {
            kernel_family: KernelFamily::Matern32,
            rho: 1.0,
            amplitude: 1.0,
            chart_kind: ChartKind::LogExperiment,
            chart_scale: 1.0,
            chart_offset: 0.0,
            chart_r0: 1.0,
            chart_a: 1.0,
            spacing_ratio: 50.0,
            n_csz: 5,
            n_fsz: 4,
            n_lvl: 5,
            n: Some(200),
            n0: None,
            policy: SizePolicy::Exact,
            jitter: None,
            candidates: PRESETS.to_vec(),
            kiss_m: None,
            kiss_padding: 0.5,
            kiss_jitter: None,
            cg_iters: 40,
            probes: 10,
            lanczos_iters: 15,
            bench_sizes: (14..=19).map(|p| 1 << p).collect(),
            bench_reps: 5,
            bench_threads: None,
            bench_min_base: 8,
            sample_count: 1,
            seed: 0,
            output: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.into() }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

impl ExperimentConfig {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "kernel.family" => {
                self.kernel_family = match value {
                    "matern32" => KernelFamily::Matern32,
                    "rbf" => KernelFamily::Rbf,
                    _ => return Err(bad(key, value, "expected matern32 or rbf")),
                }
            }
            "kernel.rho" => self.rho = parse(key, value)?,
            "kernel.amplitude" => self.amplitude = parse(key, value)?,
            "chart" | "chart.kind" | "chart.family" => {
                self.chart_kind = match value {
                    "identity" => ChartKind::Identity,
                    "affine" => ChartKind::Affine,
                    "log" | "log_spaced" => ChartKind::Log,
                    "log_experiment" | "log-experiment" => ChartKind::LogExperiment,
                    _ => return Err(bad(key, value, "expected identity, affine, log or log_experiment")),
                }
            }
            "chart.scale" => self.chart_scale = parse(key, value)?,
            "chart.offset" => self.chart_offset = parse(key, value)?,
            "chart.r0" => self.chart_r0 = parse(key, value)?,
            "chart.a" => self.chart_a = parse(key, value)?,
            "chart.spacing_ratio" => self.spacing_ratio = parse(key, value)?,
            "spec.n_csz" => self.n_csz = parse(key, value)?,
            "spec.n_fsz" => self.n_fsz = parse(key, value)?,
            "spec.n_lvl" => self.n_lvl = parse(key, value)?,
            "spec.n" => {
                self.n = Some(parse(key, value)?);
                self.n0 = None;
            }
            "spec.n0" => {
                self.n0 = Some(parse(key, value)?);
                self.n = None;
            }
            "spec.policy" => {
                self.policy = match value {
                    "exact" => SizePolicy::Exact,
                    "crop" => SizePolicy::CropCentered,
                    _ => return Err(bad(key, value, "expected exact or crop")),
                }
            }
            "spec.jitter" => self.jitter = Some(parse(key, value)?),
            "select.candidates" => {
                self.candidates = value
                    .split(',')
                    .map(|pair| {
                        let (c, f) = pair.trim().split_once(':').ok_or_else(|| bad(key, value, "expected c:f pairs"))?;
                        Ok((parse(key, c)?, parse(key, f)?))
                    })
                    .collect::<Result<_, ConfigError>>()?
            }
            "kiss.m" => self.kiss_m = Some(parse(key, value)?),
            "kiss.padding" => self.kiss_padding = parse(key, value)?,
            "kiss.jitter" => self.kiss_jitter = Some(parse(key, value)?),
            "kiss.cg_iters" => self.cg_iters = parse(key, value)?,
            "kiss.probes" => self.probes = parse(key, value)?,
            "kiss.lanczos_iters" => self.lanczos_iters = parse(key, value)?,
            "bench.sizes" => self.bench_sizes = parse_list(key, value)?,
            "bench.reps" => {
                self.bench_reps = parse(key, value)?;
                if self.bench_reps < 3 {
                    return Err(bad(key, value, "need at least 3 repetitions"));
                }
            }
            "bench.threads" => self.bench_threads = Some(parse(key, value)?),
            "bench.min_base" => self.bench_min_base = parse(key, value)?,
            "sample.count" => self.sample_count = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Parses `key=value` as given to `--set`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, text: assignment.into() })?;
        self.set(k.trim(), v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.into() })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Inverse of [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("kernel.family", match self.kernel_family {
            KernelFamily::Matern32 => "matern32".into(),
            KernelFamily::Rbf => "rbf".into(),
        });
        line("kernel.rho", self.rho.to_string());
        line("kernel.amplitude", self.amplitude.to_string());
        line("chart.kind", match self.chart_kind {
            ChartKind::Identity => "identity",
            ChartKind::Affine => "affine",
            ChartKind::Log => "log",
            ChartKind::LogExperiment => "log_experiment",
        }
        .into());
        line("chart.scale", self.chart_scale.to_string());
        line("chart.offset", self.chart_offset.to_string());
        line("chart.r0", self.chart_r0.to_string());
        line("chart.a", self.chart_a.to_string());
        line("chart.spacing_ratio", self.spacing_ratio.to_string());
        line("spec.n_csz", self.n_csz.to_string());
        line("spec.n_fsz", self.n_fsz.to_string());
        line("spec.n_lvl", self.n_lvl.to_string());
        if let Some(n) = self.n {
            line("spec.n", n.to_string());
        }
        if let Some(n0) = self.n0 {
            line("spec.n0", n0.to_string());
        }
        line("spec.policy", match self.policy {
            SizePolicy::Exact => "exact".into(),
            SizePolicy::CropCentered => "crop".into(),
        });
        if let Some(j) = self.jitter {
            line("spec.jitter", j.to_string());
        }
        let cands: Vec<String> = self.candidates.iter().map(|(c, f)| format!("{c}:{f}")).collect();
        line("select.candidates", cands.join(","));
        if let Some(m) = self.kiss_m {
            line("kiss.m", m.to_string());
        }
        line("kiss.padding", self.kiss_padding.to_string());
        if let Some(j) = self.kiss_jitter {
            line("kiss.jitter", j.to_string());
        }
        line("kiss.cg_iters", self.cg_iters.to_string());
        line("kiss.probes", self.probes.to_string());
        line("kiss.lanczos_iters", self.lanczos_iters.to_string());
        let sizes: Vec<String> = self.bench_sizes.iter().map(ToString::to_string).collect();
        line("bench.sizes", sizes.join(","));
        line("bench.reps", self.bench_reps.to_string());
        if let Some(t) = self.bench_threads {
            line("bench.threads", t.to_string());
        }
        line("bench.min_base", self.bench_min_base.to_string());
        line("sample.count", self.sample_count.to_string());
        line("seed", self.seed.to_string());
        if let Some(o) = &self.output {
            line("output", o.display().to_string());
        }
        out
    }

    pub fn kernel(&self) -> Result<Kernel, ConfigError> {
        Ok(Kernel::new(self.kernel_family, self.rho, self.amplitude)?)
    }

    pub fn chart(&self) -> Result<ChartSpec, ConfigError> {
        Ok(match self.chart_kind {
            ChartKind::Identity => Chart::Identity.into(),
            ChartKind::Affine => Chart::affine(self.chart_scale, self.chart_offset)?.into(),
            ChartKind::Log => Chart::log_spaced(self.chart_r0, self.chart_a)?.into(),
            ChartKind::LogExperiment => ChartSpec::LogExperiment { spacing_ratio: self.spacing_ratio },
        })
    }

    /// Refinement spec for the configured base or final size.
    pub fn spec(&self) -> Result<RefinementSpec, ConfigError> {
        let mut spec = match (self.n0, self.n) {
            (Some(n0), _) => RefinementSpec::new(n0, self.n_lvl, self.n_csz, self.n_fsz)?,
            (None, Some(n)) => RefinementSpec::for_target(n, self.n_lvl, self.n_csz, self.n_fsz, self.policy)?,
            (None, None) => return Err(bad("spec.n", "", "set spec.n or spec.n0")),
        };
        spec.jitter = self.jitter;
        spec.validate()?;
        Ok(spec)
    }

    pub fn kiss_jitter(&self) -> f64 {
        self.kiss_jitter.unwrap_or(1e-6 * self.amplitude)
    }
}

/// Thread count: explicit flag, then `ICR_THREADS`, then `bench.threads`,
/// then 1.
pub fn resolve_threads(flag: Option<usize>, config: &ExperimentConfig) -> usize {
    flag.or_else(|| std::env::var("ICR_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .or(config.bench_threads)
        .unwrap_or(1)
        .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reach_two_hundred() {
        let c = ExperimentConfig::default();
        assert_eq!(c.spec().unwrap().n0, 13);
        assert_eq!(c.kiss_jitter(), 1e-6);
    }

    #[test]
    fn text_and_overrides() {
        let mut c = ExperimentConfig::from_text("# comment\n\nspec.n_lvl = 2\nchart.kind=identity\nspec.n0 = 12\n").unwrap();
        c.apply_override("spec.n_csz=3").unwrap();
        c.apply_override("spec.n_fsz = 2").unwrap();
        assert_eq!(c.spec().unwrap().modeled_size().unwrap(), 36);
        assert_eq!(c.chart().unwrap(), ChartSpec::Fixed(Chart::Identity));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = ExperimentConfig::from_text("spec.nlvl = 2").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("spec.nlvl") && msg.contains("spec.n_lvl") && msg.contains("kiss.padding"));
    }

    #[test]
    fn bad_values() {
        let mut c = ExperimentConfig::default();
        assert!(c.set("kernel.rho", "abc").is_err());
        assert!(c.set("bench.reps", "2").is_err());
        assert!(c.set("chart.kind", "polar").is_err());
    }

    #[test]
    fn chart_aliases() {
        let mut c = ExperimentConfig::default();
        c.set("chart.family", "identity").unwrap();
        assert_eq!(c.chart_kind, ChartKind::Identity);
        c.set("chart", "log-experiment").unwrap();
        assert_eq!(c.chart_kind, ChartKind::LogExperiment);
        assert!(matches!(ExperimentConfig::from_text("no equals sign"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.apply_override("select.candidates=3:2,5:4").unwrap();
        c.apply_override("bench.sizes=1024,2048").unwrap();
        c.apply_override("kiss.jitter=1e-4").unwrap();
        c.apply_override("output=out/x.csv").unwrap();
        assert_eq!(ExperimentConfig::from_text(&c.to_text()).unwrap(), c);
    }
}
