//! Coordinate charts and the Euclidean grid hierarchy.
//!
//! Refinement always happens on regular Euclidean grids. Level 0 holds the
//! coordinates `0, 1, ..., N0 - 1`. Every refinement window of `n_csz`
//! consecutive coarse pixels emits `n_fsz` fine pixels, each half as wide as a
//! coarse pixel, centred on the window's middle pixel. Windows advance by
//! `n_fsz / 2` coarse pixels so the fine pixels tile the line without gaps or
//! overlap and every level stays regular. For `(3, 2)` this is the familiar
//! split of each interior pixel into two halves at `c +- w/4`.
//!
//! A [`Chart`] maps grid coordinates to modelled locations; the kernel is
//! always evaluated on charted locations.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::refine::RefinementSpec;

/// Strictly monotone map from Euclidean grid coordinates to modelled
/// locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chart {
    Identity,
    /// `x -> scale * x + offset`
    Affine { scale: f64, offset: f64 },
    /// `x -> r0 * exp(a * x)`
    LogSpaced { r0: f64, a: f64 },
}

impl Chart {
    pub fn affine(scale: f64, offset: f64) -> Result<Self> {
        if !(scale.is_finite() && scale != 0.0 && offset.is_finite()) {
            return Err(Error::Input(format!("invalid affine chart ({scale}, {offset})")));
        }
        Ok(Chart::Affine { scale, offset })
    }

    pub fn log_spaced(r0: f64, a: f64) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0 && a.is_finite() && a > 0.0) {
            return Err(Error::Input(format!("invalid log chart (r0 = {r0}, a = {a})")));
        }
        Ok(Chart::LogSpaced { r0, a })
    }

    #[inline]
    pub fn map(&self, x: f64) -> f64 {
        match *self {
            Chart::Identity => x,
            Chart::Affine { scale, offset } => scale * x + offset,
            Chart::LogSpaced { r0, a } => r0 * libm::exp(a * x),
        }
    }

    pub fn try_map(&self, x: f64) -> Result<f64> {
        let y = self.map(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Numeric(format!("chart {self:?} overflows at {x}")))
        }
    }

    pub fn map_all(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.try_map(x)).collect()
    }
}

/// Either a concrete chart or a rule that derives one from the modelled grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartSpec {
    Fixed(Chart),
    /// Log chart whose nearest-neighbour distances on the modelled points run
    /// from `rho / spacing_ratio` up to `rho` (the kernel length scale).
    LogExperiment { spacing_ratio: f64 },
}

impl From<Chart> for ChartSpec {
    fn from(c: Chart) -> Self {
        ChartSpec::Fixed(c)
    }
}

impl ChartSpec {
    pub fn resolve(&self, modeled: &[f64], rho: f64) -> Result<Chart> {
        match *self {
            ChartSpec::Fixed(c) => Ok(c),
            ChartSpec::LogExperiment { spacing_ratio } => {
                log_chart_for_experiment(modeled, spacing_ratio, rho)
            }
        }
    }
}

/// The kernel composed with a chart: `(x, x') -> k(|phi(x) - phi(x')|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartedKernel {
    pub kernel: Kernel,
    pub chart: Chart,
}

pub fn charted_kernel(kernel: Kernel, chart: Chart) -> ChartedKernel {
    ChartedKernel { kernel, chart }
}

impl ChartedKernel {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let a = self.chart.try_map(x)?;
        let b = self.chart.try_map(y)?;
        Ok(self.kernel.at(a - b))
    }
}

/// Log chart for a set of increasing grid coordinates such that the
/// consecutive distances of the mapped points span `[rho / ratio, rho]`.
///
/// With a single gap the ratio cannot be realised; the chart is then only
/// scaled so that the gap equals `rho`.
pub fn log_chart_for_experiment(coords: &[f64], spacing_ratio: f64, rho: f64) -> Result<Chart> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::Input(format!("need at least two points, got {n}")));
    }
    if !(spacing_ratio.is_finite() && spacing_ratio > 1.0) {
        return Err(Error::Input(format!("spacing ratio must exceed 1, got {spacing_ratio}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Input(format!("length scale must be positive, got {rho}")));
    }
    if coords.windows(2).any(|w| !(w[1] > w[0])) || !coords.iter().all(|c| c.is_finite()) {
        return Err(Error::Input("grid coordinates must be finite and strictly increasing".into()));
    }
    let first = coords[0];
    let last = coords[n - 1];

    // Gap ratio of x -> exp(a x); shifted so the exponentials stay <= 1.
    let ratio_at = |a: f64| {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for w in coords.windows(2) {
            let g = libm::exp(a * (w[1] - last)) - libm::exp(a * (w[0] - last));
            lo = lo.min(g);
            hi = hi.max(g);
        }
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    };

    let a = if n == 2 {
        libm::log(spacing_ratio) / (last - first)
    } else {
        let h_max = coords.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        let h_min = coords.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if h_max / h_min >= spacing_ratio {
            return Err(Error::Input(
                "grid spacing is already more uneven than the requested ratio".into(),
            ));
        }
        let mut lo = 0.0;
        let mut hi = libm::log(spacing_ratio) / (last - first);
        while ratio_at(hi) < spacing_ratio {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numeric("log chart exponent diverged".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ratio_at(mid) < spacing_ratio {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let max_gap_shifted = coords
        .windows(2)
        .map(|w| libm::exp(a * (w[1] - last)) - libm::exp(a * (w[0] - last)))
        .fold(0.0f64, f64::max);
    // r0 exp(a x) = (rho / max_gap_shifted) exp(a (x - last))
    let r0 = rho / max_gap_shifted * libm::exp(-a * last);
    Chart::log_spaced(r0, a).map_err(|_| Error::Numeric(format!("log chart (r0 = {r0}, a = {a}) is not representable")))
}

/// Euclidean coordinates of every level of a refinement hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    levels: Vec<Vec<f64>>,
    widths: Vec<f64>,
    n_csz: usize,
    n_fsz: usize,
    modeled: Range<usize>,
}

impl GridHierarchy {
    /// Number of refinement levels (`n_lvl`).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn coords(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn size(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn pixel_width(&self, level: usize) -> f64 {
        self.widths[level]
    }

    pub fn n_csz(&self) -> usize {
        self.n_csz
    }

    pub fn n_fsz(&self) -> usize {
        self.n_fsz
    }

    /// Coarse pixels between the starts of consecutive windows.
    pub fn stride(&self) -> usize {
        self.n_fsz / 2
    }

    /// Refinement windows producing level `level` (`>= 1`).
    pub fn window_count(&self, level: usize) -> usize {
        self.levels[level].len() / self.n_fsz
    }

    /// Coarse coordinates (level `level - 1`) read by window `i`.
    pub fn coarse_window(&self, level: usize, i: usize) -> &[f64] {
        let start = i * self.stride();
        &self.levels[level - 1][start..start + self.n_csz]
    }

    /// Fine coordinates (level `level`) written by window `i`.
    pub fn fine_window(&self, level: usize, i: usize) -> &[f64] {
        &self.levels[level][i * self.n_fsz..(i + 1) * self.n_fsz]
    }

    pub fn final_coords(&self) -> &[f64] {
        self.levels.last().expect("hierarchy has a base level")
    }

    /// Indices of the final level that are reported as modelled points.
    pub fn modeled_range(&self) -> Range<usize> {
        self.modeled.clone()
    }

    pub fn modeled_coords(&self) -> &[f64] {
        &self.final_coords()[self.modeled.clone()]
    }
}

pub fn build_hierarchy(spec: &RefinementSpec) -> Result<GridHierarchy> {
    let sizes = spec.level_sizes()?;
    let (n_csz, n_fsz) = (spec.n_csz, spec.n_fsz);
    let stride = n_fsz / 2;
    let half = (n_csz - 1) / 2;

    let mut levels = Vec::with_capacity(spec.n_lvl + 1);
    let mut widths = Vec::with_capacity(spec.n_lvl + 1);
    levels.push((0..spec.n0).map(|i| i as f64).collect::<Vec<_>>());
    widths.push(1.0);

    for level in 1..=spec.n_lvl {
        let coarse = &levels[level - 1];
        let width = widths[level - 1] * 0.5;
        let windows = sizes[level] / n_fsz;
        let centre = (n_fsz as f64 - 1.0) * 0.5;
        let mut fine = Vec::with_capacity(sizes[level]);
        for i in 0..windows {
            let c = coarse[i * stride + half];
            fine.extend((0..n_fsz).map(|j| c + width * (j as f64 - centre)));
        }
        levels.push(fine);
        widths.push(width);
    }

    let n_final = sizes[spec.n_lvl];
    let keep = spec.keep.unwrap_or(n_final);
    let start = (n_final - keep) / 2;
    Ok(GridHierarchy {
        levels,
        widths,
        n_csz,
        n_fsz,
        modeled: start..start + keep,
    })
}
