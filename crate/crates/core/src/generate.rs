//! The generative ICR model: `s = sqrt(K_ICR) xi` for standard-normal `xi`.
//!
//! # Latent layout and random draws
//!
//! A latent vector is one flat buffer: the `N0` base excitations first, then
//! one block per refinement level in ascending order, each block holding its
//! windows in ascending order with the `n_fsz` fine excitations of a window
//! contiguous. [`IcrModel::sample`] fills this buffer in order from a
//! `ChaCha8Rng` seeded with `seed_from_u64(seed)`, using the ziggurat
//! `StandardNormal` sampler of `rand_distr`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::charts::{build_hierarchy, charted_kernel, Chart, ChartSpec, GridHierarchy};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::refine::{matrices_for_level, LevelMatrices, RefinementSpec};
use crate::Matrix;

/// Block boundaries of a latent vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentLayout {
    offsets: Vec<usize>,
}

impl LatentLayout {
    pub fn new(n0: usize, windows_per_level: &[usize], n_fsz: usize) -> Self {
        let mut offsets = vec![0, n0];
        for w in windows_per_level {
            offsets.push(offsets[offsets.len() - 1] + w * n_fsz);
        }
        Self { offsets }
    }

    /// Total number of latent scalars.
    pub fn len(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of block `block` (0 is the base, `l >= 1` are levels).
    pub fn block(&self, block: usize) -> core::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }
}

/// Standard-normal excitations consumed by [`IcrModel::apply_sqrt`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    values: Vec<f64>,
    layout: LatentLayout,
}

impl LatentVector {
    pub fn zeros(layout: &LatentLayout) -> Self {
        Self { values: vec![0.0; layout.len()], layout: layout.clone() }
    }

    pub fn from_vec(layout: &LatentLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape { expected: layout.len(), got: values.len() });
        }
        Ok(Self { values, layout: layout.clone() })
    }

    /// Unit vector along latent coordinate `k`.
    pub fn basis(layout: &LatentLayout, k: usize) -> Self {
        let mut v = Self::zeros(layout);
        v.values[k] = 1.0;
        v
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn base(&self) -> &[f64] {
        &self.values[self.layout.block(0)]
    }

    /// Excitations of refinement level `level >= 1`.
    pub fn level(&self, level: usize) -> &[f64] {
        &self.values[self.layout.block(level)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }
}

/// Two level-sized buffers reused across applications.
#[derive(Debug, Clone, Default)]
pub struct ApplyBuffers {
    pub current: Vec<f64>,
    pub next: Vec<f64>,
}

/// Everything needed to apply `sqrt(K_ICR)`; immutable once built.
#[derive(Debug, Clone)]
pub struct IcrModel {
    kernel: Kernel,
    chart: Chart,
    spec: RefinementSpec,
    hierarchy: GridHierarchy,
    levels: Vec<LevelMatrices>,
    sqrt_k0: Matrix,
    layout: LatentLayout,
}

impl IcrModel {
    /// Builds the hierarchy, all refinement matrices and the base factor.
    ///
    /// The base factor is `V sqrt(max(L, 0))` from the symmetric
    /// eigendecomposition of the base Gram matrix.
    pub fn build(kernel: Kernel, chart: ChartSpec, spec: &RefinementSpec) -> Result<Self> {
        let hierarchy = build_hierarchy(spec)?;
        let chart = chart.resolve(hierarchy.modeled_coords(), kernel.rho())?;
        let ck = charted_kernel(kernel, chart);
        let jitter = spec.jitter_for(&kernel);

        let base = chart.map_all(hierarchy.coords(0))?;
        let gram = kernel.gram(&base, &base)?;
        let trace = gram.trace();
        let eig = gram.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-8 * trace {
            return Err(Error::KernelValidity { min_eigenvalue: min, trace });
        }
        let mut sqrt_k0 = eig.eigenvectors;
        for (mut col, &lambda) in sqrt_k0.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= libm::sqrt(lambda.max(0.0));
        }

        let levels = (1..=spec.n_lvl)
            .map(|l| matrices_for_level(&ck, &hierarchy, l, jitter))
            .collect::<Result<Vec<_>>>()?;
        let windows: Vec<usize> = levels.iter().map(LevelMatrices::window_count).collect();
        let layout = LatentLayout::new(spec.n0, &windows, spec.n_fsz);
        let mut spec = *spec;
        spec.jitter = Some(jitter);

        Ok(Self { kernel, chart, spec, hierarchy, levels, sqrt_k0, layout })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// The resolved chart.
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn spec(&self) -> &RefinementSpec {
        &self.spec
    }

    pub fn hierarchy(&self) -> &GridHierarchy {
        &self.hierarchy
    }

    /// Matrices of refinement level `level >= 1`.
    pub fn level_matrices(&self, level: usize) -> &LevelMatrices {
        &self.levels[level - 1]
    }

    pub fn base_factor(&self) -> &Matrix {
        &self.sqrt_k0
    }

    pub fn latent_layout(&self) -> &LatentLayout {
        &self.layout
    }

    /// Number of modelled points `N`.
    pub fn size(&self) -> usize {
        self.hierarchy.modeled_range().len()
    }

    pub fn latent_len(&self) -> usize {
        self.layout.len()
    }

    pub fn euclidean_coords(&self) -> &[f64] {
        self.hierarchy.modeled_coords()
    }

    pub fn modeled_coords(&self) -> Vec<f64> {
        self.hierarchy.modeled_coords().iter().map(|&x| self.chart.map(x)).collect()
    }

    fn check_latent(&self, xi: &LatentVector) -> Result<()> {
        if xi.layout != self.layout {
            return Err(Error::Shape { expected: self.layout.len(), got: xi.len() });
        }
        Ok(())
    }

    /// `sqrt(K0) xi0`
    pub fn apply_base(&self, xi0: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.n0];
        self.apply_base_into(xi0, &mut out);
        out
    }

    pub fn apply_base_into(&self, xi0: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &x) in xi0.iter().enumerate() {
            if x != 0.0 {
                for (o, v) in out.iter_mut().zip(self.sqrt_k0.column(j).iter()) {
                    *o += v * x;
                }
            }
        }
    }

    /// Scratch space for [`apply_sqrt_with`](Self::apply_sqrt_with).
    pub fn buffers(&self) -> ApplyBuffers {
        let max = self.hierarchy.sizes().into_iter().max().unwrap_or(0);
        ApplyBuffers { current: Vec::with_capacity(max), next: Vec::with_capacity(max) }
    }

    /// Runs windows `first_window ..` of level `level` on the previous
    /// level's values, writing `n_fsz` outputs per window into `out`.
    ///
    /// Windows are independent, so disjoint chunks of a level may be
    /// computed in any order or in parallel with identical results.
    #[inline]
    pub fn refine_windows(
        &self,
        level: usize,
        coarse: &[f64],
        xi_level: &[f64],
        out: &mut [f64],
        first_window: usize,
    ) {
        let (n_csz, n_fsz) = (self.spec.n_csz, self.spec.n_fsz);
        let stride = self.spec.stride();
        let lm = &self.levels[level - 1];
        let xi = &xi_level[first_window * n_fsz..];
        for (w, (o, x)) in out.chunks_exact_mut(n_fsz).zip(xi.chunks_exact(n_fsz)).enumerate() {
            let i = first_window + w;
            let start = i * stride;
            lm.window(i).apply(&coarse[start..start + n_csz], x, o);
        }
    }

    /// Values on every level of the full (uncropped) hierarchy.
    pub fn apply_sqrt_levels(&self, xi: &LatentVector) -> Result<Vec<Vec<f64>>> {
        self.check_latent(xi)?;
        let mut out = Vec::with_capacity(self.spec.n_lvl + 1);
        out.push(self.apply_base(xi.base()));
        for level in 1..=self.spec.n_lvl {
            let mut fine = vec![0.0; self.hierarchy.size(level)];
            self.refine_windows(level, &out[level - 1], xi.level(level), &mut fine, 0);
            out.push(fine);
        }
        Ok(out)
    }

    /// Applies `sqrt(K_ICR)`; linear in `xi`.
    pub fn apply_sqrt(&self, xi: &LatentVector) -> Result<Vec<f64>> {
        let mut buffers = self.buffers();
        Ok(self.apply_sqrt_with(xi, &mut buffers)?.to_vec())
    }

    /// [`apply_sqrt`](Self::apply_sqrt) without allocating once `buffers`
    /// have grown to this model's largest level.
    pub fn apply_sqrt_with<'a>(&self, xi: &LatentVector, buffers: &'a mut ApplyBuffers) -> Result<&'a [f64]> {
        self.check_latent(xi)?;
        let ApplyBuffers { current, next } = buffers;
        current.resize(self.spec.n0, 0.0);
        self.apply_base_into(xi.base(), current);
        for level in 1..=self.spec.n_lvl {
            // every element is overwritten by exactly one window
            next.resize(self.hierarchy.size(level), 0.0);
            self.refine_windows(level, current, xi.level(level), next, 0);
            core::mem::swap(current, next);
        }
        Ok(&buffers.current[self.hierarchy.modeled_range()])
    }

    /// Exact transpose of [`apply_sqrt`](Self::apply_sqrt).
    pub fn apply_sqrt_adjoint(&self, cotangent: &[f64]) -> Result<LatentVector> {
        if cotangent.len() != self.size() {
            return Err(Error::Shape { expected: self.size(), got: cotangent.len() });
        }
        let (n_csz, n_fsz) = (self.spec.n_csz, self.spec.n_fsz);
        let stride = self.spec.stride();
        let mut xi = LatentVector::zeros(&self.layout);

        let mut g = vec![0.0; self.hierarchy.size(self.spec.n_lvl)];
        g[self.hierarchy.modeled_range()].copy_from_slice(cotangent);
        for level in (1..=self.spec.n_lvl).rev() {
            let lm = &self.levels[level - 1];
            let mut coarse_grad = vec![0.0; self.hierarchy.size(level - 1)];
            let block = self.layout.block(level);
            let xi_level = &mut xi.values[block];
            for (i, (gw, xw)) in g.chunks_exact(n_fsz).zip(xi_level.chunks_exact_mut(n_fsz)).enumerate() {
                let start = i * stride;
                lm.window(i).apply_adjoint(gw, &mut coarse_grad[start..start + n_csz], xw);
            }
            g = coarse_grad;
        }
        let base = self.sqrt_k0.transpose() * nalgebra::DVector::from_column_slice(&g);
        xi.values[self.layout.block(0)].copy_from_slice(base.as_slice());
        Ok(xi)
    }

    /// Standard-normal latent vector for `seed` in the documented layout order.
    pub fn draw_latent(&self, seed: u64) -> LatentVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..self.layout.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        LatentVector { values, layout: self.layout.clone() }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.apply_sqrt(&self.draw_latent(seed)).expect("latent drawn for this model")
    }

    /// `log p(y | s(xi)) - (M log(2 pi) + |xi|^2) / 2` with `M` latent scalars.
    pub fn standardized_log_prob(
        &self,
        xi: &LatentVector,
        log_likelihood: impl FnOnce(&[f64]) -> f64,
    ) -> Result<f64> {
        let s = self.apply_sqrt(xi)?;
        let ll = log_likelihood(&s);
        if !ll.is_finite() {
            return Err(Error::Evaluation(format!("log-likelihood is {ll}")));
        }
        let m = xi.len() as f64;
        Ok(ll - 0.5 * (m * libm::log(2.0 * core::f64::consts::PI) + xi.norm_squared()))
    }
}

/// `Phi(x)`
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Probabilities are clamped to `[EPS, 1 - EPS]` so quantile functions never
/// see 0 or 1.
const CDF_EPS: f64 = 1e-15;

/// Maps a standard-normal latent onto a target distribution via its
/// quantile function: `q(Phi(xi))`, with `Phi(xi)` clamped to
/// `[1e-15, 1 - 1e-15]`.
pub fn inverse_transform(xi_theta: f64, target_cdf_inverse: impl FnOnce(f64) -> f64) -> f64 {
    let p = standard_normal_cdf(xi_theta).clamp(CDF_EPS, 1.0 - CDF_EPS);
    target_cdf_inverse(p)
}

/// Multiply-add count of one application of `sqrt(K_ICR)`.
///
/// For `(3, 2)` this is `3 N0 + 6 W1 + 6 W2 + ...` with `W_l` the windows of
/// level `l`, which counts the base with three operations per pixel and only
/// the 2x3 filter per window. Other shapes count `n_csz` per base pixel and
/// `n_fsz (n_csz + n_fsz)` per window, i.e. the filter plus a dense
/// correction block.
pub fn predicted_cost(spec: &RefinementSpec) -> Result<u64> {
    let sizes = spec.level_sizes()?;
    let (c, f) = (spec.n_csz as u64, spec.n_fsz as u64);
    let per_window = if (c, f) == (3, 2) { 6 } else { f * (c + f) };
    let windows: u64 = sizes.iter().skip(1).map(|&n| n as u64 / f).sum();
    Ok(c * spec.n0 as u64 + per_window * windows)
}
