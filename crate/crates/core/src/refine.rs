//! Refinement matrices: the conditional mean filter `R = K_fc K_cc^-1` and the
//! Cholesky factor of the conditional covariance `D = K_ff - K_fc K_cc^-1 K_cf`
//! for one window of coarse pixels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::charts::{ChartedKernel, GridHierarchy};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{cholesky_with, symmetrize};
use crate::Matrix;

/// Named `(n_csz, n_fsz)` shapes.
pub const PRESETS: [(usize, usize); 5] = [(3, 2), (3, 4), (5, 2), (5, 4), (5, 6)];

/// How to handle a requested final size the recurrence cannot hit exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizePolicy {
    /// Fail, reporting the nearest achievable sizes.
    #[default]
    Exact,
    /// Refine the smallest hierarchy that is large enough and keep the
    /// centred run of final pixels. Dropping outputs of a Gaussian model
    /// yields its marginal, so the kept points are still modelled exactly
    /// as in the larger hierarchy.
    CropCentered,
}

/// Shape of a refinement hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSpec {
    /// Pixels on the base grid.
    pub n0: usize,
    /// Number of refinement steps.
    pub n_lvl: usize,
    /// Coarse pixels per window (odd, >= 3).
    pub n_csz: usize,
    /// Fine pixels per window (even, >= 2).
    pub n_fsz: usize,
    /// Diagonal added to `D` before factorizing; `None` means
    /// `1e-12 * amplitude`.
    pub jitter: Option<f64>,
    /// Number of centred final pixels to keep; `None` keeps all.
    pub keep: Option<usize>,
}

impl RefinementSpec {
    pub fn new(n0: usize, n_lvl: usize, n_csz: usize, n_fsz: usize) -> Result<Self> {
        let spec = Self { n0, n_lvl, n_csz, n_fsz, jitter: None, keep: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_csz < 3 || self.n_csz.is_multiple_of(2) {
            return Err(Error::Spec(format!("n_csz must be odd and >= 3, got {}", self.n_csz)));
        }
        if self.n_fsz < 2 || self.n_fsz % 2 == 1 {
            return Err(Error::Spec(format!("n_fsz must be even and >= 2, got {}", self.n_fsz)));
        }
        if self.n0 == 0 || (self.n_lvl > 0 && self.n0 < self.n_csz) {
            return Err(Error::Spec(format!(
                "base grid of {} pixels cannot be refined with windows of {}",
                self.n0, self.n_csz
            )));
        }
        if let Some(j) = self.jitter {
            if !(j.is_finite() && j >= 0.0) {
                return Err(Error::Spec(format!("jitter must be finite and nonnegative, got {j}")));
            }
        }
        Ok(())
    }

    /// Coarse pixels between consecutive window starts.
    pub fn stride(&self) -> usize {
        self.n_fsz / 2
    }

    /// Windows that fit on a coarse level of `n_coarse` pixels.
    pub fn windows(&self, n_coarse: usize) -> Option<usize> {
        (n_coarse >= self.n_csz).then(|| (n_coarse - self.n_csz) / self.stride() + 1)
    }

    /// Sizes `N(0) ..= N(n_lvl)` of the full (uncropped) levels.
    pub fn level_sizes(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let mut sizes = vec![self.n0];
        for level in 1..=self.n_lvl {
            let prev = sizes[level - 1];
            let w = self.windows(prev).ok_or(Error::LevelTooSmall {
                level: level - 1,
                size: prev,
                n_csz: self.n_csz,
            })?;
            let next = w
                .checked_mul(self.n_fsz)
                .ok_or_else(|| Error::Spec(format!("level {level} size overflows")))?;
            sizes.push(next);
        }
        if let Some(keep) = self.keep {
            let full = sizes[self.n_lvl];
            if keep == 0 || keep > full {
                return Err(Error::Spec(format!("cannot keep {keep} of {full} final pixels")));
            }
        }
        Ok(sizes)
    }

    pub fn jitter_for(&self, kernel: &Kernel) -> f64 {
        self.jitter.unwrap_or(1e-12 * kernel.amplitude())
    }

    /// Number of modelled points (after cropping).
    pub fn modeled_size(&self) -> Result<usize> {
        let sizes = self.level_sizes()?;
        Ok(self.keep.unwrap_or(sizes[self.n_lvl]))
    }

    /// Finds the base size whose hierarchy ends with `n` final pixels.
    pub fn for_target(
        n: usize,
        n_lvl: usize,
        n_csz: usize,
        n_fsz: usize,
        policy: SizePolicy,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Spec("target size must be positive".into()));
        }
        let mut spec = Self { n0: 1, n_lvl, n_csz, n_fsz, jitter: None, keep: None };
        let first = if n_lvl == 0 { 1 } else { n_csz };
        let mut below = None;
        // Final sizes are nondecreasing in n0 and grow at least one pixel per
        // step once the levels are large enough.
        for n0 in first..=n + 4 * n_csz + 8 {
            spec.n0 = n0;
            let final_size = match spec.level_sizes() {
                Ok(sizes) => sizes[n_lvl],
                Err(Error::LevelTooSmall { .. }) => continue,
                Err(e) => return Err(e),
            };
            if final_size == n {
                return Ok(spec);
            }
            if final_size > n {
                return match policy {
                    SizePolicy::Exact => Err(Error::Unreachable { target: n, below, above: Some(final_size) }),
                    SizePolicy::CropCentered => {
                        spec.keep = Some(n);
                        Ok(spec)
                    }
                };
            }
            below = Some(final_size);
        }
        Err(Error::Unreachable { target: n, below, above: None })
    }

    /// Deepest hierarchy with at least `min_base` base pixels whose final
    /// level covers `n` points (cropped to exactly `n`) without discarding
    /// half of them or more.
    pub fn auto_depth(n: usize, n_csz: usize, n_fsz: usize, min_base: usize) -> Result<Self> {
        let mut best = Self::for_target(n, 0, n_csz, n_fsz, SizePolicy::CropCentered)?;
        for n_lvl in 1.. {
            let spec = match Self::for_target(n, n_lvl, n_csz, n_fsz, SizePolicy::CropCentered) {
                Ok(spec) => spec,
                Err(Error::Unreachable { .. } | Error::Spec(_)) => break,
                Err(e) => return Err(e),
            };
            let full = spec.level_sizes()?[n_lvl];
            if spec.n0 < min_base.max(n_csz) || full >= 2 * n {
                break;
            }
            best = spec;
        }
        Ok(best)
    }
}

/// `R` (`n_fsz x n_csz`) and the lower-triangular `sqrt(D)` (`n_fsz x n_fsz`),
/// both stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementMatrices {
    n_csz: usize,
    n_fsz: usize,
    r: Vec<f64>,
    sqrt_d: Vec<f64>,
    jitter: f64,
}

impl RefinementMatrices {
    pub fn n_csz(&self) -> usize {
        self.n_csz
    }

    pub fn n_fsz(&self) -> usize {
        self.n_fsz
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn sqrt_d(&self) -> &[f64] {
        &self.sqrt_d
    }

    /// Jitter actually added to `D` (after any escalation).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn r_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n_fsz, self.n_csz, &self.r)
    }

    pub fn sqrt_d_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n_fsz, self.n_fsz, &self.sqrt_d)
    }

    /// `out = R coarse + sqrt(D) xi`
    #[inline]
    pub fn apply(&self, coarse: &[f64], xi: &[f64], out: &mut [f64]) {
        let (c, f) = (self.n_csz, self.n_fsz);
        for o in 0..f {
            let r = &self.r[o * c..(o + 1) * c];
            let d = &self.sqrt_d[o * f..o * f + o + 1];
            let mut acc = 0.0;
            for (a, b) in r.iter().zip(coarse) {
                acc += a * b;
            }
            for (a, b) in d.iter().zip(xi) {
                acc += a * b;
            }
            out[o] = acc;
        }
    }

    /// Transpose of [`apply`](Self::apply): accumulates `R^T g` into
    /// `coarse_grad` and writes `sqrt(D)^T g` into `xi_grad`.
    #[inline]
    pub fn apply_adjoint(&self, g: &[f64], coarse_grad: &mut [f64], xi_grad: &mut [f64]) {
        let (c, f) = (self.n_csz, self.n_fsz);
        xi_grad[..f].fill(0.0);
        for (o, &go) in g.iter().enumerate().take(f) {
            for j in 0..c {
                coarse_grad[j] += self.r[o * c + j] * go;
            }
            for j in 0..=o {
                xi_grad[j] += self.sqrt_d[o * f + j] * go;
            }
        }
    }
}

/// Builds the refinement matrices from already-charted locations.
fn window_matrices(
    kernel: impl Fn(f64) -> f64,
    coarse: &[f64],
    fine: &[f64],
    jitter: f64,
) -> core::result::Result<RefinementMatrices, &'static str> {
    if coarse.windows(2).any(|w| w[0] == w[1]) {
        return Err("coincident charted coarse coordinates");
    }
    let k_cc = Matrix::from_fn(coarse.len(), coarse.len(), |i, j| kernel(coarse[i] - coarse[j]));
    let k_cf = Matrix::from_fn(coarse.len(), fine.len(), |i, j| kernel(coarse[i] - fine[j]));
    let k_ff = Matrix::from_fn(fine.len(), fine.len(), |i, j| kernel(fine[i] - fine[j]));

    let (chol_cc, _) = cholesky_with(&k_cc, &[0.0, jitter, 100.0 * jitter])
        .ok_or("Cholesky factorization of K_cc")?;
    // K_cc X = K_cf, so R = X^T
    let x = chol_cc.solve(&k_cf);
    let mut d = k_ff - k_cf.transpose() * &x;
    symmetrize(&mut d);
    let (chol_d, used) =
        cholesky_with(&d, &[jitter, 100.0 * jitter]).ok_or("Cholesky factorization of D")?;

    let r = x.transpose();
    let l = chol_d.unpack();
    let n_fsz = fine.len();
    let mut sqrt_d = vec![0.0; n_fsz * n_fsz];
    for i in 0..n_fsz {
        for j in 0..=i {
            sqrt_d[i * n_fsz + j] = l[(i, j)];
        }
    }
    Ok(RefinementMatrices {
        n_csz: coarse.len(),
        n_fsz,
        r: (0..n_fsz).flat_map(|i| (0..coarse.len()).map(move |j| (i, j))).map(|(i, j)| r[(i, j)]).collect(),
        sqrt_d,
        jitter: used,
    })
}

/// Refinement matrices for one window given its Euclidean grid coordinates.
pub fn refinement_matrices(
    ck: &ChartedKernel,
    coarse_coords: &[f64],
    fine_coords: &[f64],
    jitter: f64,
) -> Result<RefinementMatrices> {
    if coarse_coords.is_empty() || fine_coords.is_empty() {
        return Err(Error::Input("empty refinement window".into()));
    }
    if !coarse_coords.iter().chain(fine_coords).all(|x| x.is_finite()) {
        return Err(Error::Input("window coordinates must be finite".into()));
    }
    if coarse_coords.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("coarse coordinates must be strictly increasing".into()));
    }
    let xc = ck.chart.map_all(coarse_coords)?;
    let xf = ck.chart.map_all(fine_coords)?;
    window_matrices(|d| ck.kernel.at(d), &xc, &xf, jitter).map_err(|what| Error::Factorization {
        what,
        level: None,
        window: None,
        coarse: coarse_coords.to_vec(),
        fine: fine_coords.to_vec(),
    })
}

/// Refinement matrices of one level: a single shared pair when every window
/// sees the same charted geometry, otherwise one pair per window.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelMatrices {
    Broadcast { matrices: RefinementMatrices, windows: usize },
    PerWindow(Vec<RefinementMatrices>),
}

impl LevelMatrices {
    #[inline]
    pub fn window(&self, i: usize) -> &RefinementMatrices {
        match self {
            LevelMatrices::Broadcast { matrices, .. } => matrices,
            LevelMatrices::PerWindow(all) => &all[i],
        }
    }

    pub fn window_count(&self) -> usize {
        match self {
            LevelMatrices::Broadcast { windows, .. } => *windows,
            LevelMatrices::PerWindow(all) => all.len(),
        }
    }

    pub fn is_broadcast(&self) -> bool {
        matches!(self, LevelMatrices::Broadcast { .. })
    }

    pub fn materialize(&self) -> Vec<RefinementMatrices> {
        (0..self.window_count()).map(|i| self.window(i).clone()).collect()
    }
}

/// Relative tolerance on charted window offsets for sharing one matrix pair.
const BROADCAST_TOL: f64 = 1e-10;

fn translation_invariant(xc: &[f64], xf: &[f64], windows: usize, n_csz: usize, n_fsz: usize, stride: usize) -> bool {
    let offsets = |i: usize| {
        let base = xc[i * stride];
        xc[i * stride..i * stride + n_csz]
            .iter()
            .chain(&xf[i * n_fsz..(i + 1) * n_fsz])
            .map(move |x| x - base)
    };
    let span = offsets(0).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = BROADCAST_TOL * span;
    (1..windows).all(|i| offsets(i).zip(offsets(0)).all(|(a, b)| (a - b).abs() <= tol))
}

pub fn matrices_for_level(
    ck: &ChartedKernel,
    hierarchy: &GridHierarchy,
    level: usize,
    jitter: f64,
) -> Result<LevelMatrices> {
    if level == 0 || level > hierarchy.depth() {
        return Err(Error::Input(format!(
            "level must lie in 1..={}, got {level}",
            hierarchy.depth()
        )));
    }
    let (n_csz, n_fsz, stride) = (hierarchy.n_csz(), hierarchy.n_fsz(), hierarchy.stride());
    let windows = hierarchy.window_count(level);
    let xc = ck.chart.map_all(hierarchy.coords(level - 1))?;
    let xf = ck.chart.map_all(hierarchy.coords(level))?;

    let build = |i: usize| {
        window_matrices(
            |d| ck.kernel.at(d),
            &xc[i * stride..i * stride + n_csz],
            &xf[i * n_fsz..(i + 1) * n_fsz],
            jitter,
        )
        .map_err(|what| Error::Factorization {
            what,
            level: Some(level),
            window: Some(i),
            coarse: hierarchy.coarse_window(level, i).to_vec(),
            fine: hierarchy.fine_window(level, i).to_vec(),
        })
    };

    if translation_invariant(&xc, &xf, windows, n_csz, n_fsz, stride) {
        return Ok(LevelMatrices::Broadcast { matrices: build(0)?, windows });
    }
    (0..windows).map(build).collect::<Result<Vec<_>>>().map(LevelMatrices::PerWindow)
}
