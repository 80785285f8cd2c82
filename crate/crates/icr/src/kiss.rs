//! Simplified KISS-GP baseline: `K ~ W F^-1 diag(P) F W^T + jitter I`.
//!
//! The `M` inducing points form a regular grid over the data range, widened
//! by `padding * range` in total (half on each side). `P` is the DFT of the
//! kernel row on the circular distances `min(j, M - j) h`, with negative
//! entries clipped to zero, and `W` linearly interpolates each data point
//! between its two bracketing inducing points.

use std::fmt;
use std::sync::Arc;

use icr_core::{Error, Kernel, Matrix, Result, DENSE_LIMIT};
use log::debug;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct KissModel {
    kernel: Kernel,
    inducing_start: f64,
    spacing: f64,
    m: usize,
    lower: Vec<usize>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
    spectrum: Vec<f64>,
    clipped: usize,
    padding: f64,
    diag_jitter: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for KissModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KissModel")
            .field("n", &self.lower.len())
            .field("m", &self.m)
            .field("padding", &self.padding)
            .field("diag_jitter", &self.diag_jitter)
            .field("clipped", &self.clipped)
            .finish_non_exhaustive()
    }
}

pub fn build_kiss(kernel: Kernel, coords: &[f64], m: usize, padding: f64, diag_jitter: f64) -> Result<KissModel> {
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 inducing points, got {m}")));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::Input(format!("padding must be finite and nonnegative, got {padding}")));
    }
    if !(diag_jitter >= 0.0 && diag_jitter.is_finite()) {
        return Err(Error::Input(format!("jitter must be finite and nonnegative, got {diag_jitter}")));
    }
    if coords.is_empty() || !coords.iter().all(|x| x.is_finite()) {
        return Err(Error::Input("coordinates must be finite and nonempty".into()));
    }
    if coords.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("coordinates must be sorted".into()));
    }
    let (min, max) = (coords[0], coords[coords.len() - 1]);
    let range = max - min;
    if range <= 0.0 {
        return Err(Error::Input("coordinates span an empty range".into()));
    }
    let start = min - 0.5 * padding * range;
    let spacing = range * (1.0 + padding) / (m - 1) as f64;

    let n = coords.len();
    let (mut lower, mut w_lo, mut w_hi) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &x in coords {
        let t = (x - start) / spacing;
        if !(-1e-9..=(m - 1) as f64 + 1e-9).contains(&t) {
            return Err(Error::Input(format!("coordinate {x} lies outside the inducing grid")));
        }
        let i = (t.floor().max(0.0) as usize).min(m - 2);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        let lo = 1.0 - frac;
        lower.push(i);
        w_lo.push(lo);
        // 1 - lo, so that each row sums to exactly one
        w_hi.push(1.0 - lo);
    }

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(m);
    let inverse = planner.plan_fft_inverse(m);
    let mut row: Vec<Complex<f64>> =
        (0..m).map(|j| Complex::new(kernel.at(j.min(m - j) as f64 * spacing), 0.0)).collect();
    forward.process(&mut row);
    let mut clipped = 0;
    let spectrum = row
        .iter()
        .map(|c| {
            if c.re < 0.0 {
                clipped += 1;
                0.0
            } else {
                c.re
            }
        })
        .collect();
    if clipped > 0 {
        debug!("clipped {clipped} negative spectral values of {m}");
    }

    Ok(KissModel {
        kernel,
        inducing_start: start,
        spacing,
        m,
        lower,
        w_lo,
        w_hi,
        spectrum,
        clipped,
        padding,
        diag_jitter,
        forward,
        inverse,
    })
}

/// Reusable FFT buffers for repeated products.
pub struct Workspace {
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl KissModel {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn inducing_count(&self) -> usize {
        self.m
    }

    pub fn inducing_coords(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.inducing_start + j as f64 * self.spacing).collect()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Spectral diagonal `P` after clipping.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Number of negative spectral values clipped to zero.
    pub fn clipped_count(&self) -> usize {
        self.clipped
    }

    pub fn padding(&self) -> f64 {
        self.padding
    }

    pub fn diag_jitter(&self) -> f64 {
        self.diag_jitter
    }

    /// Interpolation weights of data point `i` as `(inducing index, weight)`.
    pub fn weights(&self, i: usize) -> [(usize, f64); 2] {
        let j = self.lower[i];
        [(j, self.w_lo[i]), (j + 1, self.w_hi[i])]
    }

    /// Dense `N x M` interpolation matrix.
    pub fn interpolation_matrix(&self) -> Matrix {
        let mut w = Matrix::zeros(self.n(), self.m);
        for i in 0..self.n() {
            for (j, v) in self.weights(i) {
                w[(i, j)] += v;
            }
        }
        w
    }

    pub fn workspace(&self) -> Workspace {
        let scratch_len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        Workspace { buf: vec![Complex::default(); self.m], scratch: vec![Complex::default(); scratch_len] }
    }

    /// `out = K v` with the jitter added when `with_jitter` is set.
    pub fn mvm_into(&self, v: &[f64], out: &mut [f64], ws: &mut Workspace, with_jitter: bool) {
        let buf = &mut ws.buf;
        buf.fill(Complex::default());
        for (i, &x) in v.iter().enumerate() {
            let j = self.lower[i];
            buf[j].re += self.w_lo[i] * x;
            buf[j + 1].re += self.w_hi[i] * x;
        }
        self.forward.process_with_scratch(buf, &mut ws.scratch);
        let scale = 1.0 / self.m as f64;
        for (b, p) in buf.iter_mut().zip(&self.spectrum) {
            *b *= p * scale;
        }
        self.inverse.process_with_scratch(buf, &mut ws.scratch);
        let jitter = if with_jitter { self.diag_jitter } else { 0.0 };
        for (i, o) in out.iter_mut().enumerate() {
            let j = self.lower[i];
            *o = self.w_lo[i] * buf[j].re + self.w_hi[i] * buf[j + 1].re + jitter * v[i];
        }
    }
}

/// `W F^-1 diag(P) F W^T v + jitter v`
pub fn kiss_mvm(model: &KissModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != model.n() {
        return Err(Error::Shape { expected: model.n(), got: v.len() });
    }
    let mut out = vec![0.0; v.len()];
    model.mvm_into(v, &mut out, &mut model.workspace(), true);
    Ok(out)
}

/// Dense KISS covariance without the jitter.
pub fn kiss_covariance(model: &KissModel) -> Result<Matrix> {
    let n = model.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let mut ws = model.workspace();
    let mut k = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        model.mvm_into(&e, &mut col, &mut ws, false);
        k.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    Ok(k)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fixed-iteration conjugate gradients from a zero initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub solution: Vec<f64>,
    /// Residual norm before the first and after every iteration.
    pub residuals: Vec<f64>,
}

pub fn conjugate_gradient(model: &KissModel, b: &[f64], iters: usize) -> Result<CgResult> {
    let n = model.n();
    if b.len() != n {
        return Err(Error::Shape { expected: n, got: b.len() });
    }
    let mut ws = model.workspace();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut residuals = vec![rr.sqrt()];
    for _ in 0..iters {
        if rr == 0.0 {
            break;
        }
        model.mvm_into(&p, &mut ap, &mut ws, true);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        residuals.push(rr.sqrt());
    }
    Ok(CgResult { solution: x, residuals })
}

/// Lanczos tridiagonalization started from a unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Krylov bases shorter than this are treated as broken down.
const BREAKDOWN: f64 = 1e-14;

impl Tridiagonal {
    fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        let k = self.alpha.len();
        let t = Matrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
            0 => self.alpha[i],
            1 => self.beta[i.min(j)],
            _ => 0.0,
        });
        t.symmetric_eigen()
    }

    pub fn ritz_values(&self) -> Vec<f64> {
        self.eigen().eigenvalues.as_slice().to_vec()
    }

    /// `e1^T log(T) e1`; nonpositive Ritz values are clamped to the smallest
    /// positive double.
    pub fn log_quadrature(&self) -> f64 {
        let eig = self.eigen();
        eig.eigenvalues
            .iter()
            .zip(eig.eigenvectors.row(0).iter())
            .map(|(&theta, &tau)| tau * tau * theta.max(f64::MIN_POSITIVE).ln())
            .sum()
    }
}

/// Plain Lanczos on the jittered operator. Stops early when the next basis
/// vector would have norm below `1e-14`.
pub fn lanczos(model: &KissModel, start: &[f64], iters: usize) -> Result<Tridiagonal> {
    let n = model.n();
    if start.len() != n {
        return Err(Error::Shape { expected: n, got: start.len() });
    }
    let norm = dot(start, start).sqrt();
    if norm == 0.0 {
        return Err(Error::Input("Lanczos start vector is zero".into()));
    }
    let mut ws = model.workspace();
    let mut q: Vec<f64> = start.iter().map(|v| v / norm).collect();
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let (mut alpha, mut beta) = (Vec::with_capacity(iters), Vec::with_capacity(iters));
    let mut b_prev = 0.0;
    for step in 0..iters {
        model.mvm_into(&q, &mut w, &mut ws, true);
        for i in 0..n {
            w[i] -= b_prev * q_prev[i];
        }
        let a = dot(&q, &w);
        for i in 0..n {
            w[i] -= a * q[i];
        }
        alpha.push(a);
        if step + 1 == iters {
            break;
        }
        let b = dot(&w, &w).sqrt();
        if b < BREAKDOWN {
            break;
        }
        beta.push(b);
        for i in 0..n {
            q_prev[i] = q[i];
            q[i] = w[i] / b;
        }
        b_prev = b;
    }
    Ok(Tridiagonal { alpha, beta })
}

/// Stochastic Lanczos quadrature estimate of `log det K` from Rademacher
/// probes drawn with `ChaCha8Rng::seed_from_u64(seed)`.
pub fn slq_logdet(model: &KissModel, probes: usize, iters: usize, seed: u64) -> Result<f64> {
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut z = vec![0.0; n];
    for _ in 0..probes {
        z.iter_mut().for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 });
        total += lanczos(model, &z, iters)?.log_quadrature();
    }
    Ok(n as f64 * total / probes as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// `s^T K^-1 s` with the CG approximation of `K^-1 s`.
    pub quadratic_form: f64,
    pub logdet: f64,
    pub cg_residuals: Vec<f64>,
}

/// One timed KISS forward pass: a CG solve and an SLQ log-determinant.
pub fn kiss_forward_pass(
    model: &KissModel,
    s: &[f64],
    cg_iters: usize,
    probes: usize,
    lanczos_iters: usize,
    seed: u64,
) -> Result<ForwardPass> {
    if cg_iters == 0 || probes == 0 || lanczos_iters == 0 {
        return Err(Error::Input("iteration and probe counts must be positive".into()));
    }
    let cg = conjugate_gradient(model, s, cg_iters)?;
    let quadratic_form = dot(s, &cg.solution);
    let logdet = slq_logdet(model, probes, lanczos_iters, seed)?;
    Ok(ForwardPass { quadratic_form, logdet, cg_residuals: cg.residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.25).collect()
    }

    #[test]
    fn exact_hits_and_midpoints() {
        let k = Kernel::matern32(1.0).unwrap();
        let m = build_kiss(k, &grid(9), 9, 0.0, 0.0).unwrap();
        assert_eq!(m.weights(3), [(3, 1.0), (4, 0.0)]);
        assert_eq!(m.weights(8), [(7, 0.0), (8, 1.0)]);
        let m = build_kiss(k, &[0.0, 0.5, 1.0], 2, 0.0, 0.0).unwrap();
        assert_eq!(m.weights(1), [(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn padding_widens_grid_symmetrically() {
        let k = Kernel::matern32(1.0).unwrap();
        let m = build_kiss(k, &[0.0, 2.0], 5, 0.5, 0.0).unwrap();
        let u = m.inducing_coords();
        assert!((u[0] + 0.5).abs() < 1e-12 && (u[4] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let k = Kernel::matern32(1.0).unwrap();
        assert!(build_kiss(k, &grid(4), 1, 0.0, 0.0).is_err());
        assert!(build_kiss(k, &[1.0, 0.0], 4, 0.0, 0.0).is_err());
        assert!(build_kiss(k, &[1.0, 1.0], 4, 0.0, 0.0).is_err());
        assert!(build_kiss(k, &[0.0, f64::NAN], 4, 0.0, 0.0).is_err());
        assert!(build_kiss(k, &grid(4), 4, -1.0, 0.0).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let m = build_kiss(Kernel::matern32(1.0).unwrap(), &grid(16), 16, 0.5, 1e-6).unwrap();
        assert!(kiss_mvm(&m, &[0.0; 16]).unwrap().iter().all(|&v| v == 0.0));
        assert!(kiss_mvm(&m, &[0.0; 3]).is_err());
    }

    #[test]
    fn cg_stops_on_exact_solution() {
        let m = build_kiss(Kernel::matern32(1.0).unwrap(), &grid(8), 8, 0.0, 1e-6).unwrap();
        let r = conjugate_gradient(&m, &[0.0; 8], 40).unwrap();
        assert_eq!(r.residuals, vec![0.0]);
        assert!(kiss_forward_pass(&m, &[0.0; 8], 0, 1, 1, 0).is_err());
    }
}
