//! Dense exact-GP oracle and covariance comparison metrics.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DVector, Dyn};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::charts::ChartSpec;
use crate::error::{Error, Result};
use crate::generate::{IcrModel, LatentVector};
use crate::kernels::Kernel;
use crate::linalg::{cholesky_with, log_det, symmetrize};
use crate::refine::{RefinementSpec, SizePolicy};
use crate::Matrix;

/// Largest `N` for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 4096;

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    Ok(())
}

fn check_square(k: &Matrix) -> Result<usize> {
    if !k.is_square() {
        return Err(Error::Shape { expected: k.nrows(), got: k.ncols() });
    }
    Ok(k.nrows())
}

fn default_jitter(k: &Matrix) -> f64 {
    let n = k.nrows().max(1) as f64;
    1e-12 * libm::fabs(k.trace()) / n
}

/// Cholesky of `k`, retrying once with `1e-12 trace / n` on the diagonal.
fn factorize(k: &Matrix) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let j = default_jitter(k);
    cholesky_with(k, &[0.0, j]).ok_or(Error::NotFactorizable { jitter: j })
}

/// Zero-mean Gaussian log-density together with the jitter it needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProb {
    pub value: f64,
    pub jitter: f64,
}

/// `-(log det(2 pi K) + s^T K^-1 s) / 2`
pub fn exact_log_prob(k: &Matrix, s: &[f64]) -> Result<LogProb> {
    let n = check_square(k)?;
    if s.len() != n {
        return Err(Error::Shape { expected: n, got: s.len() });
    }
    let (chol, jitter) = factorize(k)?;
    let mut z = DVector::from_column_slice(s);
    chol.l_dirty().solve_lower_triangular_mut(&mut z);
    let quad = z.norm_squared();
    let ln_2pi = libm::log(2.0 * core::f64::consts::PI);
    let value = -0.5 * (n as f64 * ln_2pi + log_det(&chol) + quad);
    Ok(LogProb { value, jitter })
}

/// Gram matrix of the charted kernel at the model's output locations.
pub fn true_covariance(model: &IcrModel) -> Result<Matrix> {
    check_dense(model.size())?;
    let x = model.modeled_coords();
    model.kernel().gram(&x, &x)
}

/// `sqrt(K_ICR)` as a dense `N x M` matrix, one basis latent per column.
pub fn implicit_sqrt(model: &IcrModel) -> Result<Matrix> {
    check_dense(model.size())?;
    let layout = model.latent_layout();
    let mut s = Matrix::zeros(model.size(), layout.len());
    for k in 0..layout.len() {
        let col = model.apply_sqrt(&LatentVector::basis(layout, k))?;
        s.column_mut(k).copy_from_slice(&col);
    }
    Ok(s)
}

/// `K_ICR = sqrt(K_ICR) sqrt(K_ICR)^T`
pub fn implicit_covariance(model: &IcrModel) -> Result<Matrix> {
    let s = implicit_sqrt(model)?;
    let mut k = &s * s.transpose();
    symmetrize(&mut k);
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceComparison {
    pub mae: f64,
    pub max_abs_err: f64,
    pub max_diag_err: f64,
    /// `KL(N(0, K_true) || N(0, K_approx))`; `+inf` if `K_approx` stays
    /// singular after jitter.
    pub kl_true_from_approx: f64,
    pub n: usize,
}

/// Elementwise errors of `approx - truth` and the Gaussian KL divergence.
pub fn compare_covariances(truth: &Matrix, approx: &Matrix) -> Result<CovarianceComparison> {
    let n = check_square(truth)?;
    if approx.shape() != truth.shape() {
        return Err(Error::Shape { expected: n, got: approx.nrows() });
    }
    let delta = approx - truth;
    let mae = delta.iter().map(|v| libm::fabs(*v)).sum::<f64>() / (n * n).max(1) as f64;
    let max_abs_err = delta.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let max_diag_err = delta.diagonal().iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let kl_true_from_approx = gaussian_kl(truth, approx)?;
    Ok(CovarianceComparison { mae, max_abs_err, max_diag_err, kl_true_from_approx, n })
}

/// `(tr(B^-1 A) - n + log det B - log det A) / 2`
fn gaussian_kl(a: &Matrix, b: &Matrix) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let (la, _) = factorize(a)?;
    let jb = default_jitter(b);
    let Some((lb, _)) = cholesky_with(b, &[0.0, jb, 100.0 * jb]) else {
        return Ok(f64::INFINITY);
    };
    // tr(B^-1 A) = |L_B^-1 L_A|_F^2
    let Some(y) = lb.l().solve_lower_triangular(&la.l()) else {
        return Ok(f64::INFINITY);
    };
    let kl = 0.5 * (y.norm_squared() - n as f64 + log_det(&lb) - log_det(&la));
    // Rounding can push an exact match slightly negative.
    Ok(if kl.is_finite() { kl.max(0.0) } else { f64::INFINITY })
}

/// One row of the parameter-selection table.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub n_csz: usize,
    pub n_fsz: usize,
    /// `None` if no base size yields the requested `N` under the policy.
    pub spec: Option<RefinementSpec>,
    pub comparison: Option<CovarianceComparison>,
}

impl CandidateReport {
    pub fn reachable(&self) -> bool {
        self.comparison.is_some()
    }

    pub fn kl(&self) -> Option<f64> {
        self.comparison.map(|c| c.kl_true_from_approx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub winner: (usize, usize),
    pub table: Vec<CandidateReport>,
}

/// Builds every candidate shape at `n` points with `n_lvl` levels and picks
/// the smallest KL from the true Gram; ties go to the smaller `n_csz`, then
/// the smaller `n_fsz`.
pub fn select_refinement_params(
    kernel: Kernel,
    chart: &ChartSpec,
    candidates: &[(usize, usize)],
    n: usize,
    n_lvl: usize,
    policy: SizePolicy,
) -> Result<Selection> {
    check_dense(n)?;
    let mut table = Vec::with_capacity(candidates.len());
    for &(n_csz, n_fsz) in candidates {
        let spec = match RefinementSpec::for_target(n, n_lvl, n_csz, n_fsz, policy) {
            Ok(spec) => spec,
            Err(Error::Unreachable { .. }) => {
                table.push(CandidateReport { n_csz, n_fsz, spec: None, comparison: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        let model = IcrModel::build(kernel, *chart, &spec)?;
        let comparison = compare_covariances(&true_covariance(&model)?, &implicit_covariance(&model)?)?;
        table.push(CandidateReport { n_csz, n_fsz, spec: Some(spec), comparison: Some(comparison) });
    }
    let winner = table
        .iter()
        .filter_map(|r| r.kl().map(|kl| (kl, r.n_csz, r.n_fsz)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(_, c, f)| (c, f))
        .ok_or(Error::NoReachableCandidate)?;
    Ok(Selection { winner, table })
}

/// Lower Cholesky factor of a dense covariance.
#[derive(Debug, Clone)]
pub struct ExactFactor {
    l: Matrix,
    jitter: f64,
}

impl ExactFactor {
    pub fn new(k: &Matrix) -> Result<Self> {
        check_square(k)?;
        let (chol, jitter) = factorize(k)?;
        Ok(Self { l: chol.l(), jitter })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// `L xi`
    pub fn apply(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.l.ncols() {
            return Err(Error::Shape { expected: self.l.ncols(), got: xi.len() });
        }
        let v = &self.l * DVector::from_column_slice(xi);
        Ok(v.as_slice().to_vec())
    }

    /// Same generator and draw order as [`IcrModel::sample`].
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi: Vec<f64> = (0..self.l.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
        self.apply(&xi).expect("draw has the factor's size")
    }
}

pub fn exact_sample(k: &Matrix, seed: u64) -> Result<Vec<f64>> {
    Ok(ExactFactor::new(k)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::Chart;
    use approx::assert_relative_eq;

    #[test]
    fn log_prob_examples() {
        let lp = exact_log_prob(&Matrix::identity(1, 1), &[0.0]).unwrap();
        assert_relative_eq!(lp.value, -0.918_938_533_204_672_7, epsilon = 1e-12);
        assert_eq!(lp.jitter, 0.0);
        let lp = exact_log_prob(&Matrix::identity(2, 2), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(lp.value, -(2.0 * core::f64::consts::PI).ln() - 1.0, epsilon = 1e-12);
        assert!(matches!(exact_log_prob(&Matrix::identity(2, 2), &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn log_prob_uses_jitter_for_singular() {
        let k = Matrix::from_element(2, 2, 1.0);
        let lp = exact_log_prob(&k, &[0.0, 0.0]).unwrap();
        assert!(lp.jitter > 0.0);
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(exact_log_prob(&bad, &[0.0, 0.0]), Err(Error::NotFactorizable { .. })));
    }

    #[test]
    fn kl_examples() {
        let c = compare_covariances(&Matrix::identity(1, 1), &(Matrix::identity(1, 1) * 2.0)).unwrap();
        assert_relative_eq!(c.kl_true_from_approx, 0.5 * (0.5 - 1.0 + 2f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(c.kl_true_from_approx, 0.096574, epsilon = 1e-6);
        assert_eq!(c.mae, 1.0);
        let k = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = compare_covariances(&k, &k).unwrap();
        assert_eq!((c.mae, c.max_abs_err, c.max_diag_err), (0.0, 0.0, 0.0));
        assert!(c.kl_true_from_approx.abs() < 1e-12);
    }

    #[test]
    fn singular_approx_gives_infinite_kl() {
        let c = compare_covariances(&Matrix::identity(2, 2), &Matrix::zeros(2, 2)).unwrap();
        assert!(c.kl_true_from_approx.is_infinite());
        assert_eq!(c.max_diag_err, 1.0);
        assert_eq!(c.mae, 0.5);
    }

    #[test]
    fn dense_guard() {
        // 20 -> 36 -> 68 -> ... -> 4100
        let spec = RefinementSpec::new(20, 8, 3, 2).unwrap();
        let m = IcrModel::build(Kernel::matern32(1.0).unwrap(), Chart::Identity.into(), &spec).unwrap();
        assert_eq!(m.size(), 4100);
        assert!(matches!(implicit_covariance(&m), Err(Error::TooLarge { n: 4100, .. })));
        assert!(matches!(true_covariance(&m), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn single_candidate_wins() {
        let k = Kernel::matern32(1.0).unwrap();
        let sel = select_refinement_params(k, &Chart::Identity.into(), &[(3, 2)], 36, 2, SizePolicy::Exact).unwrap();
        assert_eq!(sel.winner, (3, 2));
        assert_eq!(sel.table.len(), 1);
    }

    #[test]
    fn unreachable_candidates_are_reported() {
        let k = Kernel::matern32(1.0).unwrap();
        // 36 with two levels of (3,2) needs N0 = 12; (5,4) cannot hit 36 at depth 2
        let sel = select_refinement_params(k, &Chart::Identity.into(), &[(5, 4), (3, 2)], 36, 2, SizePolicy::Exact);
        let sel = sel.unwrap();
        assert_eq!(sel.winner, (3, 2));
        assert!(!sel.table[0].reachable());
        let none = select_refinement_params(k, &Chart::Identity.into(), &[(5, 4)], 37, 2, SizePolicy::Exact);
        assert!(matches!(none, Err(Error::NoReachableCandidate)));
    }

    #[test]
    fn exact_sample_identity_is_raw_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert_eq!(exact_sample(&Matrix::identity(4, 4), 5).unwrap(), raw);
        let f = ExactFactor::new(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(f.apply(&[0.0; 3]).unwrap(), [0.0; 3]);
    }
}
