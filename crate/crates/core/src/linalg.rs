use nalgebra::{Cholesky, Dyn};

use crate::Matrix;

/// Tries a Cholesky factorization of `m + j I` for each `j` in turn and
/// returns the first that succeeds together with the jitter used.
pub(crate) fn cholesky_with(m: &Matrix, jitters: &[f64]) -> Option<(Cholesky<f64, Dyn>, f64)> {
    jitters.iter().find_map(|&j| {
        let mut a = m.clone();
        if j != 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += j;
            }
        }
        a.cholesky().map(|c| (c, j))
    })
}

pub(crate) fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()
}
