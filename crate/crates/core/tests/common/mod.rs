#![allow(dead_code)]

use icr_core::{Chart, ChartSpec, IcrModel, Kernel, Matrix, RefinementSpec, PRESETS};
use proptest::prelude::*;

pub fn matern() -> Kernel {
    Kernel::matern32(1.0).unwrap()
}

pub fn build(n0: usize, n_lvl: usize, (c, f): (usize, usize), chart: ChartSpec) -> IcrModel {
    let spec = RefinementSpec::new(n0, n_lvl, c, f).unwrap();
    IcrModel::build(matern(), chart, &spec).unwrap()
}

/// The log-spaced model used for the accuracy experiments, at `n_lvl = 5`.
pub fn log_experiment_chart() -> ChartSpec {
    ChartSpec::LogExperiment { spacing_ratio: 50.0 }
}

pub fn chart_strategy() -> impl Strategy<Value = ChartSpec> {
    prop_oneof![
        Just(ChartSpec::Fixed(Chart::Identity)),
        (0.2f64..3.0, -2.0f64..2.0).prop_map(|(s, o)| ChartSpec::Fixed(Chart::affine(s, o).unwrap())),
        (2.0f64..60.0).prop_map(|r| ChartSpec::LogExperiment { spacing_ratio: r }),
    ]
}

/// Small models of every preset shape, depth and chart kind.
pub fn model_strategy() -> impl Strategy<Value = IcrModel> {
    (0..PRESETS.len(), 0usize..4, 0usize..6, chart_strategy(), 0.5f64..2.0).prop_map(
        |(p, n_lvl, extra, chart, rho)| {
            let (c, f) = PRESETS[p];
            let spec = RefinementSpec::new(c + 4 + extra, n_lvl, c, f).unwrap();
            IcrModel::build(Kernel::matern32(rho).unwrap(), chart, &spec).unwrap()
        },
    )
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Explicit inverse of a 3x3 matrix via cofactors.
pub fn inverse3(m: &Matrix) -> Matrix {
    let a = |i: usize, j: usize| m[(i, j)];
    let cof = |i: usize, j: usize| {
        let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let c: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let minor = a(r[0], c[0]) * a(r[1], c[1]) - a(r[0], c[1]) * a(r[1], c[0]);
        if (i + j).is_multiple_of(2) { minor } else { -minor }
    };
    let det: f64 = (0..3).map(|j| a(0, j) * cof(0, j)).sum();
    Matrix::from_fn(3, 3, |i, j| cof(j, i) / det)
}
