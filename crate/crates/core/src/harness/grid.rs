use rayon::prelude::*;

use crate::criterion::QsiProblem;
use crate::error::{check_dim, QsiError, Result};
use crate::geometry::Points;
use crate::problems::{s_transform, TestProblem};
use crate::sim::SGrid;

use super::sobol::Sobol;

/// Evaluation grid for the misclassification metric: Sobol' points on `X`
/// crossed with quantile-transformed Sobol' points on `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub x_nodes: Points,
    pub s_grid: SGrid,
}

pub fn make_prediction_grid(problem: &QsiProblem, log2_x: u32, log2_s: u32) -> Result<PredictionGrid> {
    if log2_x > 24 || log2_s > 24 {
        return Err(QsiError::InvalidArgument("prediction grid too large".into()));
    }
    let ux = Sobol::new(problem.x_dim())?.points(1 << log2_x);
    let mut x_nodes = Points::with_capacity(problem.x_dim(), ux.len());
    for u in ux.iter() {
        x_nodes.push(&problem.x_box().from_unit(u))?;
    }
    let us = Sobol::new(problem.s_dim())?.points(1 << log2_s);
    let mut s_nodes = Points::with_capacity(problem.s_dim(), us.len());
    for u in us.iter() {
        s_nodes.push(&s_transform(problem.s_distribution(), u)?)?;
    }
    Ok(PredictionGrid {
        x_nodes,
        s_grid: SGrid::equally_weighted(s_nodes)?,
    })
}

/// `1{τ(x) ≤ α}` on every `x` node by direct evaluation of the function.
pub fn truth_membership(problem: &TestProblem, grid: &PredictionGrid) -> Result<Vec<bool>> {
    let alpha = problem.qsi.alpha();
    let region = *problem.qsi.region();
    (0..grid.x_nodes.len())
        .into_par_iter()
        .map(|ix| {
            let x = grid.x_nodes.row(ix);
            let mut tau = 0.0;
            for (s, w) in grid.s_grid.nodes.iter().zip(&grid.s_grid.weights) {
                if region.contains(problem.evaluator.evaluate(x, s)?) {
                    tau += w;
                }
            }
            Ok(tau <= alpha + 1e-12)
        })
        .collect()
}

/// Fraction of nodes where the two memberships disagree.
pub fn misclassified_proportion(estimate: &[bool], truth: &[bool]) -> Result<f64> {
    check_dim(truth.len(), estimate.len())?;
    if truth.is_empty() {
        return Err(QsiError::InvalidArgument("empty membership vectors".into()));
    }
    let wrong = estimate.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}
