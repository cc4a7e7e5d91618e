//! Comparison strategies that target the joint excursion set
//! `{(x, s) : f(x, s) ∈ C}` instead of `Γ(f)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::criterion::{argmin, importance_subsample, CriterionConfig, QsiProblem};
use crate::error::{QsiError, Result};
use crate::geometry::Points;
use crate::gp::{excursion_probability, CachedPosterior, PosteriorModel};
use crate::sim::gh_quantize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Random,
    MaxMisclassification,
    JointSur,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Random => "random",
            BaselineKind::MaxMisclassification => "max_misclass",
            BaselineKind::JointSur => "joint_sur",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = QsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BaselineKind::Random),
            "max_misclass" | "max_misclassification" => Ok(BaselineKind::MaxMisclassification),
            "joint_sur" => Ok(BaselineKind::JointSur),
            other => Err(QsiError::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// One draw from `U(X) ⊗ P_S`, `x` coordinates first.
pub fn select_random<R: Rng + ?Sized>(problem: &QsiProblem, rng: &mut R) -> Vec<f64> {
    let mut u = problem.x_box().sample_uniform(rng);
    u.extend(problem.s_distribution().sample(rng));
    u
}

/// `n` i.i.d. draws from `U(X) ⊗ P_S`.
pub fn sample_joint<R: Rng + ?Sized>(problem: &QsiProblem, n: usize, rng: &mut R) -> Points {
    let mut pts = Points::with_capacity(problem.joint_dim(), n);
    for _ in 0..n {
        pts.push(&select_random(problem, rng)).expect("dimension matches the problem");
    }
    pts
}

fn misclassification(model: &PosteriorModel, problem: &QsiProblem, points: &Points) -> Result<Vec<f64>> {
    let pred = model.predict(points)?;
    Ok((0..points.len())
        .map(|i| {
            let p = excursion_probability(pred.mean[i], pred.sd(i), problem.region());
            p.min(1.0 - p)
        })
        .collect())
}

/// Most ambiguous of `n_pi · n_s` random joint points.
pub fn select_max_misclass<R: Rng + ?Sized>(
    model: &PosteriorModel,
    problem: &QsiProblem,
    config: &CriterionConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = config.n_pi * config.n_s;
    if n == 0 {
        return Err(QsiError::Config("n_pi · n_s must be positive".into()));
    }
    let pts = sample_joint(problem, n, rng);
    let scores = misclassification(model, problem, &pts)?;
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    let best = argmin(&neg).unwrap_or(0);
    Ok(pts.row(best).to_vec())
}

/// Outcome of one Joint-SUR selection step.
#[derive(Debug, Clone)]
pub struct JointSurSelection {
    pub point: Vec<f64>,
    pub selected: usize,
    pub candidates: Points,
    /// Expected integrated misclassification after evaluating each candidate.
    pub values: Vec<f64>,
    /// Current integrated misclassification on the same grid.
    pub current: f64,
}

/// Current mean of `min(p_n, 1 − p_n)` over the cached grid.
pub fn integrated_misclassification(cached: &CachedPosterior, problem: &QsiProblem) -> f64 {
    let total: f64 = (0..cached.len())
        .map(|g| {
            let p = excursion_probability(cached.mean[g], cached.variance[g].sqrt(), problem.region());
            p.min(1.0 - p)
        })
        .sum();
    total / cached.len() as f64
}

/// Expected mean of `min(p_{n+1}, 1 − p_{n+1})` over the cached grid after a
/// noise-free evaluation at `candidate`, with the outcome integrated by
/// Gauss–Hermite quadrature.
pub fn expected_integrated_misclassification(
    model: &PosteriorModel,
    problem: &QsiProblem,
    cached: &CachedPosterior,
    candidate: &[f64],
    n_nodes: usize,
) -> Result<f64> {
    let upd = model.rank_one_update(cached, candidate, 0.0)?;
    let quant = gh_quantize(upd.predictive_mean, upd.predictive_variance.sqrt(), n_nodes)?;
    let region = problem.region();
    let mut total = 0.0;
    for g in 0..cached.len() {
        let sd = upd.variance[g].sqrt();
        let mut acc = 0.0;
        for (z, w) in quant.nodes.iter().zip(&quant.weights) {
            let mean = cached.mean[g] + upd.gain[g] * (z - upd.predictive_mean);
            let p = excursion_probability(mean, sd, region);
            acc += w * p.min(1.0 - p);
        }
        total += acc;
    }
    Ok(total / cached.len() as f64)
}

/// Joint-SUR step on explicit grid and candidate sets.
pub fn joint_sur_on(
    model: &PosteriorModel,
    problem: &QsiProblem,
    grid: &Points,
    candidates: Points,
    n_nodes: usize,
) -> Result<JointSurSelection> {
    if candidates.is_empty() {
        return Err(QsiError::InvalidArgument("no candidates".into()));
    }
    let cached = model.cache(grid)?;
    let current = integrated_misclassification(&cached, problem);
    let values = (0..candidates.len())
        .into_par_iter()
        .map(|c| expected_integrated_misclassification(model, problem, &cached, candidates.row(c), n_nodes))
        .collect::<Result<Vec<f64>>>()?;
    let selected = argmin(&values)
        .ok_or_else(|| QsiError::InvalidArgument("criterion is NaN at every candidate".into()))?;
    Ok(JointSurSelection {
        point: candidates.row(selected).to_vec(),
        selected,
        candidates,
        values,
        current,
    })
}

/// Joint-SUR: integrated misclassification of the joint excursion set over
/// `n_x · n_s` random joint points, minimized over `n_c` of them picked by
/// misclassification.
pub fn select_joint_sur<R: Rng + ?Sized>(
    model: &PosteriorModel,
    problem: &QsiProblem,
    config: &CriterionConfig,
    rng: &mut R,
) -> Result<JointSurSelection> {
    let n = config.n_x * config.n_s;
    if n == 0 || config.n_c == 0 {
        return Err(QsiError::Config("n_x · n_s and n_c must be positive".into()));
    }
    let grid = sample_joint(problem, n, rng);
    let scores = misclassification(model, problem, &grid)?;
    let picked = importance_subsample(&scores, config.n_c.min(n), rng)?.indices;
    joint_sur_on(model, problem, &grid, grid.select(&picked), config.n_nodes)
}
