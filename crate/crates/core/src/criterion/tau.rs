use rayon::prelude::*;
use rand::Rng;

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::Points;
use crate::gp::{excursion_probability, CriticalRegion, PosteriorModel};
use crate::rng::{fork_seed, keyed_rng};
use crate::sim::{GridPair, GridPosterior, PathEnsemble, SGrid};

use super::problem::QsiProblem;

/// Slack on `τ ≤ α` absorbing rounding in the weighted sums.
pub(crate) const TAU_TOL: f64 = 1e-12;

/// Monte Carlo estimate of `π_n(x) = P_n(τ(x) ≤ α)` on a set of `x` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub x_nodes: Points,
    pub pi: Vec<f64>,
    pub misclass: Vec<f64>,
}

impl TauEstimate {
    fn from_pi(x_nodes: Points, pi: Vec<f64>) -> Self {
        let misclass = pi.iter().map(|p| p.min(1.0 - p)).collect();
        TauEstimate { x_nodes, pi, misclass }
    }
}

/// Per-path `τ̂(x) = Σ_s w_s 1_C(ξ(x, s))` for the `x` node `ix` of an
/// `x`-major product grid, written into `tau`.
pub(crate) fn tau_per_path(
    ensemble: &PathEnsemble,
    ix: usize,
    s_weights: &[f64],
    region: &CriticalRegion,
    tau: &mut [f64],
) {
    tau.iter_mut().for_each(|t| *t = 0.0);
    let n_s = s_weights.len();
    for (is, w) in s_weights.iter().enumerate() {
        for (t, v) in tau.iter_mut().zip(ensemble.node_values(ix * n_s + is)) {
            if region.contains(*v) {
                *t += w;
            }
        }
    }
}

/// `π̂(x)` for every `x` node of an ensemble simulated on `X̃ × S̃`
/// (`x`-major, the first `n_x · n_s` columns).
pub fn pi_from_ensemble(
    ensemble: &PathEnsemble,
    n_x: usize,
    s_weights: &[f64],
    region: &CriticalRegion,
    alpha: f64,
) -> Vec<f64> {
    let m = ensemble.n_paths();
    let mut tau = vec![0.0; m];
    (0..n_x)
        .map(|ix| {
            tau_per_path(ensemble, ix, s_weights, region, &mut tau);
            tau.iter().filter(|t| **t <= alpha + TAU_TOL).count() as f64 / m as f64
        })
        .collect()
}

/// Path average of `Σ_s w_s 1_C(ξ(x, s))`, i.e. the estimate of
/// `P(ξ(x, S̃) ∈ C)` under the ensemble's conditioning.
pub fn expected_tau_next(ensemble: &PathEnsemble, n_x: usize, s_weights: &[f64], region: &CriticalRegion) -> Vec<f64> {
    let m = ensemble.n_paths();
    let mut tau = vec![0.0; m];
    (0..n_x)
        .map(|ix| {
            tau_per_path(ensemble, ix, s_weights, region, &mut tau);
            tau.iter().sum::<f64>() / m as f64
        })
        .collect()
}

/// `π̃_{n+1}(x)` from an ensemble already conditioned on the candidate outcome.
pub fn pi_tilde_next(ensemble: &PathEnsemble, n_x: usize, s_weights: &[f64], problem: &QsiProblem) -> Vec<f64> {
    pi_from_ensemble(ensemble, n_x, s_weights, problem.region(), problem.alpha())
}

/// Estimates `π_n` on `x_nodes` by simulating `m_paths` paths on each
/// `{x} × S̃` block.
///
/// Only the joint law over one block matters for `π_n(x)`, so blocks are
/// simulated independently; each draws from its own stream keyed by its index.
pub fn estimate_pi<R: Rng + ?Sized>(
    model: &PosteriorModel,
    problem: &QsiProblem,
    x_nodes: &Points,
    s_grid: &SGrid,
    m_paths: usize,
    rng: &mut R,
) -> Result<TauEstimate> {
    check_dim(problem.x_dim(), x_nodes.dim())?;
    check_dim(problem.s_dim(), s_grid.nodes.dim())?;
    if m_paths == 0 {
        return Err(QsiError::InvalidArgument("m_paths must be positive".into()));
    }
    let seed = fork_seed(rng);
    let pi = (0..x_nodes.len())
        .into_par_iter()
        .map(|ix| {
            let x = Points::from_flat(x_nodes.dim(), x_nodes.row(ix).to_vec())?;
            let block = Points::product(&x, &s_grid.nodes);
            let posterior = GridPosterior::new(model, block)?;
            let paths = posterior.sample(m_paths, &mut keyed_rng(seed, &[ix as u64]));
            Ok(pi_from_ensemble(&paths, 1, &s_grid.weights, problem.region(), problem.alpha())[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TauEstimate::from_pi(x_nodes.clone(), pi))
}

/// `Γ̂_n = {x : Σ_s w_s p_n(x, s) ≤ α}` in closed form, no simulation.
pub fn estimate_gamma_cheap(
    model: &PosteriorModel,
    problem: &QsiProblem,
    x_nodes: &Points,
    s_grid: &SGrid,
) -> Result<Vec<bool>> {
    Ok(expected_tau(model, problem, x_nodes, s_grid)?
        .into_iter()
        .map(|e| e <= problem.alpha() + TAU_TOL)
        .collect())
}

/// `E_n τ̃(x) = Σ_s w_s p_n(x, s)` on each `x` node.
pub fn expected_tau(model: &PosteriorModel, problem: &QsiProblem, x_nodes: &Points, s_grid: &SGrid) -> Result<Vec<f64>> {
    check_dim(problem.x_dim(), x_nodes.dim())?;
    check_dim(problem.s_dim(), s_grid.nodes.dim())?;
    (0..x_nodes.len())
        .into_par_iter()
        .map(|ix| {
            let x = Points::from_flat(x_nodes.dim(), x_nodes.row(ix).to_vec())?;
            let pred = model.predict(&Points::product(&x, &s_grid.nodes))?;
            Ok(s_grid
                .weights
                .iter()
                .enumerate()
                .map(|(is, w)| w * excursion_probability(pred.mean[is], pred.sd(is), problem.region()))
                .sum())
        })
        .collect()
}

/// Shared-sample estimate of the expected volume fraction of
/// `Γ(ξ) Δ {π̂ > 1/2}`, importance-weighted over the `x` nodes of `grid`.
pub fn expected_symdiff_fraction(ensemble: &PathEnsemble, grid: &GridPair, region: &CriticalRegion, alpha: f64) -> f64 {
    let m = ensemble.n_paths();
    let n_x = grid.n_x();
    let pi = pi_from_ensemble(ensemble, n_x, &grid.s.weights, region, alpha);
    let bayes: Vec<bool> = pi.iter().map(|p| *p > 0.5).collect();
    let mut tau = vec![0.0; m];
    let mut per_path = vec![0.0; m];
    for ix in 0..n_x {
        tau_per_path(ensemble, ix, &grid.s.weights, region, &mut tau);
        let w = grid.is_weight(ix);
        for (j, t) in tau.iter().enumerate() {
            if (*t <= alpha + TAU_TOL) != bayes[ix] {
                per_path[j] += w;
            }
        }
    }
    per_path.iter().sum::<f64>() / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxBounds;
    use crate::gp::{KernelSpec, ObservationSet, Regularity};
    use crate::problems::SDistribution;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_problem(alpha: f64) -> QsiProblem {
        let b = BoxBounds::unit(1);
        QsiProblem::new(b.clone(), b.clone(), SDistribution::uniform(&b).unwrap(), CriticalRegion::below(0.0), alpha)
            .unwrap()
    }

    fn ensemble(rows: &[&[f64]]) -> PathEnsemble {
        let m = rows.len();
        let g = rows[0].len();
        PathEnsemble::from_matrix(DMatrix::from_fn(m, g, |i, j| rows[i][j]))
    }

    #[test]
    fn cheap_estimate_on_a_known_function() {
        // A vanishing kernel variance pins the posterior to the constant mean.
        let pts = Points::from_rows(2, &[[0.5, 0.5]]).unwrap();
        let x = Points::from_rows(1, &[[0.1], [0.6], [0.9]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.2], [0.7]]).unwrap()).unwrap();
        for (level, member) in [(5.0, true), (-5.0, false)] {
            let obs = ObservationSet::noise_free(pts.clone(), vec![level]).unwrap();
            let k = KernelSpec::new(Regularity::FiveHalves, 1e-200, vec![0.3, 0.3]).unwrap();
            let model = PosteriorModel::new(k, level, obs).unwrap();
            let est = estimate_gamma_cheap(&model, &toy_problem(0.3), &x, &s).unwrap();
            assert_eq!(est, vec![member; 3]);
        }
    }

    #[test]
    fn cheap_estimate_with_alpha_near_one_keeps_everything() {
        let pts = Points::from_rows(2, &[[0.2, 0.3], [0.8, 0.6]]).unwrap();
        let obs = ObservationSet::noise_free(pts, vec![-3.0, -2.0]).unwrap();
        let k = KernelSpec::new(Regularity::ThreeHalves, 1.0, vec![0.4, 0.4]).unwrap();
        let model = PosteriorModel::new(k, -2.5, obs).unwrap();
        let x = Points::from_rows(1, &[[0.0], [0.25], [0.5], [1.0]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.1], [0.5], [0.9]]).unwrap()).unwrap();
        let est = estimate_gamma_cheap(&model, &toy_problem(1.0 - 1e-13), &x, &s).unwrap();
        assert!(est.iter().all(|m| *m));
    }

    #[test]
    fn literal_double_sum_examples() {
        let region = CriticalRegion::below(0.0);
        // one x node, two s nodes, two paths: indicators (1,0) and (1,1)
        let e = ensemble(&[&[-1.0, 1.0], &[-1.0, -1.0]]);
        assert!((expected_tau_next(&e, 1, &[0.5, 0.5], &region)[0] - 0.75).abs() < 1e-15);
        let single = ensemble(&[&[-1.0]]);
        assert_eq!(expected_tau_next(&single, 1, &[1.0], &region)[0], 1.0);
        let outside = ensemble(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(expected_tau_next(&outside, 2, &[1.0], &region), vec![0.0, 0.0]);
    }

    #[test]
    fn pi_counts_paths_meeting_the_constraint() {
        let p = toy_problem(0.5);
        // τ per path: 0.5 and 1.0
        let e = ensemble(&[&[-1.0, 1.0], &[-1.0, -1.0]]);
        assert_eq!(pi_tilde_next(&e, 1, &[0.5, 0.5], &p), vec![0.5]);
        let p = toy_problem(0.99);
        assert_eq!(pi_tilde_next(&e, 1, &[0.5, 0.5], &p), vec![0.5]);
        let p = toy_problem(0.4);
        assert_eq!(pi_tilde_next(&e, 1, &[0.5, 0.5], &p), vec![0.0]);
    }

    #[test]
    fn two_shape_enumeration() {
        // paths are one of two shapes with probability 1/2 each; 3 s nodes
        let region = CriticalRegion::below(0.0);
        let shape_a = [-1.0, -1.0, 1.0];
        let shape_b = [-1.0, 1.0, 1.0];
        let w = [1.0 / 3.0; 3];
        let alpha = 0.5;
        // τ(a) = 2/3 > α, τ(b) = 1/3 ≤ α, so π = 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 4000;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| if rng.random::<bool>() { shape_a.to_vec() } else { shape_b.to_vec() })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let pi = pi_from_ensemble(&ensemble(&refs), 1, &w, &region, alpha)[0];
        assert!((pi - 0.5).abs() < 3.0 * (0.25f64 / m as f64).sqrt());
    }

    fn flat_model(value: f64) -> PosteriorModel {
        let pts = Points::from_rows(2, &[[0.2, 0.3], [0.8, 0.6], [0.5, 0.1]]).unwrap();
        let obs = ObservationSet::noise_free(pts, vec![value; 3]).unwrap();
        let k = KernelSpec::new(Regularity::FiveHalves, 1e-12, vec![1.0, 1.0]).unwrap();
        PosteriorModel::new(k, value, obs).unwrap()
    }

    #[test]
    fn degenerate_posterior_gives_certain_pi() {
        let p = toy_problem(0.3);
        let x = Points::from_rows(1, &[[0.1], [0.9]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.2], [0.7]]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let below = estimate_pi(&flat_model(-1.0), &p, &x, &s, 100, &mut rng).unwrap();
        assert_eq!(below.pi, vec![0.0, 0.0]);
        let above = estimate_pi(&flat_model(1.0), &p, &x, &s, 100, &mut rng).unwrap();
        assert_eq!(above.pi, vec![1.0, 1.0]);
        assert_eq!(above.misclass, vec![0.0, 0.0]);
        assert_eq!(estimate_gamma_cheap(&flat_model(1.0), &p, &x, &s).unwrap(), vec![true, true]);
        assert_eq!(estimate_gamma_cheap(&flat_model(-1.0), &p, &x, &s).unwrap(), vec![false, false]);
    }

    #[test]
    fn vacuous_constraint() {
        let p = toy_problem(1.0 - 1e-9);
        let x = Points::from_rows(1, &[[0.1], [0.9]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.2], [0.7]]).unwrap()).unwrap();
        // paths avoid C, so τ = 0 and the constraint always holds
        let est = estimate_pi(&flat_model(1.0), &p, &x, &s, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(est.pi, vec![1.0, 1.0]);
        // paths always in C: τ = 1 exceeds any α < 1
        let est = estimate_pi(&flat_model(-1.0), &p, &x, &s, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(est.pi, vec![0.0, 0.0]);
    }

    #[test]
    fn estimate_pi_is_seed_deterministic() {
        let pts = Points::from_rows(2, &[[0.2, 0.3], [0.8, 0.6], [0.5, 0.1]]).unwrap();
        let obs = ObservationSet::noise_free(pts, vec![-0.3, 0.4, 0.1]).unwrap();
        let k = KernelSpec::new(Regularity::ThreeHalves, 1.0, vec![0.4, 0.4]).unwrap();
        let model = PosteriorModel::new(k, 0.0, obs).unwrap();
        let p = toy_problem(0.5);
        let x = Points::from_rows(1, &[[0.1], [0.5], [0.9]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.2], [0.7], [0.9]]).unwrap()).unwrap();
        let a = estimate_pi(&model, &p, &x, &s, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = estimate_pi(&model, &p, &x, &s, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.misclass.iter().all(|m| *m <= 0.5));
    }

    #[test]
    fn symdiff_identity_on_shared_samples() {
        let region = CriticalRegion::below(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let e = ensemble(&refs);
        let x = Points::from_rows(1, &[[0.1], [0.5], [0.9]]).unwrap();
        let s = SGrid::equally_weighted(Points::from_rows(1, &[[0.2], [0.7]]).unwrap()).unwrap();
        let grid = GridPair::uniform(x, s).unwrap();
        let pi = pi_from_ensemble(&e, 3, &grid.s.weights, &region, 0.5);
        let mean_mis: f64 = pi.iter().map(|p| p.min(1.0 - p)).sum::<f64>() / 3.0;
        let sd = expected_symdiff_fraction(&e, &grid, &region, 0.5);
        assert!((sd - mean_mis).abs() < 1e-12);
    }
}
