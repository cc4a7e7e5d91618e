use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QsiError, Result};
use crate::geometry::Points;
use crate::gp::{factorize_with_jitter, PosteriorModel};

use super::quantize::GRID_SIZE_LIMIT;

/// Joint posterior on a finite grid, factorized for path simulation.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    points: Points,
    mean: Vec<f64>,
    /// Posterior covariance including the simulation jitter on the diagonal.
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
    noop_threshold: f64,
}

impl GridPosterior {
    pub fn new(model: &PosteriorModel, points: Points) -> Result<Self> {
        if points.is_empty() {
            return Err(QsiError::InvalidArgument("empty simulation grid".into()));
        }
        if points.len() > GRID_SIZE_LIMIT {
            return Err(QsiError::InvalidArgument(format!(
                "simulation grid has {} nodes, limit is {GRID_SIZE_LIMIT}",
                points.len()
            )));
        }
        let mean = model.predict(&points)?.mean;
        let mut covariance = model.covariance(&points)?;
        let sigma2 = model.kernel().variance();
        let (factor, jitter) = match factorize_with_jitter(&covariance, sigma2) {
            Some(f) => f,
            None => {
                log::warn!(
                    "posterior covariance on {} grid nodes not factorizable, clipping its spectrum",
                    points.len()
                );
                (clipped_root(&covariance), 0.0)
            }
        };
        for i in 0..covariance.nrows() {
            covariance[(i, i)] += jitter;
        }
        Ok(GridPosterior {
            points,
            mean,
            covariance,
            factor,
            jitter,
            noop_threshold: model.variance_resolution(),
        })
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Variance at node `c` as seen by the simulated paths.
    pub fn variance(&self, c: usize) -> f64 {
        self.covariance[(c, c)]
    }

    /// Regression coefficients `Cov(ξ(g), ξ(c)) / Var ξ(c)` of every node on
    /// node `c`, or `None` when node `c` is already known.
    pub fn kriging_weights(&self, c: usize) -> Option<Vec<f64>> {
        let v = self.covariance[(c, c)];
        if v - self.jitter <= self.noop_threshold {
            return None;
        }
        Some(self.covariance.column(c).iter().map(|k| k / v).collect())
    }

    /// `m` independent joint draws, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> PathEnsemble {
        let g = self.len();
        let eps = DMatrix::<f64>::from_fn(g, m, |_, _| rng.sample(StandardNormal));
        let draws = &self.factor * eps;
        let values = DMatrix::from_fn(m, g, |i, j| self.mean[j] + draws[(j, i)]);
        PathEnsemble {
            values,
            conditioning_node: None,
        }
    }
}

fn clipped_root(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let mut root = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        root.column_mut(j).scale_mut(s);
    }
    root
}

/// Sample paths on a grid, stored as an `M × G` matrix (paths in rows).
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    values: DMatrix<f64>,
    conditioning_node: Option<usize>,
}

impl PathEnsemble {
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        PathEnsemble {
            values,
            conditioning_node: None,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn value(&self, path: usize, node: usize) -> f64 {
        self.values[(path, node)]
    }

    /// All path values at one grid node.
    pub fn node_values(&self, node: usize) -> &[f64] {
        let m = self.n_paths();
        &self.values.as_slice()[node * m..(node + 1) * m]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Grid node the ensemble was last reconditioned on, if any.
    pub fn conditioning_node(&self) -> Option<usize> {
        self.conditioning_node
    }
}

/// Draws `m` conditional paths of the model on `points`.
pub fn simulate_paths<R: Rng + ?Sized>(
    model: &PosteriorModel,
    points: Points,
    m: usize,
    rng: &mut R,
) -> Result<PathEnsemble> {
    Ok(GridPosterior::new(model, points)?.sample(m, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconditionStatus {
    Applied,
    /// The conditioning node has no posterior variance; paths are unchanged.
    NoOp,
}

/// Turns paths of `ξ | data` into paths of `ξ | data, ξ(c) = outcome` by
/// residual kriging: `path + λ (outcome − path_c)`.
pub fn recondition_paths(
    ensemble: &PathEnsemble,
    posterior: &GridPosterior,
    candidate: usize,
    outcome: f64,
) -> Result<(PathEnsemble, ReconditionStatus)> {
    if ensemble.n_points() != posterior.len() {
        return Err(QsiError::DimensionMismatch {
            expected: posterior.len(),
            got: ensemble.n_points(),
        });
    }
    if candidate >= posterior.len() {
        return Err(QsiError::InvalidArgument(format!(
            "candidate index {candidate} outside grid of {}",
            posterior.len()
        )));
    }
    let Some(lambda) = posterior.kriging_weights(candidate) else {
        return Ok((ensemble.clone(), ReconditionStatus::NoOp));
    };
    let mut values = ensemble.values.clone();
    let residual: Vec<f64> = ensemble.node_values(candidate).iter().map(|v| outcome - v).collect();
    for (j, l) in lambda.iter().enumerate() {
        let mut col = values.column_mut(j);
        for (v, r) in col.iter_mut().zip(&residual) {
            *v += l * r;
        }
    }
    Ok((
        PathEnsemble {
            values,
            conditioning_node: Some(candidate),
        },
        ReconditionStatus::Applied,
    ))
}
