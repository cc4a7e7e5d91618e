use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::Points;
use crate::problems::SDistribution;

/// Largest simulation grid accepted (`|X̃ × S̃|` plus extra candidate columns).
pub const GRID_SIZE_LIMIT: usize = 4000;

/// Weighted discretization `S̃` of the uncertain-input distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SGrid {
    pub nodes: Points,
    pub weights: Vec<f64>,
}

impl SGrid {
    pub fn new(nodes: Points, weights: Vec<f64>) -> Result<Self> {
        check_dim(nodes.len(), weights.len())?;
        if nodes.is_empty() {
            return Err(QsiError::InvalidArgument("empty S grid".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(QsiError::InvalidArgument(format!(
                "S weights must be positive and sum to one (sum = {total})"
            )));
        }
        Ok(SGrid { nodes, weights })
    }

    /// Equal weights `1 / n`.
    pub fn equally_weighted(nodes: Points) -> Result<Self> {
        let n = nodes.len();
        SGrid::new(nodes, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `n_s` i.i.d. draws from `P_S`, each with weight `1 / n_s`.
pub fn quantize_s<R: Rng + ?Sized>(dist: &SDistribution, n_s: usize, rng: &mut R) -> Result<SGrid> {
    if n_s == 0 {
        return Err(QsiError::InvalidArgument("n_s must be at least 1".into()));
    }
    let mut nodes = Points::with_capacity(dist.dim(), n_s);
    for _ in 0..n_s {
        nodes.push(&dist.sample(rng))?;
    }
    SGrid::equally_weighted(nodes)
}

/// Integration grid `X̃` with importance densities, crossed with `S̃`.
///
/// `x_density[i]` is the sampling density of node `i` relative to a uniform
/// draw over a candidate population of size `population`; the integral of a
/// function over `X`, as a fraction of its volume, is estimated by
/// `Σ g(x) / (population · p_X(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPair {
    pub x_nodes: Points,
    pub x_density: Vec<f64>,
    pub population: usize,
    pub s: SGrid,
}

impl GridPair {
    pub fn new(x_nodes: Points, x_density: Vec<f64>, population: usize, s: SGrid) -> Result<Self> {
        check_dim(x_nodes.len(), x_density.len())?;
        if x_nodes.is_empty() || population == 0 {
            return Err(QsiError::InvalidArgument("empty X grid".into()));
        }
        if let Some(p) = x_density.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(QsiError::InvalidArgument(format!(
                "importance densities must be positive, got {p}"
            )));
        }
        Ok(GridPair {
            x_nodes,
            x_density,
            population,
            s,
        })
    }

    /// Plain average over `x_nodes`.
    pub fn uniform(x_nodes: Points, s: SGrid) -> Result<Self> {
        let n = x_nodes.len();
        GridPair::new(x_nodes, vec![1.0; n], n, s)
    }

    pub fn n_x(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn n_s(&self) -> usize {
        self.s.len()
    }

    pub fn len(&self) -> usize {
        self.n_x() * self.n_s()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row of `(x_i, s_j)` in [`GridPair::product_points`].
    pub fn index(&self, ix: usize, is: usize) -> usize {
        ix * self.n_s() + is
    }

    pub fn product_points(&self) -> Points {
        Points::product(&self.x_nodes, &self.s.nodes)
    }

    /// Importance weight `1 / (population · p_X(x_i))`.
    pub fn is_weight(&self, ix: usize) -> f64 {
        1.0 / (self.population as f64 * self.x_density[ix])
    }

    /// Importance-weighted volume fraction of a per-node quantity.
    pub fn integrate(&self, per_x: &[f64]) -> f64 {
        per_x
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.is_weight(i))
            .sum()
    }
}

/// Discretization `Σ w_i δ_{z_i}` of a Gaussian outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeQuantization {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OutcomeQuantization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// Orthonormal probabilists' Hermite values at `x`:
/// returns `(p_n(x), p_{n-1}(x), Σ_{k<n} p_k(x)²)`.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sumsq)
}

/// Standard-normal Gauss–Hermite rule with `n` nodes (Golub–Welsch, then a
/// Newton polish of the nodes and Christoffel weights).
fn standard_gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (pn, pn1, _) = hermite_orthonormal(n, *x);
            let d = (n as f64).sqrt() * pn1;
            if d != 0.0 {
                *x -= pn / d;
            }
        }
    }
    // exact symmetry about zero
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes.iter().map(|x| 1.0 / hermite_orthonormal(n, *x).2).collect();
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Gauss–Hermite quantization of `N(mean, sd²)`; `sd = 0` collapses to one node.
pub fn gh_quantize(mean: f64, sd: f64, n_nodes: usize) -> Result<OutcomeQuantization> {
    if n_nodes == 0 {
        return Err(QsiError::InvalidArgument("need at least one node".into()));
    }
    if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(QsiError::InvalidArgument(format!(
            "bad normal parameters mean = {mean}, sd = {sd}"
        )));
    }
    if sd == 0.0 {
        return Ok(OutcomeQuantization {
            nodes: vec![mean],
            weights: vec![1.0],
        });
    }
    let (x, weights) = standard_gauss_hermite(n_nodes);
    Ok(OutcomeQuantization {
        nodes: x.iter().map(|t| mean + sd * t).collect(),
        weights,
    })
}
