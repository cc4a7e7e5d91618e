use rand::seq::SliceRandom;
use rand::Rng;

use crate::criterion::QsiProblem;
use crate::error::{QsiError, Result};
use crate::geometry::Points;
use crate::problems::s_transform;

/// One Latin hypercube of `n` points in `[0,1)^dim`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Points {
    let mut columns = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let col: Vec<f64> = perm
            .into_iter()
            .map(|p| (p as f64 + rng.random::<f64>()) / n as f64)
            .collect();
        columns.push(col);
    }
    let mut pts = Points::with_capacity(dim, n);
    let mut row = vec![0.0; dim];
    for i in 0..n {
        for (r, c) in row.iter_mut().zip(&columns) {
            *r = c[i];
        }
        pts.push(&row).expect("dimension matches");
    }
    pts
}

/// Smallest Euclidean distance between two distinct points.
pub fn min_distance(points: &Points) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}

/// Best of `n_candidates` Latin hypercubes in the unit cube for the
/// maximin criterion; the first best wins ties.
pub fn maximin_lhs<R: Rng + ?Sized>(n: usize, dim: usize, n_candidates: usize, rng: &mut R) -> Result<Points> {
    if n < 2 || n_candidates == 0 || dim == 0 {
        return Err(QsiError::InvalidArgument(format!(
            "maximin LHS needs n ≥ 2 and at least one candidate, got n = {n}, candidates = {n_candidates}"
        )));
    }
    let mut best = latin_hypercube(n, dim, rng);
    let mut best_d = min_distance(&best);
    for _ in 1..n_candidates {
        let cand = latin_hypercube(n, dim, rng);
        let d = min_distance(&cand);
        if d > best_d {
            best = cand;
            best_d = d;
        }
    }
    Ok(best)
}

/// Initial design on `X × S`: a maximin LHS in the unit cube whose `x`
/// coordinates are rescaled to `X` and whose `s` coordinates go through the
/// quantile transform of `P_S`.
pub fn make_initial_design<R: Rng + ?Sized>(
    n0: usize,
    problem: &QsiProblem,
    n_candidates: usize,
    rng: &mut R,
) -> Result<Points> {
    let unit = maximin_lhs(n0, problem.joint_dim(), n_candidates, rng)?;
    let dx = problem.x_dim();
    let mut pts = Points::with_capacity(problem.joint_dim(), n0);
    for u in unit.iter() {
        let mut p = problem.x_box().from_unit(&u[..dx]);
        p.extend(s_transform(problem.s_distribution(), &u[dx..])?);
        pts.push(&p)?;
    }
    Ok(pts)
}
