use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::Points;

use super::kernel::KernelSpec;

/// Relative diagonal jitter levels tried in order, as multiples of `σ²`.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Kernel matrix plus diagonal noise, with its Cholesky factorization.
#[derive(Debug, Clone)]
pub struct Gram {
    /// `K + diag(noise)`, without jitter.
    pub matrix: DMatrix<f64>,
    /// Lower-triangular `L` with `L Lᵀ = matrix + jitter · I`.
    pub factor: DMatrix<f64>,
    /// Absolute jitter added to the diagonal.
    pub jitter: f64,
}

/// Factorizes `matrix + j·scale·I`, walking up [`JITTER_LADDER`].
///
/// Returns the lower factor and the absolute jitter used.
pub fn factorize_with_jitter(matrix: &DMatrix<f64>, scale: f64) -> Option<(DMatrix<f64>, f64)> {
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(m) {
            let l = chol.unpack();
            if (0..l.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Some((l, jitter));
            }
        }
    }
    None
}

/// Factorizes `matrix` as is, falling back to [`factorize_with_jitter`] only
/// when that fails.
pub fn factorize_exact_first(matrix: &DMatrix<f64>, scale: f64) -> Option<(DMatrix<f64>, f64)> {
    if let Some(chol) = Cholesky::<f64, Dyn>::new(matrix.clone()) {
        let l = chol.unpack();
        if (0..l.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
            return Some((l, 0.0));
        }
    }
    factorize_with_jitter(matrix, scale)
}

pub(crate) fn kernel_matrix(spec: &KernelSpec, points: &Points) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let pi = points.row(i);
        k[(i, i)] = spec.variance();
        for j in 0..i {
            let v = spec.eval_unchecked(pi, points.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Pairs of points closer than `tol` in scaled distance.
pub(crate) fn near_duplicates(spec: &KernelSpec, points: &Points, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in 0..i {
            if spec.scaled_distance(points.row(i), points.row(j)) <= tol {
                out.push((j, i));
            }
        }
    }
    out
}

pub fn build_gram(spec: &KernelSpec, points: &Points, noise_variances: &[f64]) -> Result<Gram> {
    if points.is_empty() {
        return Err(QsiError::InvalidArgument("no points".into()));
    }
    check_dim(spec.dim(), points.dim())?;
    check_dim(points.len(), noise_variances.len())?;
    let mut matrix = kernel_matrix(spec, points);
    for (i, nv) in noise_variances.iter().enumerate() {
        matrix[(i, i)] += nv;
    }
    match factorize_exact_first(&matrix, spec.variance()) {
        Some((factor, jitter)) => Ok(Gram {
            matrix,
            factor,
            jitter,
        }),
        None => Err(QsiError::Singular {
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * spec.variance(),
            duplicates: near_duplicates(spec, points, 1e-8),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Regularity;
    use rand::{Rng, SeedableRng};

    fn relative_recomposition_error(g: &Gram) -> f64 {
        let mut target = g.matrix.clone();
        for i in 0..target.nrows() {
            target[(i, i)] += g.jitter;
        }
        let diff = &g.factor * g.factor.transpose() - &target;
        diff.norm() / target.norm()
    }

    #[test]
    fn single_point() {
        let k = KernelSpec::new(Regularity::FiveHalves, 2.0, vec![1.0]).unwrap();
        let pts = Points::from_rows(1, &[[0.3]]).unwrap();
        let g = build_gram(&k, &pts, &[0.0]).unwrap();
        assert_eq!(g.matrix[(0, 0)], 2.0);
        assert_eq!(g.jitter, 0.0);
        assert!((g.factor[(0, 0)].powi(2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ladder_always_adds_jitter() {
        let m = DMatrix::from_element(1, 1, 2.0);
        let (l, j) = factorize_with_jitter(&m, 2.0).unwrap();
        assert_eq!(j, 2e-10);
        assert!((l[(0, 0)].powi(2) - (2.0 + j)).abs() < 1e-15);
        assert_eq!(factorize_exact_first(&m, 2.0).unwrap().1, 0.0);
    }

    #[test]
    fn duplicated_points_need_jitter() {
        let k = KernelSpec::new(Regularity::Half, 1.0, vec![1.0]).unwrap();
        let pts = Points::from_rows(1, &[[0.5], [0.5]]).unwrap();
        let g = build_gram(&k, &pts, &[0.0, 0.0]).unwrap();
        assert!(g.jitter > 0.0);
        assert!((0..2).all(|i| g.factor[(i, i)] > 0.0));
    }

    #[test]
    fn factor_recomposes_gram() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for reg in Regularity::ALL {
            let k = KernelSpec::new(reg, 1.7, vec![0.4, 0.9]).unwrap();
            let rows: Vec<[f64; 2]> = (0..3).map(|_| [rng.random(), rng.random()]).collect();
            let pts = Points::from_rows(2, &rows).unwrap();
            let g = build_gram(&k, &pts, &[0.0; 3]).unwrap();
            assert!(relative_recomposition_error(&g) < 1e-10);
        }
    }

    #[test]
    fn noise_enters_the_diagonal() {
        let k = KernelSpec::new(Regularity::Half, 1.0, vec![1.0]).unwrap();
        let pts = Points::from_rows(1, &[[0.0], [1.0]]).unwrap();
        let g = build_gram(&k, &pts, &[0.5, 0.25]).unwrap();
        assert_eq!(g.matrix[(0, 0)], 1.5);
        assert_eq!(g.matrix[(1, 1)], 1.25);
    }

    #[test]
    fn empty_points_rejected() {
        let k = KernelSpec::new(Regularity::Half, 1.0, vec![1.0]).unwrap();
        assert!(build_gram(&k, &Points::new(1), &[]).is_err());
    }
}
