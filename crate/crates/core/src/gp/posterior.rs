use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::{BoxBounds, Points};

use super::gram::{build_gram, kernel_matrix, JITTER_LADDER};
use super::kernel::KernelSpec;
use super::normal;

/// Side of the threshold that counts as critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `C = (-∞, T]`
    Below,
    /// `C = [T, +∞)`
    Above,
}

/// Half-line critical region `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRegion {
    pub threshold: f64,
    pub orientation: Orientation,
}

impl CriticalRegion {
    pub fn below(threshold: f64) -> Self {
        CriticalRegion {
            threshold,
            orientation: Orientation::Below,
        }
    }

    pub fn above(threshold: f64) -> Self {
        CriticalRegion {
            threshold,
            orientation: Orientation::Above,
        }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        match self.orientation {
            Orientation::Below => v <= self.threshold,
            Orientation::Above => v >= self.threshold,
        }
    }
}

/// `P(Z ∈ C)` for `Z ~ N(mean, sd²)`; the indicator of `mean ∈ C` when `sd = 0`.
#[inline]
pub fn excursion_probability(mean: f64, sd: f64, region: &CriticalRegion) -> f64 {
    if sd <= 0.0 {
        return if region.contains(mean) { 1.0 } else { 0.0 };
    }
    let t = (region.threshold - mean) / sd;
    match region.orientation {
        Orientation::Below => normal::cdf(t),
        Orientation::Above => normal::cdf(-t),
    }
}

/// Evaluation points, observed values and per-observation noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    points: Points,
    values: Vec<f64>,
    noise_variances: Vec<f64>,
}

impl ObservationSet {
    pub fn new(points: Points, values: Vec<f64>, noise_variances: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), values.len())?;
        check_dim(points.len(), noise_variances.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(QsiError::InvalidArgument(format!("non-finite observation {v}")));
        }
        if let Some(nv) = noise_variances.iter().find(|v| !(**v >= 0.0)) {
            return Err(QsiError::InvalidArgument(format!(
                "noise variance must be non-negative, got {nv}"
            )));
        }
        Ok(ObservationSet {
            points,
            values,
            noise_variances,
        })
    }

    pub fn noise_free(points: Points, values: Vec<f64>) -> Result<Self> {
        let n = points.len();
        ObservationSet::new(points, values, vec![0.0; n])
    }

    pub fn push(&mut self, point: &[f64], value: f64, noise_variance: f64) -> Result<()> {
        if !value.is_finite() || !(noise_variance >= 0.0) {
            return Err(QsiError::InvalidArgument(format!(
                "bad observation value {value} / noise {noise_variance}"
            )));
        }
        self.points.push(point)?;
        self.values.push(value);
        self.noise_variances.push(noise_variance);
        Ok(())
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn is_noise_free(&self) -> bool {
        self.noise_variances.iter().all(|v| *v == 0.0)
    }

    pub fn check_within(&self, bounds: &BoxBounds) -> Result<()> {
        match self.points.iter().find(|p| !bounds.contains(p)) {
            Some(p) => Err(QsiError::OutOfBox { point: p.to_vec() }),
            None => Ok(()),
        }
    }
}

/// Posterior means and variances at a batch of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Prediction {
    pub fn sd(&self, i: usize) -> f64 {
        self.variance[i].sqrt()
    }
}

/// Posterior at a fixed set of query points, with `L⁻¹ K(U_n, Q)` kept for
/// cross-covariances and rank-one updates.
#[derive(Debug, Clone)]
pub struct CachedPosterior {
    pub points: Points,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    whitened: DMatrix<f64>,
}

impl CachedPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Effect of one extra observation at a fixed point on the cached posterior.
///
/// The updated mean is `mean + gain · (z − predictive_mean)`; the updated
/// variance does not depend on the outcome `z`.
#[derive(Debug, Clone)]
pub struct RankOneUpdate {
    pub predictive_mean: f64,
    /// Latent posterior variance at the new point.
    pub predictive_variance: f64,
    pub gain: Vec<f64>,
    pub variance: Vec<f64>,
    /// Set when the new point carries no information (zero posterior variance).
    pub degenerate: bool,
}

impl RankOneUpdate {
    pub fn mean_for(&self, cached: &CachedPosterior, outcome: f64) -> Vec<f64> {
        let delta = outcome - self.predictive_mean;
        cached
            .mean
            .iter()
            .zip(&self.gain)
            .map(|(m, g)| m + g * delta)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdatedMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub degenerate: bool,
}

/// Kriging model with a plug-in constant mean.
///
/// Values are immutable: conditioning on more data returns a new model.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    kernel: KernelSpec,
    mean_constant: f64,
    observations: ObservationSet,
    factor: DMatrix<f64>,
    weights: DVector<f64>,
    jitter: f64,
    degenerate: bool,
}

impl PosteriorModel {
    pub fn new(kernel: KernelSpec, mean_constant: f64, observations: ObservationSet) -> Result<Self> {
        check_dim(kernel.dim(), observations.dim())?;
        let gram = build_gram(&kernel, observations.points(), observations.noise_variances())?;
        let resid = DVector::from_iterator(
            observations.len(),
            observations.values().iter().map(|z| z - mean_constant),
        );
        let tmp = gram
            .factor
            .solve_lower_triangular(&resid)
            .expect("factor has a positive diagonal");
        let weights = gram
            .factor
            .tr_solve_lower_triangular(&tmp)
            .expect("factor has a positive diagonal");
        Ok(PosteriorModel {
            kernel,
            mean_constant,
            observations,
            factor: gram.factor,
            weights,
            jitter: gram.jitter,
            degenerate: false,
        })
    }

    pub(crate) fn mark_degenerate(mut self) -> Self {
        self.degenerate = true;
        self
    }

    /// Same hyperparameters, one more observation.
    pub fn with_observation(&self, point: &[f64], value: f64, noise_variance: f64) -> Result<Self> {
        let mut obs = self.observations.clone();
        obs.push(point, value, noise_variance)?;
        let m = PosteriorModel::new(self.kernel.clone(), self.mean_constant, obs)?;
        Ok(if self.degenerate { m.mark_degenerate() } else { m })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn mean_constant(&self) -> f64 {
        self.mean_constant
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Absolute jitter on the Gram diagonal; zero when it factorized as is.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior variances at or below this level carry no information.
    pub fn variance_resolution(&self) -> f64 {
        100.0 * self.jitter.max(JITTER_LADDER[0] * self.kernel.variance())
    }

    /// True when fitted to constant data; the kernel variance is then a floor value.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// `K(U_n, U_n) + diag(noise)`, without jitter.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut k = kernel_matrix(&self.kernel, self.observations.points());
        for (i, nv) in self.observations.noise_variances().iter().enumerate() {
            k[(i, i)] += nv;
        }
        k
    }

    fn cross_kernel(&self, query: &Points) -> DMatrix<f64> {
        let obs = self.observations.points();
        let mut k = DMatrix::zeros(obs.len(), query.len());
        for (j, q) in query.iter().enumerate() {
            for (i, u) in obs.iter().enumerate() {
                k[(i, j)] = self.kernel.eval_unchecked(u, q);
            }
        }
        k
    }

    fn clamp_variance(&self, v: f64) -> f64 {
        v.clamp(0.0, self.kernel.variance())
    }

    fn whiten(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .solve_lower_triangular(k)
            .expect("factor has a positive diagonal")
    }

    pub fn predict_point(&self, u: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), u.len())?;
        let obs = self.observations.points();
        let k = DVector::from_iterator(obs.len(), obs.iter().map(|p| self.kernel.eval_unchecked(p, u)));
        let mean = self.mean_constant + k.dot(&self.weights);
        let v = self
            .factor
            .solve_lower_triangular(&k)
            .expect("factor has a positive diagonal");
        Ok((mean, self.clamp_variance(self.kernel.variance() - v.norm_squared())))
    }

    pub fn predict(&self, query: &Points) -> Result<Prediction> {
        let cached = self.cache(query)?;
        Ok(Prediction {
            mean: cached.mean,
            variance: cached.variance,
        })
    }

    pub fn cache(&self, query: &Points) -> Result<CachedPosterior> {
        check_dim(self.dim(), query.dim())?;
        let k = self.cross_kernel(query);
        let whitened = self.whiten(&k);
        let mean = (0..query.len())
            .map(|j| self.mean_constant + k.column(j).dot(&self.weights))
            .collect();
        let variance = (0..query.len())
            .map(|j| self.clamp_variance(self.kernel.variance() - whitened.column(j).norm_squared()))
            .collect();
        Ok(CachedPosterior {
            points: query.clone(),
            mean,
            variance,
            whitened,
        })
    }

    /// Full posterior covariance matrix among `query` points.
    pub fn covariance(&self, query: &Points) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), query.dim())?;
        let whitened = self.whiten(&self.cross_kernel(query));
        let mut c = kernel_matrix(&self.kernel, query);
        c -= whitened.transpose() * &whitened;
        Ok(c)
    }

    pub fn excursion_probability(&self, u: &[f64], region: &CriticalRegion) -> Result<f64> {
        let (m, v) = self.predict_point(u)?;
        Ok(excursion_probability(m, v.sqrt(), region))
    }

    /// Moments at the cached points after observing the process at `new_point`
    /// with the given noise variance, as a function of the unknown outcome.
    pub fn rank_one_update(
        &self,
        cached: &CachedPosterior,
        new_point: &[f64],
        noise_variance: f64,
    ) -> Result<RankOneUpdate> {
        check_dim(self.dim(), new_point.len())?;
        let obs = self.observations.points();
        let k_new = DVector::from_iterator(
            obs.len(),
            obs.iter().map(|p| self.kernel.eval_unchecked(p, new_point)),
        );
        let predictive_mean = self.mean_constant + k_new.dot(&self.weights);
        let w_new = self
            .factor
            .solve_lower_triangular(&k_new)
            .expect("factor has a positive diagonal");
        let latent = self.kernel.variance() - w_new.norm_squared();
        let predictive_variance = self.clamp_variance(latent);
        let degenerate = noise_variance == 0.0 && latent <= self.variance_resolution();
        if degenerate {
            return Ok(RankOneUpdate {
                predictive_mean,
                predictive_variance,
                gain: vec![0.0; cached.len()],
                variance: cached.variance.clone(),
                degenerate,
            });
        }
        // Matches the diagonal entry a refit would see: k(u,u) + noise + jitter.
        let denom = latent + noise_variance + self.jitter;
        let mut gain = Vec::with_capacity(cached.len());
        let mut variance = Vec::with_capacity(cached.len());
        for (j, q) in cached.points.iter().enumerate() {
            let cov = self.kernel.eval_unchecked(q, new_point) - cached.whitened.column(j).dot(&w_new);
            gain.push(cov / denom);
            variance.push(self.clamp_variance(cached.variance[j] - cov * cov / denom));
        }
        Ok(RankOneUpdate {
            predictive_mean,
            predictive_variance,
            gain,
            variance,
            degenerate,
        })
    }

    /// Posterior mean and variance at the cached points after a noise-free
    /// observation `new_value` at `new_point`, hyperparameters held fixed.
    pub fn hypothetical_update(
        &self,
        cached: &CachedPosterior,
        new_point: &[f64],
        new_value: f64,
    ) -> Result<UpdatedMoments> {
        let upd = self.rank_one_update(cached, new_point, 0.0)?;
        Ok(UpdatedMoments {
            mean: upd.mean_for(cached, new_value),
            variance: upd.variance,
            degenerate: upd.degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Regularity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, n: usize, reg: Regularity) -> PosteriorModel {
        let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let pts = Points::from_rows(2, &rows).unwrap();
        let values = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
        let obs = ObservationSet::noise_free(pts, values).unwrap();
        let k = KernelSpec::new(reg, 1.3, vec![0.35, 0.6]).unwrap();
        PosteriorModel::new(k, 0.2, obs).unwrap()
    }

    #[test]
    fn excursion_probability_cases() {
        let below = CriticalRegion::below(7.5);
        assert_eq!(excursion_probability(7.0, 0.0, &below), 1.0);
        assert_eq!(excursion_probability(8.0, 0.0, &below), 0.0);
        assert_eq!(excursion_probability(7.5, 1.0, &below), 0.5);
        assert_eq!(excursion_probability(7.5, 1.0, &CriticalRegion::above(7.5)), 0.5);
        let p = excursion_probability(6.0, 2.0, &below);
        assert!((p - 0.773_372_647_623_131_7).abs() < 1e-12);
        assert!((p - 0.7734).abs() < 1e-4);
        let q = excursion_probability(6.0, 2.0, &CriticalRegion::above(7.5));
        assert!((p + q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interpolates_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 12, Regularity::FiveHalves);
        let pred = m.predict(m.observations().points()).unwrap();
        for (i, z) in m.observations().values().iter().enumerate() {
            assert!((pred.mean[i] - z).abs() < 1e-6);
            assert!(pred.variance[i] <= 1e-8 * m.kernel().variance());
        }
    }

    #[test]
    fn single_observation_closed_form() {
        let k = KernelSpec::new(Regularity::Half, 1.0, vec![1.0]).unwrap();
        let obs = ObservationSet::noise_free(Points::from_rows(1, &[[0.0]]).unwrap(), vec![2.0]).unwrap();
        let m = PosteriorModel::new(k, 0.0, obs).unwrap();
        for u in [0.3, -1.2, 2.5] {
            let (mean, _) = m.predict_point(&[u]).unwrap();
            let expected = 2.0 * (-(u as f64).abs()).exp();
            // jitter of 1e-10 σ² perturbs the 1×1 solve at that relative level
            assert!((mean - expected).abs() < 1e-9, "{mean} vs {expected}");
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 8, Regularity::ThreeHalves);
        let (mean, var) = m.predict_point(&[60.0, 80.0]).unwrap();
        assert!((mean - m.mean_constant()).abs() < 1e-6);
        assert!((var - m.kernel().variance()).abs() < 1e-6);
    }

    #[test]
    fn factor_reproduces_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 10, Regularity::Infinite);
        let mut target = m.gram();
        for i in 0..target.nrows() {
            target[(i, i)] += m.jitter();
        }
        let rel = (m.factor() * m.factor().transpose() - &target).norm() / target.norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn update_matches_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for reg in Regularity::ALL {
            let m = random_model(&mut rng, 5, reg);
            let query = Points::from_rows(2, &[[0.1, 0.9], [0.5, 0.5], [0.77, 0.2]]).unwrap();
            let cached = m.cache(&query).unwrap();
            let new_point = [rng.random::<f64>(), rng.random::<f64>()];
            let z = rng.random::<f64>() * 2.0 - 1.0;
            let upd = m.hypothetical_update(&cached, &new_point, z).unwrap();
            let refit = m.with_observation(&new_point, z, 0.0).unwrap().predict(&query).unwrap();
            for j in 0..query.len() {
                assert!((upd.mean[j] - refit.mean[j]).abs() < 1e-8);
                assert!((upd.variance[j] - refit.variance[j]).abs() < 1e-8);
            }
            let at_new = m.cache(&Points::from_rows(2, &[new_point]).unwrap()).unwrap();
            let upd_new = m.hypothetical_update(&at_new, &new_point, z).unwrap();
            assert!(upd_new.variance[0] <= 1e-8 * m.kernel().variance());
        }
    }

    #[test]
    fn redundant_observation_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 6, Regularity::FiveHalves);
        let query = Points::from_rows(2, &[[0.4, 0.4], [0.9, 0.1]]).unwrap();
        let cached = m.cache(&query).unwrap();
        let p = m.observations().points().row(3).to_vec();
        let z = m.observations().values()[3];
        let upd = m.hypothetical_update(&cached, &p, z).unwrap();
        assert!(upd.degenerate);
        for j in 0..2 {
            assert!((upd.mean[j] - cached.mean[j]).abs() < 1e-8);
            assert!((upd.variance[j] - cached.variance[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn covariance_diagonal_matches_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 7, Regularity::FiveHalves);
        let q = Points::from_rows(2, &[[0.2, 0.3], [0.8, 0.8], [0.5, 0.1]]).unwrap();
        let c = m.covariance(&q).unwrap();
        let p = m.predict(&q).unwrap();
        for i in 0..3 {
            assert!((c[(i, i)] - p.variance[i]).abs() < 1e-12);
        }
        assert!((c[(0, 1)] - c[(1, 0)]).abs() < 1e-15);
    }

    #[test]
    fn observation_set_validation() {
        let pts = Points::from_rows(1, &[[0.0], [1.0]]).unwrap();
        assert!(ObservationSet::new(pts.clone(), vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(ObservationSet::new(pts.clone(), vec![1.0, 2.0], vec![0.0, -1.0]).is_err());
        let obs = ObservationSet::noise_free(pts, vec![1.0, 2.0]).unwrap();
        assert!(obs.check_within(&BoxBounds::unit(1)).is_ok());
        assert!(obs.check_within(&BoxBounds::new(vec![0.5], vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn dimension_mismatch_on_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 4, Regularity::Half);
        assert!(m.predict_point(&[0.1]).is_err());
        assert!(m.predict(&Points::from_rows(3, &[[0.0, 0.0, 0.0]]).unwrap()).is_err());
    }
}
