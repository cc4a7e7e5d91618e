//! Restricted maximum likelihood for the constant-mean Matérn model.
//!
//! The constant mean is profiled out analytically. For noise-free data the
//! process variance is profiled as well, `σ̂² = rᵀR⁻¹r / (n − 1)`, leaving only
//! the log-lengthscales to the Nelder–Mead search; with observation noise the
//! log-variance is searched too. Each allowed regularity is fitted separately
//! and the one with the lowest restricted negative log-likelihood wins.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::BoxBounds;
use crate::rng::keyed_rng;

use super::gram::{factorize_with_jitter, kernel_matrix};
use super::kernel::{KernelSpec, Regularity};
use super::optim::{nelder_mead, NelderMeadOptions};
use super::posterior::{ObservationSet, PosteriorModel};

/// Variance assigned to models fitted on constant data.
const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RemlConfig {
    pub regularities: Vec<Regularity>,
    pub starts: usize,
    /// Lengthscale range as multiples of the per-dimension box width.
    pub lengthscale_bounds: (f64, f64),
    pub optimizer: NelderMeadOptions,
    pub seed: u64,
}

impl Default for RemlConfig {
    fn default() -> Self {
        RemlConfig {
            regularities: Regularity::ALL.to_vec(),
            starts: 5,
            lengthscale_bounds: (0.01, 10.0),
            optimizer: NelderMeadOptions {
                max_evals: 250,
                f_tol: 1e-7,
                x_tol: 1e-4,
                initial_step: 0.7,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RemlValue {
    nll: f64,
    mean: f64,
    variance: f64,
}

/// Restricted negative log-likelihood (up to an additive constant).
///
/// For noise-free observations the variance of `kernel` is ignored and
/// replaced by its profiled optimum, returned alongside the profiled mean as
/// `(nll, mean, variance)`. Returns `None` if the matrix cannot be factorized.
pub fn restricted_nll(kernel: &KernelSpec, observations: &ObservationSet) -> Option<(f64, f64, f64)> {
    let v = if observations.is_noise_free() {
        profiled_nll(kernel, observations)
    } else {
        noisy_nll(kernel, observations)
    }?;
    Some((v.nll, v.mean, v.variance))
}

fn gls_terms(factor: &DMatrix<f64>, z: &[f64]) -> (f64, f64, f64) {
    let n = z.len();
    let ones = DVector::from_element(n, 1.0);
    let zv = DVector::from_column_slice(z);
    let a = factor.solve_lower_triangular(&ones).expect("positive diagonal");
    let b = factor.solve_lower_triangular(&zv).expect("positive diagonal");
    let aa = a.norm_squared();
    let ab = a.dot(&b);
    let mean = ab / aa;
    let quad = (b.norm_squared() - ab * ab / aa).max(0.0);
    (aa, mean, quad)
}

fn log_det(factor: &DMatrix<f64>) -> f64 {
    2.0 * (0..factor.nrows()).map(|i| factor[(i, i)].ln()).sum::<f64>()
}

fn profiled_nll(kernel: &KernelSpec, obs: &ObservationSet) -> Option<RemlValue> {
    let n = obs.len();
    let shape = kernel.with_variance(1.0).ok()?;
    let r = kernel_matrix(&shape, obs.points());
    let (factor, _) = factorize_with_jitter(&r, 1.0)?;
    let (aa, mean, quad) = gls_terms(&factor, obs.values());
    let variance = (quad / (n - 1) as f64).max(f64::MIN_POSITIVE);
    let nll = 0.5 * ((n - 1) as f64 * variance.ln() + log_det(&factor) + aa.ln());
    Some(RemlValue { nll, mean, variance })
}

fn noisy_nll(kernel: &KernelSpec, obs: &ObservationSet) -> Option<RemlValue> {
    let mut k = kernel_matrix(kernel, obs.points());
    for (i, nv) in obs.noise_variances().iter().enumerate() {
        k[(i, i)] += nv;
    }
    let (factor, _) = factorize_with_jitter(&k, kernel.variance())?;
    let (aa, mean, quad) = gls_terms(&factor, obs.values());
    let nll = 0.5 * (log_det(&factor) + aa.ln() + quad);
    Some(RemlValue {
        nll,
        mean,
        variance: kernel.variance(),
    })
}

struct Candidate {
    nll: f64,
    kernel: KernelSpec,
    mean: f64,
}

fn fit_one(
    reg: Regularity,
    reg_index: usize,
    obs: &ObservationSet,
    widths: &[f64],
    value_variance: f64,
    config: &RemlConfig,
    warm_start: Option<&KernelSpec>,
) -> Option<Candidate> {
    let d = widths.len();
    let noisy = !obs.is_noise_free();
    let (lo_mult, hi_mult) = config.lengthscale_bounds;
    let mut lower: Vec<f64> = widths.iter().map(|w| (lo_mult * w).ln()).collect();
    let mut upper: Vec<f64> = widths.iter().map(|w| (hi_mult * w).ln()).collect();
    if noisy {
        lower.push((value_variance * 1e-6).ln());
        upper.push((value_variance * 1e4).ln());
    }

    let evaluate = |theta: &[f64]| -> Option<(RemlValue, KernelSpec)> {
        let ls: Vec<f64> = theta[..d].iter().map(|t| t.exp()).collect();
        let var = if noisy { theta[d].exp() } else { 1.0 };
        let k = KernelSpec::new(reg, var, ls).ok()?;
        let v = if noisy {
            noisy_nll(&k, obs)?
        } else {
            profiled_nll(&k, obs)?
        };
        Some((v, k))
    };
    let project = |theta: &[f64]| -> (Vec<f64>, f64) {
        let mut pen = 0.0;
        let p = theta
            .iter()
            .zip(lower.iter().zip(&upper))
            .map(|(t, (lo, hi))| {
                let c = t.clamp(*lo, *hi);
                pen += (t - c) * (t - c);
                c
            })
            .collect();
        (p, pen)
    };
    let objective = |theta: &[f64]| -> f64 {
        let (p, pen) = project(theta);
        match evaluate(&p) {
            Some((v, _)) => v.nll + 1e3 * pen,
            None => f64::INFINITY,
        }
    };

    let mut rng = keyed_rng(config.seed, &[reg_index as u64]);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.starts.max(1));
    let mut first: Vec<f64> = match warm_start {
        Some(ws) if ws.dim() == d => ws.lengthscales().iter().map(|l| l.ln()).collect(),
        _ => widths.iter().map(|w| (0.3 * w).ln()).collect(),
    };
    if noisy {
        first.push(match warm_start {
            Some(ws) => ws.variance().ln(),
            None => value_variance.max(1e-12).ln(),
        });
    }
    starts.push(project(&first).0);
    while starts.len() < config.starts.max(1) {
        let mut s: Vec<f64> = widths
            .iter()
            .map(|w| (w * 0.05).ln() + rng.random::<f64>() * (40f64).ln())
            .collect();
        if noisy {
            s.push(value_variance.max(1e-12).ln() + rng.random::<f64>() * 4.0 - 2.0);
        }
        starts.push(project(&s).0);
    }

    let mut best: Option<Candidate> = None;
    for s in &starts {
        let res = nelder_mead(objective, s, &config.optimizer);
        let (p, _) = project(&res.x);
        if let Some((v, k)) = evaluate(&p) {
            if best.as_ref().is_none_or(|b| v.nll < b.nll) {
                let kernel = if noisy { k } else { k.with_variance(v.variance).ok()? };
                best = Some(Candidate {
                    nll: v.nll,
                    kernel,
                    mean: v.mean,
                });
            }
        }
    }
    best
}

/// Fits the constant-mean Matérn model by restricted maximum likelihood.
///
/// Deterministic for a given `config.seed`. `warm_start`, typically the
/// previous fit in a sequential design, seeds the first local search of every
/// regularity.
pub fn fit_reml(
    observations: &ObservationSet,
    bounds: &BoxBounds,
    config: &RemlConfig,
    warm_start: Option<&KernelSpec>,
) -> Result<PosteriorModel> {
    check_dim(bounds.dim(), observations.dim())?;
    let n = observations.len();
    if n < 2 {
        return Err(QsiError::InvalidArgument(
            "ReML needs at least two observations".into(),
        ));
    }
    let pts = observations.points();
    let distinct = (1..n).any(|i| pts.row(i) != pts.row(0));
    if !distinct {
        return Err(QsiError::InvalidArgument(
            "ReML needs at least two distinct points".into(),
        ));
    }
    if config.regularities.is_empty() {
        return Err(QsiError::InvalidArgument("no regularity to enumerate".into()));
    }
    let widths = bounds.widths();
    let z = observations.values();
    let zmean = z.iter().sum::<f64>() / n as f64;
    let value_variance = z.iter().map(|v| (v - zmean).powi(2)).sum::<f64>() / n as f64;
    let scale = z.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let spread = z.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v))
        - z.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if spread <= 1e-12 * scale {
        log::warn!("ReML on constant data: returning a degenerate model");
        let k = KernelSpec::new(Regularity::FiveHalves, DEGENERATE_VARIANCE, widths)?;
        return Ok(PosteriorModel::new(k, z[0], observations.clone())?.mark_degenerate());
    }

    let fits: Vec<Option<Candidate>> = config
        .regularities
        .par_iter()
        .enumerate()
        .map(|(i, reg)| fit_one(*reg, i, observations, &widths, value_variance, config, warm_start))
        .collect();
    let mut best: Option<Candidate> = None;
    for c in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| c.nll < b.nll) {
            best = Some(c);
        }
    }
    let best = best.ok_or(QsiError::Singular {
        jitter: super::JITTER_LADDER[super::JITTER_LADDER.len() - 1],
        duplicates: super::gram::near_duplicates(
            &KernelSpec::new(Regularity::Half, 1.0, bounds.widths())?,
            pts,
            1e-8,
        ),
    })?;
    PosteriorModel::new(best.kernel, best.mean, observations.clone())
}
