use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, QsiError, Result};
use crate::geometry::BoxBounds;

/// One-dimensional law of an uncertain input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    /// `lo + (hi − lo) · B` with `B ~ Beta(a, b)`.
    ScaledBeta { a: f64, b: f64, lo: f64, hi: f64 },
}

impl Marginal {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(QsiError::InvalidArgument(format!("bad support [{lo}, {hi}]")));
        }
        Ok(Marginal::Uniform { lo, hi })
    }

    pub fn scaled_beta(a: f64, b: f64, lo: f64, hi: f64) -> Result<Self> {
        Marginal::uniform(lo, hi)?;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(QsiError::InvalidArgument(format!("bad beta shape ({a}, {b})")));
        }
        Ok(Marginal::ScaledBeta { a, b, lo, hi })
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform { lo, hi } | Marginal::ScaledBeta { lo, hi, .. } => (lo, hi),
        }
    }

    fn standardize(&self, s: f64) -> f64 {
        let (lo, hi) = self.support();
        ((s - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let t = self.standardize(s);
        match *self {
            Marginal::Uniform { .. } => t,
            Marginal::ScaledBeta { a, b, .. } => {
                if t <= 0.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, t)
                }
            }
        }
    }

    pub fn pdf(&self, s: f64) -> f64 {
        let (lo, hi) = self.support();
        if s < lo || s > hi {
            return 0.0;
        }
        let w = hi - lo;
        match *self {
            Marginal::Uniform { .. } => 1.0 / w,
            Marginal::ScaledBeta { a, b, .. } => {
                let t = (s - lo) / w;
                let log_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
                log_norm.exp() * t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0) / w
            }
        }
    }

    /// Quantile function; `u` is clamped to `[0, 1]`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let u = u.clamp(0.0, 1.0);
        match *self {
            Marginal::Uniform { .. } => lo + (hi - lo) * u,
            Marginal::ScaledBeta { a, b, .. } => {
                if u <= 0.0 {
                    return lo;
                }
                if u >= 1.0 {
                    return hi;
                }
                let (mut left, mut right) = (0.0f64, 1.0f64);
                for _ in 0..100 {
                    let mid = 0.5 * (left + right);
                    if beta_reg(a, b, mid) < u {
                        left = mid;
                    } else {
                        right = mid;
                    }
                    if right - left < 1e-15 {
                        break;
                    }
                }
                lo + (hi - lo) * 0.5 * (left + right)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Marginal::ScaledBeta { a, b, lo, hi } => {
                let beta = Beta::new(a, b).expect("shape validated at construction");
                lo + (hi - lo) * beta.sample(rng)
            }
        }
    }
}

/// Product law `P_S` of independent marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SDistribution {
    marginals: Vec<Marginal>,
}

impl SDistribution {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(QsiError::InvalidArgument("S distribution needs at least one marginal".into()));
        }
        Ok(SDistribution { marginals })
    }

    /// Uniform law on a box.
    pub fn uniform(bounds: &BoxBounds) -> Result<Self> {
        let m = (0..bounds.dim())
            .map(|j| Marginal::uniform(bounds.lower()[j], bounds.upper()[j]))
            .collect::<Result<Vec<_>>>()?;
        SDistribution::new(m)
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn support(&self) -> BoxBounds {
        let (lo, hi) = self.marginals.iter().map(|m| m.support()).unzip();
        BoxBounds::new(lo, hi).expect("marginal supports are valid")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    /// Coordinate-wise quantile transform of a point of the unit cube.
    pub fn inverse_cdf(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), u.len())?;
        Ok(self.marginals.iter().zip(u).map(|(m, t)| m.inverse_cdf(*t)).collect())
    }

    pub fn cdf(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), s.len())?;
        Ok(self.marginals.iter().zip(s).map(|(m, t)| m.cdf(*t)).collect())
    }

    pub fn density(&self, s: &[f64]) -> Result<f64> {
        check_dim(self.dim(), s.len())?;
        Ok(self.marginals.iter().zip(s).map(|(m, t)| m.pdf(*t)).product())
    }
}
