use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, QsiError, Result};

/// Smoothness of the Matérn family; `Infinite` is the squared-exponential limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularity {
    Half,
    ThreeHalves,
    FiveHalves,
    Infinite,
}

impl Regularity {
    pub const ALL: [Regularity; 4] = [
        Regularity::Half,
        Regularity::ThreeHalves,
        Regularity::FiveHalves,
        Regularity::Infinite,
    ];

    /// Correlation at scaled distance `r >= 0`.
    #[inline]
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Regularity::Half => (-r).exp(),
            Regularity::ThreeHalves => {
                let a = 3f64.sqrt() * r;
                (1.0 + a) * (-a).exp()
            }
            Regularity::FiveHalves => {
                let a = 5f64.sqrt() * r;
                (1.0 + a + a * a / 3.0) * (-a).exp()
            }
            Regularity::Infinite => (-0.5 * r * r).exp(),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Regularity::Half => 0.5,
            Regularity::ThreeHalves => 1.5,
            Regularity::FiveHalves => 2.5,
            Regularity::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regularity::Half => "1/2",
            Regularity::ThreeHalves => "3/2",
            Regularity::FiveHalves => "5/2",
            Regularity::Infinite => "inf",
        };
        f.write_str(s)
    }
}

impl FromStr for Regularity {
    type Err = QsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/2" | "0.5" | "half" => Ok(Regularity::Half),
            "3/2" | "1.5" | "three_halves" => Ok(Regularity::ThreeHalves),
            "5/2" | "2.5" | "five_halves" => Ok(Regularity::FiveHalves),
            "inf" | "infinite" | "gaussian" => Ok(Regularity::Infinite),
            other => Err(QsiError::InvalidArgument(format!(
                "unknown regularity '{other}'"
            ))),
        }
    }
}

/// Anisotropic Matérn covariance `k(u, v) = σ² m_υ(|(u - v) / ρ|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    regularity: Regularity,
    variance: f64,
    lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(regularity: Regularity, variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(QsiError::InvalidArgument(format!(
                "kernel variance must be positive, got {variance}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(QsiError::InvalidArgument("no lengthscales".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(QsiError::InvalidArgument(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        Ok(KernelSpec {
            regularity,
            variance,
            lengthscales,
        })
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn with_variance(&self, variance: f64) -> Result<Self> {
        KernelSpec::new(self.regularity, variance, self.lengthscales.clone())
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(self.eval_unchecked(u, v))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        self.variance * self.regularity.correlation(self.scaled_distance(u, v))
    }

    #[inline]
    pub(crate) fn scaled_distance(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((a, b), l) in u.iter().zip(v).zip(&self.lengthscales) {
            let t = (a - b) / l;
            acc += t * t;
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(reg: Regularity) -> KernelSpec {
        KernelSpec::new(reg, 1.0, vec![1.0]).unwrap()
    }

    #[test]
    fn zero_distance_gives_variance() {
        for reg in Regularity::ALL {
            let k = KernelSpec::new(reg, 2.5, vec![0.3, 4.0]).unwrap();
            assert_eq!(k.eval(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 2.5);
        }
    }

    #[test]
    fn closed_form_values() {
        let e = unit(Regularity::Half).eval(&[0.0], &[1.0]).unwrap();
        assert!((e - (-1f64).exp()).abs() < 1e-15);
        assert!((e - 0.367879).abs() < 1e-6);
        let m = unit(Regularity::ThreeHalves).eval(&[0.0], &[1.0]).unwrap();
        let s3 = 3f64.sqrt();
        assert!((m - (1.0 + s3) * (-s3).exp()).abs() < 1e-15);
        assert!((m - 0.483_358).abs() < 1e-6);
    }

    #[test]
    fn anisotropic_scaling() {
        let k = KernelSpec::new(Regularity::Infinite, 1.0, vec![2.0, 0.5]).unwrap();
        let v = k.eval(&[0.0, 0.0], &[2.0, 0.5]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = unit(Regularity::Half);
        assert!(matches!(
            k.eval(&[0.0, 1.0], &[0.0]),
            Err(QsiError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::new(Regularity::Half, 0.0, vec![1.0]).is_err());
        assert!(KernelSpec::new(Regularity::Half, 1.0, vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn regularity_round_trips_through_text() {
        for reg in Regularity::ALL {
            assert_eq!(reg.to_string().parse::<Regularity>().unwrap(), reg);
        }
    }
}
