//! Standard normal distribution helpers.

use libm::erfc;

/// Standard normal CDF.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(0.75) - 0.773_372_647_623_131_7).abs() < 1e-14);
        assert!((cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-14);
        assert!(cdf(-40.0) >= 0.0 && cdf(40.0) <= 1.0);
    }
}
