use std::fmt;
use std::str::FromStr;

use crate::error::{QsiError, Result};

/// Pointwise uncertainty function applied to `π_n(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MeasureKind {
    /// `min(p, 1 − p)`
    #[default]
    Misclassification,
    /// `p (1 − p)`
    Variance,
    /// Binary entropy in bits, with `0 · log 0 = 0`.
    Entropy,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [
        MeasureKind::Misclassification,
        MeasureKind::Variance,
        MeasureKind::Entropy,
    ];

    pub fn uncertainty(self, p: f64) -> f64 {
        match self {
            MeasureKind::Misclassification => p.min(1.0 - p),
            MeasureKind::Variance => p * (1.0 - p),
            MeasureKind::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasureKind::Misclassification => "misclassification",
            MeasureKind::Variance => "variance",
            MeasureKind::Entropy => "entropy",
        })
    }
}

impl FromStr for MeasureKind {
    type Err = QsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "misclassification" | "misclass" | "mis" => Ok(MeasureKind::Misclassification),
            "variance" | "var" => Ok(MeasureKind::Variance),
            "entropy" => Ok(MeasureKind::Entropy),
            other => Err(QsiError::Config(format!("unknown uncertainty measure `{other}`"))),
        }
    }
}

/// `Σ_i w_i u(π̃ⁱ)` for one integration node.
pub fn local_uncertainty(pi_next_per_node: &[f64], outcome_weights: &[f64], kind: MeasureKind) -> f64 {
    debug_assert_eq!(pi_next_per_node.len(), outcome_weights.len());
    pi_next_per_node
        .iter()
        .zip(outcome_weights)
        .map(|(p, w)| w * kind.uncertainty(*p))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        for k in MeasureKind::ALL {
            assert_eq!(local_uncertainty(&[0.0, 0.0], &[0.3, 0.7], k), 0.0);
        }
        assert_eq!(local_uncertainty(&[0.5], &[1.0], MeasureKind::Misclassification), 0.5);
        assert_eq!(local_uncertainty(&[0.5], &[1.0], MeasureKind::Variance), 0.25);
        assert_eq!(local_uncertainty(&[0.5], &[1.0], MeasureKind::Entropy), 1.0);
        let v = local_uncertainty(&[0.2, 0.8], &[0.5, 0.5], MeasureKind::Misclassification);
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn parse_round_trip() {
        for k in MeasureKind::ALL {
            assert_eq!(k.to_string().parse::<MeasureKind>().unwrap(), k);
        }
        assert!("nope".parse::<MeasureKind>().is_err());
    }

    proptest! {
        #[test]
        fn shape_of_each_measure(p in 0.0f64..=1.0) {
            for k in MeasureKind::ALL {
                let u = k.uncertainty(p);
                prop_assert!((u - k.uncertainty(1.0 - p)).abs() < 1e-12);
                prop_assert!(u >= 0.0);
                prop_assert!(u <= k.uncertainty(0.5) + 1e-15);
                prop_assert_eq!(k.uncertainty(0.0), 0.0);
                prop_assert_eq!(k.uncertainty(1.0), 0.0);
            }
        }
    }
}
