use crate::error::{QsiError, Result};
use crate::geometry::BoxBounds;
use crate::gp::CriticalRegion;
use crate::problems::SDistribution;

/// Target of the inversion: `Γ(f) = {x ∈ X : P(f(x, S) ∈ C) ≤ α}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsiProblem {
    x_box: BoxBounds,
    s_box: BoxBounds,
    joint_box: BoxBounds,
    s_distribution: SDistribution,
    region: CriticalRegion,
    alpha: f64,
}

impl QsiProblem {
    pub fn new(
        x_box: BoxBounds,
        s_box: BoxBounds,
        s_distribution: SDistribution,
        region: CriticalRegion,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(QsiError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if s_distribution.dim() != s_box.dim() {
            return Err(QsiError::DimensionMismatch {
                expected: s_box.dim(),
                got: s_distribution.dim(),
            });
        }
        let support = s_distribution.support();
        let inside = (0..s_box.dim())
            .all(|j| support.lower()[j] >= s_box.lower()[j] && support.upper()[j] <= s_box.upper()[j]);
        if !inside {
            return Err(QsiError::InvalidArgument(
                "support of the S distribution exceeds the S box".into(),
            ));
        }
        if !region.threshold.is_finite() {
            return Err(QsiError::InvalidArgument("threshold must be finite".into()));
        }
        let joint_box = x_box.product(&s_box);
        Ok(QsiProblem {
            x_box,
            s_box,
            joint_box,
            s_distribution,
            region,
            alpha,
        })
    }

    pub fn x_box(&self) -> &BoxBounds {
        &self.x_box
    }

    pub fn s_box(&self) -> &BoxBounds {
        &self.s_box
    }

    /// `X × S`, with the `x` coordinates first.
    pub fn joint_box(&self) -> &BoxBounds {
        &self.joint_box
    }

    pub fn s_distribution(&self) -> &SDistribution {
        &self.s_distribution
    }

    pub fn region(&self) -> &CriticalRegion {
        &self.region
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn x_dim(&self) -> usize {
        self.x_box.dim()
    }

    pub fn s_dim(&self) -> usize {
        self.s_box.dim()
    }

    pub fn joint_dim(&self) -> usize {
        self.x_dim() + self.s_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let b = BoxBounds::unit(1);
        let d = SDistribution::uniform(&b).unwrap();
        let r = CriticalRegion::below(0.0);
        assert!(QsiProblem::new(b.clone(), b.clone(), d.clone(), r, 0.0).is_err());
        assert!(QsiProblem::new(b.clone(), b.clone(), d.clone(), r, 1.0).is_err());
        let wide = SDistribution::uniform(&BoxBounds::new(vec![-1.0], vec![1.0]).unwrap()).unwrap();
        assert!(QsiProblem::new(b.clone(), b.clone(), wide, r, 0.5).is_err());
        let p = QsiProblem::new(b.clone(), b, d, r, 0.5).unwrap();
        assert_eq!(p.joint_dim(), 2);
    }
}
