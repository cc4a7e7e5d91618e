//! Test functions, uncertain-input laws and evaluator plumbing.

mod distribution;
mod functions;
mod plugin;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use distribution::{Marginal, SDistribution};
pub use functions::{branin, camel, eval_f1, eval_f2, eval_f3, hartmann4};
pub use plugin::ExternalEvaluator;

use crate::criterion::QsiProblem;
use crate::error::{check_dim, QsiError, Result};
use crate::geometry::BoxBounds;
use crate::gp::CriticalRegion;

/// Black-box simulator `(x, s) ↦ f(x, s)`.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, x: &[f64], s: &[f64]) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync,
{
    fn evaluate(&self, x: &[f64], s: &[f64]) -> Result<f64> {
        self(x, s)
    }
}

/// Quantile transform of a unit-cube point onto `S` under `P_S`.
pub fn s_transform(distribution: &SDistribution, u: &[f64]) -> Result<Vec<f64>> {
    distribution.inverse_cdf(u)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemId {
    F1,
    F2,
    F3,
    Custom(String),
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemId::F1 => write!(f, "f1"),
            ProblemId::F2 => write!(f, "f2"),
            ProblemId::F3 => write!(f, "f3"),
            ProblemId::Custom(name) => write!(f, "{name}"),
        }
    }
}

impl FromStr for ProblemId {
    type Err = QsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(ProblemId::F1),
            "f2" => Ok(ProblemId::F2),
            "f3" => Ok(ProblemId::F3),
            "" => Err(QsiError::Config("empty problem name".into())),
            other => Ok(ProblemId::Custom(other.to_string())),
        }
    }
}

/// A QSI problem bundled with the function that defines it.
#[derive(Clone)]
pub struct TestProblem {
    pub id: ProblemId,
    pub qsi: QsiProblem,
    pub evaluator: Arc<dyn Evaluator>,
}

impl fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestProblem")
            .field("id", &self.id)
            .field("qsi", &self.qsi)
            .finish_non_exhaustive()
    }
}

impl TestProblem {
    pub fn f1() -> Self {
        let x_box = BoxBounds::new(vec![0.0], vec![10.0]).expect("valid box");
        let s_box = BoxBounds::new(vec![0.0], vec![15.0]).expect("valid box");
        let dist = SDistribution::new(vec![Marginal::scaled_beta(7.5, 1.9, 0.0, 15.0).expect("valid law")])
            .expect("valid law");
        let qsi = QsiProblem::new(x_box, s_box, dist, CriticalRegion::below(7.5), 0.05).expect("valid problem");
        TestProblem {
            id: ProblemId::F1,
            qsi,
            evaluator: Arc::new(|x: &[f64], s: &[f64]| {
                check_dim(1, x.len())?;
                check_dim(1, s.len())?;
                eval_f1(x[0], s[0])
            }),
        }
    }

    pub fn f2() -> Self {
        let x_box = BoxBounds::new(vec![-2.0; 2], vec![2.0; 2]).expect("valid box");
        let s_box = BoxBounds::new(vec![-1.0; 2], vec![1.0; 2]).expect("valid box");
        let dist = SDistribution::uniform(&s_box).expect("valid law");
        let qsi = QsiProblem::new(x_box, s_box, dist, CriticalRegion::below(1.2), 0.15).expect("valid problem");
        TestProblem {
            id: ProblemId::F2,
            qsi,
            evaluator: Arc::new(eval_f2),
        }
    }

    pub fn f3() -> Self {
        let x_box = BoxBounds::unit(2);
        let s_box = BoxBounds::unit(2);
        let dist = SDistribution::uniform(&s_box).expect("valid law");
        let qsi = QsiProblem::new(x_box, s_box, dist, CriticalRegion::below(1.1), 0.6).expect("valid problem");
        TestProblem {
            id: ProblemId::F3,
            qsi,
            evaluator: Arc::new(eval_f3),
        }
    }

    pub fn custom(name: &str, qsi: QsiProblem, evaluator: Arc<dyn Evaluator>) -> Self {
        TestProblem {
            id: ProblemId::Custom(name.to_string()),
            qsi,
            evaluator,
        }
    }

    /// One of the built-in problems by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name.parse::<ProblemId>()? {
            ProblemId::F1 => Ok(TestProblem::f1()),
            ProblemId::F2 => Ok(TestProblem::f2()),
            ProblemId::F3 => Ok(TestProblem::f3()),
            ProblemId::Custom(other) => Err(QsiError::Config(format!("unknown problem `{other}`"))),
        }
    }

    /// Evaluates at a joint point `(x, s)` after checking it lies in `X × S`.
    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.qsi.joint_dim(), u.len())?;
        if !self.qsi.joint_box().contains(u) {
            return Err(QsiError::OutOfBox { point: u.to_vec() });
        }
        let (x, s) = u.split_at(self.qsi.x_dim());
        self.evaluator.evaluate(x, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_the_published_settings() {
        let f1 = TestProblem::f1();
        assert_eq!(f1.qsi.alpha(), 0.05);
        assert_eq!(f1.qsi.region().threshold, 7.5);
        let f2 = TestProblem::f2();
        assert_eq!((f2.qsi.x_dim(), f2.qsi.s_dim()), (2, 2));
        assert_eq!(f2.qsi.alpha(), 0.15);
        let f3 = TestProblem::f3();
        assert_eq!(f3.qsi.alpha(), 0.6);
        assert_eq!(f3.qsi.region().threshold, 1.1);
    }

    #[test]
    fn evaluate_splits_the_joint_point() {
        let p = TestProblem::f2();
        let v = p.evaluate(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(v, eval_f2(&[0.1, 0.2], &[0.3, 0.4]).unwrap());
        assert!(p.evaluate(&[0.1, 0.2, 0.3]).is_err());
        assert!(p.evaluate(&[0.1, 0.2, 0.3, 1.4]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(TestProblem::builtin("f3").unwrap().id, ProblemId::F3);
        assert!(TestProblem::builtin("nope").is_err());
    }

    #[test]
    fn s_transform_cases() {
        let unif = SDistribution::uniform(&BoxBounds::new(vec![-1.0], vec![3.0]).unwrap()).unwrap();
        assert_eq!(s_transform(&unif, &[0.25]).unwrap(), vec![0.0]);
        let b22 = SDistribution::new(vec![Marginal::scaled_beta(2.0, 2.0, 0.0, 1.0).unwrap()]).unwrap();
        assert!((s_transform(&b22, &[0.5]).unwrap()[0] - 0.5).abs() < 1e-12);
        let f1 = TestProblem::f1();
        let d = f1.qsi.s_distribution();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let u = (i as f64 + 0.5) / 1000.0;
            let s = s_transform(d, &[u]).unwrap()[0];
            assert!(s >= prev);
            prev = s;
            assert!((d.cdf(&[s]).unwrap()[0] - u).abs() < 1e-8);
        }
    }
}
