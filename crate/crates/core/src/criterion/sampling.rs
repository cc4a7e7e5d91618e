use rand::seq::index::{sample, sample_weighted};
use rand::Rng;

use crate::error::{QsiError, Result};

/// Indices kept from a population, with their sampling densities relative to
/// a uniform draw of one member.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    /// The first index is the highest-scoring member; the rest are in draw order.
    pub indices: Vec<usize>,
    pub density: Vec<f64>,
}

/// Keeps the argmax of `scores` plus `k − 1` members drawn without
/// replacement with probability proportional to their score.
///
/// Densities are `k · score / Σ score`. When at most `k` members have a
/// positive score they are all kept with density one. When every score is
/// zero, `k` members are drawn uniformly with density `k / n`.
pub fn importance_subsample<R: Rng + ?Sized>(scores: &[f64], k: usize, rng: &mut R) -> Result<Subsample> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(QsiError::InvalidArgument(format!(
            "cannot keep {k} members out of {n}"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(QsiError::InvalidArgument(format!("invalid score {bad}")));
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        let indices = sample(rng, n, k).into_vec();
        let density = vec![k as f64 / n as f64; k];
        return Ok(Subsample { indices, density });
    }
    let positive = scores.iter().filter(|s| **s > 0.0).count();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    if positive <= k {
        let mut indices = vec![best];
        indices.extend((0..n).filter(|i| *i != best && scores[*i] > 0.0));
        let density = vec![1.0; indices.len()];
        return Ok(Subsample { indices, density });
    }
    let weight = |i: usize| if i == best { 0.0 } else { scores[i] };
    let drawn = sample_weighted(rng, n, weight, k - 1)
        .map_err(|e| QsiError::InvalidArgument(format!("weighted sampling failed: {e}")))?;
    let mut indices = vec![best];
    indices.extend(drawn.into_iter());
    let density = indices.iter().map(|i| k as f64 * scores[*i] / total).collect();
    Ok(Subsample { indices, density })
}
