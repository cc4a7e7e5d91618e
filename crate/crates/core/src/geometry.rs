//! Point sets and axis-aligned boxes.

use rand::Rng;

use crate::error::{check_dim, QsiError, Result};

/// Points of a fixed dimension stored row-wise in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Points {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Points {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(QsiError::InvalidArgument(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut pts = Points::with_capacity(dim, rows.len());
        for r in rows {
            pts.push(r.as_ref())?;
        }
        Ok(pts)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.dim, p.len())?;
        self.data.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    /// Cartesian product, `x`-major: row `i * s.len() + j` is `(x_i, s_j)`.
    pub fn product(x: &Points, s: &Points) -> Points {
        let dim = x.dim + s.dim;
        let mut out = Points::with_capacity(dim, x.len() * s.len());
        for xi in x.iter() {
            for sj in s.iter() {
                out.data.extend_from_slice(xi);
                out.data.extend_from_slice(sj);
            }
        }
        out
    }

    /// Concatenates the rows of `other` after those of `self`.
    pub fn extend(&mut self, other: &Points) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(QsiError::InvalidArgument("empty box".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(QsiError::InvalidArgument(format!(
                    "degenerate interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoxBounds { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        BoxBounds {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.width(j)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, t)| self.lower[j] + t * self.width(j))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.lower[j] + rng.random::<f64>() * self.width(j))
            .collect()
    }

    /// Product box `self × other`.
    pub fn product(&self, other: &BoxBounds) -> BoxBounds {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        BoxBounds { lower, upper }
    }
}
