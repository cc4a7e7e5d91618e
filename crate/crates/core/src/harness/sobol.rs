use crate::error::{QsiError, Result};
use crate::geometry::Points;

const BITS: usize = 32;

/// Degree, inner polynomial coefficients and initial direction integers for
/// dimensions 2 to 8.
const DIRECTIONS: [(usize, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

/// Largest supported dimension.
pub const SOBOL_MAX_DIM: usize = DIRECTIONS.len() + 1;

/// Sobol' low-discrepancy sequence in `[0,1)^d`, in natural index order
/// (point 0 is the origin).
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > SOBOL_MAX_DIM {
            return Err(QsiError::InvalidArgument(format!(
                "Sobol' dimension must be in 1..={SOBOL_MAX_DIM}, got {dim}"
            )));
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, init) in DIRECTIONS.iter().take(dim - 1) {
            let mut m = [0u32; BITS];
            m[..s].copy_from_slice(init);
            for k in s..BITS {
                let mut v = m[k - s] ^ (m[k - s] << s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        v ^= m[k - j] << j;
                    }
                }
                m[k] = v;
            }
            let mut d = [0u32; BITS];
            for k in 0..BITS {
                d[k] = m[k] << (BITS - 1 - k);
            }
            directions.push(d);
        }
        Ok(Sobol { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn point(&self, index: u32) -> Vec<f64> {
        self.directions
            .iter()
            .map(|d| {
                let mut x = 0u32;
                for (k, v) in d.iter().enumerate() {
                    if (index >> k) & 1 == 1 {
                        x ^= v;
                    }
                }
                x as f64 / 2f64.powi(BITS as i32)
            })
            .collect()
    }

    /// The first `n` points.
    pub fn points(&self, n: usize) -> Points {
        let mut pts = Points::with_capacity(self.dim(), n);
        for i in 0..n {
            pts.push(&self.point(i as u32)).expect("dimension matches");
        }
        pts
    }
}
