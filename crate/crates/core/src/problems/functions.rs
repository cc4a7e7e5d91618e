use std::f64::consts::PI;

use crate::error::{check_dim, QsiError, Result};

fn check_box(values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.iter().all(|v| (lo..=hi).contains(v)) {
        Ok(())
    } else {
        Err(QsiError::OutOfBox {
            point: values.to_vec(),
        })
    }
}

/// Branin–Hoo function on its native coordinates.
pub fn branin(x: f64, s: f64) -> f64 {
    let a = s - 5.1 * x * x / (4.0 * PI * PI) + 5.0 * x / PI - 6.0;
    a * a + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x.cos() + 10.0
}

/// Modified Branin–Hoo `b/12 + 3 sin(x^{5/4}) + 3 sin(s^{5/4})` on `[0,10] × [0,15]`.
pub fn eval_f1(x: f64, s: f64) -> Result<f64> {
    check_box(&[x], 0.0, 10.0)?;
    check_box(&[s], 0.0, 15.0)?;
    Ok(branin(x, s) / 12.0 + 3.0 * x.powf(1.25).sin() + 3.0 * s.powf(1.25).sin())
}

/// Six-hump camel function.
pub fn camel(x: f64, s: f64) -> f64 {
    (4.0 - 2.1 * x * x + x.powi(4) / 3.0) * x * x + x * s + (4.0 * s * s - 4.0) * s * s
}

/// `c(x1, s1) + c(x2, s2)` on `[−2,2]² × [−1,1]²`.
pub fn eval_f2(x: &[f64], s: &[f64]) -> Result<f64> {
    check_dim(2, x.len())?;
    check_dim(2, s.len())?;
    check_box(x, -2.0, 2.0)?;
    check_box(s, -1.0, 1.0)?;
    Ok(camel(x[0], s[0]) + camel(x[1], s[1]))
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 4]; 4] = [
    [10.0, 3.0, 17.0, 3.5],
    [0.05, 10.0, 17.0, 0.1],
    [3.0, 3.5, 1.7, 10.0],
    [17.0, 8.0, 0.05, 10.0],
];
const HARTMANN_P: [[f64; 4]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124],
    [0.2329, 0.4135, 0.8307, 0.3736],
    [0.2348, 0.1451, 0.3522, 0.2883],
    [0.4047, 0.8828, 0.8732, 0.5743],
];

/// Rescaled four-dimensional Hartmann function on `[0,1]⁴`.
pub fn hartmann4(u: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..4).map(|j| HARTMANN_A[i][j] * (u[j] - HARTMANN_P[i][j]).powi(2)).sum();
        acc += HARTMANN_ALPHA[i] * (-inner).exp();
    }
    (1.1 - acc) / 0.839
}

/// Hartmann4 with `x` the first two coordinates and `s` the last two.
pub fn eval_f3(x: &[f64], s: &[f64]) -> Result<f64> {
    check_dim(2, x.len())?;
    check_dim(2, s.len())?;
    check_box(x, 0.0, 1.0)?;
    check_box(s, 0.0, 1.0)?;
    Ok(hartmann4(&[x[0], x[1], s[0], s[1]]))
}
