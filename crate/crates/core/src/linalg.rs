//! Dense matrix exponential and logarithm.
//!
//! `expm` is the degree-13 Padé approximant with scaling and squaring.
//! `logm` takes Denman–Beavers square roots until the argument is close to
//! the identity and finishes with the inverse hyperbolic tangent series.

use nalgebra::DMatrix;

use crate::error::{HoroError, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is invertible for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn sqrtm_db(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    let mut last_change = f64::INFINITY;
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or_else(|| HoroError::NonFinite("singular iterate in sqrtm".into()))?;
        let zi = z.clone().try_inverse().ok_or_else(|| HoroError::NonFinite("singular iterate in sqrtm".into()))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let change = max_abs(&(&y_next - &y)) / max_abs(&y_next).max(1.0);
        y = y_next;
        z = z_next;
        if change < 1e-15 || (change < 1e-12 && change >= last_change) {
            return Ok(y);
        }
        last_change = change;
    }
    Err(HoroError::NoConvergence { iterations: 100, residual: max_abs(&(&y * &y - a)) })
}

/// Principal logarithm. Fails for matrices with eigenvalues on the closed
/// negative real axis.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut k: i32 = 0;
    while one_norm(&(&x - &id)) > 0.25 {
        x = sqrtm_db(&x)?;
        k += 1;
        if k > 60 {
            return Err(HoroError::NoConvergence { iterations: k as usize, residual: one_norm(&(&x - &id)) });
        }
    }
    // log x = 2 atanh(y) with y = (x - I)(x + I)^{-1}
    let num = &x - &id;
    let den = &x + &id;
    let y = den
        .transpose()
        .lu()
        .solve(&num.transpose())
        .ok_or_else(|| HoroError::NonFinite("singular matrix in logm".into()))?
        .transpose();
    let y2 = &y * &y;
    let mut term = y.clone();
    let mut sum = y.clone();
    for j in 1..40 {
        term = &term * &y2;
        let scaled = &term / (2 * j + 1) as f64;
        sum += &scaled;
        if max_abs(&scaled) < 1e-18 * max_abs(&sum).max(1e-300) {
            break;
        }
    }
    Ok(sum * (2.0 * 2f64.powi(k)))
}
