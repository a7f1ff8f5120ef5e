//! The analytic Fourier-cosine series for `2xy/(x+y)` evaluated through a
//! three-term recurrence.
//!
//! Per scalar value the coefficients are
//!
//! ```text
//! d_0(x) = 2x/(x+1)
//! d_1(x) = -(sqrt(2) ln x / pi) d_0(x)
//! d_q(x) = [(-1)^q (2 ln x / pi) d_{q-1}(x) + (q-2) d_{q-2}(x)] / q,  q > 1
//! ```
//!
//! with `sum_q d_q(x) d_q(y) = 2xy/(x+y)`. The d-sequence interleaves two
//! Fourier coefficient families of `sqrt(xy) sech((ln y - ln x)/2)`: even
//! entries carry the cosine coefficients a_q, odd entries the sine
//! coefficients b_q, scaled by `sqrt(x/2)` (and a_0 by `sqrt(x)/2`). The
//! a/b reconstruction is exposed for cross-checks against quadrature.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};

use crate::error::{Chi2Error, Result};
use crate::histio::HistogramMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Values below this are embedded as exactly zero: ln x diverges while the
/// kernel contribution 2xy/(x+y) <= 2x vanishes at tolerance.
pub const ZERO_FLOOR: f64 = 1e-12;

/// Cosine/sine coefficient families of one evaluation point. Odd-index `a`
/// and even-index `b` entries are structurally zero.
#[derive(Debug, Clone)]
pub struct FourierCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x: f64,
}

/// Coefficients d_0(x)..d_n(x) for a scalar, written into `out`
/// (length n + 1).
pub fn cheb_coeffs(x: f64, out: &mut [f64]) {
    if x <= ZERO_FLOOR {
        out.fill(0.0);
        return;
    }
    let lx = x.ln();
    out[0] = 2.0 * x / (x + 1.0);
    if out.len() > 1 {
        out[1] = -(std::f64::consts::SQRT_2 * lx / PI) * out[0];
    }
    for q in 2..out.len() {
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        out[q] = (sign * (2.0 * lx / PI) * out[q - 1] + (q as f64 - 2.0) * out[q - 2]) / q as f64;
    }
}

/// Embeds one histogram row with N + 1 coefficients per input dimension,
/// grouped by dimension.
pub fn cheb_embed(row: ArrayView1<f64>, terms: usize) -> Vec<f64> {
    let width = terms + 1;
    let mut out = vec![0.0; width * row.len()];
    for (j, &x) in row.iter().enumerate() {
        cheb_coeffs(x, &mut out[j * width..(j + 1) * width]);
    }
    out
}

/// Row-wise [`cheb_embed`]; output is n x ((N + 1) * d).
pub fn cheb_embed_matrix(x: &HistogramMatrix, terms: usize) -> Array2<f64> {
    #[cfg(feature = "parallel")]
    {
        cheb_embed_matrix_impl(x, terms, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        cheb_embed_matrix_serial(x, terms)
    }
}

/// Single-threaded [`cheb_embed_matrix`]; same output bit for bit.
pub fn cheb_embed_matrix_serial(x: &HistogramMatrix, terms: usize) -> Array2<f64> {
    cheb_embed_matrix_impl(x, terms, false)
}

#[allow(unused_variables)]
fn cheb_embed_matrix_impl(x: &HistogramMatrix, terms: usize, parallel: bool) -> Array2<f64> {
    let (rows, cols) = (x.rows(), x.cols());
    let width = terms + 1;
    let mut out = Array2::zeros((rows, width * cols));
    let fill = |(row, mut dst): (ArrayView1<f64>, ndarray::ArrayViewMut1<f64>)| {
        for (j, &v) in row.iter().enumerate() {
            cheb_coeffs(
                v,
                dst.slice_mut(ndarray::s![j * width..(j + 1) * width])
                    .as_slice_mut()
                    .unwrap(),
            );
        }
    };
    #[cfg(feature = "parallel")]
    if parallel {
        let pairs: Vec<_> = x.array().rows().into_iter().zip(out.rows_mut()).collect();
        pairs.into_par_iter().for_each(fill);
        return out;
    }
    x.array().rows().into_iter().zip(out.rows_mut()).for_each(fill);
    out
}

/// Forward recurrence for the raw Fourier coefficients, seeded by the
/// closed forms a_0 = 4 sqrt(x)/(x+1) and b_1 = -(ln x / pi) a_0:
///
/// ```text
/// a_q = (2 ln x / (q pi)) b_{q-1} + ((q-2)/q) a_{q-2}   (q even)
/// b_q = -(2 ln x / (q pi)) a_{q-1} + ((q-2)/q) b_{q-2}  (q odd)
/// ```
pub fn fourier_coeffs_recurrence(x: f64, n: usize) -> Result<FourierCoeffs> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Chi2Error::Parameter(format!(
            "x must be positive and finite, got {x}"
        )));
    }
    if x == 1.0 {
        return Err(Chi2Error::LogSingularity);
    }
    if n < 1 {
        return Err(Chi2Error::Parameter("n must be >= 1".into()));
    }
    let lx = x.ln();
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    a[0] = 4.0 * x.sqrt() / (x + 1.0);
    if n >= 1 {
        b[1] = -(lx / PI) * a[0];
    }
    for q in 2..=n {
        let qf = q as f64;
        if q % 2 == 0 {
            a[q] = (2.0 * lx / (qf * PI)) * b[q - 1] + (qf - 2.0) / qf * a[q - 2];
        } else {
            b[q] = -(2.0 * lx / (qf * PI)) * a[q - 1] + (qf - 2.0) / qf * b[q - 2];
        }
    }
    Ok(FourierCoeffs { a, b, x })
}

impl FourierCoeffs {
    /// Reconstructs the a/b families from a d-sequence: even entries scale
    /// `a_q` by `sqrt(x/2)` (a_0 by `sqrt(x)/2`), odd entries scale `b_q`
    /// by `sqrt(x/2)`.
    pub fn from_d_sequence(x: f64, d: &[f64]) -> Self {
        let sx = x.sqrt();
        let mut a = vec![0.0; d.len()];
        let mut b = vec![0.0; d.len()];
        for (q, &dq) in d.iter().enumerate() {
            if q == 0 {
                a[0] = 2.0 * dq / sx;
            } else if q % 2 == 0 {
                a[q] = std::f64::consts::SQRT_2 * dq / sx;
            } else {
                b[q] = std::f64::consts::SQRT_2 * dq / sx;
            }
        }
        Self { a, b, x }
    }
}

/// `sqrt(xy) * sech((ln y - ln x)/2)`; algebraically equal to 2xy/(x+y).
pub fn sech_identity_check(x: f64, y: f64) -> f64 {
    let delta = y.ln() - x.ln();
    let half = delta / 2.0;
    (x * y).sqrt() * 2.0 / (half.exp() + (-half).exp())
}

/// For each N in 1..=n_max, the maximum over grid pairs of
/// `|2xy/(x+y) - sum_{q<=N} d_q(x) d_q(y)|`.
pub fn cheb_convergence_profile(xs: &[f64], n_max: usize) -> Vec<(usize, f64)> {
    let width = n_max + 1;
    let coeffs: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let mut c = vec![0.0; width];
            cheb_coeffs(x, &mut c);
            c
        })
        .collect();
    let mut out = Vec::with_capacity(n_max);
    // prefix inner products per pair, reused across N
    let mut partial = vec![vec![0.0f64; xs.len()]; xs.len()];
    for (i, ci) in coeffs.iter().enumerate() {
        for (j, cj) in coeffs.iter().enumerate() {
            partial[i][j] = ci[0] * cj[0];
        }
    }
    for n in 1..=n_max {
        let mut max_res = 0.0f64;
        for (i, ci) in coeffs.iter().enumerate() {
            for (j, cj) in coeffs.iter().enumerate() {
                partial[i][j] += ci[n] * cj[n];
                let exact = 2.0 * xs[i] * xs[j] / (xs[i] + xs[j]);
                max_res = max_res.max((exact - partial[i][j]).abs());
            }
        }
        out.push((n, max_res));
    }
    out
}
