//! Exact chi-squared kernel evaluations, the direct series embedding with
//! geometric convergence, its exact residual formulas, and the greedy
//! data-adaptive parameter fitter.
//!
//! The scalar building block is the identity
//!
//! ```text
//! 2xy/(x+y) = [(x-k)/(x+k)][(y-k)/(y+k)] * 2xy/(x+y)
//!           + [2*sqrt(k)*x/(x+k)] * [2*sqrt(k)*y/(y+k)]
//! ```
//!
//! Unrolling it N times with parameters k_1..k_N yields an N-term embedding
//! whose inner product approximates 2xy/(x+y) with the residual given
//! exactly by [`nterm_error_exact`].

use ndarray::{Array2, ArrayView1};

use crate::error::{Chi2Error, Result};
use crate::histio::{value_histogram, HistogramMatrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ordered direct-series parameters k_1..k_N, each in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    k: Vec<f64>,
}

impl ParamVector {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        for (i, &ki) in k.iter().enumerate() {
            if !(ki > 0.0 && ki <= 1.0) {
                return Err(Chi2Error::Parameter(format!(
                    "k[{i}] = {ki} outside (0, 1]"
                )));
            }
        }
        Ok(Self { k })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }
}

/// Per-bin harmonic term with the 0/0 convention: both zero contributes 0.
#[inline]
fn chi2_bin(x: f64, y: f64) -> f64 {
    let s = x + y;
    if s == 0.0 {
        0.0
    } else {
        let d = x - y;
        d * d / s
    }
}

/// Symmetric chi-squared distance `0.5 * sum (x_i - y_i)^2 / (x_i + y_i)`.
///
/// Lies in [0, 1] for L1-normalized inputs.
pub fn chi2_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    Ok(0.5 * x.iter().zip(y.iter()).map(|(&a, &b)| chi2_bin(a, b)).sum::<f64>())
}

/// Chi-squared similarity `sum 2 x_i y_i / (x_i + y_i)`; equals
/// `1 - chi2_distance` for L1-normalized inputs.
pub fn chi2_similarity(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    Ok(x.iter()
        .zip(y.iter())
        .map(|(&a, &b)| {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                2.0 * a * b / s
            }
        })
        .sum())
}

/// `exp(-beta * chi2_distance(x, y))`.
pub fn exp_chi2_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Chi2Error::Parameter(format!("beta must be > 0, got {beta}")));
    }
    Ok((-beta * chi2_distance(x, y)?).exp())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Chi2Error::Dimension {
            context: "histogram rows",
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Greedy parameter fit: estimate the value density over log-spaced bins,
/// weight by the error-bound envelope x/(x+1), and repeatedly pick the
/// centroid of the largest residual peak, damping the residual by
/// (x-k)/(x+k) after each pick. Ties break toward the smallest centroid;
/// argmax is strict-greater so earlier (smaller) centroids win.
pub fn fit_params(x: &HistogramMatrix, n: usize, bins: usize) -> Result<ParamVector> {
    if n > bins {
        return Err(Chi2Error::Parameter(format!(
            "cannot select {n} parameters from {bins} candidate centroids"
        )));
    }
    let (centroids, density) = value_histogram(x, bins)?;
    let mut b: Vec<f64> = centroids
        .iter()
        .zip(density.iter())
        .map(|(&c, &h)| c / (c + 1.0) * h)
        .collect();
    let mut k = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = 0usize;
        for (j, &bj) in b.iter().enumerate() {
            if bj.abs() > b[best].abs() {
                best = j;
            }
        }
        let ki = centroids[best];
        k.push(ki);
        for (bj, &cj) in b.iter_mut().zip(centroids.iter()) {
            *bj *= (cj - ki) / (cj + ki);
        }
    }
    ParamVector::new(k)
}

/// Direct-series coefficients c_1(x)..c_N(x) for a scalar, written into `out`:
/// `c_q(x) = [prod_{p<q} (x-k_p)/(x+k_p)] * 2 sqrt(k_q) x / (x + k_q)`.
#[inline]
pub fn direct_coeffs(x: f64, k: &ParamVector, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k.len());
    if x == 0.0 {
        out.fill(0.0);
        return;
    }
    let mut prefix = 1.0;
    for (c, &kq) in out.iter_mut().zip(k.values()) {
        *c = prefix * 2.0 * kq.sqrt() * x / (x + kq);
        prefix *= (x - kq) / (x + kq);
    }
}

/// Embeds one histogram row; output has length `N * d`, the N coefficients of
/// each input dimension stored contiguously.
pub fn direct_embed(row: ArrayView1<f64>, k: &ParamVector) -> Vec<f64> {
    let n = k.len();
    let mut out = vec![0.0; n * row.len()];
    for (j, &x) in row.iter().enumerate() {
        direct_coeffs(x, k, &mut out[j * n..(j + 1) * n]);
    }
    out
}

/// Exact N-term residual `prod_i [(x-k_i)(y-k_i)/((x+k_i)(y+k_i))] * 2xy/(x+y)`
/// for a scalar pair; equals `2xy/(x+y) - <c(x), c(y)>` identically.
pub fn nterm_error_exact(x: f64, y: f64, k: &ParamVector) -> f64 {
    let s = x + y;
    if s == 0.0 {
        return 0.0;
    }
    let mut err = 2.0 * x * y / s;
    for &ki in k.values() {
        err *= (x - ki) * (y - ki) / ((x + ki) * (y + ki));
    }
    err
}

/// Signed residual envelope `2 * prod_i (x-k_i)/(x+k_i) * x/(x+1)`; callers
/// take the absolute value to bound `nterm_error_exact` over all y in [0, 1].
pub fn error_bound(x: f64, k: &ParamVector) -> f64 {
    let mut b = 2.0 * x / (x + 1.0);
    for &ki in k.values() {
        b *= (x - ki) / (x + ki);
    }
    b
}

/// Row-wise [`direct_embed`]; output is n x (N * d).
pub fn embed_matrix(x: &HistogramMatrix, k: &ParamVector) -> Array2<f64> {
    #[cfg(feature = "parallel")]
    {
        embed_matrix_impl(x, k, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        embed_matrix_serial(x, k)
    }
}

/// Single-threaded [`embed_matrix`]; same output bit for bit.
pub fn embed_matrix_serial(x: &HistogramMatrix, k: &ParamVector) -> Array2<f64> {
    embed_matrix_impl(x, k, false)
}

#[allow(unused_variables)]
fn embed_matrix_impl(x: &HistogramMatrix, k: &ParamVector, parallel: bool) -> Array2<f64> {
    let (rows, cols) = (x.rows(), x.cols());
    let width = k.len() * cols;
    let mut out = Array2::zeros((rows, width));
    let fill = |(row, mut dst): (ArrayView1<f64>, ndarray::ArrayViewMut1<f64>)| {
        let n = k.len();
        for (j, &v) in row.iter().enumerate() {
            direct_coeffs(v, k, dst.slice_mut(ndarray::s![j * n..(j + 1) * n]).as_slice_mut().unwrap());
        }
    };
    #[cfg(feature = "parallel")]
    if parallel {
        let pairs: Vec<_> = x
            .array()
            .rows()
            .into_iter()
            .zip(out.rows_mut())
            .collect();
        pairs.into_par_iter().for_each(fill);
        return out;
    }
    x.array()
        .rows()
        .into_iter()
        .zip(out.rows_mut())
        .for_each(fill);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2, Array1};
    use proptest::prelude::*;
    use rand::prelude::*;

    fn pv(k: &[f64]) -> ParamVector {
        ParamVector::new(k.to_vec()).unwrap()
    }

    fn random_simplex(rng: &mut impl Rng, d: usize) -> Array1<f64> {
        let mut v = Array1::from_shape_fn(d, |_| rng.random::<f64>());
        let s = v.sum();
        v.mapv_inplace(|x| x / s);
        v
    }

    #[test]
    fn distance_basics() {
        let x = arr1(&[0.3, 0.7]);
        assert_eq!(chi2_distance(x.view(), x.view()).unwrap(), 0.0);
        let a = arr1(&[1.0, 0.0]);
        let b = arr1(&[0.0, 1.0]);
        assert_eq!(chi2_distance(a.view(), b.view()).unwrap(), 1.0);
        assert_eq!(chi2_similarity(a.view(), b.view()).unwrap(), 0.0);
    }

    #[test]
    fn distance_matches_scalar_loop() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_simplex(&mut rng, 12);
            let y = random_simplex(&mut rng, 12);
            // independent scalar loop over Eq. terms
            let mut acc = 0.0;
            for i in 0..12 {
                let s = x[i] + y[i];
                if s > 0.0 {
                    acc += (x[i] - y[i]).powi(2) / s;
                }
            }
            assert_abs_diff_eq!(
                chi2_distance(x.view(), y.view()).unwrap(),
                0.5 * acc,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn similarity_distance_identity() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = random_simplex(&mut rng, 8);
            let y = random_simplex(&mut rng, 8);
            let sim = chi2_similarity(x.view(), y.view()).unwrap();
            let dist = chi2_distance(x.view(), y.view()).unwrap();
            assert_abs_diff_eq!(sim, 1.0 - dist, epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_kernel_values() {
        let x = arr1(&[0.4, 0.6]);
        assert_eq!(exp_chi2_kernel(x.view(), x.view(), 1.5).unwrap(), 1.0);
        let a = arr1(&[1.0, 0.0]);
        let b = arr1(&[0.0, 1.0]);
        assert_abs_diff_eq!(
            exp_chi2_kernel(a.view(), b.view(), 1.5).unwrap(),
            (-1.5f64).exp(),
            epsilon = 1e-15
        );
        assert!(exp_chi2_kernel(a.view(), b.view(), 0.0).is_err());
    }

    #[test]
    fn exp_kernel_monotone_in_distance() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x = random_simplex(&mut rng, 6);
            let y = random_simplex(&mut rng, 6);
            let z = random_simplex(&mut rng, 6);
            let (dy, dz) = (
                chi2_distance(x.view(), y.view()).unwrap(),
                chi2_distance(x.view(), z.view()).unwrap(),
            );
            let (ky, kz) = (
                exp_chi2_kernel(x.view(), y.view(), 1.5).unwrap(),
                exp_chi2_kernel(x.view(), z.view(), 1.5).unwrap(),
            );
            if dy > dz {
                assert!(ky <= kz);
            } else {
                assert!(ky >= kz);
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let a = arr1(&[1.0]);
        let b = arr1(&[0.5, 0.5]);
        assert!(matches!(
            chi2_distance(a.view(), b.view()).unwrap_err(),
            Chi2Error::Dimension { .. }
        ));
    }

    #[test]
    fn fit_zero_params() {
        let m = HistogramMatrix::new(arr2(&[[0.5, 0.5]])).unwrap();
        let k = fit_params(&m, 0, 100).unwrap();
        assert!(k.is_empty());
    }

    #[test]
    fn fit_single_peak() {
        let m = HistogramMatrix::new(arr2(&[[0.2, 0.2], [0.2, 0.2]])).unwrap();
        let k = fit_params(&m, 1, 5).unwrap();
        assert_abs_diff_eq!(k.values()[0], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn fit_too_many_params() {
        let m = HistogramMatrix::new(arr2(&[[0.2, 0.3]])).unwrap();
        assert!(fit_params(&m, 11, 10).is_err());
    }

    /// Independent rerun of the greedy loop, tracking the residual directly.
    #[test]
    fn fit_greedy_monotone_and_zeroed_at_picks() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let data = Array2::from_shape_fn((40, 50), |_| {
            (rng.random::<f64>() * (1.0f64 / 0.01).ln() + 0.01f64.ln()).exp()
        });
        let m = HistogramMatrix::new(data).unwrap();
        let bins = 200;
        let n = 6;
        let ks = fit_params(&m, n, bins).unwrap();

        // oracle: replay the greedy recurrence from the histogram
        let (centroids, density) = value_histogram(&m, bins).unwrap();
        let mut b: Vec<f64> = centroids
            .iter()
            .zip(density.iter())
            .map(|(&c, &h)| c / (c + 1.0) * h)
            .collect();
        let mut prev_max = f64::INFINITY;
        for &ki in ks.values() {
            let max = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= prev_max);
            prev_max = max;
            let j = centroids.iter().position(|&c| c == ki).unwrap();
            assert_eq!(b[j].abs(), max, "selected centroid is the argmax");
            for (bv, &c) in b.iter_mut().zip(centroids.iter()) {
                *bv *= (c - ki) / (c + ki);
            }
            assert_eq!(b[j], 0.0);
        }
        // selected k's distinct
        let mut sorted = ks.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), n);
    }

    #[test]
    fn embed_scalar_cases() {
        let k = pv(&[0.4, 0.7]);
        let mut out = [0.0; 2];
        direct_coeffs(0.0, &k, &mut out);
        assert_eq!(out, [0.0, 0.0]);

        // x = k_1 collapses to [sqrt(k_1), 0, ...]
        let k = pv(&[0.4, 0.7, 0.2]);
        let mut out = [0.0; 3];
        direct_coeffs(0.4, &k, &mut out);
        assert_abs_diff_eq!(out[0], 0.4f64.sqrt(), epsilon = 1e-15);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 0.0);
        let self_ip: f64 = out.iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(self_ip, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn one_term_hand_residual() {
        // x = y = 0.5, k = [1.0]: c = 2/3, <c,c> = 4/9, true value 0.5,
        // residual 1/18.
        let k = pv(&[1.0]);
        let mut c = [0.0];
        direct_coeffs(0.5, &k, &mut c);
        assert_abs_diff_eq!(c[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nterm_error_exact(0.5, 0.5, &k), 1.0 / 18.0, epsilon = 1e-15);
        assert_abs_diff_eq!(0.5 - c[0] * c[0], 1.0 / 18.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_vanishes_at_params() {
        let k = pv(&[0.3, 0.8]);
        assert_eq!(nterm_error_exact(0.3, 0.55, &k), 0.0);
        assert_eq!(nterm_error_exact(0.55, 0.8, &k), 0.0);
        assert_eq!(nterm_error_exact(0.0, 0.0, &k), 0.0);
    }

    #[test]
    fn bound_edge_cases() {
        let k = pv(&[1.0]);
        assert_eq!(error_bound(0.0, &k), 0.0);
        assert_eq!(error_bound(1.0, &k), 0.0);
    }

    proptest! {
        /// Residual identity: 2xy/(x+y) - <c(x),c(y)> equals the closed form.
        #[test]
        fn residual_identity(
            x in 0.0f64..1.0,
            y in 0.0f64..1.0,
            k1 in 1e-6f64..1.0,
            k2 in 1e-6f64..1.0,
            k3 in 1e-6f64..1.0,
        ) {
            let k = pv(&[k1, k2, k3]);
            let (mut cx, mut cy) = ([0.0; 3], [0.0; 3]);
            direct_coeffs(x, &k, &mut cx);
            direct_coeffs(y, &k, &mut cy);
            let ip: f64 = cx.iter().zip(cy.iter()).map(|(a, b)| a * b).sum();
            let truth = if x + y == 0.0 { 0.0 } else { 2.0 * x * y / (x + y) };
            prop_assert!(((truth - ip) - nterm_error_exact(x, y, &k)).abs() <= 1e-12);
        }

        /// |error| <= |bound| over a y-grid.
        #[test]
        fn bound_dominates(x in 0.0f64..=1.0, k1 in 1e-3f64..1.0, k2 in 1e-3f64..1.0) {
            let k = pv(&[k1, k2]);
            let bound = error_bound(x, &k).abs();
            for i in 0..=50 {
                let y = i as f64 / 50.0;
                prop_assert!(nterm_error_exact(x, y, &k).abs() <= bound + 1e-15);
            }
        }

        /// |c_q(x)| <= 2 on the domain.
        #[test]
        fn coefficients_bounded(x in 0.0f64..=1.0, k1 in 1e-6f64..1.0, k2 in 1e-6f64..1.0) {
            let k = pv(&[k1, k2]);
            let mut c = [0.0; 2];
            direct_coeffs(x, &k, &mut c);
            prop_assert!(c.iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn embed_matrix_rowwise() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(17);
        let data = Array2::from_shape_fn((7, 5), |_| rng.random::<f64>());
        let m = HistogramMatrix::new(data).unwrap();
        let k = pv(&[0.1, 0.5, 0.9]);
        let embedded = embed_matrix(&m, &k);
        assert_eq!(embedded.dim(), (7, 15));
        for (i, row) in m.array().rows().into_iter().enumerate() {
            let single = direct_embed(row, &k);
            assert_eq!(embedded.row(i).to_vec(), single);
        }
        // serial path is identical
        let serial = embed_matrix_serial(&m, &k);
        assert_eq!(embedded, serial);
    }

    #[test]
    fn embed_matrix_zero_row() {
        let mut data = Array2::zeros((2, 4));
        data[[1, 0]] = 1.0;
        let m = HistogramMatrix::new(data).unwrap();
        let k = pv(&[0.3]);
        let embedded = embed_matrix(&m, &k);
        assert!(embedded.row(0).iter().all(|&v| v == 0.0));
    }

    /// Gram matrix of embeddings approaches pairwise similarity as N grows.
    #[test]
    fn gram_converges_to_similarity() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(23);
        let data = Array2::from_shape_fn((10, 6), |_| 0.01 + rng.random::<f64>());
        let mut m = data.clone();
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let m = HistogramMatrix::new(m).unwrap();
        let mut prev = f64::INFINITY;
        for n in [1usize, 3, 6] {
            let k = fit_params(&m, n, 500).unwrap();
            let c = embed_matrix(&m, &k);
            let gram = c.dot(&c.t());
            let mut max_err = 0.0f64;
            for i in 0..m.rows() {
                for j in 0..m.rows() {
                    let exact =
                        chi2_similarity(m.array().row(i), m.array().row(j)).unwrap();
                    max_err = max_err.max((exact - gram[[i, j]]).abs());
                }
            }
            assert!(max_err < prev);
            prev = max_err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn param_vector_rejects_out_of_range() {
        assert!(ParamVector::new(vec![0.0]).is_err());
        assert!(ParamVector::new(vec![1.5]).is_err());
        assert!(ParamVector::new(vec![0.5, 1.0]).is_ok());
    }
}
