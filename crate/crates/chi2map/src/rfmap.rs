//! Random Fourier lifting: maps a chi-squared embedding to features whose
//! inner products approximate the exp-chi-squared kernel.
//!
//! Reproducibility contract: the basis is generated by a ChaCha20 stream
//! seeded with `seed_from_u64(seed)`. The frequency matrix is filled
//! column by column with draws from Normal(0, sqrt(2 * gamma)) (ziggurat
//! sampling), followed by the phase vector with uniform draws from
//! [0, 2 * pi). Regeneration from (embed_dim, dims, gamma, seed) is
//! bit-identical; the basis file stores the raw matrices anyway so other
//! readers need not reimplement the generator.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Normal, Uniform};

use crate::chi2direct::{embed_matrix, ParamVector};
use crate::error::{Chi2Error, Result};
use crate::histio::{self, HistogramMatrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const BASIS_MAGIC: &[u8; 8] = b"CHI2RFB1";

/// Frequencies, phases and the seed that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct RFBasis {
    /// embed_dim x D frequency matrix.
    pub omega: Array2<f64>,
    /// D phases in [0, 2 pi).
    pub phase: Array1<f64>,
    pub gamma: f64,
    pub seed: u64,
}

impl RFBasis {
    pub fn embed_dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn dims(&self) -> usize {
        self.omega.ncols()
    }
}

/// Draws a basis for `dims` output features over `embed_dim` inputs.
pub fn sample_basis(embed_dim: usize, dims: usize, gamma: f64, seed: u64) -> Result<RFBasis> {
    if dims == 0 || embed_dim == 0 {
        return Err(Chi2Error::Parameter(
            "embed_dim and dims must be >= 1".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Chi2Error::Parameter(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (2.0 * gamma).sqrt())
        .map_err(|e| Chi2Error::Parameter(e.to_string()))?;
    // column-major fill; part of the stream-layout contract
    let mut omega = Array2::zeros((embed_dim, dims));
    for col in 0..dims {
        for row in 0..embed_dim {
            omega[[row, col]] = normal.sample(&mut rng);
        }
    }
    let uniform = Uniform::new(0.0, TAU).map_err(|e| Chi2Error::Parameter(e.to_string()))?;
    let phase = Array1::from_iter((0..dims).map(|_| uniform.sample(&mut rng)));
    Ok(RFBasis {
        omega,
        phase,
        gamma,
        seed,
    })
}

/// `Z = sqrt(2/D) * cos(C * omega + phase)`, row-wise.
pub fn rf_transform(c: &Array2<f64>, basis: &RFBasis) -> Result<Array2<f64>> {
    #[cfg(feature = "parallel")]
    {
        rf_transform_impl(c, basis, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        rf_transform_serial(c, basis)
    }
}

/// Single-threaded [`rf_transform`].
pub fn rf_transform_serial(c: &Array2<f64>, basis: &RFBasis) -> Result<Array2<f64>> {
    rf_transform_impl(c, basis, false)
}

#[allow(unused_variables)]
fn rf_transform_impl(c: &Array2<f64>, basis: &RFBasis, parallel: bool) -> Result<Array2<f64>> {
    if c.ncols() != basis.embed_dim() {
        return Err(Chi2Error::Dimension {
            context: "rf_transform input columns",
            expected: basis.embed_dim(),
            got: c.ncols(),
        });
    }
    let scale = (2.0 / basis.dims() as f64).sqrt();
    let project = |block: ndarray::ArrayView2<f64>| -> Array2<f64> {
        let mut z = block.dot(&basis.omega);
        for mut row in z.rows_mut() {
            row += &basis.phase;
        }
        z.mapv_inplace(|v| scale * v.cos());
        z
    };
    #[cfg(feature = "parallel")]
    if parallel {
        let block = 64.max(c.nrows() / (4 * rayon::current_num_threads().max(1))).max(1);
        let blocks: Vec<Array2<f64>> = c
            .axis_chunks_iter(ndarray::Axis(0), block)
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(project)
            .collect();
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        return ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Chi2Error::Numerical(e.to_string()));
    }
    Ok(project(c.view()))
}

/// End-to-end Gram matrix of the lifted direct embedding; approaches
/// `exp(-2 gamma * chi2_distance)` entrywise as N and D grow.
pub fn approx_exp_chi2_gram(
    x: &HistogramMatrix,
    k: &ParamVector,
    basis: &RFBasis,
) -> Result<Array2<f64>> {
    let c = embed_matrix(x, k);
    let z = rf_transform(&c, basis)?;
    let gram = z.dot(&z.t());
    Ok(gram)
}

/// Basis file: magic `CHI2RFB1`, u64 embed_dim, u64 dims, f64 gamma,
/// u64 seed, then omega row-major and phase, all little-endian f64.
pub fn write_basis(path: &Path, basis: &RFBasis) -> Result<()> {
    let io = |e| Chi2Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(BASIS_MAGIC)?;
        histio::write_u64(&mut w, basis.embed_dim() as u64)?;
        histio::write_u64(&mut w, basis.dims() as u64)?;
        histio::write_f64(&mut w, basis.gamma)?;
        histio::write_u64(&mut w, basis.seed)?;
        for &v in basis.omega.iter() {
            histio::write_f64(&mut w, v)?;
        }
        for &v in basis.phase.iter() {
            histio::write_f64(&mut w, v)?;
        }
        w.flush()
    })()
    .map_err(io)
}

pub fn read_basis(path: &Path) -> Result<RFBasis> {
    let io = |e| Chi2Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let file = File::open(path).map_err(io)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != BASIS_MAGIC {
        return Err(Chi2Error::BadMagic {
            path: path.display().to_string(),
            expected: "CHI2RFB1",
        });
    }
    let embed_dim = histio::read_u64(&mut r).map_err(io)? as usize;
    let dims = histio::read_u64(&mut r).map_err(io)? as usize;
    let gamma = histio::read_f64(&mut r).map_err(io)?;
    let seed = histio::read_u64(&mut r).map_err(io)?;
    let mut omega = vec![0f64; embed_dim * dims];
    histio::read_f64_into(&mut r, &mut omega).map_err(io)?;
    let mut phase = vec![0f64; dims];
    histio::read_f64_into(&mut r, &mut phase).map_err(io)?;
    Ok(RFBasis {
        omega: Array2::from_shape_vec((embed_dim, dims), omega)
            .map_err(|e| Chi2Error::Parameter(e.to_string()))?,
        phase: Array1::from_vec(phase),
        gamma,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chi2direct::{chi2_distance, fit_params};
    use ndarray::arr2;

    #[test]
    fn basis_is_deterministic() {
        let a = sample_basis(8, 32, 0.75, 42).unwrap();
        let b = sample_basis(8, 32, 0.75, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_basis(8, 32, 0.75, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn basis_rejects_bad_params() {
        assert!(sample_basis(8, 0, 0.75, 0).is_err());
        assert!(sample_basis(8, 4, 0.0, 0).is_err());
        assert!(sample_basis(8, 4, -1.0, 0).is_err());
    }

    #[test]
    fn basis_moments() {
        let gamma = 0.75;
        let basis = sample_basis(100, 2000, gamma, 7).unwrap();
        let count = (100 * 2000) as f64;
        let mean = basis.omega.sum() / count;
        let sigma = (2.0 * gamma).sqrt();
        assert!(mean.abs() < 3.0 * sigma / count.sqrt(), "mean {mean}");
        let var = basis.omega.iter().map(|v| v * v).sum::<f64>() / count - mean * mean;
        assert!((var - 2.0 * gamma).abs() / (2.0 * gamma) < 0.05, "var {var}");
        assert!(basis.phase.iter().all(|&p| (0.0..TAU).contains(&p)));
    }

    #[test]
    fn transform_zero_row() {
        let basis = sample_basis(3, 16, 0.75, 1).unwrap();
        let c = Array2::zeros((1, 3));
        let z = rf_transform(&c, &basis).unwrap();
        let scale = (2.0 / 16.0f64).sqrt();
        for (j, &v) in z.row(0).iter().enumerate() {
            assert!((v - scale * basis.phase[j].cos()).abs() < 1e-15);
        }
        let bound = (2.0 / 16.0f64).sqrt();
        assert!(z.iter().all(|&v| v.abs() <= bound + 1e-15));
    }

    #[test]
    fn transform_dimension_mismatch() {
        let basis = sample_basis(3, 16, 0.75, 1).unwrap();
        let c = Array2::zeros((1, 4));
        assert!(matches!(
            rf_transform(&c, &basis).unwrap_err(),
            Chi2Error::Dimension { .. }
        ));
    }

    #[test]
    fn self_similarity_approaches_one() {
        let basis = sample_basis(4, 1 << 16, 0.75, 3).unwrap();
        let c = arr2(&[[0.3, -0.2, 0.5, 0.1]]);
        let z = rf_transform(&c, &basis).unwrap();
        let ip: f64 = z.row(0).dot(&z.row(0));
        assert!((ip - 1.0).abs() < 0.02, "self inner product {ip}");
    }

    #[test]
    fn inner_products_match_gaussian_kernel() {
        let gamma = 0.75;
        let cx = arr2(&[[0.3, -0.2, 0.5, 0.1], [0.1, 0.4, -0.3, 0.2]]);
        let sq_dist: f64 = (0..4)
            .map(|j| (cx[[0, j]] - cx[[1, j]]) as f64)
            .map(|d| d * d)
            .sum();
        let exact = (-gamma * sq_dist).exp();
        let mut errs = Vec::new();
        for p in [8u32, 10, 12, 14] {
            let basis = sample_basis(4, 1 << p, gamma, 11).unwrap();
            let z = rf_transform(&cx, &basis).unwrap();
            let ip: f64 = z.row(0).dot(&z.row(1));
            errs.push((ip - exact).abs());
        }
        // O(1/sqrt(D)) trend: error at D = 2^14 well below error at 2^8
        assert!(errs[3] < errs[0], "{errs:?}");
        assert!(errs[3] < 0.02);
    }

    #[test]
    fn gram_is_symmetric_and_near_exact_kernel() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut data = Array2::from_shape_fn((12, 16), |_| rng.random::<f64>());
        for mut row in data.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let m = HistogramMatrix::new(data).unwrap();
        let k = fit_params(&m, 5, 500).unwrap();
        let gamma = 0.75;
        let basis = sample_basis(5 * 16, 4096, gamma, 9).unwrap();
        let gram = approx_exp_chi2_gram(&m, &k, &basis).unwrap();
        for i in 0..12 {
            assert!((gram[[i, i]] - 1.0).abs() < 0.1);
            for j in 0..12 {
                assert_eq!(gram[[i, j]].to_bits(), gram[[j, i]].to_bits());
                let exact = (-2.0
                    * gamma
                    * chi2_distance(m.array().row(i), m.array().row(j)).unwrap())
                .exp();
                assert!((gram[[i, j]] - exact).abs() < 0.1);
            }
        }
    }

    #[test]
    fn parallel_serial_agree() {
        let basis = sample_basis(6, 64, 0.75, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let c = Array2::from_shape_fn((37, 6), |_| rng.random::<f64>());
        let a = rf_transform(&c, &basis).unwrap();
        let b = rf_transform_serial(&c, &basis).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn basis_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        let basis = sample_basis(5, 20, 1.25, 99).unwrap();
        write_basis(&path, &basis).unwrap();
        let back = read_basis(&path).unwrap();
        assert_eq!(basis, back);
    }
}
