//! Trained-model serialization: kernel configurations (with fitted direct
//! parameters), the PCA basis, and the ridge weights in one magic-tagged
//! binary file. Random Fourier bases are stored as (embed_dim, dims, gamma,
//! seed) and regenerated on load; sampling is deterministic per seed, so
//! the reconstruction is bit-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::chi2direct::ParamVector;
use crate::error::{Chi2Error, Result};
use crate::histio::{read_f64, read_f64_into, read_u64, write_f64, write_u64};
use crate::oocpca::{PCAModel, RidgeModel};
use crate::pipeline::{FeaturePipeline, Method};
use crate::rfmap::sample_basis;

pub const MODEL_MAGIC: &[u8; 8] = b"CHI2MDL1";

/// Everything needed to score new histograms: the feature pipelines, the
/// PCA projection, and the ridge weights.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub pipelines: Vec<FeaturePipeline>,
    /// Input columns expected per pipeline, in order.
    pub input_cols: Vec<usize>,
    pub pca: PCAModel,
    pub ridge: RidgeModel,
}

fn io_err(path: &Path, source: std::io::Error) -> Chi2Error {
    Chi2Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_array2<W: Write>(w: &mut W, a: &Array2<f64>) -> std::io::Result<()> {
    write_u64(w, a.nrows() as u64)?;
    write_u64(w, a.ncols() as u64)?;
    for &v in a.iter() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_array2<R: Read>(r: &mut R) -> std::io::Result<Array2<f64>> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let mut values = vec![0f64; rows * cols];
    read_f64_into(r, &mut values)?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape matches"))
}

fn write_array1<W: Write>(w: &mut W, a: &Array1<f64>) -> std::io::Result<()> {
    write_u64(w, a.len() as u64)?;
    for &v in a.iter() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_array1<R: Read>(r: &mut R) -> std::io::Result<Array1<f64>> {
    let len = read_u64(r)? as usize;
    let mut values = vec![0f64; len];
    read_f64_into(r, &mut values)?;
    Ok(Array1::from_vec(values))
}

pub fn write_model(path: &Path, model: &TrainedModel) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        write_u64(&mut w, model.pipelines.len() as u64)?;
        for (p, &cols) in model.pipelines.iter().zip(model.input_cols.iter()) {
            match &p.method {
                Method::Direct(k) => {
                    write_u64(&mut w, 0)?;
                    write_u64(&mut w, k.len() as u64)?;
                    for &v in k.values() {
                        write_f64(&mut w, v)?;
                    }
                }
                Method::Chebyshev { terms } => {
                    write_u64(&mut w, 1)?;
                    write_u64(&mut w, *terms as u64)?;
                }
            }
            write_u64(&mut w, cols as u64)?;
            write_u64(&mut w, p.basis.dims() as u64)?;
            write_f64(&mut w, p.basis.gamma)?;
            write_u64(&mut w, p.basis.seed)?;
        }
        write_u64(&mut w, model.pca.n as u64)?;
        write_array2(&mut w, &model.pca.u_bar)?;
        write_array1(&mut w, &model.pca.eigvals)?;
        write_array1(&mut w, &model.pca.mean)?;
        write_f64(&mut w, model.ridge.lambda)?;
        write_array2(&mut w, &model.ridge.w)?;
        write_array2(&mut w, &model.ridge.w_orig)?;
        write_array1(&mut w, &model.ridge.bias)?;
        write_array1(&mut w, &model.ridge.label_mean)?;
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MODEL_MAGIC {
        return Err(Chi2Error::BadMagic {
            path: path.display().to_string(),
            expected: "CHI2MDL1",
        });
    }
    let n_kernels = read_u64(&mut r).map_err(|e| io_err(path, e))? as usize;
    let mut pipelines = Vec::with_capacity(n_kernels);
    let mut input_cols = Vec::with_capacity(n_kernels);
    for i in 0..n_kernels {
        let res = (|| -> std::io::Result<(u64, usize)> {
            Ok((read_u64(&mut r)?, read_u64(&mut r)? as usize))
        })();
        let (tag, terms) = res.map_err(|e| io_err(path, e))?;
        let method = match tag {
            0 => {
                let mut k = vec![0f64; terms];
                read_f64_into(&mut r, &mut k).map_err(|e| io_err(path, e))?;
                Method::Direct(ParamVector::new(k)?)
            }
            1 => Method::Chebyshev { terms },
            other => {
                return Err(Chi2Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("unknown method tag {other}"),
                })
            }
        };
        let cols = read_u64(&mut r).map_err(|e| io_err(path, e))? as usize;
        let dims = read_u64(&mut r).map_err(|e| io_err(path, e))? as usize;
        let gamma = read_f64(&mut r).map_err(|e| io_err(path, e))?;
        let seed = read_u64(&mut r).map_err(|e| io_err(path, e))?;
        let embed_dim = method.coeffs_per_dim() * cols;
        let basis = sample_basis(embed_dim, dims, gamma, seed)?;
        pipelines.push(FeaturePipeline::new(method, basis, cols)?);
        input_cols.push(cols);
    }
    let n = read_u64(&mut r).map_err(|e| io_err(path, e))? as usize;
    let parsed = (|| -> std::io::Result<TrainedModel> {
        let u_bar = read_array2(&mut r)?;
        let eigvals = read_array1(&mut r)?;
        let mean = read_array1(&mut r)?;
        let lambda = read_f64(&mut r)?;
        let w = read_array2(&mut r)?;
        let w_orig = read_array2(&mut r)?;
        let bias = read_array1(&mut r)?;
        let label_mean = read_array1(&mut r)?;
        Ok(TrainedModel {
            pipelines,
            input_cols,
            pca: PCAModel {
                u_bar,
                eigvals,
                mean,
                n,
            },
            ridge: RidgeModel {
                w,
                bias,
                lambda,
                w_orig,
                label_mean,
            },
        })
    })()
    .map_err(|e| io_err(path, e))?;
    let model = parsed;
    let dims: usize = model.pipelines.iter().map(|p| p.dims()).sum();
    if dims != model.pca.mean.len() || model.pca.u_bar.nrows() != dims {
        return Err(Chi2Error::Consistency(format!(
            "model file {}: pipelines produce {dims} dimensions but PCA stores {}",
            path.display(),
            model.pca.mean.len()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histio::{ChunkSpec, HistogramMatrix, LabelMatrix};
    use crate::oocpca::{accumulate, eig_centered, predict, ridge_after_pca};
    use crate::pipeline::{KernelSpec, MethodName};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn model_round_trip_bit_identical_predictions() {
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let mut data = Array2::from_shape_fn((25, 6), |_| rng.random::<f64>());
        for mut row in data.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let x = HistogramMatrix::new(data).unwrap();
        let specs = [
            KernelSpec {
                matrix_path: Default::default(),
                method_name: MethodName::Direct,
                terms: 3,
                dims: 10,
                gamma: 0.75,
                seed: 5,
            },
            KernelSpec {
                matrix_path: Default::default(),
                method_name: MethodName::Chebyshev,
                terms: 4,
                dims: 8,
                gamma: 0.5,
                seed: 6,
            },
        ];
        let pipelines: Vec<_> = specs.iter().map(|s| s.build(&x, 200).unwrap()).collect();
        let y = LabelMatrix::one_vs_all(&(0..25).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let chunks = ChunkSpec::from_memory(x.clone(), 25).unwrap();
        let acc = accumulate(&chunks, &pipelines, Some(&y), 2).unwrap();
        let pca = eig_centered(&acc, 12).unwrap();
        let ridge = ridge_after_pca(&acc, &pca, 0.5).unwrap();
        let model = TrainedModel {
            pipelines,
            input_cols: vec![6, 6],
            pca,
            ridge,
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        write_model(&path, &model).unwrap();
        let loaded = read_model(&path).unwrap();

        let z_a = crate::oocpca::concat_features(&model.pipelines, &x).unwrap();
        let z_b = crate::oocpca::concat_features(&loaded.pipelines, &x).unwrap();
        assert_eq!(
            z_a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            z_b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let s_a = predict(&model.ridge, z_a.view()).unwrap();
        let s_b = predict(&loaded.ridge, z_b.view()).unwrap();
        assert_eq!(
            s_a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s_b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_abs_diff_eq!(loaded.pca.eigvals, model.pca.eigvals, epsilon = 0.0);
        assert_abs_diff_eq!(loaded.pca.mean, model.pca.mean, epsilon = 0.0);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTMODEL rest").unwrap();
        assert!(matches!(
            read_model(&path).unwrap_err(),
            Chi2Error::BadMagic { .. }
        ));
    }
}
