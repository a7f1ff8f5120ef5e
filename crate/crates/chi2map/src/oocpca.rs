//! Out-of-core second-moment accumulation, centered-covariance
//! eigendecomposition, ridge regression in the projected space, the
//! two-stage multi-kernel pass, and score calibration.
//!
//! A single streaming pass accumulates `H = sum Z^T Z`, `m = sum Z^T 1`
//! and `v = sum Z^T y`; everything downstream works from those sufficient
//! statistics, so memory use is O(chunk_rows * D + D^2) regardless of n.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, Solve, UPLO};

use crate::error::{Chi2Error, Result};
use crate::histio::{stream_chunks, ChunkSpec, LabelMatrix};
use crate::pipeline::FeaturePipeline;

/// Accumulated feature moments. `v` and `label_sum` cover labeled rows only;
/// `n` counts every row seen (PCA may pool unlabeled test rows).
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    /// D x D, sum of Z^T Z.
    pub h: Array2<f64>,
    /// D, sum of Z^T 1.
    pub m: Array1<f64>,
    /// D x c, sum of Z^T y over labeled rows.
    pub v: Array2<f64>,
    /// c, column sums of the labels (1^T y).
    pub label_sum: Array1<f64>,
    pub n: usize,
    pub n_labeled: usize,
}

impl MomentAccumulator {
    pub fn new(dims: usize, classes: usize) -> Self {
        Self {
            h: Array2::zeros((dims, dims)),
            m: Array1::zeros(dims),
            v: Array2::zeros((dims, classes)),
            label_sum: Array1::zeros(classes),
            n: 0,
            n_labeled: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.m.len()
    }

    pub fn classes(&self) -> usize {
        self.v.ncols()
    }

    /// Folds one feature chunk in; labels must align row-for-row when given.
    pub fn add(&mut self, z: ArrayView2<f64>, labels: Option<ArrayView2<f64>>) -> Result<()> {
        if z.ncols() != self.dims() {
            return Err(Chi2Error::Dimension {
                context: "moment accumulation features",
                expected: self.dims(),
                got: z.ncols(),
            });
        }
        if let Some(y) = labels {
            if y.nrows() != z.nrows() {
                return Err(Chi2Error::Alignment {
                    matrix_rows: z.nrows(),
                    label_rows: y.nrows(),
                });
            }
            if y.ncols() != self.classes() {
                return Err(Chi2Error::Dimension {
                    context: "label columns",
                    expected: self.classes(),
                    got: y.ncols(),
                });
            }
            self.v += &z.t().dot(&y);
            self.label_sum += &y.sum_axis(Axis(0));
            self.n_labeled += z.nrows();
        }
        self.h += &z.t().dot(&z);
        self.m += &z.sum_axis(Axis(0));
        self.n += z.nrows();
        Ok(())
    }

    /// Merges another accumulator (chunk-index order is the caller's job).
    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.h += &other.h;
        self.m += &other.m;
        self.v += &other.v;
        self.label_sum += &other.label_sum;
        self.n += other.n;
        self.n_labeled += other.n_labeled;
    }
}

/// Validates that every per-kernel stream covers the same rows with the
/// same chunking, so lockstep iteration stays aligned.
fn check_aligned(specs: &[ChunkSpec], pipelines: &[FeaturePipeline]) -> Result<()> {
    if specs.is_empty() || specs.len() != pipelines.len() {
        return Err(Chi2Error::Consistency(format!(
            "{} chunk streams for {} pipelines",
            specs.len(),
            pipelines.len()
        )));
    }
    let first = &specs[0];
    for s in specs {
        if s.total_rows != first.total_rows || s.chunk_rows != first.chunk_rows {
            return Err(Chi2Error::Consistency(format!(
                "chunk streams disagree: {} rows / {} per chunk vs {} / {}",
                s.total_rows, s.chunk_rows, first.total_rows, first.chunk_rows
            )));
        }
    }
    Ok(())
}

/// Streams chunks through `pipelines` (features concatenated across kernels)
/// and accumulates moments. `labels`, when given, must cover the streamed
/// rows in order; pass `None` to pool unlabeled rows into H and m only.
pub fn accumulate(
    spec: &ChunkSpec,
    pipelines: &[FeaturePipeline],
    labels: Option<&LabelMatrix>,
    classes: usize,
) -> Result<MomentAccumulator> {
    let specs = vec![spec.clone(); pipelines.len()];
    accumulate_multi(&specs, pipelines, labels, classes)
}

/// As [`accumulate`], but each kernel streams its own matrix (the
/// multi-kernel case where kernels see different feature types for the
/// same row set). Streams advance in lockstep.
pub fn accumulate_multi(
    specs: &[ChunkSpec],
    pipelines: &[FeaturePipeline],
    labels: Option<&LabelMatrix>,
    classes: usize,
) -> Result<MomentAccumulator> {
    check_aligned(specs, pipelines)?;
    if let Some(y) = labels {
        if y.rows() != specs[0].total_rows {
            return Err(Chi2Error::Alignment {
                matrix_rows: specs[0].total_rows,
                label_rows: y.rows(),
            });
        }
    }
    let dims: usize = pipelines.iter().map(|p| p.dims()).sum();
    let mut acc = MomentAccumulator::new(dims, classes);
    let mut row = 0usize;
    let mut iters = specs
        .iter()
        .map(stream_chunks)
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..specs[0].num_chunks() {
        let chunks = iters
            .iter_mut()
            .map(|it| it.next().expect("chunk count checked"))
            .collect::<Result<Vec<_>>>()?;
        let z = concat_feature_chunks(pipelines, &chunks)?;
        let y_chunk = labels.map(|y| {
            y.array()
                .slice(ndarray::s![row..row + chunks[0].rows(), ..])
        });
        acc.add(z.view(), y_chunk)?;
        row += chunks[0].rows();
    }
    Ok(acc)
}

/// Applies every pipeline to the same matrix and concatenates columns.
pub fn concat_features(
    pipelines: &[FeaturePipeline],
    chunk: &crate::histio::HistogramMatrix,
) -> Result<Array2<f64>> {
    let parts: Vec<Array2<f64>> = pipelines
        .iter()
        .map(|p| p.features(chunk))
        .collect::<Result<_>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).map_err(|e| Chi2Error::Numerical(e.to_string()))
}

/// Applies each pipeline to its own matrix and concatenates columns; the
/// matrices must have equal row counts.
pub fn concat_feature_chunks(
    pipelines: &[FeaturePipeline],
    chunks: &[crate::histio::HistogramMatrix],
) -> Result<Array2<f64>> {
    if pipelines.len() != chunks.len() {
        return Err(Chi2Error::Consistency(format!(
            "{} pipelines for {} matrices",
            pipelines.len(),
            chunks.len()
        )));
    }
    let parts: Vec<Array2<f64>> = pipelines
        .iter()
        .zip(chunks)
        .map(|(p, c)| p.features(c))
        .collect::<Result<_>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).map_err(|e| Chi2Error::Numerical(e.to_string()))
}

/// Eigenvectors, eigenvalues and mean of the centered second-moment matrix.
#[derive(Debug, Clone)]
pub struct PCAModel {
    /// D x D_kept orthonormal columns, descending eigenvalue order.
    pub u_bar: Array2<f64>,
    /// D_kept eigenvalues, descending, clamped at zero.
    pub eigvals: Array1<f64>,
    /// D, the feature mean m / n.
    pub mean: Array1<f64>,
    pub n: usize,
}

impl PCAModel {
    pub fn kept(&self) -> usize {
        self.u_bar.ncols()
    }
}

/// Centers `H` by `-(1/n) m m^T` and eigendecomposes it. The sign of each
/// eigenvector is normalized so its first nonzero component is positive.
pub fn eig_centered(acc: &MomentAccumulator, d_kept: usize) -> Result<PCAModel> {
    if acc.n < 2 {
        return Err(Chi2Error::Degenerate(format!(
            "need at least 2 accumulated rows, have {}",
            acc.n
        )));
    }
    let d = acc.dims();
    if d_kept == 0 || d_kept > d {
        return Err(Chi2Error::Parameter(format!(
            "d_kept must be in 1..={d}, got {d_kept}"
        )));
    }
    let n = acc.n as f64;
    let mut centered = acc.h.clone();
    let outer = acc
        .m
        .view()
        .insert_axis(Axis(1))
        .dot(&acc.m.view().insert_axis(Axis(0)));
    centered -= &(outer / n);
    // symmetrize round-off before LAPACK
    let centered = (&centered + &centered.t()) * 0.5;
    let (vals, vecs) = centered
        .eigh(UPLO::Lower)
        .map_err(|e| Chi2Error::Numerical(format!("eigendecomposition failed: {e}")))?;
    // ascending from LAPACK; take the top d_kept in descending order
    let mut u_bar = Array2::zeros((d, d_kept));
    let mut eigvals = Array1::zeros(d_kept);
    for out_col in 0..d_kept {
        let src = d - 1 - out_col;
        eigvals[out_col] = vals[src].max(0.0);
        let col = vecs.column(src);
        let max_abs = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let flip = col
            .iter()
            .find(|v| v.abs() > 1e-12 * max_abs)
            .map_or(1.0, |&v| if v < 0.0 { -1.0 } else { 1.0 });
        for (dst, &v) in u_bar.column_mut(out_col).iter_mut().zip(col.iter()) {
            *dst = flip * v;
        }
    }
    Ok(PCAModel {
        u_bar,
        eigvals,
        mean: &acc.m / n,
        n: acc.n,
    })
}

/// Ridge weights in the projected space plus the back-projected weights that
/// act on unprojected features.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    /// D_kept x c.
    pub w: Array2<f64>,
    /// c; includes the label-mean offset.
    pub bias: Array1<f64>,
    pub lambda: f64,
    /// D x c, `u_bar * w`.
    pub w_orig: Array2<f64>,
    /// c, mean of the labels the model was fit on.
    pub label_mean: Array1<f64>,
}

fn back_project(
    pca: &PCAModel,
    w: Array2<f64>,
    label_mean: Array1<f64>,
    lambda: f64,
) -> RidgeModel {
    let w_orig = pca.u_bar.dot(&w);
    let bias = &label_mean - &w_orig.t().dot(&pca.mean);
    RidgeModel {
        w,
        bias,
        lambda,
        w_orig,
        label_mean,
    }
}

/// Single-kernel ridge solve: in the eigenbasis the projected Hessian is the
/// diagonal of eigenvalues, so `w_j = v'_j / (eigval_j + lambda)` column by
/// column, O(D_kept * c).
pub fn ridge_after_pca(acc: &MomentAccumulator, pca: &PCAModel, lambda: f64) -> Result<RidgeModel> {
    if lambda < 0.0 {
        return Err(Chi2Error::Parameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if acc.n_labeled == 0 {
        return Err(Chi2Error::Degenerate("no labeled rows accumulated".into()));
    }
    if lambda == 0.0 {
        if let Some(idx) = pca.eigvals.iter().position(|&e| e == 0.0) {
            return Err(Chi2Error::Singular { index: idx });
        }
    }
    let n = pca.n as f64;
    // v' = U^T v - (1/n) (1^T y) U^T m
    let ut_v = pca.u_bar.t().dot(&acc.v);
    let ut_m = pca.u_bar.t().dot(&acc.m);
    let mut v_prime = ut_v;
    for (mut col, &ys) in v_prime.columns_mut().into_iter().zip(acc.label_sum.iter()) {
        col.scaled_add(-ys / n, &ut_m);
    }
    let mut w = v_prime;
    for (mut row, &e) in w.rows_mut().into_iter().zip(pca.eigvals.iter()) {
        row.mapv_inplace(|v| v / (e + lambda));
    }
    let label_mean = &acc.label_sum / acc.n_labeled as f64;
    Ok(back_project(pca, w, label_mean, lambda))
}

/// Second streaming pass for concatenated kernels: projects each chunk with
/// the fitted basis, accumulates the projected Hessian and label moments,
/// and solves the dense ridge system. The pipelines must be the same ones
/// (same bases) used for the PCA pass.
pub fn two_stage_multikernel(
    spec: &ChunkSpec,
    pipelines: &[FeaturePipeline],
    pca: &PCAModel,
    labels: &LabelMatrix,
    lambda: f64,
) -> Result<RidgeModel> {
    let specs = vec![spec.clone(); pipelines.len()];
    two_stage_multi(&specs, pipelines, pca, labels, lambda)
}

/// As [`two_stage_multikernel`], with one chunk stream per kernel.
pub fn two_stage_multi(
    specs: &[ChunkSpec],
    pipelines: &[FeaturePipeline],
    pca: &PCAModel,
    labels: &LabelMatrix,
    lambda: f64,
) -> Result<RidgeModel> {
    check_aligned(specs, pipelines)?;
    if lambda < 0.0 {
        return Err(Chi2Error::Parameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let dims: usize = pipelines.iter().map(|p| p.dims()).sum();
    if dims != pca.mean.len() {
        return Err(Chi2Error::Consistency(format!(
            "pipelines produce {dims} feature dimensions but the PCA model has {}",
            pca.mean.len()
        )));
    }
    if labels.rows() != specs[0].total_rows {
        return Err(Chi2Error::Alignment {
            matrix_rows: specs[0].total_rows,
            label_rows: labels.rows(),
        });
    }
    let kept = pca.kept();
    let classes = labels.classes();
    let mut h_prime = Array2::<f64>::zeros((kept, kept));
    let mut v_prime = Array2::<f64>::zeros((kept, classes));
    let mut label_sum = Array1::<f64>::zeros(classes);
    let mut row = 0usize;
    let mut iters = specs
        .iter()
        .map(stream_chunks)
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..specs[0].num_chunks() {
        let chunks = iters
            .iter_mut()
            .map(|it| it.next().expect("chunk count checked"))
            .collect::<Result<Vec<_>>>()?;
        let mut centered = concat_feature_chunks(pipelines, &chunks)?;
        for mut r in centered.rows_mut() {
            r -= &pca.mean;
        }
        let z_tilde = centered.dot(&pca.u_bar);
        let y = labels
            .array()
            .slice(ndarray::s![row..row + chunks[0].rows(), ..]);
        h_prime += &z_tilde.t().dot(&z_tilde);
        v_prime += &z_tilde.t().dot(&y);
        label_sum += &y.sum_axis(Axis(0));
        row += chunks[0].rows();
    }
    let mut system = h_prime;
    for i in 0..kept {
        system[[i, i]] += lambda;
    }
    let mut w = Array2::zeros((kept, classes));
    for (j, col) in v_prime.columns().into_iter().enumerate() {
        let sol = system
            .solve(&col.to_owned())
            .map_err(|e| Chi2Error::Numerical(format!("ridge solve failed: {e}")))?;
        w.column_mut(j).assign(&sol);
    }
    let label_mean = &label_sum / specs[0].total_rows as f64;
    Ok(back_project(pca, w, label_mean, lambda))
}

/// Scores unprojected features directly: `Z w_orig + bias`. Equal to
/// projecting explicitly and applying `w`, up to round-off.
pub fn predict(model: &RidgeModel, z_new: ArrayView2<f64>) -> Result<Array2<f64>> {
    if z_new.ncols() != model.w_orig.nrows() {
        return Err(Chi2Error::Dimension {
            context: "predict features",
            expected: model.w_orig.nrows(),
            got: z_new.ncols(),
        });
    }
    let mut scores = z_new.dot(&model.w_orig);
    for mut row in scores.rows_mut() {
        row += &model.bias;
    }
    Ok(scores)
}

/// Reference path for [`predict`]: center, project, then apply `w`.
pub fn predict_projected(
    model: &RidgeModel,
    pca: &PCAModel,
    z_new: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if z_new.ncols() != pca.mean.len() {
        return Err(Chi2Error::Dimension {
            context: "predict features",
            expected: pca.mean.len(),
            got: z_new.ncols(),
        });
    }
    let mut centered = z_new.to_owned();
    for mut row in centered.rows_mut() {
        row -= &pca.mean;
    }
    let mut scores = centered.dot(&pca.u_bar).dot(&model.w);
    for mut row in scores.rows_mut() {
        row += &model.label_mean;
    }
    Ok(scores)
}

/// Shifts each class column so its rank-th highest score is 0.
pub fn calibrate_scores(scores: ArrayView2<f64>, rank: usize) -> Result<Array2<f64>> {
    if rank == 0 || rank > scores.nrows() {
        return Err(Chi2Error::Parameter(format!(
            "rank must be in 1..={}, got {rank}",
            scores.nrows()
        )));
    }
    let mut out = scores.to_owned();
    for mut col in out.columns_mut() {
        let mut sorted: Vec<f64> = col.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let pivot = sorted[rank - 1];
        col.mapv_inplace(|v| v - pivot);
    }
    Ok(out)
}
