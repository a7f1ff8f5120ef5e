//! Learning subcommands: pca-fit, train, predict, calibrate.

use std::path::PathBuf;

use clap::Args;
use ndarray::Array2;

use chi2map::histio::{ChunkSpec, HistogramMatrix};
use chi2map::model::{read_model, write_model, TrainedModel};
use chi2map::oocpca::{
    accumulate_multi, calibrate_scores, concat_feature_chunks, eig_centered, predict,
    ridge_after_pca, two_stage_multi,
};
use chi2map::pipeline::{parse_multikernel_config, FeaturePipeline, KernelSpec, MethodName};
use chi2map::{Chi2Error, Result};

use crate::util::{load_labels, load_matrix, read_real_csv, write_real_csv, FormatArg};

/// Shared single-kernel pipeline flags.
#[derive(Args)]
pub struct KernelArgs {
    /// `direct` or `chebyshev`.
    #[arg(long, default_value = "direct")]
    pub method: String,
    /// Series terms per input dimension.
    #[arg(long, default_value_t = 5)]
    pub terms: usize,
    /// Random Fourier output dimension D.
    #[arg(long, default_value_t = 512)]
    pub dims: usize,
    #[arg(long, default_value_t = 0.75)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bins for direct-series parameter fitting.
    #[arg(long, default_value_t = 1000)]
    pub bins: usize,
}

impl KernelArgs {
    fn spec(&self, matrix_path: PathBuf, dims: usize) -> Result<KernelSpec> {
        Ok(KernelSpec {
            matrix_path,
            method_name: self.method.parse::<MethodName>()?,
            terms: self.terms,
            dims,
            gamma: self.gamma,
            seed: self.seed,
        })
    }
}

/// Loads each kernel's matrix and builds its pipeline.
fn build_pipelines(
    specs: &[KernelSpec],
    bins: usize,
    format: FormatArg,
    strict_l1: bool,
) -> Result<(Vec<HistogramMatrix>, Vec<FeaturePipeline>)> {
    let mut matrices = Vec::with_capacity(specs.len());
    let mut pipelines = Vec::with_capacity(specs.len());
    for spec in specs {
        let x = load_matrix(&spec.matrix_path, format, strict_l1)?;
        pipelines.push(spec.build(&x, bins)?);
        matrices.push(x);
    }
    let rows = matrices[0].rows();
    for m in &matrices {
        if m.rows() != rows {
            return Err(Chi2Error::Consistency(format!(
                "kernel matrices disagree on row count: {} vs {rows}",
                m.rows()
            )));
        }
    }
    Ok((matrices, pipelines))
}

fn chunk_specs(matrices: &[HistogramMatrix], chunk_rows: usize) -> Result<Vec<ChunkSpec>> {
    let rows = matrices[0].rows();
    let chunk = if chunk_rows == 0 { rows } else { chunk_rows.min(rows) };
    matrices
        .iter()
        .map(|m| ChunkSpec::from_memory(m.clone(), chunk))
        .collect()
}

#[derive(Args)]
pub struct PcaFitArgs {
    /// Training histogram matrix (single kernel) — or use --multi-kernel.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Multi-kernel config: `<path> <method> <terms> <dims> <gamma> <seed>`.
    #[arg(long)]
    pub multi_kernel: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Components to keep.
    #[arg(long, default_value_t = 128)]
    pub dims_keep: usize,
    /// Sample this multiple of --dims RF dimensions before reducing.
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
    /// Unlabeled matrix pooled into the covariance (test rows).
    #[arg(long)]
    pub include_unlabeled: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    #[arg(long)]
    pub strict_l1: bool,
    #[arg(long, default_value_t = 0)]
    pub chunk_rows: usize,
    /// Output CSV: eigenvalue spectrum, descending.
    #[arg(long)]
    pub out: PathBuf,
}

fn resolve_kernel_specs(
    input: Option<&PathBuf>,
    multi_kernel: Option<&PathBuf>,
    kernel: &KernelArgs,
    oversample: usize,
) -> Result<Vec<KernelSpec>> {
    if oversample == 0 {
        return Err(Chi2Error::Parameter("oversample must be >= 1".into()));
    }
    match (input, multi_kernel) {
        (Some(path), None) => Ok(vec![kernel.spec(path.clone(), kernel.dims * oversample)?]),
        (None, Some(cfg)) => {
            let text = std::fs::read_to_string(cfg).map_err(|e| Chi2Error::Io {
                path: cfg.display().to_string(),
                source: e,
            })?;
            let mut specs = parse_multikernel_config(cfg, &text)?;
            for s in &mut specs {
                s.dims *= oversample;
            }
            Ok(specs)
        }
        _ => Err(Chi2Error::Parameter(
            "provide exactly one of --input or --multi-kernel".into(),
        )),
    }
}

pub fn pca_fit_cmd(args: PcaFitArgs) -> Result<()> {
    let specs = resolve_kernel_specs(
        args.input.as_ref(),
        args.multi_kernel.as_ref(),
        &args.kernel,
        args.oversample,
    )?;
    let (matrices, pipelines) =
        build_pipelines(&specs, args.kernel.bins, args.format, args.strict_l1)?;
    let chunks = chunk_specs(&matrices, args.chunk_rows)?;
    let mut acc = accumulate_multi(&chunks, &pipelines, None, 1)?;
    if let Some(extra) = &args.include_unlabeled {
        if pipelines.len() != 1 {
            return Err(Chi2Error::Parameter(
                "--include-unlabeled supports the single-kernel form only".into(),
            ));
        }
        let x = load_matrix(extra, args.format, args.strict_l1)?;
        let extra_chunks = chunk_specs(std::slice::from_ref(&x), args.chunk_rows)?;
        let extra_acc = accumulate_multi(&extra_chunks, &pipelines, None, 1)?;
        acc.merge(&extra_acc);
    }
    let pca = eig_centered(&acc, args.dims_keep.min(acc.dims()))?;
    let column = Array2::from_shape_vec((pca.eigvals.len(), 1), pca.eigvals.to_vec())
        .expect("column");
    write_real_csv(&args.out, &column)
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub multi_kernel: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Class index per row, one per line.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Components kept after PCA (0 = keep everything).
    #[arg(long, default_value_t = 0)]
    pub dims_keep: usize,
    #[arg(long, default_value_t = 1)]
    pub oversample: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    #[arg(long)]
    pub strict_l1: bool,
    #[arg(long, default_value_t = 0)]
    pub chunk_rows: usize,
    /// Trained model output file.
    #[arg(long)]
    pub model_out: PathBuf,
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let specs = resolve_kernel_specs(
        args.input.as_ref(),
        args.multi_kernel.as_ref(),
        &args.kernel,
        args.oversample,
    )?;
    let (matrices, pipelines) =
        build_pipelines(&specs, args.kernel.bins, args.format, args.strict_l1)?;
    let (_, labels) = load_labels(&args.labels)?;
    let chunks = chunk_specs(&matrices, args.chunk_rows)?;
    let acc = accumulate_multi(&chunks, &pipelines, Some(&labels), labels.classes())?;
    let kept = if args.dims_keep == 0 {
        acc.dims()
    } else {
        args.dims_keep.min(acc.dims())
    };
    let pca = eig_centered(&acc, kept)?;
    let ridge = if pipelines.len() == 1 {
        ridge_after_pca(&acc, &pca, args.lambda)?
    } else {
        two_stage_multi(&chunks, &pipelines, &pca, &labels, args.lambda)?
    };
    let input_cols = matrices.iter().map(|m| m.cols()).collect();
    let model = TrainedModel {
        pipelines,
        input_cols,
        pca,
        ridge,
    };
    write_model(&args.model_out, &model)?;
    println!(
        "trained {} kernel(s): {} features -> {} components, lambda {}",
        model.pipelines.len(),
        model.pca.mean.len(),
        model.pca.kept(),
        args.lambda
    );
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input matrices, one per model kernel, in training order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    #[arg(long)]
    pub strict_l1: bool,
    /// Output scores CSV (rows x classes).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn predict_cmd(args: PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    if args.input.len() != model.pipelines.len() {
        return Err(Chi2Error::Consistency(format!(
            "model has {} kernel(s) but {} input matrices were given",
            model.pipelines.len(),
            args.input.len()
        )));
    }
    let mut matrices = Vec::with_capacity(args.input.len());
    for (path, &cols) in args.input.iter().zip(model.input_cols.iter()) {
        let x = load_matrix(path, args.format, args.strict_l1)?;
        if x.cols() != cols {
            return Err(Chi2Error::Dimension {
                context: "predict input columns",
                expected: cols,
                got: x.cols(),
            });
        }
        matrices.push(x);
    }
    let z = concat_feature_chunks(&model.pipelines, &matrices)?;
    let scores = predict(&model.ridge, z.view())?;
    write_real_csv(&args.out, &scores)
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Scores CSV from `predict`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Order statistic: the rank-th highest score per class becomes 0.
    #[arg(long, default_value_t = 500)]
    pub rank: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let scores = read_real_csv(&args.scores)?;
    let calibrated = calibrate_scores(scores.view(), args.rank)?;
    write_real_csv(&args.out, &calibrated)
}
