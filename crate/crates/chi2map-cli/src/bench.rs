//! Benchmark subcommands emitting versioned CSV reports: scalar series
//! error curves, Gram-matrix error sweeps, and the synthetic end-to-end
//! accuracy comparison against exact-kernel ridge.

use std::path::PathBuf;

use clap::Args;
use ndarray::{Array2, ArrayView2};
use ndarray_linalg::Solve;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use chi2map::chebyshev::cheb_coeffs;
use chi2map::chi2direct::{chi2_distance, embed_matrix, fit_params, nterm_error_exact};
use chi2map::histio::{HistogramMatrix, LabelMatrix};
use chi2map::oocpca::{eig_centered, predict, ridge_after_pca, MomentAccumulator};
use chi2map::rfmap::{rf_transform, sample_basis};
use chi2map::synth::{accuracy, generate};
use chi2map::{Chi2Error, Result};

use crate::util::{load_matrix, parse_count_list, write_bench_report, BenchRow, FormatArg};

fn scalar_kernel(x: f64, y: f64) -> f64 {
    if x + y == 0.0 {
        0.0
    } else {
        2.0 * x * y / (x + y)
    }
}

/// Seeded subsample of the nonzero values of a matrix.
fn sample_values(x: &HistogramMatrix, count: usize, seed: u64) -> Vec<f64> {
    let nonzero: Vec<f64> = x.array().iter().copied().filter(|&v| v > 0.0).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| nonzero[rng.random_range(0..nonzero.len())])
        .collect()
}

#[derive(Args)]
pub struct BenchChi2Args {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// Comma list of methods.
    #[arg(long, default_value = "direct,chebyshev")]
    pub methods: String,
    /// Term counts: `1..10` or a comma list.
    #[arg(long, default_value = "1..10")]
    pub terms_list: String,
    #[arg(long, default_value_t = 1000)]
    pub bins: usize,
    /// Scalar values sampled from the data for the error grid.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bench_chi2_cmd(args: BenchChi2Args) -> Result<()> {
    let x = load_matrix(&args.input, args.format, false)?;
    let terms_list = parse_count_list(&args.terms_list)?;
    let values = sample_values(&x, args.samples, args.seed);
    let mut rows = Vec::new();
    for method in args.methods.split(',') {
        for &terms in &terms_list {
            let (max_err, mean_err) = match method {
                "direct" => {
                    let k = fit_params(&x, terms, args.bins)?;
                    pair_stats(&values, |a, b| nterm_error_exact(a, b, &k).abs())
                }
                "chebyshev" => {
                    let width = terms + 1;
                    let coeffs: Vec<Vec<f64>> = values
                        .iter()
                        .map(|&v| {
                            let mut c = vec![0.0; width];
                            cheb_coeffs(v, &mut c);
                            c
                        })
                        .collect();
                    let mut idx = std::collections::HashMap::new();
                    for (i, &v) in values.iter().enumerate() {
                        idx.entry(v.to_bits()).or_insert(i);
                    }
                    pair_stats(&values, |a, b| {
                        let (i, j) = (idx[&a.to_bits()], idx[&b.to_bits()]);
                        let dot: f64 = coeffs[i]
                            .iter()
                            .zip(&coeffs[j])
                            .map(|(p, q)| p * q)
                            .sum();
                        (scalar_kernel(a, b) - dot).abs()
                    })
                }
                other => {
                    return Err(Chi2Error::Parameter(format!("unknown method `{other}`")));
                }
            };
            rows.push(BenchRow {
                method: method.to_string(),
                terms,
                dims: 0,
                seed: args.seed,
                metric: "max_abs_err".into(),
                value: max_err,
            });
            rows.push(BenchRow {
                method: method.to_string(),
                terms,
                dims: 0,
                seed: args.seed,
                metric: "mean_abs_err".into(),
                value: mean_err,
            });
        }
    }
    write_bench_report(&args.out, &rows)
}

fn pair_stats(values: &[f64], err: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for &a in values {
        for &b in values {
            let e = err(a, b);
            max = max.max(e);
            sum += e;
            count += 1;
        }
    }
    (max, sum / count as f64)
}

#[derive(Args)]
pub struct BenchKernelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    #[arg(long, default_value = "direct")]
    pub method: String,
    #[arg(long, default_value_t = 5)]
    pub terms: usize,
    #[arg(long, default_value_t = 1000)]
    pub bins: usize,
    /// RF dimensions to sweep: comma list.
    #[arg(long, default_value = "1000,3000,7000")]
    pub dims_list: String,
    #[arg(long, default_value_t = 0.75)]
    pub gamma: f64,
    /// Number of RF seeds per dimension.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    /// Cap on the rows used for the Gram comparison.
    #[arg(long, default_value_t = 200)]
    pub max_rows: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bench_kernel_cmd(args: BenchKernelArgs) -> Result<()> {
    let full = load_matrix(&args.input, args.format, false)?;
    let n = full.rows().min(args.max_rows);
    let x = HistogramMatrix::new(
        full.array()
            .slice(ndarray::s![..n, ..])
            .to_owned(),
    )?;
    let embedded = match args.method.as_str() {
        "direct" => {
            let k = fit_params(&x, args.terms, args.bins)?;
            embed_matrix(&x, &k)
        }
        "chebyshev" => chi2map::chebyshev::cheb_embed_matrix(&x, args.terms),
        other => return Err(Chi2Error::Parameter(format!("unknown method `{other}`"))),
    };
    let beta = 2.0 * args.gamma;
    let mut exact = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let d = chi2_distance(x.array().row(i), x.array().row(j))?;
            let v = (-beta * d).exp();
            exact[[i, j]] = v;
            exact[[j, i]] = v;
        }
    }
    let mut rows = Vec::new();
    for &dims in &parse_count_list(&args.dims_list)? {
        let mut max_errs = Vec::new();
        let mut mean_errs = Vec::new();
        for seed in 0..args.seeds {
            let basis = sample_basis(embedded.ncols(), dims, args.gamma, seed)?;
            let z = rf_transform(&embedded, &basis)?;
            let gram = z.dot(&z.t());
            let mut max = 0.0f64;
            let mut sum = 0.0f64;
            for (a, b) in gram.iter().zip(exact.iter()) {
                let e = (a - b).abs();
                max = max.max(e);
                sum += e;
            }
            max_errs.push(max);
            mean_errs.push(sum / (n * n) as f64);
        }
        for (name, errs) in [("max_abs_err", &max_errs), ("mean_abs_err", &mean_errs)] {
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                / errs.len() as f64;
            for (suffix, value) in [("_mean", mean), ("_std", var.sqrt())] {
                rows.push(BenchRow {
                    method: args.method.clone(),
                    terms: args.terms,
                    dims,
                    seed: args.seeds,
                    metric: format!("{name}{suffix}"),
                    value,
                });
            }
        }
    }
    write_bench_report(&args.out, &rows)
}

#[derive(Args)]
pub struct End2endArgs {
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 64)]
    pub input_dims: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 7)]
    pub task_seed: u64,
    #[arg(long, default_value_t = 5)]
    pub terms: usize,
    /// RF dimension for the headline exact-vs-approximate comparison.
    #[arg(long, default_value_t = 7000)]
    pub dims: usize,
    /// RF dimension for the plain-vs-PCA comparison.
    #[arg(long, default_value_t = 512)]
    pub pca_dims: usize,
    /// Oversampling multiple for the PCA variant.
    #[arg(long, default_value_t = 3)]
    pub oversample: usize,
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Uncentered kernel ridge in the dual: alpha = (K + lambda I)^-1 Y. With
/// K = Z Z^T this is exactly primal ridge on the feature matrix Z.
fn dual_ridge_accuracy(
    k_train: &Array2<f64>,
    k_test: &Array2<f64>,
    y: &LabelMatrix,
    test_classes: &[usize],
    lambda: f64,
) -> Result<f64> {
    let n = k_train.nrows();
    let mut system = k_train.clone();
    for i in 0..n {
        system[[i, i]] += lambda;
    }
    let classes = y.classes();
    let mut alpha = Array2::zeros((n, classes));
    for class in 0..classes {
        let sol = system
            .solve(&y.array().column(class).to_owned())
            .map_err(|e| Chi2Error::Numerical(format!("dual ridge solve failed: {e}")))?;
        alpha.column_mut(class).assign(&sol);
    }
    Ok(accuracy(&k_test.dot(&alpha), test_classes))
}

fn exp_chi2_gram(a: ArrayView2<f64>, b: ArrayView2<f64>, beta: f64) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let d = chi2_distance(a.row(i), b.row(j))?;
            out[[i, j]] = (-beta * d).exp();
        }
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn end2end_cmd(args: End2endArgs) -> Result<()> {
    let task = generate(
        args.n_train,
        args.n_test,
        args.input_dims,
        args.classes,
        args.task_seed,
    )?;
    let gamma = args.beta / 2.0;
    let mut rows = Vec::new();
    let push = |rows: &mut Vec<BenchRow>, method: &str, dims, seed, metric: &str, value| {
        rows.push(BenchRow {
            method: method.into(),
            terms: args.terms,
            dims,
            seed,
            metric: metric.into(),
            value,
        });
    };

    // exact exp-chi2 kernel ridge
    let k_train = exp_chi2_gram(task.train.array().view(), task.train.array().view(), args.beta)?;
    let k_test = exp_chi2_gram(task.test.array().view(), task.train.array().view(), args.beta)?;
    let exact_acc = dual_ridge_accuracy(
        &k_train,
        &k_test,
        &task.train_labels,
        &task.test_classes,
        args.lambda,
    )?;
    push(&mut rows, "exact", 0, 0, "accuracy", exact_acc);

    let k = fit_params(&task.train, args.terms, 1000)?;
    let emb_train = embed_matrix(&task.train, &k);
    let emb_test = embed_matrix(&task.test, &k);

    // approximate pipeline at the headline dimension
    let mut approx = Vec::new();
    for seed in 0..args.seeds {
        let basis = sample_basis(emb_train.ncols(), args.dims, gamma, 900 + seed)?;
        let z_train = rf_transform(&emb_train, &basis)?;
        let z_test = rf_transform(&emb_test, &basis)?;
        let acc = dual_ridge_accuracy(
            &z_train.dot(&z_train.t()),
            &z_test.dot(&z_train.t()),
            &task.train_labels,
            &task.test_classes,
            args.lambda,
        )?;
        push(&mut rows, "direct", args.dims, seed, "accuracy", acc);
        approx.push(acc);
    }
    push(&mut rows, "direct", args.dims, args.seeds, "accuracy_median", median(approx));

    // plain RF at pca_dims vs PCA reduction from oversample * pca_dims
    let mut plain = Vec::new();
    let mut reduced = Vec::new();
    for seed in 0..args.seeds {
        for (dims, kept, out) in [
            (args.pca_dims, args.pca_dims, &mut plain),
            (args.pca_dims * args.oversample, args.pca_dims, &mut reduced),
        ] {
            let basis = sample_basis(emb_train.ncols(), dims, gamma, 950 + seed)?;
            let z_train = rf_transform(&emb_train, &basis)?;
            let z_test = rf_transform(&emb_test, &basis)?;
            let mut acc = MomentAccumulator::new(dims, args.classes);
            acc.add(z_train.view(), Some(task.train_labels.array().view()))?;
            let pca = eig_centered(&acc, kept)?;
            let ridge = ridge_after_pca(&acc, &pca, args.lambda)?;
            let scores = predict(&ridge, z_test.view())?;
            out.push(accuracy(&scores, &task.test_classes));
        }
    }
    for (seed, (&p, &r)) in plain.iter().zip(reduced.iter()).enumerate() {
        push(&mut rows, "plain-rf", args.pca_dims, seed as u64, "accuracy", p);
        push(&mut rows, "pca-rf", args.pca_dims, seed as u64, "accuracy", r);
    }
    push(&mut rows, "plain-rf", args.pca_dims, args.seeds, "accuracy_median", median(plain));
    push(&mut rows, "pca-rf", args.pca_dims, args.seeds, "accuracy_median", median(reduced));

    write_bench_report(&args.out, &rows)
}
