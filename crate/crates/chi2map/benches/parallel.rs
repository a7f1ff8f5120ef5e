//! Parallel vs. serial throughput for the row-parallel entry points:
//! direct-series embedding, Chebyshev embedding, and random Fourier lifting.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use chi2map::chebyshev::{cheb_embed_matrix, cheb_embed_matrix_serial};
use chi2map::chi2direct::{embed_matrix, embed_matrix_serial, fit_params};
use chi2map::histio::HistogramMatrix;
use chi2map::rfmap::{rf_transform, rf_transform_serial, sample_basis};

fn random_histograms(n: usize, d: usize, seed: u64) -> HistogramMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    // zero out most entries so the value profile looks like real histograms
    for v in data.iter_mut() {
        if rng.random::<f64>() < 0.7 {
            *v = 0.0;
        }
    }
    for mut row in data.rows_mut() {
        let s = row.sum();
        if s == 0.0 {
            row[0] = 1.0;
        } else {
            row.mapv_inplace(|v| v / s);
        }
    }
    HistogramMatrix::new(data).unwrap()
}

fn bench_direct_embed(c: &mut Criterion) {
    let mut group = c.benchmark_group("direct_embed");
    for &rows in &[256usize, 1024] {
        let x = random_histograms(rows, 128, 1);
        let k = fit_params(&x, 5, 200).unwrap();
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::new("parallel", rows), &rows, |b, _| {
            b.iter(|| embed_matrix(&x, &k))
        });
        group.bench_with_input(BenchmarkId::new("serial", rows), &rows, |b, _| {
            b.iter(|| embed_matrix_serial(&x, &k))
        });
    }
    group.finish();
}

fn bench_cheb_embed(c: &mut Criterion) {
    let mut group = c.benchmark_group("cheb_embed");
    for &rows in &[256usize, 1024] {
        let x = random_histograms(rows, 128, 2);
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::new("parallel", rows), &rows, |b, _| {
            b.iter(|| cheb_embed_matrix(&x, 8))
        });
        group.bench_with_input(BenchmarkId::new("serial", rows), &rows, |b, _| {
            b.iter(|| cheb_embed_matrix_serial(&x, 8))
        });
    }
    group.finish();
}

fn bench_rf_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("rf_transform");
    group.sample_size(20);
    for &rows in &[256usize, 1024] {
        let x = random_histograms(rows, 128, 3);
        let k = fit_params(&x, 5, 200).unwrap();
        let embedded = embed_matrix(&x, &k);
        let basis = sample_basis(embedded.ncols(), 2048, 0.75, 9).unwrap();
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::new("parallel", rows), &rows, |b, _| {
            b.iter(|| rf_transform(&embedded, &basis).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", rows), &rows, |b, _| {
            b.iter(|| rf_transform_serial(&embedded, &basis).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_direct_embed, bench_cheb_embed, bench_rf_transform);
criterion_main!(benches);
