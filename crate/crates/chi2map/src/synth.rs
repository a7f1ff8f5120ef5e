//! Synthetic histogram classification task: a mixture of Dirichlet
//! distributions, one component per class. Low concentration parameters give
//! sparse, spiky histograms for which the chi-squared kernel is a natural
//! similarity, so approximation quality shows up directly in accuracy.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Uniform};

use crate::error::{Chi2Error, Result};
use crate::histio::{HistogramMatrix, LabelMatrix};

/// A generated train/test split with one-vs-all labels.
#[derive(Debug, Clone)]
pub struct SynthTask {
    pub train: HistogramMatrix,
    pub train_labels: LabelMatrix,
    pub train_classes: Vec<usize>,
    pub test: HistogramMatrix,
    pub test_classes: Vec<usize>,
}

/// Draws one Dirichlet(alpha) sample as normalized Gamma(alpha_i, 1) draws.
fn dirichlet_row(alphas: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut row: Vec<f64> = alphas
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("alpha > 0").sample(rng))
        .collect();
    let sum: f64 = row.iter().sum();
    if sum <= 0.0 {
        // all-zero draws are possible for tiny alpha; fall back to uniform
        let d = row.len() as f64;
        row.iter_mut().for_each(|v| *v = 1.0 / d);
    } else {
        row.iter_mut().for_each(|v| *v /= sum);
    }
    row
}

/// Generates `n_train` + `n_test` histograms over `dims` bins from `classes`
/// Dirichlet components with concentrations drawn uniformly from
/// [0.05, 0.5]. Deterministic per seed.
pub fn generate(
    n_train: usize,
    n_test: usize,
    dims: usize,
    classes: usize,
    seed: u64,
) -> Result<SynthTask> {
    if n_train == 0 || n_test == 0 || dims == 0 || classes == 0 {
        return Err(Chi2Error::Parameter(
            "n_train, n_test, dims and classes must all be positive".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let conc = Uniform::new(0.05, 0.5).expect("valid range");
    let alphas: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dims).map(|_| conc.sample(&mut rng)).collect())
        .collect();

    let mut sample_split = |n: usize| -> (Array2<f64>, Vec<usize>) {
        let mut data = Array2::zeros((n, dims));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = rng.random_range(0..classes);
            let row = dirichlet_row(&alphas[class], &mut rng);
            for (j, v) in row.into_iter().enumerate() {
                data[[i, j]] = v;
            }
            labels.push(class);
        }
        (data, labels)
    };
    let (train_data, train_classes) = sample_split(n_train);
    let (test_data, test_classes) = sample_split(n_test);

    Ok(SynthTask {
        train: HistogramMatrix::new(train_data)?,
        train_labels: LabelMatrix::one_vs_all(&train_classes, classes)?,
        train_classes,
        test: HistogramMatrix::new(test_data)?,
        test_classes,
    })
}

/// Fraction of rows whose argmax score matches the true class.
pub fn accuracy(scores: &Array2<f64>, classes: &[usize]) -> f64 {
    let correct = scores
        .rows()
        .into_iter()
        .zip(classes.iter())
        .filter(|(row, &truth)| {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            pred == truth
        })
        .count();
    correct as f64 / classes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate(50, 20, 16, 3, 7).unwrap();
        let b = generate(50, 20, 16, 3, 7).unwrap();
        assert_eq!(a.train.array(), b.train.array());
        assert_eq!(a.test_classes, b.test_classes);
        let c = generate(50, 20, 16, 3, 8).unwrap();
        assert_ne!(a.train.array(), c.train.array());
    }

    #[test]
    fn rows_are_histograms() {
        let t = generate(100, 10, 32, 5, 1).unwrap();
        assert!(t.train.l1_violations(1e-9).is_empty());
        assert!(t.test.l1_violations(1e-9).is_empty());
        assert_eq!(t.train_labels.classes(), 5);
        assert_eq!(t.train_labels.rows(), 100);
    }

    #[test]
    fn classes_cover_range() {
        let t = generate(200, 50, 8, 4, 2).unwrap();
        for &c in t.train_classes.iter().chain(t.test_classes.iter()) {
            assert!(c < 4);
        }
        // with 200 draws every class should appear
        for class in 0..4 {
            assert!(t.train_classes.iter().any(|&c| c == class));
        }
    }

    #[test]
    fn accuracy_endpoints() {
        let scores = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0], [0.3, 0.7]]);
        assert_eq!(accuracy(&scores, &[0, 1, 1]), 1.0);
        assert_eq!(accuracy(&scores, &[1, 0, 0]), 0.0);
    }
}
