//! Embedding + random Fourier configurations, including the plain-text
//! multi-kernel config format: one record per line,
//! `<matrix-path> <method> <terms> <dims> <gamma> <seed>`, `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::chebyshev::cheb_embed_matrix;
use crate::chi2direct::{embed_matrix, fit_params, ParamVector};
use crate::error::{Chi2Error, Result};
use crate::histio::HistogramMatrix;
use crate::rfmap::{rf_transform, sample_basis, RFBasis};

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Direct(ParamVector),
    Chebyshev { terms: usize },
}

impl Method {
    /// Width of the scalar embedding per input dimension.
    pub fn coeffs_per_dim(&self) -> usize {
        match self {
            Method::Direct(k) => k.len(),
            Method::Chebyshev { terms } => terms + 1,
        }
    }
}

/// One kernel approximator: a chi-squared embedding lifted by a random
/// Fourier basis.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    pub method: Method,
    pub basis: RFBasis,
}

impl FeaturePipeline {
    pub fn new(method: Method, basis: RFBasis, input_cols: usize) -> Result<Self> {
        let expected = method.coeffs_per_dim() * input_cols;
        if basis.embed_dim() != expected {
            return Err(Chi2Error::Consistency(format!(
                "basis embed_dim {} does not match method width {expected}",
                basis.embed_dim()
            )));
        }
        Ok(Self { method, basis })
    }

    pub fn dims(&self) -> usize {
        self.basis.dims()
    }

    pub fn embed(&self, x: &HistogramMatrix) -> Array2<f64> {
        match &self.method {
            Method::Direct(k) => embed_matrix(x, k),
            Method::Chebyshev { terms } => cheb_embed_matrix(x, *terms),
        }
    }

    pub fn features(&self, x: &HistogramMatrix) -> Result<Array2<f64>> {
        rf_transform(&self.embed(x), &self.basis)
    }
}

/// One line of a multi-kernel config file.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub matrix_path: PathBuf,
    pub method_name: MethodName,
    pub terms: usize,
    pub dims: usize,
    pub gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Direct,
    Chebyshev,
}

impl std::str::FromStr for MethodName {
    type Err = Chi2Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(MethodName::Direct),
            "chebyshev" => Ok(MethodName::Chebyshev),
            other => Err(Chi2Error::Parameter(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodName::Direct => write!(f, "direct"),
            MethodName::Chebyshev => write!(f, "chebyshev"),
        }
    }
}

impl KernelSpec {
    /// Builds the pipeline for `x`, fitting direct-series parameters from the
    /// data when the method requires them.
    pub fn build(&self, x: &HistogramMatrix, bins: usize) -> Result<FeaturePipeline> {
        let method = match self.method_name {
            MethodName::Direct => Method::Direct(fit_params(x, self.terms, bins)?),
            MethodName::Chebyshev => Method::Chebyshev { terms: self.terms },
        };
        let embed_dim = method.coeffs_per_dim() * x.cols();
        let basis = sample_basis(embed_dim, self.dims, self.gamma, self.seed)?;
        FeaturePipeline::new(method, basis, x.cols())
    }
}

pub fn parse_multikernel_config(path: &Path, text: &str) -> Result<Vec<KernelSpec>> {
    let mut specs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Chi2Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(parse_err(format!(
                "expected 6 fields (path method terms dims gamma seed), got {}",
                fields.len()
            )));
        }
        specs.push(KernelSpec {
            matrix_path: PathBuf::from(fields[0]),
            method_name: fields[1].parse()?,
            terms: fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad terms `{}`", fields[2])))?,
            dims: fields[3]
                .parse()
                .map_err(|_| parse_err(format!("bad dims `{}`", fields[3])))?,
            gamma: fields[4]
                .parse()
                .map_err(|_| parse_err(format!("bad gamma `{}`", fields[4])))?,
            seed: fields[5]
                .parse()
                .map_err(|_| parse_err(format!("bad seed `{}`", fields[5])))?,
        });
    }
    if specs.is_empty() {
        return Err(Chi2Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "config contains no kernel records".into(),
        });
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn config_parse_round_trip() {
        let text = "# two kernels\n\
                    data/a.bin direct 5 7000 0.75 42\n\
                    \n\
                    data/b.bin chebyshev 8 3000 0.5 43\n";
        let specs = parse_multikernel_config(Path::new("cfg.txt"), text).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].method_name, MethodName::Direct);
        assert_eq!(specs[0].dims, 7000);
        assert_eq!(specs[1].method_name, MethodName::Chebyshev);
        assert_eq!(specs[1].seed, 43);
    }

    #[test]
    fn config_rejects_bad_lines() {
        assert!(parse_multikernel_config(Path::new("c"), "a direct 5 10 0.75").is_err());
        assert!(parse_multikernel_config(Path::new("c"), "a nope 5 10 0.75 1").is_err());
        assert!(parse_multikernel_config(Path::new("c"), "# nothing\n").is_err());
    }

    #[test]
    fn pipeline_dim_consistency() {
        let x = HistogramMatrix::new(arr2(&[[0.2, 0.8], [0.6, 0.4]])).unwrap();
        let spec = KernelSpec {
            matrix_path: PathBuf::new(),
            method_name: MethodName::Chebyshev,
            terms: 3,
            dims: 16,
            gamma: 0.75,
            seed: 1,
        };
        let pipeline = spec.build(&x, 100).unwrap();
        assert_eq!(pipeline.basis.embed_dim(), 8);
        let z = pipeline.features(&x).unwrap();
        assert_eq!(z.dim(), (2, 16));

        let basis = sample_basis(9, 16, 0.75, 1).unwrap();
        assert!(FeaturePipeline::new(Method::Chebyshev { terms: 3 }, basis, 2).is_err());
    }
}
