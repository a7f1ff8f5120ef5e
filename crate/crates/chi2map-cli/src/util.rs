//! Shared CLI plumbing: format selection, label/score CSV parsing, and the
//! versioned bench-report writer.

use std::fmt::Write as _;
use std::path::Path;

use chi2map::histio::{read_matrix, Format, HistogramMatrix, LabelMatrix};
use chi2map::{Chi2Error, Result};
use ndarray::Array2;

pub const BENCH_HEADER: &str = "# chi2map-bench v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Auto,
    Csv,
    Bin,
}

/// Resolves `--format` against the file extension (`.bin` means binary,
/// anything else CSV).
pub fn resolve_format(format: FormatArg, path: &Path) -> Format {
    match format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Bin => Format::Binary,
        FormatArg::Auto => {
            if path.extension().is_some_and(|e| e == "bin") {
                Format::Binary
            } else {
                Format::Csv
            }
        }
    }
}

pub fn load_matrix(path: &Path, format: FormatArg, strict_l1: bool) -> Result<HistogramMatrix> {
    let matrix = read_matrix(path, resolve_format(format, path))?;
    if strict_l1 {
        let bad = matrix.l1_violations(1e-6);
        if !bad.is_empty() {
            eprintln!(
                "warning: {} rows of {} do not sum to 1 within 1e-6 (first: row {})",
                bad.len(),
                path.display(),
                bad[0]
            );
        }
    }
    Ok(matrix)
}

fn io_err(path: &Path, source: std::io::Error) -> Chi2Error {
    Chi2Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Labels file: one integer class index per line.
pub fn load_labels(path: &Path) -> Result<(Vec<usize>, LabelMatrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut classes_seen = 0usize;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: usize = line.parse().map_err(|_| Chi2Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("expected a class index, got `{line}`"),
        })?;
        classes_seen = classes_seen.max(v + 1);
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(Chi2Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "no labels in file".into(),
        });
    }
    let matrix = LabelMatrix::one_vs_all(&labels, classes_seen)?;
    Ok((labels, matrix))
}

/// Reads a CSV of real values with no sign restriction (scores, weights).
pub fn read_real_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse().map_err(|_| Chi2Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("not a number: `{tok}`"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Chi2Error::RaggedRow {
                    row: rows.len(),
                    expected: first.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Chi2Error::EmptyMatrix);
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / cols, cols), flat).expect("rectangular"))
}

pub fn write_real_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One row of a bench report; unused fields stay 0/empty so the schema is
/// fixed across subcommands.
pub struct BenchRow {
    pub method: String,
    pub terms: usize,
    pub dims: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn write_bench_report(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{BENCH_HEADER}");
    let _ = writeln!(out, "method,terms,dims,seed,metric,value");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method, r.terms, r.dims, r.seed, r.metric, r.value
        );
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Parses `1..10` (inclusive) or `1,2,5` into a list.
pub fn parse_count_list(text: &str) -> Result<Vec<usize>> {
    let parse_one = |tok: &str| -> Result<usize> {
        tok.trim()
            .parse()
            .map_err(|_| Chi2Error::Parameter(format!("not a count: `{tok}`")))
    };
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if a > b {
            return Err(Chi2Error::Parameter(format!("empty range `{text}`")));
        }
        Ok((a..=b).collect())
    } else {
        text.split(',').map(parse_one).collect()
    }
}
