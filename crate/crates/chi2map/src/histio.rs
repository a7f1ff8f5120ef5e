//! Ingestion, validation and chunked streaming of histogram feature matrices.
//!
//! Two on-disk formats are supported:
//!
//! * binary: magic `CHI2MAT1`, little-endian u64 rows, u64 cols, then
//!   rows*cols little-endian IEEE-754 f64 values in row-major order;
//! * CSV: one row per line, comma-separated f64 values.
//!
//! The binary format is seekable, which is what the chunked reader relies on.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::error::{Chi2Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"CHI2MAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl std::str::FromStr for Format {
    type Err = Chi2Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "bin" | "binary" => Ok(Format::Binary),
            other => Err(Chi2Error::Parameter(format!("unknown format `{other}`"))),
        }
    }
}

/// A dense n x d matrix of nonnegative, finite histogram descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMatrix {
    data: Array2<f64>,
}

impl HistogramMatrix {
    /// Validates entries: nonnegative, no NaN/Inf.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Chi2Error::EmptyMatrix);
        }
        for ((row, col), &value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(Chi2Error::InvalidValue {
                    row,
                    col,
                    value,
                    reason: "not finite",
                });
            }
            if value < 0.0 {
                return Err(Chi2Error::InvalidValue {
                    row,
                    col,
                    value,
                    reason: "negative",
                });
            }
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Indices of rows whose entries do not sum to 1 within `tol`.
    ///
    /// The direct and Chebyshev maps are defined pointwise, so imperfect
    /// normalization is accepted; callers following `--strict-l1` warn on
    /// the returned rows.
    pub fn l1_violations(&self, tol: f64) -> Vec<usize> {
        self.data
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| (row.sum() - 1.0).abs() > tol)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Labels paired with a [`HistogramMatrix`]: +-1 one-vs-all columns or
/// real-valued regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    data: Array2<f64>,
}

impl LabelMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Chi2Error::EmptyMatrix);
        }
        for ((row, col), &value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(Chi2Error::InvalidValue {
                    row,
                    col,
                    value,
                    reason: "not finite",
                });
            }
        }
        Ok(Self { data })
    }

    /// One-vs-all +-1 encoding of integer class labels.
    pub fn one_vs_all(labels: &[usize], classes: usize) -> Result<Self> {
        let mut data = Array2::from_elem((labels.len(), classes), -1.0);
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Chi2Error::Parameter(format!(
                    "label {y} out of range for {classes} classes"
                )));
            }
            data[[i, y]] = 1.0;
        }
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn classes(&self) -> usize {
        self.data.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Chi2Error {
    Chi2Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_matrix(path: &Path, format: Format) -> Result<HistogramMatrix> {
    HistogramMatrix::new(read_matrix_raw(path, format)?)
}

/// Reads a matrix without histogram validation — for embedded features,
/// scores and other sign-free data in the same formats.
pub fn read_matrix_raw(path: &Path, format: Format) -> Result<Array2<f64>> {
    match format {
        Format::Csv => read_csv(path),
        Format::Binary => read_binary(path),
    }
}

pub fn write_matrix(path: &Path, matrix: &Array2<f64>, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(path, matrix),
        Format::Binary => write_binary(path, matrix),
    }
}

fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row_vals = Vec::new();
        for (colno, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Chi2Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("field {} is not a number: `{}`", colno + 1, field.trim()),
            })?;
            row_vals.push(v);
        }
        match cols {
            None => cols = Some(row_vals.len()),
            Some(c) if c != row_vals.len() => {
                return Err(Chi2Error::RaggedRow {
                    row: rows,
                    expected: c,
                    got: row_vals.len(),
                })
            }
            _ => {}
        }
        values.extend(row_vals);
        rows += 1;
    }
    let cols = cols.ok_or(Chi2Error::EmptyMatrix)?;
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Chi2Error::Parameter(e.to_string()))
}

fn write_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_binary(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let (rows, cols) = read_binary_header(&mut reader, path)?;
    if rows == 0 || cols == 0 {
        return Err(Chi2Error::EmptyMatrix);
    }
    let mut values = vec![0f64; rows * cols];
    read_f64_into(&mut reader, &mut values).map_err(|e| io_err(path, e))?;
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Chi2Error::Parameter(e.to_string()))
}

pub(crate) fn read_binary_header<R: Read>(reader: &mut R, path: &Path) -> Result<(usize, usize)> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MATRIX_MAGIC {
        return Err(Chi2Error::BadMagic {
            path: path.display().to_string(),
            expected: "CHI2MAT1",
        });
    }
    let rows = read_u64(reader).map_err(|e| io_err(path, e))? as usize;
    let cols = read_u64(reader).map_err(|e| io_err(path, e))? as usize;
    Ok((rows, cols))
}

fn write_binary(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MATRIX_MAGIC).map_err(|e| io_err(path, e))?;
    write_u64(&mut w, matrix.nrows() as u64).map_err(|e| io_err(path, e))?;
    write_u64(&mut w, matrix.ncols() as u64).map_err(|e| io_err(path, e))?;
    // Row-major regardless of the in-memory layout.
    for &v in matrix.iter() {
        w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_f64_into<R: Read>(r: &mut R, out: &mut [f64]) -> std::io::Result<()> {
    let mut buf = vec![0u8; out.len() * 8];
    r.read_exact(&mut buf)?;
    for (v, chunk) in out.iter_mut().zip(buf.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(())
}

/// Where chunked rows come from.
#[derive(Debug, Clone)]
pub enum ChunkSource {
    /// Binary `CHI2MAT1` file; chunks are read with seeks.
    File(PathBuf),
    /// Already-loaded matrix; chunks are row slices.
    Memory(HistogramMatrix),
}

/// Description of a chunked pass over a matrix.
#[derive(Debug, Clone)]
pub struct ChunkSpec {
    pub chunk_rows: usize,
    pub total_rows: usize,
    pub cols: usize,
    pub source: ChunkSource,
}

impl ChunkSpec {
    pub fn from_memory(matrix: HistogramMatrix, chunk_rows: usize) -> Result<Self> {
        let total_rows = matrix.rows();
        let cols = matrix.cols();
        Self::validate(chunk_rows, total_rows)?;
        Ok(Self {
            chunk_rows,
            total_rows,
            cols,
            source: ChunkSource::Memory(matrix),
        })
    }

    pub fn from_file(path: &Path, chunk_rows: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut reader = BufReader::new(file);
        let (total_rows, cols) = read_binary_header(&mut reader, path)?;
        if total_rows == 0 || cols == 0 {
            return Err(Chi2Error::EmptyMatrix);
        }
        Self::validate(chunk_rows, total_rows)?;
        Ok(Self {
            chunk_rows,
            total_rows,
            cols,
            source: ChunkSource::File(path.to_path_buf()),
        })
    }

    fn validate(chunk_rows: usize, total_rows: usize) -> Result<()> {
        if chunk_rows == 0 || chunk_rows > total_rows {
            return Err(Chi2Error::Parameter(format!(
                "chunk_rows must be in 1..={total_rows}, got {chunk_rows}"
            )));
        }
        Ok(())
    }

    pub fn num_chunks(&self) -> usize {
        self.total_rows.div_ceil(self.chunk_rows)
    }
}

/// Streams `ceil(total_rows / chunk_rows)` chunks in index order; the last
/// chunk may be short. Single consumer; yielded chunks are immutable.
pub fn stream_chunks(spec: &ChunkSpec) -> Result<ChunkIter> {
    let reader = match &spec.source {
        ChunkSource::File(path) => {
            let file = File::open(path).map_err(|e| io_err(path, e))?;
            Some(BufReader::new(file))
        }
        ChunkSource::Memory(_) => None,
    };
    Ok(ChunkIter {
        spec: spec.clone(),
        reader,
        next_chunk: 0,
    })
}

pub struct ChunkIter {
    spec: ChunkSpec,
    reader: Option<BufReader<File>>,
    next_chunk: usize,
}

impl Iterator for ChunkIter {
    type Item = Result<HistogramMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        let index = self.next_chunk;
        if index >= self.spec.num_chunks() {
            return None;
        }
        self.next_chunk += 1;
        let start = index * self.spec.chunk_rows;
        let end = (start + self.spec.chunk_rows).min(self.spec.total_rows);
        let rows = end - start;
        let cols = self.spec.cols;
        match &self.spec.source {
            ChunkSource::Memory(m) => {
                let slice = m.array().slice(ndarray::s![start..end, ..]).to_owned();
                Some(HistogramMatrix::new(slice))
            }
            ChunkSource::File(_) => {
                let reader = self.reader.as_mut().expect("file source has a reader");
                let offset = 24 + (start * cols * 8) as u64;
                let res = (|| -> std::io::Result<Array2<f64>> {
                    reader.seek(SeekFrom::Start(offset))?;
                    let mut values = vec![0f64; rows * cols];
                    read_f64_into(reader, &mut values)?;
                    Ok(Array2::from_shape_vec((rows, cols), values).expect("shape matches"))
                })();
                match res {
                    Ok(arr) => Some(HistogramMatrix::new(arr)),
                    Err(source) => Some(Err(Chi2Error::ChunkIo {
                        chunk: index,
                        source,
                    })),
                }
            }
        }
    }
}

/// Density estimate of the nonzero values of `X` over logarithmically spaced
/// bins between the smallest nonzero entry and the maximum. Returns bin
/// centroids (geometric midpoints) and a density vector summing to 1.
pub fn value_histogram(x: &HistogramMatrix, bins: usize) -> Result<(Array1<f64>, Array1<f64>)> {
    if bins == 0 {
        return Err(Chi2Error::Parameter("bins must be >= 1".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut nonzero = 0usize;
    for &v in x.array().iter() {
        if v > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
            nonzero += 1;
        }
    }
    if nonzero == 0 {
        return Err(Chi2Error::NoNonzeroValues);
    }
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let span = log_hi - log_lo;
    let centroids = Array1::from_iter(
        (0..bins).map(|i| (log_lo + span * (i as f64 + 0.5) / bins as f64).exp()),
    );
    let mut counts = vec![0u64; bins];
    for &v in x.array().iter() {
        if v > 0.0 {
            let idx = if span > 0.0 {
                (((v.ln() - log_lo) / span) * bins as f64) as usize
            } else {
                0
            };
            counts[idx.min(bins - 1)] += 1;
        }
    }
    let density = Array1::from_iter(counts.iter().map(|&c| c as f64 / nonzero as f64));
    Ok((centroids, density))
}
