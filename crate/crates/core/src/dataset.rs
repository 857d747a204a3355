//! Observation matrices: CSV ingestion, time-series windowing and the
//! synthetic sources used to exercise the estimators.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// `N` observations of dimension `D`, stored row-major.
///
/// Always holds at least two rows, at least one column and only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    values: Vec<T>,
    n: usize,
    dim: usize,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset from a row-major buffer of `n * dim` values.
    pub fn from_flat(values: Vec<T>, n: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ambient dimension must be at least 1"));
        }
        if values.len() != n * dim {
            return Err(Error::invalid(format!(
                "buffer holds {} values, expected {n} x {dim}",
                values.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim + 1,
                column: pos % dim + 1,
            });
        }
        Ok(Self { values, n, dim })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Ragged {
                    row: i + 1,
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(values, rows.len(), dim)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `D`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.values
    }

    /// Number of columns that are zero in every row.
    pub fn zero_columns(&self) -> usize {
        (0..self.dim)
            .filter(|&c| self.rows().all(|r| r[c] == T::zero()))
            .count()
    }

    /// Writes the matrix as headerless comma-separated text, one row per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_write_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

/// How [`load_csv`] reads a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Zero-based column indices to keep, in output order. `None` keeps every column.
    pub columns: Option<Vec<usize>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            columns: None,
        }
    }
}

struct Table<T> {
    values: Vec<T>,
    rows: usize,
    cols: usize,
}

fn read_table<T: Real, R: Read>(source: R, opts: &CsvOptions) -> Result<Table<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let row = e.position().map_or(rows + 1, |p| p.line() as usize);
                return Err(match e.into_kind() {
                    csv::ErrorKind::Io(io) => Error::Io(io),
                    csv::ErrorKind::Utf8 { err, .. } => Error::Csv {
                        row,
                        message: format!("invalid UTF-8: {err}"),
                    },
                    other => Error::Csv {
                        row,
                        message: format!("{other:?}"),
                    },
                });
            }
        }
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        let found = record.len();
        match width {
            None => width = Some(found),
            Some(w) if w != found => {
                return Err(Error::Ragged {
                    row: line,
                    expected: w,
                    found,
                })
            }
            Some(_) => {}
        }

        let mut push = |col: usize| -> Result<()> {
            let cell = record.get(col).ok_or(Error::MissingColumn {
                row: line,
                column: col + 1,
                found,
            })?;
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: col + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: line,
                    column: col + 1,
                });
            }
            values.push(T::lit(v));
            Ok(())
        };
        match &opts.columns {
            Some(cols) => cols.iter().try_for_each(|&c| push(c))?,
            None => (0..found).try_for_each(&mut push)?,
        }
        rows += 1;
    }
    let cols = opts
        .columns
        .as_ref()
        .map_or(width.unwrap_or(0), |c| c.len());
    Ok(Table { values, rows, cols })
}

/// Reads a rectangular numeric CSV table, one observation per record.
pub fn load_csv<T: Real, R: Read>(source: R, opts: &CsvOptions) -> Result<Dataset<T>> {
    let table = read_table(source, opts)?;
    if table.rows < 2 {
        return Err(Error::TooFewRows(table.rows));
    }
    Dataset::from_flat(table.values, table.rows, table.cols)
}

/// Reads a single numeric column as a series, for later windowing.
///
/// With no column selection the table must have exactly one column.
pub fn load_series<T: Real, R: Read>(source: R, opts: &CsvOptions) -> Result<Vec<T>> {
    if matches!(&opts.columns, Some(c) if c.len() != 1) {
        return Err(Error::invalid("a series is read from exactly one column"));
    }
    let table = read_table::<T, _>(source, opts)?;
    if table.rows > 0 && table.cols != 1 {
        return Err(Error::invalid(format!(
            "series input has {} columns; select one",
            table.cols
        )));
    }
    Ok(table.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WindowMode {
    /// Consecutive non-overlapping blocks; a trailing partial block is dropped.
    Disjoint,
    Sliding { stride: usize },
}

/// Turns a scalar series into `width`-dimensional patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub width: usize,
    #[serde(flatten)]
    pub mode: WindowMode,
}

impl WindowConfig {
    pub fn disjoint(width: usize) -> Self {
        Self {
            width,
            mode: WindowMode::Disjoint,
        }
    }

    pub fn sliding(width: usize, stride: usize) -> Self {
        Self {
            width,
            mode: WindowMode::Sliding { stride },
        }
    }

    /// Number of patterns produced from a series of length `len`.
    pub fn pattern_count(&self, len: usize) -> usize {
        if len < self.width || self.width == 0 {
            return 0;
        }
        match self.mode {
            WindowMode::Disjoint => len / self.width,
            WindowMode::Sliding { stride } => (len - self.width) / stride.max(1) + 1,
        }
    }
}

pub fn window_series<T: Real>(series: &[T], cfg: &WindowConfig) -> Result<Dataset<T>> {
    if cfg.width == 0 {
        return Err(Error::invalid("window width must be at least 1"));
    }
    let step = match cfg.mode {
        WindowMode::Disjoint => cfg.width,
        WindowMode::Sliding { stride: 0 } => {
            return Err(Error::invalid("window stride must be at least 1"))
        }
        WindowMode::Sliding { stride } => stride,
    };
    if series.len() < cfg.width {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            width: cfg.width,
        });
    }
    let n = cfg.pattern_count(series.len());
    let mut values = Vec::with_capacity(n * cfg.width);
    for i in 0..n {
        values.extend_from_slice(&series[i * step..i * step + cfg.width]);
    }
    Dataset::from_flat(values, n, cfg.width)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_count(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::TooFewRows(n))
    } else {
        Ok(())
    }
}

fn collect<T: Real>(values: Vec<f64>, n: usize, dim: usize) -> Result<Dataset<T>> {
    Dataset::from_flat(values.into_iter().map(T::lit).collect(), n, dim)
}

/// Points on the side of a cylinder: `[sin 2πU, cos 2πU, 0.1 V]`.
///
/// A 2D surface of area `0.2π` embedded in 3D; at coarse scales it looks like
/// a ring of length `2π`.
pub fn gen_circle<T: Real>(n: usize, seed: u64) -> Result<Dataset<T>> {
    check_count(n)?;
    let mut rng = rng(seed);
    let mut values = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let a = 2.0 * PI * u;
        values.extend_from_slice(&[a.sin(), a.cos(), 0.1 * v]);
    }
    collect(values, n, 3)
}

/// A ring with a fast ripple: `[sin 2πU, cos 2πU, 0.1 sin 300πU]`.
///
/// A 1D curve of length slightly above 60.
pub fn gen_sinusoid<T: Real>(n: usize, seed: u64) -> Result<Dataset<T>> {
    check_count(n)?;
    let mut rng = rng(seed);
    let mut values = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let a = 2.0 * PI * u;
        values.extend_from_slice(&[a.sin(), a.cos(), 0.1 * (300.0 * PI * u).sin()]);
    }
    collect(values, n, 3)
}

/// Uniform samples from the unit `intrinsic`-cube placed in `ambient` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypercubeSpec {
    pub n: usize,
    pub intrinsic: usize,
    pub ambient: usize,
    pub seed: u64,
    /// Apply a seeded random orthonormal rotation after zero padding.
    #[serde(default)]
    pub rotate: bool,
}

impl HypercubeSpec {
    pub fn new(n: usize, intrinsic: usize, ambient: usize, seed: u64) -> Self {
        Self {
            n,
            intrinsic,
            ambient,
            seed,
            rotate: false,
        }
    }
}

pub fn gen_hypercube<T: Real>(spec: &HypercubeSpec) -> Result<Dataset<T>> {
    check_count(spec.n)?;
    if spec.intrinsic == 0 {
        return Err(Error::invalid("intrinsic dimension must be at least 1"));
    }
    if spec.intrinsic > spec.ambient {
        return Err(Error::invalid(format!(
            "intrinsic dimension {} exceeds ambient dimension {}",
            spec.intrinsic, spec.ambient
        )));
    }
    let (d, dim) = (spec.intrinsic, spec.ambient);
    let mut rng = rng(spec.seed);
    let mut values = vec![0.0f64; spec.n * dim];
    for row in values.chunks_exact_mut(dim) {
        for v in &mut row[..d] {
            *v = rng.random();
        }
    }
    if spec.rotate {
        let q = random_rotation(dim, &mut rng);
        let mut rotated = vec![0.0f64; dim];
        for row in values.chunks_exact_mut(dim) {
            for (i, out) in rotated.iter_mut().enumerate() {
                *out = q[i * dim..(i + 1) * dim]
                    .iter()
                    .zip(row.iter())
                    .map(|(a, b)| a * b)
                    .sum();
            }
            row.copy_from_slice(&rotated);
        }
    }
    collect(values, spec.n, dim)
}

/// Row-major orthonormal matrix from modified Gram-Schmidt on Gaussian rows.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut ok = true;
        for i in 0..dim {
            for j in 0..i {
                let dot: f64 = (0..dim).map(|k| q[i * dim + k] * q[j * dim + k]).sum();
                for k in 0..dim {
                    q[i * dim + k] -= dot * q[j * dim + k];
                }
            }
            let norm = (0..dim).map(|k| q[i * dim + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            for k in 0..dim {
                q[i * dim + k] /= norm;
            }
        }
        if ok {
            return q;
        }
    }
}

/// Points `t * direction + noise`, `t ~ U(0,1)`, noise uniform in `[-a, a]^D`.
pub fn gen_noisy_segment<T: Real>(
    n: usize,
    direction: &[f64],
    noise_amplitude: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    check_count(n)?;
    if direction.is_empty() || direction.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("segment direction must be a non-zero vector"));
    }
    if direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("segment direction must be finite"));
    }
    if !(noise_amplitude >= 0.0) || !noise_amplitude.is_finite() {
        return Err(Error::invalid("noise amplitude must be finite and >= 0"));
    }
    let dim = direction.len();
    let mut rng = rng(seed);
    let mut values = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let t: f64 = rng.random();
        for &c in direction {
            let e: f64 = rng.random();
            values.push(t * c + noise_amplitude * (2.0 * e - 1.0));
        }
    }
    collect(values, n, dim)
}

/// Direction of the segment whose noisy samples make up the five-point worked example.
pub const EXAMPLE_SEGMENT_DIRECTION: [f64; 3] = [92.0, 46.0, 138.0];

fn default_segment_direction() -> Vec<f64> {
    EXAMPLE_SEGMENT_DIRECTION.to_vec()
}

fn default_noise() -> f64 {
    1.0
}

/// A synthetic dataset description, as accepted by the CLI and the service.
///
/// JSON form: `{"kind": "hypercube", "n": 1000, "d": 10, "D": 10, "seed": 7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Circle {
        n: usize,
        seed: u64,
    },
    Sinusoid {
        n: usize,
        seed: u64,
    },
    Hypercube {
        n: usize,
        d: usize,
        #[serde(rename = "D")]
        ambient: usize,
        seed: u64,
        #[serde(default)]
        rotate: bool,
    },
    Segment {
        n: usize,
        seed: u64,
        #[serde(default = "default_segment_direction")]
        direction: Vec<f64>,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

impl Generator {
    pub fn generate<T: Real>(&self) -> Result<Dataset<T>> {
        match self {
            Generator::Circle { n, seed } => gen_circle(*n, *seed),
            Generator::Sinusoid { n, seed } => gen_sinusoid(*n, *seed),
            Generator::Hypercube {
                n,
                d,
                ambient,
                seed,
                rotate,
            } => gen_hypercube(&HypercubeSpec {
                n: *n,
                intrinsic: *d,
                ambient: *ambient,
                seed: *seed,
                rotate: *rotate,
            }),
            Generator::Segment {
                n,
                seed,
                direction,
                noise,
            } => gen_noisy_segment(*n, direction, *noise, *seed),
        }
    }

    /// Short human-readable description, e.g. `hypercube(n=1000, d=10, D=10, seed=7)`.
    pub fn describe(&self) -> String {
        match self {
            Generator::Circle { n, seed } => format!("circle(n={n}, seed={seed})"),
            Generator::Sinusoid { n, seed } => format!("sinusoid(n={n}, seed={seed})"),
            Generator::Hypercube {
                n,
                d,
                ambient,
                seed,
                rotate,
            } => format!(
                "hypercube(n={n}, d={d}, D={ambient}, seed={seed}{})",
                if *rotate { ", rotated" } else { "" }
            ),
            Generator::Segment {
                n,
                seed,
                direction,
                noise,
            } => format!("segment(n={n}, direction={direction:?}, noise={noise}, seed={seed})"),
        }
    }
}
