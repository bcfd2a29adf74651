//! Multivariate observation arrays and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{arg, Result, SarmaError};
use crate::scalar::Real;

/// A `T x N` array of observations; row `t` holds `y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    len: usize,
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> Series<T> {
    /// Builds a series from row-major values. Rejects empty shapes, ragged
    /// lengths and non-finite entries.
    pub fn from_row_major(len: usize, dim: usize, values: Vec<T>) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(arg(format!("series must be non-empty, got {len}x{dim}")));
        }
        if values.len() != len * dim {
            return Err(arg(format!(
                "expected {} values for a {len}x{dim} series, got {}",
                len * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(arg(format!(
                "non-finite observation at row {}, column {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Self { len, dim, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(arg(format!(
                "row {} has {} columns, expected {dim}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), dim, values)
    }

    pub fn from_matrix(m: &DMatrix<T>) -> Result<Self> {
        let (len, dim) = m.shape();
        let mut values = Vec::with_capacity(len * dim);
        for t in 0..len {
            for n in 0..dim {
                values.push(m[(t, n)]);
            }
        }
        Self::from_row_major(len, dim, values)
    }

    /// Sample length `T`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Dimension `N`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observation at zero-based time `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.len, self.dim, &self.values)
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len {
            return Err(arg(format!(
                "slice {start}..{end} out of range for length {}",
                self.len
            )));
        }
        Ok(Self {
            len: end - start,
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        })
    }

    /// Appends one observation.
    pub fn push(&mut self, y: &[T]) -> Result<()> {
        if y.len() != self.dim {
            return Err(arg(format!(
                "observation has {} entries, series dimension is {}",
                y.len(),
                self.dim
            )));
        }
        if y.iter().any(|v| !v.is_finite_value()) {
            return Err(arg("non-finite observation"));
        }
        self.values.extend_from_slice(y);
        self.len += 1;
        Ok(())
    }

    /// Converts the scalar type (e.g. `f64` -> `f32`).
    pub fn cast<U: Real>(&self) -> Series<U> {
        Series {
            len: self.len,
            dim: self.dim,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl Series<f64> {
    /// Parses CSV text. A first row that does not parse as numbers is treated
    /// as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SarmaError::Parse(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if idx == 0 => continue,
                Err(e) => {
                    return Err(SarmaError::Parse(format!("line {}: {e}", idx + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(SarmaError::Parse("no data rows".into()));
        }
        Self::from_rows(&rows).map_err(|e| SarmaError::Parse(e.to_string()))
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Writes a header `y1,...,yN` followed by one row per time point, using
    /// the shortest round-trip float representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("y{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len {
            let line: Vec<String> = self.row(t).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
