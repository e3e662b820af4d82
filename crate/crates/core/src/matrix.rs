//! Dense matrices over F_q with exact rank and determinant.

use serde::{Deserialize, Serialize};

use crate::error::{HsaError, Result};
use crate::field::FieldSpec;

/// A dense row-major matrix over a prime field.
///
/// Serialized as `{"q": .., "rows": .., "cols": .., "data": [..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct FqMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    q: u64,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl TryFrom<RawMatrix> for FqMatrix {
    type Error = HsaError;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        FqMatrix::new(FieldSpec::new(raw.q)?, raw.rows, raw.cols, raw.data)
    }
}

impl From<FqMatrix> for RawMatrix {
    fn from(m: FqMatrix) -> Self {
        RawMatrix {
            q: m.field.q(),
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl FqMatrix {
    pub fn new(field: FieldSpec, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(HsaError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&x| !field.is_canonical(x)) {
            return Err(HsaError::Format(format!(
                "entry {bad} is not a canonical residue mod {}",
                field.q()
            )));
        }
        Ok(Self {
            field,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from explicit rows. An empty row list yields a `0 x cols`
    /// matrix, where `cols` must then be supplied by the caller.
    pub fn from_rows(field: FieldSpec, cols: usize, rows: &[Vec<u64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(HsaError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(field, rows.len(), cols, data)
    }

    /// Like [`FqMatrix::from_rows`] but reduces signed entries into the field.
    pub fn from_signed_rows(field: FieldSpec, rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let reduced: Vec<Vec<u64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| field.reduce(x)).collect())
            .collect();
        Self::from_rows(field, cols, &reduced)
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[u64]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Stacks the given rows (in the given order) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> FqMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FqMatrix {
            field: self.field,
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column-wise sum of every row.
    pub fn column_sums(&self) -> Vec<u64> {
        let f = self.field;
        (0..self.cols)
            .map(|c| f.sum((0..self.rows).map(|r| self.get(r, c))))
            .collect()
    }

    pub fn has_zero_row_sum(&self) -> bool {
        self.column_sums().iter().all(|&x| x == 0)
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[u64]) -> Result<Vec<u64>> {
        if v.len() != self.cols {
            return Err(HsaError::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| self.field.dot(r, v)).collect())
    }

    /// Row rank by Gaussian elimination with first-nonzero pivoting.
    pub fn rank(&self) -> usize {
        let f = self.field;
        let mut m = self.data.clone();
        let cols = self.cols;
        let mut rank = 0;
        for c in 0..cols {
            if rank == self.rows {
                break;
            }
            let Some(p) = (rank..self.rows).find(|&r| m[r * cols + c] != 0) else {
                continue;
            };
            swap_rows(&mut m, cols, rank, p);
            let inv = f.inv(m[rank * cols + c]).expect("pivot is nonzero");
            for r in rank + 1..self.rows {
                let factor = f.mul(m[r * cols + c], inv);
                if factor != 0 {
                    eliminate(&f, &mut m, cols, r, rank, factor, c);
                }
            }
            rank += 1;
        }
        rank
    }

    /// Determinant by elimination. The empty `0 x 0` matrix has determinant 1.
    pub fn determinant(&self) -> Result<u64> {
        if self.rows != self.cols {
            return Err(HsaError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let f = self.field;
        let n = self.rows;
        let mut m = self.data.clone();
        let mut det = 1;
        for c in 0..n {
            let Some(p) = (c..n).find(|&r| m[r * n + c] != 0) else {
                return Ok(0);
            };
            if p != c {
                swap_rows(&mut m, n, c, p);
                det = f.neg(det);
            }
            let pivot = m[c * n + c];
            det = f.mul(det, pivot);
            let inv = f.inv(pivot)?;
            for r in c + 1..n {
                let factor = f.mul(m[r * n + c], inv);
                if factor != 0 {
                    eliminate(&f, &mut m, n, r, c, factor, c);
                }
            }
        }
        Ok(det)
    }

    pub fn is_full_row_rank(&self) -> bool {
        self.rank() == self.rows
    }
}

fn swap_rows(m: &mut [u64], cols: usize, a: usize, b: usize) {
    if a == b {
        return;
    }
    for c in 0..cols {
        m.swap(a * cols + c, b * cols + c);
    }
}

// row[target] -= factor * row[pivot], starting from column `from`.
fn eliminate(
    f: &FieldSpec,
    m: &mut [u64],
    cols: usize,
    target: usize,
    pivot: usize,
    factor: u64,
    from: usize,
) {
    for c in from..cols {
        let sub = f.mul(factor, m[pivot * cols + c]);
        m[target * cols + c] = f.sub(m[target * cols + c], sub);
    }
}
