use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MarkovError;

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from per-column `(row, value)` lists. Rows within a column must
    /// be strictly increasing.
    pub fn from_columns<I, C>(n_rows: usize, columns: I) -> Result<Self, MarkovError>
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = (usize, f64)>,
    {
        let mut col_ptr = alloc::vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for col in columns {
            let mut prev: Option<usize> = None;
            for (r, v) in col {
                if r >= n_rows || prev.is_some_and(|p| p >= r) || !v.is_finite() {
                    return Err(MarkovError::MalformedMatrix);
                }
                prev = Some(r);
                row_idx.push(r as u32);
                values.push(v);
            }
            col_ptr.push(values.len());
        }
        Ok(Self {
            n_rows,
            n_cols: col_ptr.len() - 1,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Reassembles a matrix from raw CSC arrays, checking their consistency.
    pub fn from_raw(
        n_rows: usize,
        n_cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self, MarkovError> {
        let ok = col_ptr.len() == n_cols + 1
            && col_ptr[0] == 0
            && col_ptr.windows(2).all(|w| w[0] <= w[1])
            && col_ptr[n_cols] == values.len()
            && row_idx.len() == values.len()
            && row_idx.iter().all(|&r| (r as usize) < n_rows);
        if !ok {
            return Err(MarkovError::MalformedMatrix);
        }
        Ok(Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n as u32).collect(),
            values: alloc::vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.values[self.col_ptr[j]..self.col_ptr[j + 1]].iter().sum()
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), MarkovError> {
        if x.len() != self.n_cols || out.len() != self.n_rows {
            return Err(MarkovError::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        out.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.row_idx[k] as usize] += self.values[k] * xj;
            }
        }
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, MarkovError> {
        let mut out = alloc::vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut out)?;
        Ok(out)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.column(j).find(|&(r, _)| r == i).map_or(0.0, |(_, v)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mul_vec_matches_dense() {
        // [[1, 0], [2, 3], [0, 4]]
        let m = CscMatrix::from_columns(3, vec![vec![(0, 1.0), (1, 2.0)], vec![(1, 3.0), (2, 4.0)]]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0, -4.0]);
        assert_eq!(m.get(2, 1), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!(m.mul_vec(&[1.0]).is_err());
    }

    #[test]
    fn rejects_unsorted_rows() {
        assert!(CscMatrix::from_columns(3, vec![vec![(1, 1.0), (0, 1.0)]]).is_err());
        assert!(CscMatrix::from_raw(2, 1, vec![0, 2], vec![0, 5], vec![1.0, 1.0]).is_err());
    }
}
