//! Minimal compressed-sparse-column matrix support for the solver.

/// CSC matrix. Row indices within each column are strictly increasing.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Build from triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> CscMatrix {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            cols[c].push((r, v));
        }
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for col in &mut cols {
            col.sort_unstable_by_key(|&(r, _)| r);
            let mut last: Option<usize> = None;
            for &(r, v) in col.iter() {
                if last == Some(r) {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowidx.push(r);
                    values.push(v);
                    last = Some(r);
                }
            }
            colptr.push(rowidx.len());
        }
        CscMatrix {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    /// y += alpha * A * x
    pub fn axpy(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let xc = alpha * x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowidx[p]] += self.values[p] * xc;
            }
        }
    }

    /// y += alpha * A' * x
    pub fn axpy_transpose(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[p] * x[self.rowidx[p]];
            }
            y[c] += alpha * acc;
        }
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.nrows];
        for p in 0..self.nnz() {
            let r = self.rowidx[p];
            norms[r] = norms[r].max(self.values[p].abs());
        }
        norms
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| {
                self.values[self.colptr[c]..self.colptr[c + 1]]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .collect()
    }

    /// Scale rows by `e` and columns by `d` in place: A <- diag(e) A diag(d).
    pub fn scale(&mut self, e: &[f64], d: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.values[p] *= e[self.rowidx[p]] * d[c];
            }
        }
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_and_sort() {
        let a = CscMatrix::from_triplets(3, 2, vec![(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, 5.0)]);
        assert_eq!(a.colptr, vec![0, 2, 3]);
        assert_eq!(a.rowidx, vec![0, 2, 1]);
        assert_eq!(a.values, vec![2.0, 4.0, 5.0]);
    }

    #[test]
    fn matvec_and_transpose() {
        // A = [1 2; 3 4]
        let a = CscMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 3.0), (0, 1, 2.0), (1, 1, 4.0)]);
        let mut y = vec![0.0; 2];
        a.axpy(1.0, &[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 7.0]);
        let mut z = vec![0.0; 2];
        a.axpy_transpose(1.0, &[1.0, 1.0], &mut z);
        assert_eq!(z, vec![4.0, 6.0]);
    }
}
