//! Small dense linear algebra: a row-major matrix and a Householder QR
//! least-squares solver. Designs here are tall and thin (thousands of rows,
//! a handful of columns), so nothing fancier is needed.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out.set(i, k, self.get(i, j));
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a (weighted) least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    /// Diagonal of (XᵀWX)⁻¹.
    pub inv_gram_diag: Vec<f64>,
}

/// Column that made the design numerically rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deficient(pub usize);

/// Relative tolerance for declaring a QR pivot zero.
pub const RANK_TOL: f64 = 1e-10;

/// Solves min ‖W^{1/2}(y − Xb)‖² (+ ridge‖b‖²) by Householder QR.
///
/// A column is rank deficient when its pivot falls below `RANK_TOL` times
/// the column's own norm after weighting.
pub fn least_squares(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge: f64,
) -> Result<LeastSquares, Deficient> {
    let n = x.nrows();
    let p = x.ncols();
    assert_eq!(y.len(), n);
    let extra = if ridge > 0.0 { p } else { 0 };
    let m = n + extra;

    // column-major working copy
    let mut a: Vec<Vec<f64>> = vec![vec![0.0; m]; p];
    let mut b = vec![0.0; m];
    for i in 0..n {
        let sw = weights.map_or(1.0, |w| w[i].sqrt());
        let row = x.row(i);
        for j in 0..p {
            a[j][i] = row[j] * sw;
        }
        b[i] = y[i] * sw;
    }
    if extra > 0 {
        let s = ridge.sqrt();
        for j in 0..p {
            a[j][n + j] = s;
        }
    }

    let col_norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut r = vec![vec![0.0; p]; p];
    let mut v = vec![0.0; m];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 || norm <= RANK_TOL * col_norms[k] {
            return Err(Deficient(k));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = a[k][i];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..m].iter().map(|t| t * t).sum();
        r[k][k] = alpha;
        if vnorm2 > 0.0 {
            for j in (k + 1)..p {
                let s: f64 = (k..m).map(|i| v[i] * a[j][i]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    a[j][i] -= s * v[i];
                }
            }
            let s: f64 = (k..m).map(|i| v[i] * b[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                b[i] -= s * v[i];
            }
        }
        for j in (k + 1)..p {
            r[k][j] = a[j][k];
        }
    }

    let mut coef = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = ((k + 1)..p).map(|j| r[k][j] * coef[j]).sum();
        coef[k] = (b[k] - s) / r[k][k];
    }

    // R⁻¹ is upper triangular; (XᵀWX)⁻¹ = R⁻¹R⁻ᵀ.
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = ((i + 1)..=j).map(|k| r[i][k] * rinv[k][j]).sum();
            rinv[i][j] = -s / r[i][i];
        }
    }
    let inv_gram_diag = (0..p).map(|i| (i..p).map(|j| rinv[i][j] * rinv[i][j]).sum()).collect();

    Ok(LeastSquares { coef, inv_gram_diag })
}
