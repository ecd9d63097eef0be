//! Dense vector and matrix kernels used throughout the crate.
//!
//! Everything here is plain `Vec<f64>` / row-major dense storage. Problem
//! sizes are desk scale (dim <= 50), so no sparse or blocked structure is
//! needed.

/// `<a, b>` standard pairing.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a||_2`.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + b`.
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `c * a`.
pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// `y += c * x` in place.
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(&self.data[i * self.cols..(i + 1) * self.cols], x);
        }
        out
    }

    /// `A^T x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for j in 0..self.cols {
                out[j] += self.data[i * self.cols + j] * xi;
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn add_scaled_identity(&mut self, c: f64) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            self.data[i * self.cols + i] += c;
        }
    }

    /// `A + c * M` for square same-shape matrices.
    pub fn add_scaled(&self, c: f64, m: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, m.rows);
        assert_eq!(self.cols, m.cols);
        let data = self
            .data
            .iter()
            .zip(&m.data)
            .map(|(a, b)| a + c * b)
            .collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    /// Spectral norm `||A||_2 = sigma_max(A)` via power iteration on `A^T A`.
    ///
    /// Converges to a relative tolerance of about 1e-13; deterministic
    /// (fixed start vector plus deflation-free restart ladder).
    pub fn spectral_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let n = self.cols;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) / (n as f64 + 1.0)).collect();
        let nv = norm2(&v);
        for x in v.iter_mut() {
            *x /= nv;
        }
        let mut lambda = 0.0f64;
        for _ in 0..20_000 {
            let w = self.matvec_t(&self.matvec(&v));
            let nw = norm2(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
            let new_lambda = dot(&next, &self.matvec_t(&self.matvec(&next)));
            let done = (new_lambda - lambda).abs() <= 1e-14 * new_lambda.max(1.0);
            v = next;
            lambda = new_lambda;
            if done {
                break;
            }
        }
        lambda.max(0.0).sqrt()
    }
}

/// LU factorization with partial pivoting for general square systems.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    /// Returns `None` for singular (to working precision) matrices.
    pub fn new(a: &DenseMatrix) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Some(Self { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Cholesky factorization `A = L L^T` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // row-major lower triangle (full storage)
}

impl Cholesky {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(a: &DenseMatrix) -> Option<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}
