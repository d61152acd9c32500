//! Small dense complex linear algebra: vectors, a row-major matrix and a
//! cyclic Jacobi eigensolver for Hermitian matrices.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{ensure, Result};

pub type C64 = Complex64;

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

pub fn scale(v: &[C64], s: C64) -> Vec<C64> {
    v.iter().map(|x| x * s).collect()
}

/// Kronecker product of two vectors, `a` outer (slow) index.
pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Contract,
            "matrix data length {} does not match {rows}x{cols}",
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    /// Matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        ensure!(!columns.is_empty(), Contract, "no columns given");
        let rows = columns[0].len();
        ensure!(
            columns.iter().all(|c| c.len() == rows),
            Contract,
            "columns have unequal lengths"
        );
        Ok(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<C64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    pub fn set_column(&mut self, c: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows);
        for (r, x) in v.iter().enumerate() {
            self[(r, c)] = *x;
        }
    }

    /// Column-major copy of the entries.
    pub fn to_column_major(&self) -> Vec<C64> {
        (0..self.cols).flat_map(|c| self.column(c)).collect()
    }

    pub fn from_column_major(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Contract,
            "column-major data length {} does not match {rows}x{cols}",
            data.len()
        );
        Ok(Self::from_fn(rows, cols, |r, c| data[c * rows + r]))
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        out
    }

    /// `H^H H`, the Hermitian Gram matrix of the columns.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for i in 0..n {
                let ai = row[i].conj();
                for j in i..n {
                    g.data[i * n + j] += ai * row[j];
                }
            }
        }
        for i in 0..n {
            g.data[i * n + i].im = 0.0;
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i].conj();
            }
        }
        g
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in the order the solver left them (not sorted).
    pub values: Vec<f64>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: CMatrix,
    pub sweeps: usize,
}

impl HermitianEigen {
    /// Index of the largest eigenvalue, lowest index on ties.
    pub fn top_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi on a Hermitian matrix.
///
/// Each pivot is made real by a diagonal phase, then annihilated with a real
/// Givens rotation. Sweeps stop once the off-diagonal Frobenius norm falls to
/// `1e-12` of the full norm.
pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    ensure!(a.rows == a.cols, Contract, "matrix is {}x{}, not square", a.rows, a.cols);
    ensure!(a.is_finite(), Domain, "matrix has non-finite entries");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = CMatrix::identity(n);
    let total = m.frobenius_norm();
    let mut sweeps = 0;
    if total == 0.0 {
        return Ok(HermitianEigen {
            values: vec![0.0; n],
            vectors: v,
            sweeps,
        });
    }
    let off_norm = |m: &CMatrix| {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += m[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    while off_norm(&m) > JACOBI_TOL * total && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let b = m[(p, q)];
                let mag = b.norm();
                if mag <= f64::MIN_POSITIVE || mag < 1e-3 * JACOBI_TOL * total {
                    continue;
                }
                let phase = b / mag;
                let (app, aqq) = (m[(p, p)].re, m[(q, q)].re);
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Block of the unitary V = diag(1, e^{-iφ}) · [[c, s], [-s, c]].
                let vpp = C64::new(c, 0.0);
                let vpq = C64::new(s, 0.0);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = akp * vpp + akq * vqp;
                    m[(k, q)] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    m[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)].im = 0.0;
                m[(q, q)].im = 0.0;
                for k in 0..n {
                    let (wkp, wkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = wkp * vpp + wkq * vqp;
                    v[(k, q)] = wkp * vpq + wkq * vqq;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[(i, i)].re).collect();
    Ok(HermitianEigen {
        values,
        vectors: v,
        sweeps,
    })
}
