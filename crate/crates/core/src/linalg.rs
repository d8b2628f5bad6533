//! Dense complex matrix kernel.
//!
//! Everything in the optimizer is small (at most a few dozen rows), so the
//! matrix type is a plain row-major `Vec` and the Hermitian eigensolver is a
//! textbook Householder tridiagonalization followed by implicit-shift QL.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CVector = Vec<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const J: C64 = C64 { re: 0.0, im: 1.0 };

const MAX_QL_SWEEPS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e}, scale {scale:e})")]
    NotHermitian { asymmetry: f64, scale: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} sweeps at index {index}")]
    NoConvergence { iterations: usize, index: usize },
    #[error("matrix is singular or indefinite (smallest shifted eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in matrix")]
    NonFinite,
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
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

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// x yᴴ
    pub fn outer(x: &[C64], y: &[C64]) -> Self {
        Self::from_fn(x.len(), y.len(), |r, c| x[r] * y[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add_scaled_identity(&self, s: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn diag(&self) -> CVector {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Largest entrywise deviation from Hermitian symmetry.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_asymmetry() <= 1e-12 * self.max_abs()
    }

    /// (M + Mᴴ)/2, used to scrub roundoff from products that are Hermitian in exact arithmetic.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn mul_vec(&self, x: &[C64]) -> CVector {
        assert_eq!(self.cols, x.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Mᴴ x without forming the adjoint.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> CVector {
        assert_eq!(self.rows, x.len(), "matrix-vector dimension mismatch");
        let mut out = vec![ZERO; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            for c in 0..self.cols {
                out[c] += self[(r, c)].conj() * xr;
            }
        }
        out
    }

    /// xᴴ M y
    pub fn bilinear(&self, x: &[C64], y: &[C64]) -> C64 {
        dot(x, &self.mul_vec(y))
    }

    /// xᴴ M x
    pub fn quad_form(&self, x: &[C64]) -> C64 {
        self.bilinear(x, x)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        out
    }

    /// Kronecker product self ⊗ other.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = (other.rows, other.cols);
        Self::from_fn(self.rows * p, self.cols * q, |r, c| self[(r / p, c / q)] * other[(r % p, c % q)])
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> CVector {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    /// Inverse of [`CMatrix::vec`].
    pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Self {
        assert_eq!(v.len(), rows * cols, "unvec length mismatch");
        Self::from_fn(rows, cols, |r, c| v[c * rows + r])
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add dimension mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub dimension mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// xᴴ y
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    assert_eq!(x.len(), y.len(), "dot length mismatch");
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    norm_sqr(x).sqrt()
}

pub fn norm_inf(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn axpy(alpha: C64, x: &[C64], y: &[C64]) -> CVector {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

pub fn sub_vec(x: &[C64], y: &[C64]) -> CVector {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add_vec(x: &[C64], y: &[C64]) -> CVector {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn scale_vec(s: C64, x: &[C64]) -> CVector {
    x.iter().map(|z| s * z).collect()
}

/// Eigendecomposition M = U diag(values) Uᴴ with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// U diag(f(λ)) Uᴴ
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += u[(r, k)] * fl[k] * u[(c, k)].conj();
                }
                out[(r, c)] = acc;
                out[(c, r)] = acc.conj();
            }
        }
        out
    }

    /// Uᴴ x
    pub fn to_eigenbasis(&self, x: &[C64]) -> CVector {
        self.vectors.adjoint_mul_vec(x)
    }

    /// U y
    pub fn from_eigenbasis(&self, y: &[C64]) -> CVector {
        self.vectors.mul_vec(y)
    }
}

/// Hermitian eigendecomposition.
pub fn eigh(m: &CMatrix) -> Result<Eigh, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::Dimension(format!("eigh needs a square matrix, got {}x{}", m.rows, m.cols)));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let scale = m.max_abs();
    let asymmetry = m.hermitian_asymmetry();
    if asymmetry > 1e-12 * scale {
        return Err(LinalgError::NotHermitian { asymmetry, scale });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(Eigh { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let mut a = m.hermitian_part();
    let mut q = CMatrix::identity(n);

    // Householder reduction to Hermitian tridiagonal form: a <- H a H, q <- q H.
    for k in 0..n.saturating_sub(2) {
        let m_len = n - k - 1;
        let mut v: CVector = (0..m_len).map(|i| a[(k + 1 + i, k)]).collect();
        let xnorm = norm(&v);
        if xnorm == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * xnorm;
        v[0] -= alpha;
        let vn2 = norm_sqr(&v);
        if vn2 <= f64::MIN_POSITIVE {
            continue;
        }
        let beta = 2.0 / vn2;
        for j in 0..n {
            let s: C64 = (0..m_len).map(|i| v[i].conj() * a[(k + 1 + i, j)]).sum();
            let s = s * beta;
            for i in 0..m_len {
                a[(k + 1 + i, j)] -= v[i] * s;
            }
        }
        for target in [&mut a, &mut q] {
            for i in 0..n {
                let s: C64 = (0..m_len).map(|j| target[(i, k + 1 + j)] * v[j]).sum();
                let s = s * beta;
                for j in 0..m_len {
                    target[(i, k + 1 + j)] -= s * v[j].conj();
                }
            }
        }
    }

    // Rotate the complex off-diagonal into real non-negative entries.
    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut e = vec![0.0; n];
    let mut phases = vec![ONE; n];
    for i in 0..n - 1 {
        let sub = a[(i + 1, i)];
        let mag = sub.norm();
        e[i] = mag;
        phases[i + 1] = if mag > 0.0 { phases[i] * sub / mag } else { phases[i] };
    }

    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    tql2(&mut d, &mut e, &mut z)?;

    // U = Q diag(phases) Z
    let mut vectors = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = ZERO;
            for i in 0..n {
                acc += q[(r, i)] * phases[i] * z[i][c];
            }
            vectors[(r, c)] = acc;
        }
    }
    Ok(Eigh { values: d, vectors })
}

/// Implicit-shift QL on a real symmetric tridiagonal matrix (diagonal `d`,
/// sub-diagonal `e[i]` coupling i and i+1). Accumulates rotations into `z`
/// and leaves eigenvalues ascending.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [Vec<f64>]) -> Result<(), LinalgError> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(LinalgError::NoConvergence { iterations: iter - 1, index: l });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in z.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // selection sort, ascending
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for row in z.iter_mut() {
                row.swap(i, k);
            }
        }
    }
    Ok(())
}

/// (M + shift·I)^{-1/2} for Hermitian PSD M.
pub fn herm_sqrt_inv(m: &CMatrix, shift: f64) -> Result<CMatrix, LinalgError> {
    herm_power(m, shift, -0.5)
}

/// (M + shift·I)^{p}, requiring strictly positive shifted spectrum for negative powers.
pub fn herm_power(m: &CMatrix, shift: f64, p: f64) -> Result<CMatrix, LinalgError> {
    let eig = eigh(m)?;
    herm_power_from(&eig, shift, p)
}

pub fn herm_power_from(eig: &Eigh, shift: f64, p: f64) -> Result<CMatrix, LinalgError> {
    let min = eig.min_value() + shift;
    if p < 0.0 && min <= 0.0 {
        return Err(LinalgError::Singular { min_eigenvalue: min });
    }
    Ok(eig.apply_fn(|l| (l + shift).max(0.0).powf(p)))
}

/// Solves M x = b for Hermitian positive-definite M via Cholesky.
pub fn herm_solve(m: &CMatrix, b: &[C64]) -> Result<CVector, LinalgError> {
    let n = m.rows;
    if !m.is_square() || b.len() != n {
        return Err(LinalgError::Dimension("herm_solve".into()));
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(LinalgError::Singular { min_eigenvalue: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut y = vec![ZERO; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![ZERO; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Inverse of a small real matrix by Gauss-Jordan with partial pivoting.
pub fn real_inverse(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(LinalgError::Dimension("real_inverse needs a square matrix".into()));
    }
    let scale = m.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty pivot range");
        if a[piv][col].abs() <= 1e-300_f64.max(scale * 1e-15) {
            return Err(LinalgError::Singular { min_eigenvalue: a[piv][col] });
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let factor = a[i][col];
                if factor != 0.0 {
                    for j in 0..n {
                        a[i][j] -= factor * a[col][j];
                        inv[i][j] -= factor * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&a + &a.adjoint()).scale_real(0.5)
    }

    fn reconstruct(e: &Eigh) -> CMatrix {
        e.apply_fn(|l| l)
    }

    #[test]
    fn eigh_identity() {
        let e = eigh(&CMatrix::identity(2)).unwrap();
        assert_eq!(e.values.len(), 2);
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eigh_diagonal_sorted() {
        let m = CMatrix::from_real_diag(&[3.0, -1.0]);
        let e = eigh(&m).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
        // eigenvector of -1 is e2 up to phase
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn eigh_random_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 4, 7, 16, 36] {
            let m = random_hermitian(n, &mut rng);
            let e = eigh(&m).unwrap();
            let u = &e.vectors;
            let lam = CMatrix::from_real_diag(&e.values);
            let resid = (&m.matmul(u) - &u.matmul(&lam)).frobenius_norm();
            assert!(resid <= 1e-10 * m.frobenius_norm(), "n={n} resid={resid}");
            let orth = (&u.adjoint().matmul(u) - &CMatrix::identity(n)).frobenius_norm();
            assert!(orth <= 1e-10, "n={n} orth={orth}");
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigh_rank_deficient_kron() {
        // I ⊗ a aᴴ is the shape of the rate-constraint lift
        let a: CVector = vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.0, 1.0)];
        let m = CMatrix::identity(3).kron(&CMatrix::outer(&a, &a));
        let e = eigh(&m).unwrap();
        let rec = reconstruct(&e);
        assert!((&rec - &m).frobenius_norm() <= 1e-12 * m.frobenius_norm());
        let zeros = e.values.iter().filter(|v| v.abs() < 1e-12).count();
        assert_eq!(zeros, 6);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = CMatrix::from_rows(2, 2, vec![ONE, ONE, ZERO, ONE]);
        assert!(matches!(eigh(&m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn sqrt_inv_examples() {
        let r = herm_sqrt_inv(&CMatrix::identity(3), 0.0).unwrap();
        assert!((&r - &CMatrix::identity(3)).frobenius_norm() < 1e-14);
        let r = herm_sqrt_inv(&CMatrix::from_real_diag(&[4.0, 9.0]), 0.0).unwrap();
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)].re - 1.0 / 3.0).abs() < 1e-14);
        assert!(r[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn sqrt_inv_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = CMatrix::from_fn(4, 3, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        // rank-3 PSD 4x4
        let m = a.matmul(&a.adjoint());
        let shift = 1e-6;
        let r = herm_sqrt_inv(&m, shift).unwrap();
        let prod = r.matmul(&m.add_scaled_identity(shift)).matmul(&r);
        assert!((&prod - &CMatrix::identity(4)).frobenius_norm() <= 1e-9);
    }

    #[test]
    fn sqrt_inv_singular_errors() {
        let m = CMatrix::from_real_diag(&[1.0, 0.0]);
        assert!(matches!(herm_sqrt_inv(&m, 0.0), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rnd = |r, c| CMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let a = rnd(3, 2);
        let b = rnd(2, 4);
        let x = rnd(4, 2);
        let lhs = a.kron(&b).mul_vec(&x.vec());
        let rhs = b.matmul(&x).matmul(&a.transpose()).vec();
        assert!(norm(&sub_vec(&lhs, &rhs)) < 1e-13);
    }

    #[test]
    fn herm_solve_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = CMatrix::from_fn(5, 5, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = a.matmul(&a.adjoint()).add_scaled_identity(0.1);
        let b: CVector = (0..5).map(|i| C64::new(i as f64, 1.0)).collect();
        let x = herm_solve(&m, &b).unwrap();
        assert!(norm(&sub_vec(&m.mul_vec(&x), &b)) < 1e-11);
    }

    #[test]
    fn real_inverse_diag() {
        let inv = real_inverse(&[vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(inv[0][0], 0.5);
        assert!(real_inverse(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }
}
