//! Dense complex linear algebra for Liouville-space calculations.
//!
//! Everything here works on [`ComplexMatrix`], a small row-major dense
//! matrix. Density operators are vectorized by stacking columns, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`. Composite spaces are always ordered
//! `X ⊗ Y`; for the two-qubit demon that means the basis
//! `|g,0⟩, |g,1⟩, |e,0⟩, |e,1⟩` carries indices `0..4`.

mod expm;
mod nullspace;

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub use expm::{expm, ExpLadder, DEFAULT_LADDER_DEPTH};
pub use nullspace::{null_vector, NullVector, DEFAULT_NULL_TOL, MIN_UNIQUE_GAP};

pub const C_ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const C_ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const C_I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix exponential overflow: {0}")]
    ExpmOverflow(String),
    #[error("singular matrix in linear solve")]
    Singular,
    #[error("no null space: smallest singular value {sigma_min:e} exceeds tolerance {tol:e}")]
    NoNullSpace { sigma_min: f64, tol: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C_ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C_ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<_> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Column vector from entries.
    pub fn column(entries: Vec<Complex64>) -> Self {
        let n = entries.len();
        Self {
            rows: n,
            cols: 1,
            data: entries,
        }
    }

    /// `|i⟩⟨j|` in dimension `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = C_ONE;
        m
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.diag().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = self.transpose();
        out.data.iter_mut().for_each(|z| *z = z.conj());
        out
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.data[i * self.cols + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && (self - &self.adjoint()).max_abs() <= tol
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C_ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a plain vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![C_ZERO; self.rows];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(v.len(), self.cols, "vector length does not match matrix columns");
        assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(&self.matmul(other)? - &other.matmul(self)?)
    }

    /// Solves `self · X = rhs` by LU decomposition with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if rhs.rows != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs has {} rows, system has {}",
                rhs.rows, self.rows
            )));
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let (piv, piv_abs) = (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs == 0.0 || !piv_abs.is_finite() {
                return Err(LinalgError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                for j in 0..m {
                    b.swap(col * m + j, piv * m + j);
                }
            }
            let inv = C_ONE / a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] * inv;
                if f == C_ZERO {
                    continue;
                }
                a[r * n + col] = C_ZERO;
                for j in col + 1..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
                for j in 0..m {
                    let v = b[col * m + j];
                    b[r * m + j] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = C_ONE / a[col * n + col];
            for j in 0..m {
                let mut acc = b[col * m + j];
                for k in col + 1..n {
                    acc -= a[col * n + k] * b[k * m + j];
                }
                b[col * m + j] = acc * inv;
            }
        }
        Self::from_row_major(n, m, b)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

macro_rules! elementwise {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                assert_eq!(
                    (self.rows, self.cols),
                    (rhs.rows, rhs.cols),
                    "elementwise op on mismatched shapes"
                );
                ComplexMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $trait for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                &self $op &rhs
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a += b);
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

/// Matrix product; panics on shape mismatch. Use [`ComplexMatrix::matmul`]
/// for a fallible version.
impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let x = a[(ia, ja)];
            if x == C_ZERO {
                continue;
            }
            for ib in 0..b.rows {
                for jb in 0..b.cols {
                    out.data[(ia * b.rows + ib) * cols + ja * b.cols + jb] = x * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization: an `n×m` matrix becomes an `nm×1` column.
pub fn vec(rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = Vec::with_capacity(rho.rows * rho.cols);
    for j in 0..rho.cols {
        for i in 0..rho.rows {
            out.push(rho[(i, j)]);
        }
    }
    ComplexMatrix::column(out)
}

/// Inverse of [`vec`].
pub fn unvec(v: &[Complex64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 || v.len() != rows * cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "cannot reshape a {}-vector into {rows}x{cols}",
            v.len()
        )));
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    Ok(out)
}

/// Index of `|i⟩⟨j|` inside `vec(ρ)` for an `n`-dimensional space.
#[inline]
pub fn vec_index(n: usize, i: usize, j: usize) -> usize {
    i + j * n
}

/// `tr_X ρ` for `ρ` on `X ⊗ Y`.
pub fn partial_trace_x(rho: &ComplexMatrix, dim_x: usize, dim_y: usize) -> Result<ComplexMatrix> {
    let n = dim_x * dim_y;
    if rho.rows != n || rho.cols != n || n == 0 {
        return Err(LinalgError::DimensionMismatch(format!(
            "partial trace of {}x{} over X with dims {dim_x}x{dim_y}",
            rho.rows, rho.cols
        )));
    }
    let mut out = ComplexMatrix::zeros(dim_y, dim_y);
    for y in 0..dim_y {
        for yp in 0..dim_y {
            out[(y, yp)] = (0..dim_x).map(|x| rho[(x * dim_y + y, x * dim_y + yp)]).sum();
        }
    }
    Ok(out)
}

/// Euclidean norm of a vector.
pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_of_diagonals() {
        let a = ComplexMatrix::from_real_diag(&[1.0, 2.0]);
        let b = ComplexMatrix::from_real_diag(&[3.0, 4.0]);
        assert_eq!(kron(&a, &b), ComplexMatrix::from_real_diag(&[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn kron_of_ladder_matrices_has_single_entry() {
        // Hand expansion of [[0,1],[0,0]] ⊗ [[0,0],[1,0]]: the only nonzero
        // product is a(0,1)·b(1,0), landing at row 0·2+1, column 1·2+0.
        let upper = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let lower = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        let k = kron(&upper, &lower);
        assert_eq!((k.rows(), k.cols()), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (1, 2) { C_ONE } else { C_ZERO };
                assert_eq!(k[(i, j)], expected, "entry ({i},{j})");
            }
        }
        // With |g⟩ = index 0, the physical raising operator |e⟩⟨g| is the
        // lower-triangular matrix, so σ₊ ⊗ σ₋ sits at (2, 1) instead.
        let k_phys = kron(&lower, &upper);
        assert_eq!(k_phys[(2, 1)], C_ONE);
        assert_eq!(k_phys.max_abs(), 1.0);
        assert_eq!(k_phys.frobenius(), 1.0);
    }

    #[test]
    fn vec_stacks_columns() {
        let (a, b, cc, d) = (c(1.0), c(2.0), c(3.0), c(4.0));
        // [[a, c], [b, d]]
        let m = ComplexMatrix::from_row_major(2, 2, vec![a, cc, b, d]).unwrap();
        assert_eq!(vec(&m).into_vec(), vec![a, b, cc, d]);
        assert_eq!(vec(&ComplexMatrix::identity(2)).into_vec(), vec![C_ONE, C_ZERO, C_ZERO, C_ONE]);
    }

    #[test]
    fn unvec_inverts_vec() {
        let v = [C_ONE, C_ZERO, C_ZERO, C_ONE];
        assert_eq!(unvec(&v, 2, 2).unwrap(), ComplexMatrix::identity(2));
        let mut r = rng(7);
        let m = random_matrix(&mut r, 4, 4);
        assert_eq!(unvec(vec(&m).as_slice(), 4, 4).unwrap(), m);
        let rho = random_density(&mut r, 4);
        let back = unvec(vec(&rho).as_slice(), 4, 4).unwrap();
        assert_eq!((back.rows(), back.cols()), (4, 4));
        assert!(matches!(unvec(&v, 3, 2), Err(LinalgError::DimensionMismatch(_))));
    }

    #[test]
    fn vec_kron_identity_against_direct_product() {
        let mut r = rng(11);
        for n in [2, 4] {
            for _ in 0..10 {
                let a = random_matrix(&mut r, n, n);
                let rho = random_matrix(&mut r, n, n);
                let b = random_matrix(&mut r, n, n);
                let direct = vec(&(&(&a * &rho) * &b));
                let lifted = &kron(&b.transpose(), &a) * &vec(&rho);
                assert!(direct.max_abs_diff(&lifted) < 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        // |g,0⟩⟨g,0| → |0⟩⟨0|
        let p = partial_trace_x(&ComplexMatrix::unit(4, 0, 0), 2, 2).unwrap();
        assert_eq!(p, ComplexMatrix::unit(2, 0, 0));
        let mixed = ComplexMatrix::identity(4).scale_real(0.25);
        let p = partial_trace_x(&mixed, 2, 2).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
        assert!(partial_trace_x(&ComplexMatrix::identity(3), 2, 2).is_err());
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut r = rng(3);
        for _ in 0..20 {
            let rho = random_density(&mut r, 4);
            let py = partial_trace_x(&rho, 2, 2).unwrap();
            // direct index-sum oracle
            let mut tr = C_ZERO;
            for i in 0..4 {
                tr += rho.as_slice()[i * 4 + i];
            }
            assert!((py.trace() - tr).norm() < 1e-14);
            // 2x2 Hermitian PSD: nonnegative diagonal and determinant
            let det = py[(0, 0)] * py[(1, 1)] - py[(0, 1)] * py[(1, 0)];
            assert!(py[(0, 0)].re >= 0.0 && py[(1, 1)].re >= 0.0 && det.re >= -1e-15);
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut r = rng(5);
        let a = random_matrix(&mut r, 6, 6);
        let x = random_matrix(&mut r, 6, 3);
        let b = &a * &x;
        assert!(a.solve(&b).unwrap().max_abs_diff(&x) < 1e-12);
        let singular = ComplexMatrix::zeros(3, 3);
        assert_eq!(singular.solve(&ComplexMatrix::identity(3)), Err(LinalgError::Singular));
    }
}
