//! Small dense complex linear algebra.
//!
//! Every multi-party operator in this crate uses the ordering
//! `system ⊗ meter B ⊗ meter A`, with the left factor as the slow
//! (most significant) index of the Kronecker product.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance used for PSD, unitarity and completeness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Column vector with complex amplitudes.
pub type Ket = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<Complex64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}x{}) {}", self.dim(), self.dim(), self.mat)
    }
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if mat.nrows() == 0 {
            return Err(Error::Domain("operator dimension must be positive".into()));
        }
        Ok(Self { mat })
    }

    /// Builds an operator from row-major rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::NotSquare { rows: d, cols: r.len() });
            }
        }
        Self::from_matrix(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// Builds an operator from `d*d` row-major entries.
    pub fn from_row_major(d: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: entries.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(d > 0, "operator dimension must be positive");
        Self {
            mat: DMatrix::from_fn(d, d, f),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(
            diag.len(),
            |i, j| {
                if i == j {
                    Complex64::new(diag[i], 0.0)
                } else {
                    ZERO
                }
            },
        )
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_fn(d, |_, _| ZERO)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, |i, j| if i == j { ONE } else { ZERO })
    }

    /// `|v⟩⟨v|`
    pub fn projector(v: &Ket) -> Self {
        Self::outer(v, v)
    }

    /// `|u⟩⟨v|`
    pub fn outer(u: &Ket, v: &Ket) -> Self {
        Self { mat: u * v.adjoint() }
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> Vec<Complex64> {
        let d = self.dim();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.mat[(i, j)])
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.mat[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.mat[(row, col)] = value;
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { mat: &self.mat * s }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `⟨u|A|v⟩`
    pub fn sandwich(&self, u: &Ket, v: &Ket) -> Complex64 {
        (u.adjoint() * &self.mat * v)[(0, 0)]
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Operator) -> Complex64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.mat[(i, k)] * other.mat[(k, i)];
            }
        }
        acc
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.min_eigenvalue() >= -tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint() * self;
        prod.max_abs_diff(&Operator::identity(self.dim())) <= tol
    }

    /// Trace one, Hermitian and PSD.
    pub fn is_density(&self, tol: f64) -> bool {
        (self.trace() - ONE).norm() <= tol && self.is_positive_semidefinite(tol)
    }

    /// Kronecker product with `self` as the slow index.
    pub fn kron(&self, other: &Operator) -> Operator {
        Operator {
            mat: self.mat.kronecker(&other.mat),
        }
    }

    /// Partial trace of a bipartite operator on `first ⊗ second`.
    ///
    /// `keep_first = true` traces out the second factor.
    pub fn partial_trace(&self, d_first: usize, d_second: usize, keep_first: bool) -> Result<Operator> {
        if d_first * d_second != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: d_first * d_second,
                actual: self.dim(),
            });
        }
        let m = &self.mat;
        let out = if keep_first {
            Operator::from_fn(d_first, |i, j| {
                (0..d_second).map(|k| m[(i * d_second + k, j * d_second + k)]).sum()
            })
        } else {
            Operator::from_fn(d_second, |i, j| {
                (0..d_first).map(|k| m[(k * d_second + i, k * d_second + j)]).sum()
            })
        };
        Ok(out)
    }

    /// `exp(-i t H)` for Hermitian `H`, via eigendecomposition.
    pub fn exp_hermitian(&self, t: f64) -> Result<Operator> {
        if !self.is_hermitian(DEFAULT_TOL) {
            return Err(Error::Domain("generator is not Hermitian".into()));
        }
        let h = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let v = eig.eigenvectors;
        let phases = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            eig.eigenvalues.iter().map(|&l| (-I * t * l).exp()),
        ));
        Ok(Operator {
            mat: &v * phases * v.adjoint(),
        })
    }

    /// Conjugation `U A U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Operator {
        u * self * &u.adjoint()
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    a.kron(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[&Operator]) -> Operator {
    let (first, rest) = factors.split_first().expect("at least one factor");
    rest.iter().fold((*first).clone(), |acc, f| acc.kron(f))
}

/// Computational basis ket `|j⟩` in dimension `d`.
pub fn basis_ket(d: usize, j: usize) -> Ket {
    let mut v = Ket::zeros(d);
    v[j] = ONE;
    v
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        Operator {
            mat: &self.mat * &rhs.mat,
        }
    }
}

impl Mul<&Operator> for Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        &self * rhs
    }
}

impl Mul<Operator> for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        &self * &rhs
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Add<Operator> for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        &self + &rhs
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Sub<Operator> for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        &self - &rhs
    }
}

/// Single-qubit Pauli matrices with `σ_y = i(|1⟩⟨0| − |0⟩⟨1|)`.
pub mod pauli {
    use super::*;

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn sigma_x() -> Operator {
        Operator::from_fn(2, |i, j| if i != j { ONE } else { ZERO })
    }

    pub fn sigma_y() -> Operator {
        Operator::from_fn(2, |i, j| match (i, j) {
            (0, 1) => -I,
            (1, 0) => I,
            _ => ZERO,
        })
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real_diagonal(&[1.0, -1.0])
    }
}

/// Orthonormal basis `{|a_j⟩}` used to index matrix entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    kets: Vec<Ket>,
}

impl Basis {
    pub fn computational(d: usize) -> Self {
        Self {
            kets: (0..d).map(|j| basis_ket(d, j)).collect(),
        }
    }

    /// Validates that the Gram matrix is the identity within `1e-12`.
    pub fn from_kets(kets: Vec<Ket>) -> Result<Self> {
        let d = kets.len();
        if d == 0 {
            return Err(Error::Domain("basis must contain at least one ket".into()));
        }
        for k in &kets {
            if k.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: k.len(),
                });
            }
        }
        for (i, a) in kets.iter().enumerate() {
            for (j, b) in kets.iter().enumerate() {
                let g = a.dotc(b);
                let target = if i == j { ONE } else { ZERO };
                if (g - target).norm() > 1e-12 {
                    return Err(Error::Domain(format!("basis is not orthonormal: <a_{i}|a_{j}> = {g}")));
                }
            }
        }
        Ok(Self { kets })
    }

    /// Basis made of the columns of a unitary.
    pub fn from_unitary(u: &Operator) -> Result<Self> {
        let d = u.dim();
        Self::from_kets((0..d).map(|j| u.matrix().column(j).into_owned()).collect())
    }

    pub fn dim(&self) -> usize {
        self.kets.len()
    }

    pub fn ket(&self, j: usize) -> Result<&Ket> {
        self.kets.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            dim: self.dim(),
        })
    }

    pub fn kets(&self) -> &[Ket] {
        &self.kets
    }

    /// Unitary whose columns are the basis kets.
    pub fn change_of_basis(&self) -> Operator {
        let d = self.dim();
        Operator::from_fn(d, |i, j| self.kets[j][i])
    }

    /// Expresses `op` in this basis: entry `(j, k)` becomes `⟨a_j|op|a_k⟩`.
    pub fn represent(&self, op: &Operator) -> Operator {
        let u = self.change_of_basis();
        &(&u.adjoint() * op) * &u
    }
}
