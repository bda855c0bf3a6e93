//! Dense decision kernels: semidefinite ordering, principal square roots,
//! spectral radii of nonnegative matrices and minimum-norm least squares.
//!
//! Every decision that compares floating-point quantities takes an explicit
//! [`ToleranceProfile`]. The kernels are pure functions and deterministic for a
//! fixed build.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Dimension above which [`spectral_radius`] switches from a dense
/// eigenvalue solve to power iteration.
pub const DENSE_RADIUS_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must have at least one row and column")]
    Empty,
    #[error("matrix contains a non-finite entry")]
    NotFinite,
    #[error("matrix has a negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("matrix is indefinite beyond tolerance, minimum eigenvalue {min_eigenvalue}")]
    Indefinite { min_eigenvalue: f64 },
    #[error("square root reconstruction error {error} exceeds {bound}")]
    Reconstruction { error: f64, bound: f64 },
    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
    },
    #[error("least-squares solve failed: {0}")]
    LeastSquares(&'static str),
    #[error("tolerance {name} = {value} outside [0, 1e-2]")]
    InvalidTolerance { name: &'static str, value: f64 },
}

/// Numerical tolerances shared by all checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceProfile {
    /// Relative slack for semidefinite ordering.
    pub psd_tol: f64,
    /// Relative slack for equalities and eigenvalue convergence.
    pub eig_tol: f64,
    pub iter_max: usize,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            psd_tol: 1e-8,
            eig_tol: 1e-10,
            iter_max: 10_000,
        }
    }
}

impl ToleranceProfile {
    pub fn new(psd_tol: f64, eig_tol: f64, iter_max: usize) -> Result<Self, MatrixError> {
        for (name, value) in [("psd_tol", psd_tol), ("eig_tol", eig_tol)] {
            if !(0.0..=1e-2).contains(&value) {
                return Err(MatrixError::InvalidTolerance { name, value });
            }
        }
        Ok(Self {
            psd_tol,
            eig_tol,
            iter_max: iter_max.max(1),
        })
    }
}

/// A real symmetric matrix. Construction averages the input with its
/// transpose so the stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self, MatrixError> {
        check_square(&m)?;
        if m.nrows() == 0 {
            return Err(MatrixError::Empty);
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(MatrixError::NotFinite);
        }
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        Ok(Self(s))
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self, MatrixError> {
        if data.len() != dim * dim {
            return Err(MatrixError::DimensionMismatch {
                left: (dim, dim),
                right: (data.len(), 1),
            });
        }
        Self::new(Matrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Matrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Largest eigenvalue magnitude (the spectral norm for symmetric matrices).
    pub fn norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `xᵀ S x`.
    pub fn quadratic_form(&self, x: &Vector) -> f64 {
        x.dot(&(&self.0 * x))
    }
}

/// Outcome of a semidefinite ordering test `A ⪯ B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdMargin {
    /// `λ_min(B − A)`.
    pub min_eigenvalue: f64,
    /// Smallest admissible value of `min_eigenvalue`.
    pub threshold: f64,
}

impl PsdMargin {
    pub fn holds(&self) -> bool {
        self.min_eigenvalue >= self.threshold
    }
}

/// Computes `λ_min(B − A)` and the threshold `−psd_tol·(1 + max(‖A‖, ‖B‖))`.
pub fn psd_margin(
    a: &SymMatrix,
    b: &SymMatrix,
    tol: &ToleranceProfile,
) -> Result<PsdMargin, MatrixError> {
    if a.dim() != b.dim() {
        return Err(MatrixError::DimensionMismatch {
            left: a.0.shape(),
            right: b.0.shape(),
        });
    }
    let diff = SymMatrix::new(&b.0 - &a.0)?;
    let scale = 1.0 + a.norm().max(b.norm());
    Ok(PsdMargin {
        min_eigenvalue: diff.min_eigenvalue(),
        threshold: -tol.psd_tol * scale,
    })
}

/// `A ⪯ B` up to the relative tolerance.
pub fn psd_order(
    a: &SymMatrix,
    b: &SymMatrix,
    tol: &ToleranceProfile,
) -> Result<bool, MatrixError> {
    psd_margin(a, b, tol).map(|m| m.holds())
}

/// Symmetric PSD square root. Negative eigenvalues within `psd_tol` are
/// clamped to zero.
pub fn principal_sqrt(a: &SymMatrix, tol: &ToleranceProfile) -> Result<SymMatrix, MatrixError> {
    let eig = a.0.clone().symmetric_eigen();
    let scale = 1.0
        + eig
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -tol.psd_tol * scale {
        return Err(MatrixError::Indefinite {
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|v| libm::sqrt(v.max(0.0)));
    let s = &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let s = SymMatrix::new(s)?;
    let error = spectral_norm(&(&s.0 * &s.0 - &a.0));
    let clamped = (-min).max(0.0);
    let bound = tol.eig_tol.max(f64::EPSILON * 64.0) * scale + clamped;
    if error > bound {
        return Err(MatrixError::Reconstruction { error, bound });
    }
    Ok(s)
}

/// Largest singular value (induced 2-norm). Zero for empty matrices.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(*v))
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_square(a: &Matrix) -> Result<(), MatrixError> {
    if a.nrows() != a.ncols() {
        return Err(MatrixError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

fn check_nonnegative(a: &Matrix) -> Result<(), MatrixError> {
    check_square(a)?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(MatrixError::NotFinite);
            }
            if v < 0.0 {
                return Err(MatrixError::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Spectral radius of a nonnegative square matrix. Dense eigenvalues up to
/// [`DENSE_RADIUS_MAX_DIM`] (power iteration if that fails to converge),
/// power iteration above.
pub fn spectral_radius(a: &Matrix, tol: &ToleranceProfile) -> Result<f64, MatrixError> {
    if a.nrows() <= DENSE_RADIUS_MAX_DIM {
        match spectral_radius_dense(a) {
            Err(MatrixError::NoConvergence { .. }) => spectral_radius_power(a, tol),
            other => other,
        }
    } else {
        spectral_radius_power(a, tol)
    }
}

pub fn spectral_radius_dense(a: &Matrix) -> Result<f64, MatrixError> {
    check_nonnegative(a)?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    // The unbounded Schur iteration can stall on cyclic permutations, so cap it.
    let max_iter = 200 * a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iter).ok_or(
        MatrixError::NoConvergence {
            iterations: max_iter,
            last_estimate: f64::NAN,
        },
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(libm::hypot(z.re, z.im))))
}

/// Power iteration from the all-ones vector.
///
/// The matrix is rescaled by its largest column sum `s` and shifted by the
/// identity, `B = A/s + I`. For nonnegative `A` the Perron root of `B` is
/// `r(A)/s + 1` and it is the only eigenvalue of maximal modulus, so the
/// iteration converges even when `A` is periodic (e.g. a ring permutation).
///
/// The iterate stays positive, so `min_i (Bx)_i/x_i ≤ r(B) ≤ max_i (Bx)_i/x_i`
/// brackets the root; iteration stops once the bracket is within `eig_tol`
/// (relative to `max(1, r)`). Reducible matrices may never close the bracket,
/// so a much stricter test on successive `‖Bx‖₁` estimates is accepted too.
pub fn spectral_radius_power(a: &Matrix, tol: &ToleranceProfile) -> Result<f64, MatrixError> {
    check_nonnegative(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let scale = (0..n).map(|j| a.column(j).sum()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut x = Vector::from_element(n, 1.0 / n as f64);
    let mut estimate = f64::NAN;
    for _ in 0..tol.iter_max {
        let mut y = a * &x;
        y /= scale;
        y += &x;
        let (lo, hi) = y
            .iter()
            .zip(x.iter())
            .filter(|(_, &xi)| xi > 0.0)
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), (yi, xi)| {
                (lo.min(yi / xi), hi.max(yi / xi))
            });
        let next = y.sum();
        y /= next;
        x = y;
        let radius = scale * (next - 1.0).max(0.0);
        let accuracy = tol.eig_tol * radius.max(1.0);
        if scale * (hi - lo) <= accuracy {
            return Ok(scale * (0.5 * (lo + hi) - 1.0).max(0.0));
        }
        if scale * (next - estimate).abs() <= 1e-3 * accuracy {
            return Ok(radius);
        }
        estimate = next;
    }
    Err(MatrixError::NoConvergence {
        iterations: tol.iter_max,
        last_estimate: scale * (estimate - 1.0).max(0.0),
    })
}

/// Minimum-norm least-squares solution of `A X = B` with the achieved
/// Frobenius residual `‖A X − B‖`.
pub fn solve_linear_least_squares(
    a: &Matrix,
    b: &Matrix,
    tol: &ToleranceProfile,
) -> Result<(Matrix, f64), MatrixError> {
    if a.nrows() != b.nrows() {
        return Err(MatrixError::DimensionMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        let x = Matrix::zeros(a.ncols(), b.ncols());
        return Ok((x, b.norm()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(*v));
    let cutoff = smax
        * tol
            .eig_tol
            .max(f64::EPSILON * a.nrows().max(a.ncols()) as f64);
    let x = svd.solve(b, cutoff).map_err(MatrixError::LeastSquares)?;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Inverse of a square matrix via LU; `None` when singular.
pub fn try_inverse(a: &Matrix) -> Option<Matrix> {
    if a.nrows() != a.ncols() {
        return None;
    }
    a.clone().try_inverse()
}

/// Column sums of a matrix.
pub fn column_sums(a: &Matrix) -> Vec<f64> {
    (0..a.ncols()).map(|j| a.column(j).sum()).collect()
}

/// Stacks vectors end to end.
pub fn concat(parts: &[Vector]) -> Vector {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = vec![0.0; len];
    let mut at = 0;
    for p in parts {
        out[at..at + p.len()].copy_from_slice(p.as_slice());
        at += p.len();
    }
    Vector::from_vec(out)
}
