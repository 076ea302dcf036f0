//! Dense symmetric matrices and the spectral functions built on them.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge used when no explicit ridge is given: eigenvalues are clamped at
/// `DEFAULT_RIDGE * trace / p`.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// A dense, exactly symmetric, finite real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// Eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, ordered like `values`.
    pub vectors: DMatrix<f64>,
}

impl SymMatrix {
    /// Validate squareness, finiteness and symmetry (to `1e-10 * (1 + max|a|)`), then
    /// store the exactly symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let max = m.amax();
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * (1.0 + max) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrized(m))
    }

    /// `(m + m^T) / 2`, with no tolerance check.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    /// Build from a function of `(i, j)` evaluated on the upper triangle.
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frob_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Largest absolute off-diagonal entry (0 for 1x1 matrices).
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        let mut best = 0.0f64;
        for j in 0..p {
            for i in 0..j {
                best = best.max(self.0[(i, j)].abs());
            }
        }
        best
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// Conjugate by a square matrix: `q * self * q^T`.
    pub fn congruence(&self, q: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrized(q * &self.0 * q.transpose())
    }

    /// The default eigenvalue floor for this matrix, `1e-10 * trace / p` (never negative).
    pub fn default_ridge(&self) -> f64 {
        (DEFAULT_RIDGE * self.trace() / self.dim() as f64).max(0.0)
    }

    pub fn eigen(&self) -> SymEigen {
        let SymmetricEigen {
            eigenvalues,
            eigenvectors,
        } = SymmetricEigen::new(self.0.clone());
        let p = self.dim();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let values = order.iter().map(|&i| eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(p, p, |r, c| eigenvectors[(r, order[c])]);
        SymEigen { values, vectors }
    }

    /// Apply `f` to the clamped spectrum, where eigenvalues below `ridge` become `ridge`.
    fn spectral_map(&self, ridge: f64, f: impl Fn(f64) -> f64) -> SymMatrix {
        let SymEigen { values, vectors } = self.eigen();
        let mut scaled = vectors.clone();
        for (c, &v) in values.iter().enumerate() {
            let fv = f(v.max(ridge));
            scaled.column_mut(c).scale_mut(fv);
        }
        SymMatrix::symmetrized(scaled * vectors.transpose())
    }

    /// Symmetric PSD square root of the spectrum clamped at `ridge`.
    pub fn sqrt(&self, ridge: f64) -> SymMatrix {
        self.spectral_map(ridge.max(0.0), f64::sqrt)
    }

    /// Inverse of the spectrum clamped at `ridge`. A zero ridge on a singular matrix
    /// yields non-finite entries; callers pass [`SymMatrix::default_ridge`] or larger.
    pub fn inverse(&self, ridge: f64) -> SymMatrix {
        self.spectral_map(ridge.max(0.0), f64::recip)
    }

    /// Cholesky factorization, failing when any pivot is not positive.
    pub fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        nalgebra::Cholesky::new(self.0.clone()).ok_or(Error::NotPositiveDefinite)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    /// `log det` via Cholesky.
    pub fn logdet_pd(&self) -> Result<f64> {
        let chol = self.cholesky()?;
        let l = chol.l_dirty();
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let d = l[(i, i)];
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            acc += d.ln();
        }
        Ok(2.0 * acc)
    }

    /// Exact inverse via Cholesky; errors when not positive definite.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let chol = self.cholesky()?;
        Ok(SymMatrix::symmetrized(chol.inverse()))
    }

    /// `trace(self * other)` without forming the product.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    /// `self / ||self||_F`.
    pub fn normalize_frob(&self) -> Result<SymMatrix> {
        let n = self.frob_norm();
        if n == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(self.scaled(1.0 / n))
    }

    /// Kronecker product of symmetric factors, in the given order.
    pub fn kron(mats: &[&SymMatrix]) -> SymMatrix {
        let raw: Vec<&DMatrix<f64>> = mats.iter().map(|m| &m.0).collect();
        SymMatrix(crate::tensor::kron(&raw))
    }
}
