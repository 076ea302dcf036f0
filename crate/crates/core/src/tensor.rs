//! Dense order-K tensors in colexicographic ("first index fastest") layout.
//!
//! The layout makes [`Tensor::vectorize`] the usual column-stacking `vec`, so that
//! `vec(T x {A_1, .., A_K}) = (A_K ⊗ .. ⊗ A_1) vec(T)` and the mode-k unfolding follows
//! the Kolda–Bader convention. Modes are 0-based in this API.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Sizes of the index blocks before, at and after `mode`.
#[derive(Debug, Clone, Copy)]
struct Split {
    left: usize,
    size: usize,
    right: usize,
}

impl Tensor {
    /// Build a tensor from its dimension vector and colexicographic data.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidTensor("order must be at least 1".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "every dimension must be positive, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::InvalidTensor(format!(
                "dims {dims:?} require {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&d| d > 0));
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    /// Internal constructor for data produced by finite arithmetic on valid tensors.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of entries, `p* = Π p_k`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Column-stacking vectorization. For this layout it is a copy of the storage.
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Entry at a (0-based) multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.order());
        let mut offset = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(&self.dims) {
            assert!(i < d);
            offset += i * stride;
            stride *= d;
        }
        self.data[offset]
    }

    /// Euclidean (Frobenius) norm of the entries.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Tensor {
        Tensor::from_parts(self.dims.clone(), self.data.iter().map(|v| v * c).collect())
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::from_parts(self.dims.clone(), data))
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    fn split(&self, mode: usize) -> Result<Split> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: mode + 1,
                order: self.order(),
            });
        }
        Ok(Split {
            left: self.dims[..mode].iter().product(),
            size: self.dims[mode],
            right: self.dims[mode + 1..].iter().product(),
        })
    }

    /// Mode-`mode` matricization, a `p_k x (p*/p_k)` matrix.
    ///
    /// Column `j = Σ_{l≠k} i_l J_l` with `J_l = Π_{m<l, m≠k} p_m` holds the fibre with
    /// those fixed indices.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<f64>> {
        let Split { left, size, right } = self.split(mode)?;
        let mut out = DMatrix::zeros(size, left * right);
        for b in 0..right {
            for i in 0..size {
                let src = &self.data[left * (i + size * b)..][..left];
                for (a, &v) in src.iter().enumerate() {
                    out[(i, a + left * b)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::unfold`].
    pub fn fold(m: &DMatrix<f64>, mode: usize, dims: &[usize]) -> Result<Tensor> {
        let shell = Tensor::zeros(dims);
        let Split { left, size, right } = shell.split(mode)?;
        if m.nrows() != size || m.ncols() != left * right {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix at mode {} into dims {dims:?}",
                m.nrows(),
                m.ncols(),
                mode + 1
            )));
        }
        let mut data = shell.data;
        for b in 0..right {
            for i in 0..size {
                let dst = &mut data[left * (i + size * b)..][..left];
                for (a, v) in dst.iter_mut().enumerate() {
                    *v = m[(i, a + left * b)];
                }
            }
        }
        Tensor::new(dims.to_vec(), data)
    }

    /// Mode-k product `T x_k A` with `A` of shape `q x p_k`.
    pub fn mode_product(&self, a: &DMatrix<f64>, mode: usize) -> Result<Tensor> {
        let Split { left, size, right } = self.split(mode)?;
        if a.ncols() != size {
            return Err(Error::DimensionMismatch(format!(
                "mode-{} product needs {} columns, matrix has {}",
                mode + 1,
                size,
                a.ncols()
            )));
        }
        let q = a.nrows();
        let mut dims = self.dims.clone();
        dims[mode] = q;
        let mut out = vec![0.0; left * q * right];
        let a_ptr = a.as_slice().as_ptr();
        for b in 0..right {
            let src = &self.data[left * size * b..][..left * size];
            let dst = &mut out[left * q * b..][..left * q];
            // dst (left x q) = src (left x size) * A^T (size x q), all column-major.
            // SAFETY: slices cover exactly the strided extents passed to dgemm.
            unsafe {
                matrixmultiply::dgemm(
                    left,
                    size,
                    q,
                    1.0,
                    src.as_ptr(),
                    1,
                    left as isize,
                    a_ptr,
                    q as isize,
                    1,
                    0.0,
                    dst.as_mut_ptr(),
                    1,
                    left as isize,
                );
            }
        }
        Ok(Tensor::from_parts(dims, out))
    }

    /// Apply several mode products; modes must be distinct.
    pub fn multi_mode_product(&self, mats: &[(&DMatrix<f64>, usize)]) -> Result<Tensor> {
        let mut seen = vec![false; self.order()];
        for &(_, mode) in mats {
            if mode >= self.order() {
                return Err(Error::ModeOutOfRange {
                    mode: mode + 1,
                    order: self.order(),
                });
            }
            if std::mem::replace(&mut seen[mode], true) {
                return Err(Error::DuplicateMode(mode + 1));
            }
        }
        let mut out = self.clone();
        for &(a, mode) in mats {
            out = out.mode_product(a, mode)?;
        }
        Ok(out)
    }

    /// Accumulate `scale * unfold(self, mode) * unfold(self, mode)^T` into `acc`.
    pub(crate) fn add_mode_gram(
        &self,
        mode: usize,
        scale: f64,
        acc: &mut DMatrix<f64>,
    ) -> Result<()> {
        let Split { left, size, right } = self.split(mode)?;
        if acc.nrows() != size || acc.ncols() != size {
            return Err(Error::DimensionMismatch(format!(
                "gram accumulator is {}x{}, mode {} has size {size}",
                acc.nrows(),
                acc.ncols(),
                mode + 1
            )));
        }
        let c = acc.as_mut_slice().as_mut_ptr();
        if left == 1 {
            // unfold is the storage itself viewed as size x right.
            let m = self.data.as_ptr();
            // SAFETY: m spans size*right entries, c spans size*size entries.
            unsafe {
                matrixmultiply::dgemm(
                    size,
                    right,
                    size,
                    scale,
                    m,
                    1,
                    size as isize,
                    m,
                    size as isize,
                    1,
                    1.0,
                    c,
                    1,
                    size as isize,
                );
            }
            return Ok(());
        }
        for b in 0..right {
            let block = self.data[left * size * b..][..left * size].as_ptr();
            // acc += scale * B^T B with B = block viewed as left x size.
            // SAFETY: block spans left*size entries, c spans size*size entries.
            unsafe {
                matrixmultiply::dgemm(
                    size,
                    left,
                    size,
                    scale,
                    block,
                    left as isize,
                    1,
                    block,
                    1,
                    left as isize,
                    1.0,
                    c,
                    1,
                    size as isize,
                );
            }
        }
        Ok(())
    }
}

/// Kronecker product `mats[0] ⊗ mats[1] ⊗ ...`.
pub fn kron(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for m in mats {
        out = out.kronecker(m);
    }
    out
}
