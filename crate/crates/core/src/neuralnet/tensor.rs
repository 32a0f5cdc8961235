use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::contract(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform values in `(-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros_like(other: &Tensor) -> Tensor {
        Tensor::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other * k`, shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor, k: f64) {
        assert_eq!(self.shape, other.shape, "tensor shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += k * b;
        }
    }
}

/// Matrix operand: a row-major buffer, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// The transpose of the stored `rows × cols` matrix.
    pub fn t(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: true,
        }
    }

    fn logical(&self) -> (usize, usize, isize, isize) {
        if self.transposed {
            (self.cols, self.rows, 1, self.cols as isize)
        } else {
            (self.rows, self.cols, self.cols as isize, 1)
        }
    }
}

/// `c = a · b + beta · c` with `c` row-major `m × n`.
pub(crate) fn gemm(a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    let (m, k, rsa, csa) = a.logical();
    let (k2, n, rsb, csb) = b.logical();
    assert_eq!(k, k2, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert_eq!(c.len(), m * n, "output buffer size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the asserts above bound every index touched through the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major transpose of an `rows × cols` matrix.
pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

super::activation::dispatch!(
/// `c = a · b`, or `c += a · b` with `add`, for small row-major operands
/// (`a` is `m × k`, `b` is `k × n`) without the packing overhead of [`gemm`].
/// Every output element is summed over `k` in order.
gemm_small(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64], add: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let mut i = 0;
    while i + 4 <= m {
        gemm_rows::<4>(a, i, k, b, n, c, add);
        i += 4;
    }
    while i < m {
        gemm_rows::<1>(a, i, k, b, n, c, add);
        i += 1;
    }
});

#[inline(always)]
fn gemm_rows<const R: usize>(a: &[f64], i: usize, k: usize, b: &[f64], n: usize, c: &mut [f64], add: bool) {
    let mut j = 0;
    while j + 16 <= n {
        gemm_tile::<R, 16>(a, i, k, b, n, j, c, add);
        j += 16;
    }
    while j + 8 <= n {
        gemm_tile::<R, 8>(a, i, k, b, n, j, c, add);
        j += 8;
    }
    while j < n {
        gemm_tile::<R, 1>(a, i, k, b, n, j, c, add);
        j += 1;
    }
}

/// Rows `i..i+R`, columns `j..j+C` of the product, kept in registers.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn gemm_tile<const R: usize, const C: usize>(
    a: &[f64],
    i: usize,
    k: usize,
    b: &[f64],
    n: usize,
    j: usize,
    c: &mut [f64],
    add: bool,
) {
    let mut acc = [[0.0f64; C]; R];
    for p in 0..k {
        let brow: &[f64; C] = b[p * n + j..p * n + j + C].try_into().unwrap();
        for (r, row) in acc.iter_mut().enumerate() {
            let av = a[(i + r) * k + p];
            for (s, bv) in row.iter_mut().zip(brow) {
                *s += av * bv;
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        let out = &mut c[(i + r) * n + j..(i + r) * n + j + C];
        if add {
            out.iter_mut().zip(row).for_each(|(o, s)| *o += s);
        } else {
            out.copy_from_slice(row);
        }
    }
}
