use std::fmt;

use num_traits::Float;
use rand::distributions::uniform::SampleUniform;

/// Floating-point element type of the neural substrate.
///
/// Training runs in `f32`; gradient checks instantiate the same code in `f64`.
pub trait Scalar:
    Float + SampleUniform + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Width in bytes; doubles as the dtype tag in checkpoints.
    const BYTES: usize;

    /// `C ← α·A·B + β·C` on strided row/column-major views.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping `m×k`, `k×n`
    /// and `m×n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Row-major matrix product `C (+)= op(A) · op(B)`, where `op` optionally
/// transposes. `A` is stored as `m×k` (or `k×m` when transposed), `B` as
/// `k×n` (or `n×k`), `C` as `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: sizes asserted above; `c` is uniquely borrowed and cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}

/// `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    pub const fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense NCHW tensor with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: Shape4) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()], grad: None }
    }

    pub fn filled(shape: Shape4, v: T) -> Self {
        Self { shape, data: vec![v; shape.len()], grad: None }
    }

    /// Panics when `data` does not match the shape.
    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Self {
        assert_eq!(data.len(), shape.len(), "tensor data length does not match shape {shape}");
        Self { shape, data, grad: None }
    }

    /// Trainable tensor: data plus a zeroed gradient buffer.
    pub fn param(shape: Shape4) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()], grad: Some(vec![T::zero(); shape.len()]) }
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Data and gradient together, for optimizers.
    pub fn data_and_grad_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    /// Slice holding batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let l = self.shape.item_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let l = self.shape.item_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    /// Same data under a new shape of equal size.
    pub fn reshaped(mut self, shape: Shape4) -> Self {
        assert_eq!(shape.len(), self.shape.len(), "reshape must preserve size");
        self.shape = shape;
        if let Some(g) = &self.grad {
            debug_assert_eq!(g.len(), shape.len());
        }
        self
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|v| U::from_f64(v.as_f64())).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(items: &[Tensor4<T>]) -> Self {
        assert!(!items.is_empty(), "cannot stack zero tensors");
        let first = items[0].shape;
        let mut data = Vec::with_capacity(first.item_len() * items.len());
        let mut n = 0;
        for t in items {
            assert_eq!((t.shape.c, t.shape.h, t.shape.w), (first.c, first.h, first.w), "stack shape mismatch");
            data.extend_from_slice(&t.data);
            n += t.shape.n;
        }
        Self::from_vec(Shape4::new(n, first.c, first.h, first.w), data)
    }

    /// Batch items `start..end` as a new tensor.
    pub fn slice_batch(&self, start: usize, end: usize) -> Self {
        let l = self.shape.item_len();
        Self::from_vec(
            Shape4::new(end - start, self.shape.c, self.shape.h, self.shape.w),
            self.data[start * l..end * l].to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_transposes() {
        // A = [[1,2,3],[4,5,6]] (2x3), B = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        matmul(2, 3, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // A^T stored as 3x2
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut d = [1.0f64; 4];
        matmul(2, 3, 2, &at, true, &bt, true, &mut d, true);
        assert_eq!(d, [5.0, 6.0, 11.0, 12.0]);
    }

    #[test]
    fn stack_and_slice() {
        let a = Tensor4::<f32>::filled(Shape4::new(1, 2, 1, 1), 1.0);
        let b = Tensor4::<f32>::filled(Shape4::new(2, 2, 1, 1), 2.0);
        let s = Tensor4::stack(&[a.clone(), b]);
        assert_eq!(s.shape(), Shape4::new(3, 2, 1, 1));
        assert_eq!(s.slice_batch(0, 1), a);
    }
}
