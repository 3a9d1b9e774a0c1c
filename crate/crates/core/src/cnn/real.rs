use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Scalar type the network computes in.
pub trait Real: Float + Default + Debug + Sum + Send + Sync + 'static {
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C <- alpha * A * B + beta * C` on raw strided storage.
    ///
    /// # Safety
    /// The pointers and strides must address valid, non-aliasing regions
    /// (see [`gemm`]).
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
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided matrix view into a slice: element `(i, j)` lives at
/// `offset + i * row_stride + j * col_stride`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl Layout {
    pub(crate) const fn new(offset: usize, row_stride: usize, col_stride: usize) -> Self {
        Self {
            offset,
            row_stride,
            col_stride,
        }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// Bounds-checked `C <- A * B + beta * C` with `A: m x k`, `B: k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    la: Layout,
    b: &[T],
    lb: Layout,
    beta: T,
    c: &mut [T],
    lc: Layout,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // matrixmultiply treats k == 0 as "scale C by beta"
        assert!(lc.last_index(m, n) < c.len());
    } else {
        assert!(la.last_index(m, k) < a.len(), "A out of bounds");
        assert!(lb.last_index(k, n) < b.len(), "B out of bounds");
    }
    assert!(lc.last_index(m, n) < c.len(), "C out of bounds");
    // SAFETY: every addressed element was bounds-checked above, and `c` is a
    // unique borrow so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(la.offset),
            la.row_stride as isize,
            la.col_stride as isize,
            b.as_ptr().add(lb.offset),
            lb.row_stride as isize,
            lb.col_stride as isize,
            beta,
            c.as_mut_ptr().add(lc.offset),
            lc.row_stride as isize,
            lc.col_stride as isize,
        );
    }
}
