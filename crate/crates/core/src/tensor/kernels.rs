//! Sequential inner loops shared by the dense and convolution ops.

use super::Scalar;

const LANES: usize = 8;

/// `Σ a_i b_i` with eight independent `f64` partial sums combined in a fixed order.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += xa[l].widen() * xb[l].widen();
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x.widen() * y.widen();
    }
    combine(acc) + tail
}

#[inline]
pub(crate) fn sum<T: Scalar>(a: &[T]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let mut chunks = a.chunks_exact(LANES);
    for x in &mut chunks {
        for l in 0..LANES {
            acc[l] += x[l].widen();
        }
    }
    combine(acc) + chunks.remainder().iter().map(|v| v.widen()).sum::<f64>()
}

#[inline]
fn combine(acc: [f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[m, :] += Σ_k a[m, k] · b[k, :]` with `a` of shape `m×k` and `b` of shape `k×s`.
pub(crate) fn gemm_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, s: usize) {
    debug_assert_eq!(out.len(), m * s);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * s);
    for (row, a_row) in out.chunks_exact_mut(s).zip(a.chunks_exact(k)) {
        for (&w, b_row) in a_row.iter().zip(b.chunks_exact(s)) {
            if w != T::zero() {
                axpy(row, w, b_row);
            }
        }
    }
}

/// `out[k, :] += Σ_m a[m, k] · b[m, :]`, i.e. `Aᵀ B`, with `a` of shape `m×k` and `b` of shape `m×s`.
pub(crate) fn gemm_tn_acc<T: Scalar>(
    out: &mut [T],
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    s: usize,
) {
    debug_assert_eq!(out.len(), k * s);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * s);
    for (a_row, b_row) in a.chunks_exact(k).zip(b.chunks_exact(s)) {
        for (&w, out_row) in a_row.iter().zip(out.chunks_exact_mut(s)) {
            if w != T::zero() {
                axpy(out_row, w, b_row);
            }
        }
    }
}

/// `acc[m, k] += Σ_s a[m, s] · b[k, s]`, i.e. `A Bᵀ`, accumulated in `f64`.
pub(crate) fn gemm_nt_acc_f64<T: Scalar>(
    acc: &mut [f64],
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    s: usize,
) {
    debug_assert_eq!(acc.len(), m * k);
    debug_assert_eq!(a.len(), m * s);
    debug_assert_eq!(b.len(), k * s);
    for (acc_row, a_row) in acc.chunks_exact_mut(k).zip(a.chunks_exact(s)) {
        for (slot, b_row) in acc_row.iter_mut().zip(b.chunks_exact(s)) {
            *slot += dot(a_row, b_row);
        }
    }
}
