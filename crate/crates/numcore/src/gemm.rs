//! Strided matrix-multiply-accumulate kernel shared by conv and dense layers.
//!
//! Every output element is computed as `c + (a_0*b_0 + a_1*b_1 + ...)` with the
//! inner sum started from zero and taken in increasing `p`. Register blocking
//! never changes that order, so a row's result does not depend on which other
//! rows were computed alongside it. Streaming inference relies on this to be
//! bit-identical to the offline pass.

use crate::real::Real;

/// Operand layout for [`gemm_acc`]: `A(i, p) = a[i * row_stride + p * col_stride]`.
#[derive(Debug, Clone, Copy)]
pub struct Strided<'a, R> {
    pub data: &'a [R],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, R: Real> Strided<'a, R> {
    pub fn row_major(data: &'a [R], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// View `data` (row-major, `cols` wide) as its transpose.
    pub fn transposed(data: &'a [R], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }
}

/// `C[i][j] += sum_p A(i, p) * B[p][j]` for `i < m`, `j < n`, `p < k`.
///
/// `b` is row-major with row stride `ldb`; `c` is row-major with row stride `ldc`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc<R: Real>(
    m: usize,
    n: usize,
    k: usize,
    a: Strided<'_, R>,
    b: &[R],
    ldb: usize,
    c: &mut [R],
    ldc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let mut i = 0;
    while i + 4 <= m {
        col_blocks::<R, 4>(i, n, k, a, b, ldb, c, ldc);
        i += 4;
    }
    while i < m {
        col_blocks::<R, 1>(i, n, k, a, b, ldb, c, ldc);
        i += 1;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn col_blocks<R: Real, const MR: usize>(
    i: usize,
    n: usize,
    k: usize,
    a: Strided<'_, R>,
    b: &[R],
    ldb: usize,
    c: &mut [R],
    ldc: usize,
) {
    let mut j = 0;
    while j + 32 <= n {
        block::<R, MR, 32>(i, j, k, a, b, ldb, c, ldc);
        j += 32;
    }
    if j + 16 <= n {
        block::<R, MR, 16>(i, j, k, a, b, ldb, c, ldc);
        j += 16;
    }
    if j + 8 <= n {
        block::<R, MR, 8>(i, j, k, a, b, ldb, c, ldc);
        j += 8;
    }
    while j < n {
        block::<R, MR, 1>(i, j, k, a, b, ldb, c, ldc);
        j += 1;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn block<R: Real, const MR: usize, const NR: usize>(
    i0: usize,
    j0: usize,
    k: usize,
    a: Strided<'_, R>,
    b: &[R],
    ldb: usize,
    c: &mut [R],
    ldc: usize,
) {
    let mut acc = [[R::ZERO; NR]; MR];
    for p in 0..k {
        let start = p * ldb + j0;
        let brow: &[R; NR] = b[start..start + NR].try_into().unwrap();
        for r in 0..MR {
            let av = a.data[(i0 + r) * a.row_stride + p * a.col_stride];
            let accr = &mut acc[r];
            for q in 0..NR {
                accr[q] += av * brow[q];
            }
        }
    }
    for (r, accr) in acc.iter().enumerate() {
        let start = (i0 + r) * ldc + j0;
        let crow = &mut c[start..start + NR];
        for (cv, av) in crow.iter_mut().zip(accr) {
            *cv += *av;
        }
    }
}

/// Row-major transpose of a `rows x cols` matrix.
pub fn transpose<R: Real>(data: &[R], rows: usize, cols: usize) -> Vec<R> {
    let mut out = vec![R::ZERO; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_on_ragged_sizes() {
        for &(m, n, k) in &[(1, 1, 1), (5, 3, 7), (9, 61, 4), (4, 32, 16), (7, 57, 13)] {
            let a: Vec<f64> = (0..m * k).map(|v| ((v * 7 % 11) as f64) - 5.0).collect();
            let b: Vec<f64> = (0..k * n).map(|v| ((v * 5 % 13) as f64) * 0.5).collect();
            let mut c = vec![0.0; m * n];
            gemm_acc(m, n, k, Strided::row_major(&a, k), &b, n, &mut c, n);
            assert_eq!(c, naive(m, n, k, &a, &b));
        }
    }

    #[test]
    fn transposed_view_matches_explicit_transpose() {
        let (m, n, k) = (6, 10, 5);
        let at: Vec<f64> = (0..k * m).map(|v| (v as f64).sin()).collect(); // k x m
        let a = transpose(&at, k, m); // m x k
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).cos()).collect();
        let mut c1 = vec![0.0; m * n];
        let mut c2 = vec![0.0; m * n];
        gemm_acc(m, n, k, Strided::row_major(&a, k), &b, n, &mut c1, n);
        gemm_acc(m, n, k, Strided::transposed(&at, m), &b, n, &mut c2, n);
        assert_eq!(c1, c2);
    }

    #[test]
    fn row_results_independent_of_blocking() {
        let (m, n, k) = (11, 45, 19);
        let a: Vec<f32> = (0..m * k).map(|v| (v as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|v| (v as f32 * 0.11).cos()).collect();
        let mut full = vec![0.0f32; m * n];
        gemm_acc(m, n, k, Strided::row_major(&a, k), &b, n, &mut full, n);
        for i in 0..m {
            let mut one = vec![0.0f32; n];
            gemm_acc(1, n, k, Strided::row_major(&a[i * k..], k), &b, n, &mut one, n);
            assert_eq!(&full[i * n..(i + 1) * n], &one[..]);
        }
    }
}
