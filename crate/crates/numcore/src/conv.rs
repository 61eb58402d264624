//! Strided 1-D convolution over `[time, channels]` sequences with centered
//! "same" zero padding.
//!
//! Output step `t` (0-based) reads input rows
//! `stride*(t+1) - left - 1 ..= stride*(t+1) + right - 1` where
//! `left = floor((k-1)/2)` and `right = ceil((k-1)/2)`. Rows outside
//! `[0, T)` read as zero, and the output has `floor(T / stride)` rows.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NumError, Result};
use crate::gemm::{gemm_acc, transpose, Strided};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ] {
            if v == 0 {
                return Err(NumError::Invalid {
                    op: "ConvSpec",
                    msg: format!("{name} must be >= 1"),
                });
            }
        }
        Ok(())
    }

    /// Input rows before the window center.
    pub fn left_context(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Input rows after the window center.
    pub fn right_context(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len / self.stride
    }

    /// Absolute index of the first input row read by output `t`.
    pub fn window_start(&self, t: usize) -> i64 {
        (self.stride * (t + 1)) as i64 - self.left_context() as i64 - 1
    }

    /// Absolute index of the last input row read by output `t`.
    pub fn window_end(&self, t: usize) -> i64 {
        self.window_start(t) + self.kernel as i64 - 1
    }

    /// Outputs whose whole window lies below `available` input rows.
    pub fn outputs_ready(&self, available: usize) -> usize {
        // window_end(t) <= available - 1  <=>  stride*(t+1) <= available - right
        let need = available as i64 - self.right_context() as i64;
        if need < self.stride as i64 {
            0
        } else {
            (need / self.stride as i64) as usize
        }
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.kernel, self.in_channels, self.out_channels]
    }

    /// Range of `t` in `[t0, t1)` for which tap `j` reads a row inside `[0, end)`.
    fn tap_range(&self, j: usize, t0: usize, t1: usize, end: usize) -> (usize, usize) {
        let s = self.stride as i64;
        let off = s - self.left_context() as i64 - 1 + j as i64;
        // s*t + off >= 0
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        // s*t + off <= end - 1
        let hi_excl = {
            let top = end as i64 - 1 - off;
            if top < 0 {
                0
            } else {
                top / s + 1
            }
        };
        let lo = (lo.max(t0 as i64)) as usize;
        let hi = (hi_excl.min(t1 as i64)).max(0) as usize;
        (lo, hi.max(lo))
    }

    fn check_params<R: Real>(&self, op: &'static str, w: &Tensor<R>, b: &Tensor<R>) -> Result<()> {
        self.validate()?;
        w.expect_rank(op, 3)?;
        check_dim(op, "kernel taps", self.kernel, w.shape()[0])?;
        check_dim(op, "weight in_channels", self.in_channels, w.shape()[1])?;
        check_dim(op, "weight out_channels", self.out_channels, w.shape()[2])?;
        b.expect_rank(op, 1)?;
        check_dim(op, "bias out_channels", self.out_channels, b.shape()[0])
    }
}

/// Source rows for [`conv1d_range`]: a window of an input sequence.
#[derive(Debug, Clone, Copy)]
pub struct ConvSource<'a, R> {
    /// Buffered rows, row-major `[rows, in_channels]`.
    pub rows: &'a [R],
    /// Absolute index of `rows[0]`.
    pub first: usize,
    /// Absolute length of the sequence seen so far; rows at or past it read as zero.
    pub end: usize,
}

/// Compute outputs `t0..t1` of a convolution into `out` (`[(t1-t0), C_out]`).
///
/// Every input row the outputs need that lies in `[0, source.end)` must be
/// buffered in `source.rows`.
pub fn conv1d_range<R: Real>(
    source: ConvSource<'_, R>,
    w: &[R],
    b: &[R],
    spec: &ConvSpec,
    t0: usize,
    t1: usize,
    out: &mut [R],
) {
    let cin = spec.in_channels;
    let cout = spec.out_channels;
    debug_assert_eq!(out.len(), (t1 - t0) * cout);
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(b);
    }
    let tap = cin * cout;
    for j in 0..spec.kernel {
        let (lo, hi) = spec.tap_range(j, t0, t1, source.end);
        if lo >= hi {
            continue;
        }
        let idx0 = (spec.window_start(lo) + j as i64) as usize;
        debug_assert!(idx0 >= source.first, "conv source row {idx0} already dropped");
        let a = Strided {
            data: &source.rows[(idx0 - source.first) * cin..],
            row_stride: spec.stride * cin,
            col_stride: 1,
        };
        gemm_acc(
            hi - lo,
            cout,
            cin,
            a,
            &w[j * tap..(j + 1) * tap],
            cout,
            &mut out[(lo - t0) * cout..],
            cout,
        );
    }
}

/// Offline convolution of a whole `[T, C_in]` sequence.
pub fn conv1d<R: Real>(x: &Tensor<R>, w: &Tensor<R>, b: &Tensor<R>, spec: &ConvSpec) -> Result<Tensor<R>> {
    const OP: &str = "conv1d";
    spec.check_params(OP, w, b)?;
    x.expect_rank(OP, 2)?;
    check_dim(OP, "input channels", spec.in_channels, x.cols())?;
    let t_in = x.rows();
    let t_out = spec.output_len(t_in);
    let mut out = vec![R::ZERO; t_out * spec.out_channels];
    let source = ConvSource {
        rows: x.data(),
        first: 0,
        end: t_in,
    };
    conv1d_range(source, w.data(), b.data(), spec, 0, t_out, &mut out);
    Tensor::new(vec![t_out, spec.out_channels], out)
}

/// Gradients of [`conv1d`] with respect to input, weight and bias.
pub struct ConvGrads<R: Real> {
    pub input: Tensor<R>,
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
}

pub fn conv1d_backward<R: Real>(
    x: &Tensor<R>,
    w: &Tensor<R>,
    spec: &ConvSpec,
    grad_out: &Tensor<R>,
    need_input_grad: bool,
) -> Result<ConvGrads<R>> {
    const OP: &str = "conv1d_backward";
    let cin = spec.in_channels;
    let cout = spec.out_channels;
    let t_in = x.rows();
    let t_out = spec.output_len(t_in);
    check_dim(OP, "grad rows", t_out, grad_out.rows())?;
    check_dim(OP, "grad channels", cout, grad_out.cols())?;

    let mut db = vec![R::ZERO; cout];
    for row in grad_out.data().chunks_exact(cout) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += *g;
        }
    }

    let tap = cin * cout;
    let mut dw = vec![R::ZERO; spec.kernel * tap];
    let mut dx = if need_input_grad {
        vec![R::ZERO; t_in * cin]
    } else {
        Vec::new()
    };
    let g = grad_out.data();
    for j in 0..spec.kernel {
        let (lo, hi) = spec.tap_range(j, 0, t_out, t_in);
        if lo >= hi {
            continue;
        }
        let idx0 = (spec.window_start(lo) + j as i64) as usize;
        // dW[j] += X_j^T G
        let xa = Strided {
            data: &x.data()[idx0 * cin..],
            row_stride: 1,
            col_stride: spec.stride * cin,
        };
        gemm_acc(
            cin,
            cout,
            hi - lo,
            xa,
            &g[lo * cout..],
            cout,
            &mut dw[j * tap..(j + 1) * tap],
            cout,
        );
        if need_input_grad {
            // dX_j += G W[j]^T
            let wt = transpose(&w.data()[j * tap..(j + 1) * tap], cin, cout);
            gemm_acc(
                hi - lo,
                cin,
                cout,
                Strided::row_major(&g[lo * cout..], cout),
                &wt,
                cin,
                &mut dx[idx0 * cin..],
                spec.stride * cin,
            );
        }
    }
    Ok(ConvGrads {
        input: if need_input_grad {
            Tensor::new(vec![t_in, cin], dx)?
        } else {
            Tensor::zeros(&[0, cin])
        },
        weight: Tensor::new(w.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![cout], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct windowed sum using the 1-based index formula.
    fn oracle(x: &[Vec<f64>], w: &[Vec<Vec<f64>>], b: &[f64], k: usize, s: usize) -> Vec<Vec<f64>> {
        let t_in = x.len() as i64;
        let rl = ((k - 1) / 2) as i64;
        let cout = b.len();
        let t_out = x.len() / s;
        let mut out = vec![b.to_vec(); t_out];
        for (t1, row) in (1..=t_out as i64).zip(out.iter_mut()) {
            let start = s as i64 * t1 - rl;
            for j in 0..k as i64 {
                let i = start + j; // 1-based
                if i < 1 || i > t_in {
                    continue;
                }
                for (c, xv) in x[(i - 1) as usize].iter().enumerate() {
                    for o in 0..cout {
                        row[o] += xv * w[j as usize][c][o];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_stride_two() {
        let x = Tensor::<f32>::new(vec![8, 1], (1..=8).map(|v| v as f32).collect()).unwrap();
        let w = Tensor::full(&[3, 1, 1], 1.0f32);
        let b = Tensor::zeros(&[1]);
        let y = conv1d(&x, &w, &b, &ConvSpec::new(3, 2, 1, 1)).unwrap();
        assert_eq!(y.data(), &[6.0, 12.0, 18.0, 15.0]);
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::<f32>::new(vec![5, 1], vec![3.0, -1.0, 2.5, 0.0, 7.0]).unwrap();
        let y = conv1d(&x, &Tensor::full(&[1, 1, 1], 1.0), &Tensor::zeros(&[1]), &ConvSpec::new(1, 1, 1, 1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_zero_output() {
        let spec = ConvSpec::new(5, 2, 3, 4);
        let x = Tensor::<f32>::zeros(&[9, 3]);
        let w = Tensor::new(vec![5, 3, 4], (0..60).map(|v| v as f32 * 0.1).collect()).unwrap();
        let y = conv1d(&x, &w, &Tensor::zeros(&[4]), &spec).unwrap();
        assert_eq!(y.shape(), &[4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_name_dimension() {
        let spec = ConvSpec::new(3, 1, 2, 2);
        let x = Tensor::<f32>::zeros(&[4, 3]);
        let err = conv1d(&x, &Tensor::zeros(&[3, 2, 2]), &Tensor::zeros(&[2]), &spec).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let err = conv1d(&Tensor::<f32>::zeros(&[4, 2]), &Tensor::zeros(&[2, 2, 2]), &Tensor::zeros(&[2]), &spec)
            .unwrap_err();
        assert!(err.to_string().contains("kernel taps"), "{err}");
    }

    #[test]
    fn outputs_ready_matches_window_end() {
        for k in 1..12 {
            for s in 1..5 {
                let spec = ConvSpec::new(k, s, 1, 1);
                for avail in 0..40 {
                    let n = spec.outputs_ready(avail);
                    if n > 0 {
                        assert!(spec.window_end(n - 1) < avail as i64);
                    }
                    assert!(spec.window_end(n) >= avail as i64);
                }
            }
        }
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn random_cases_match_oracle() {
        let mut seed = 17;
        for &(t, k, s, cin, cout) in &[(13, 4, 2, 3, 5), (20, 7, 1, 2, 3), (9, 10, 4, 4, 2), (3, 9, 2, 1, 1)] {
            let x: Vec<Vec<f64>> = (0..t).map(|_| (0..cin).map(|_| lcg(&mut seed)).collect()).collect();
            let w: Vec<Vec<Vec<f64>>> = (0..k)
                .map(|_| (0..cin).map(|_| (0..cout).map(|_| lcg(&mut seed)).collect()).collect())
                .collect();
            let b: Vec<f64> = (0..cout).map(|_| lcg(&mut seed)).collect();
            let expect = oracle(&x, &w, &b, k, s);
            let xt = Tensor::from_rows(&x).unwrap();
            let wt = Tensor::new(vec![k, cin, cout], w.iter().flatten().flatten().copied().collect()).unwrap();
            let bt = Tensor::new(vec![cout], b).unwrap();
            let y = conv1d(&xt, &wt, &bt, &ConvSpec::new(k, s, cin, cout)).unwrap();
            let flat: Vec<f64> = expect.into_iter().flatten().collect();
            for (a, e) in y.data().iter().zip(&flat) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
