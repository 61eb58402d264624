use crate::error::{check_dim, Result};
use crate::gemm::{gemm_acc, transpose, Strided};
use crate::real::Real;
use crate::tensor::Tensor;

/// Per-row affine map `y[t] = x[t] W + b` with `W: [C_in, C_out]`.
pub fn dense<R: Real>(x: &Tensor<R>, w: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    const OP: &str = "dense";
    x.expect_rank(OP, 2)?;
    w.expect_rank(OP, 2)?;
    b.expect_rank(OP, 1)?;
    let (cin, cout) = (w.shape()[0], w.shape()[1]);
    check_dim(OP, "input features", cin, x.cols())?;
    check_dim(OP, "bias", cout, b.shape()[0])?;
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    gemm_acc(rows, cout, cin, Strided::row_major(x.data(), cin), w.data(), cout, &mut out, cout);
    Tensor::new(vec![rows, cout], out)
}

pub struct DenseGrads<R: Real> {
    pub input: Option<Tensor<R>>,
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
}

pub fn dense_backward<R: Real>(
    x: &Tensor<R>,
    w: &Tensor<R>,
    grad_out: &Tensor<R>,
    need_input_grad: bool,
) -> Result<DenseGrads<R>> {
    const OP: &str = "dense_backward";
    let (cin, cout) = (w.shape()[0], w.shape()[1]);
    let rows = x.rows();
    check_dim(OP, "grad rows", rows, grad_out.rows())?;
    check_dim(OP, "grad features", cout, grad_out.cols())?;
    let g = grad_out.data();

    let mut db = vec![R::ZERO; cout];
    for row in g.chunks_exact(cout) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += *v;
        }
    }
    let mut dw = vec![R::ZERO; cin * cout];
    gemm_acc(cin, cout, rows, Strided::transposed(x.data(), cin), g, cout, &mut dw, cout);

    let input = if need_input_grad {
        let wt = transpose(w.data(), cin, cout);
        let mut dx = vec![R::ZERO; rows * cin];
        gemm_acc(rows, cin, cout, Strided::row_major(g, cout), &wt, cin, &mut dx, cin);
        Some(Tensor::new(vec![rows, cin], dx)?)
    } else {
        None
    };
    Ok(DenseGrads {
        input,
        weight: Tensor::new(vec![cin, cout], dw)?,
        bias: Tensor::new(vec![cout], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::<f32>::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn identity_weight_zero_bias() {
        let x = Tensor::<f32>::from_rows(&[vec![0.5, -2.0, 3.0], vec![1.0, 4.0, -1.0]]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn matches_triple_loop() {
        let (t, cin, cout) = (7, 5, 9);
        let x: Vec<f64> = (0..t * cin).map(|v| ((v * 37 % 17) as f64 - 8.0) / 3.0).collect();
        let w: Vec<f64> = (0..cin * cout).map(|v| ((v * 13 % 23) as f64 - 11.0) / 7.0).collect();
        let b: Vec<f64> = (0..cout).map(|v| v as f64 * 0.1).collect();
        let y = dense(
            &Tensor::new(vec![t, cin], x.clone()).unwrap(),
            &Tensor::new(vec![cin, cout], w.clone()).unwrap(),
            &Tensor::new(vec![cout], b.clone()).unwrap(),
        )
        .unwrap();
        for i in 0..t {
            for o in 0..cout {
                let mut s = b[o];
                for c in 0..cin {
                    s += x[i * cin + c] * w[c * cout + o];
                }
                assert!((y.data()[i * cout + o] - s).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mismatch_is_error() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(dense(&x, &Tensor::zeros(&[4, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(dense(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }
}
