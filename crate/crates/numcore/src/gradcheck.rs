//! Central finite-difference gradient checks in 64-bit arithmetic.

/// Smallest denominator used for relative errors so that coordinates with a
/// vanishing gradient are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h`.
///
/// `indices` restricts the check to a subset of coordinates; `None` checks all.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: Option<&[usize]>,
    h: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match parameter length");
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = x.to_vec();
    for &i in idx {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{conv1d, conv1d_backward, ConvSpec};
    use crate::dense::{dense, dense_backward};
    use crate::tensor::Tensor;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    /// Weighted sum of outputs so every output element carries a distinct gradient.
    fn weighted(y: &Tensor<f64>, coef: &[f64]) -> f64 {
        y.data().iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn dense_gradients() {
        let (t, cin, cout) = (4, 3, 5);
        let x = Tensor::new(vec![t, cin], pseudo(t * cin, 1)).unwrap();
        let w = Tensor::new(vec![cin, cout], pseudo(cin * cout, 2)).unwrap();
        let b = Tensor::new(vec![cout], pseudo(cout, 3)).unwrap();
        let coef = pseudo(t * cout, 4);
        let g = Tensor::new(vec![t, cout], coef.clone()).unwrap();
        let grads = dense_backward(&x, &w, &g, true).unwrap();

        let mut params: Vec<f64> = x.data().to_vec();
        params.extend(w.data());
        params.extend(b.data());
        let mut analytic = grads.input.unwrap().into_data();
        analytic.extend(grads.weight.data());
        analytic.extend(grads.bias.data());
        let f = |p: &[f64]| {
            let x = Tensor::new(vec![t, cin], p[..t * cin].to_vec()).unwrap();
            let w = Tensor::new(vec![cin, cout], p[t * cin..t * cin + cin * cout].to_vec()).unwrap();
            let b = Tensor::new(vec![cout], p[t * cin + cin * cout..].to_vec()).unwrap();
            weighted(&dense(&x, &w, &b).unwrap(), &coef)
        };
        let r = grad_check(f, &params, &analytic, None, 1e-4);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn conv_gradients() {
        let spec = ConvSpec::new(3, 2, 2, 3);
        let t = 9;
        let nx = t * 2;
        let nw = 3 * 2 * 3;
        let x = Tensor::new(vec![t, 2], pseudo(nx, 5)).unwrap();
        let w = Tensor::new(vec![3, 2, 3], pseudo(nw, 6)).unwrap();
        let b = Tensor::new(vec![3], pseudo(3, 7)).unwrap();
        let t_out = spec.output_len(t);
        let coef = pseudo(t_out * 3, 8);
        let g = Tensor::new(vec![t_out, 3], coef.clone()).unwrap();
        let grads = conv1d_backward(&x, &w, &spec, &g, true).unwrap();
        let mut params: Vec<f64> = x.data().to_vec();
        params.extend(w.data());
        params.extend(b.data());
        let mut analytic = grads.input.into_data();
        analytic.extend(grads.weight.data());
        analytic.extend(grads.bias.data());
        let f = |p: &[f64]| {
            let x = Tensor::new(vec![t, 2], p[..nx].to_vec()).unwrap();
            let w = Tensor::new(vec![3, 2, 3], p[nx..nx + nw].to_vec()).unwrap();
            let b = Tensor::new(vec![3], p[nx + nw..].to_vec()).unwrap();
            weighted(&conv1d(&x, &w, &b, &spec).unwrap(), &coef)
        };
        let r = grad_check(f, &params, &analytic, None, 1e-4);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
