use rand::Rng;

use crate::error::{NumError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn relu_inplace<R: Real>(data: &mut [R]) {
    for v in data {
        if *v < R::ZERO {
            *v = R::ZERO;
        }
    }
}

pub fn relu<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    let mut y = x.clone();
    relu_inplace(y.data_mut());
    y
}

/// Gradient through ReLU given its output.
pub fn relu_backward<R: Real>(output: &Tensor<R>, grad: &Tensor<R>) -> Tensor<R> {
    let mut g = grad.clone();
    for (gv, y) in g.data_mut().iter_mut().zip(output.data()) {
        if *y <= R::ZERO {
            *gv = R::ZERO;
        }
    }
    g
}

/// Inverted-dropout mask: zeros for dropped units, `1/(1-rate)` for kept ones.
#[derive(Debug, Clone)]
pub struct DropoutMask<R: Real> {
    scale: Vec<R>,
}

impl<R: Real> DropoutMask<R> {
    pub fn apply(&self, x: &mut Tensor<R>) {
        for (v, s) in x.data_mut().iter_mut().zip(&self.scale) {
            *v *= *s;
        }
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(NumError::Invalid {
            op: "dropout",
            msg: format!("rate must be in [0, 1), got {rate}"),
        })
    }
}

/// Inverted dropout. Identity (and no mask) at inference or when `rate == 0`.
pub fn dropout<R: Real>(
    x: &Tensor<R>,
    rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor<R>, Option<DropoutMask<R>>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = R::from_f64(1.0 / (1.0 - rate));
    let scale: Vec<R> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { R::ZERO } else { keep })
        .collect();
    let mask = DropoutMask { scale };
    let mut y = x.clone();
    mask.apply(&mut y);
    Ok((y, Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let x = Tensor::<f32>::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.4, false, &mut rng).unwrap().0, x);
    }

    #[test]
    fn preserves_expected_mean() {
        let n = 100_000;
        let x = Tensor::<f32>::full(&[n, 1], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (y, _) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn bad_rate_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn relu_backward_masks() {
        let x = Tensor::<f64>::from_rows(&[vec![-1.0, 2.0, 0.0]]).unwrap();
        let y = relu(&x);
        let g = relu_backward(&y, &Tensor::full(&[1, 3], 1.0));
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }
}
