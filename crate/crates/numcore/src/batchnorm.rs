//! Batch normalization over the rows of one or more `[time, channels]` sequences.
//!
//! Training statistics pool every row of every sequence in the batch, so the
//! effective sample count is the total number of timesteps.

use crate::error::{check_dim, NumError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<R: Real> {
    pub gamma: Tensor<R>,
    pub beta: Tensor<R>,
    pub running_mean: Tensor<R>,
    pub running_var: Tensor<R>,
    pub momentum: f64,
    pub eps: f64,
}

/// Per-channel mean and biased variance of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Saved activations for [`BatchNormState::backward`].
#[derive(Debug, Clone)]
pub struct BnCache<R: Real> {
    x_hat: Vec<Tensor<R>>,
    inv_std: Vec<R>,
    count: usize,
}

impl<R: Real> BatchNormState<R> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], R::ONE),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], R::ONE),
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<S: Real>(&self) -> BatchNormState<S> {
        BatchNormState {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            momentum: self.momentum,
            eps: self.eps,
        }
    }

    /// Normalize with batch statistics pooled over all rows of `xs`.
    pub fn forward_train(&self, xs: &[&Tensor<R>]) -> Result<(Vec<Tensor<R>>, BnCache<R>, BatchStats)> {
        const OP: &str = "batchnorm";
        let c = self.channels();
        let mut count = 0;
        let mut sum = vec![0.0f64; c];
        for x in xs {
            x.expect_rank(OP, 2)?;
            check_dim(OP, "channels", c, x.cols())?;
            count += x.rows();
            for row in x.data().chunks_exact(c) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v.to_f64();
                }
            }
        }
        if count == 0 {
            return Err(NumError::Invalid {
                op: OP,
                msg: "training batch has no rows".into(),
            });
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; c];
        for x in xs {
            for row in x.data().chunks_exact(c) {
                for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    let d = v.to_f64() - m;
                    *s += d * d;
                }
            }
        }
        let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
        let inv_std: Vec<R> = var.iter().map(|v| R::from_f64(1.0 / (v + self.eps).sqrt())).collect();
        let mean_r: Vec<R> = mean.iter().map(|&m| R::from_f64(m)).collect();

        let mut x_hat = Vec::with_capacity(xs.len());
        let mut ys = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xh = x.data().to_vec();
            let mut y = vec![R::ZERO; xh.len()];
            for (xrow, yrow) in xh.chunks_exact_mut(c).zip(y.chunks_exact_mut(c)) {
                for ch in 0..c {
                    let h = (xrow[ch] - mean_r[ch]) * inv_std[ch];
                    xrow[ch] = h;
                    yrow[ch] = self.gamma.data()[ch] * h + self.beta.data()[ch];
                }
            }
            x_hat.push(Tensor::new(x.shape().to_vec(), xh)?);
            ys.push(Tensor::new(x.shape().to_vec(), y)?);
        }
        Ok((
            ys,
            BnCache {
                x_hat,
                inv_std,
                count,
            },
            BatchStats { mean, var },
        ))
    }

    /// Per-channel `(scale, shift)` so that inference is `y = x*scale + shift`.
    pub fn inference_affine(&self) -> (Vec<R>, Vec<R>) {
        let mut scale = Vec::with_capacity(self.channels());
        let mut shift = Vec::with_capacity(self.channels());
        for ch in 0..self.channels() {
            let inv = 1.0 / (self.running_var.data()[ch].to_f64() + self.eps).sqrt();
            let s = self.gamma.data()[ch].to_f64() * inv;
            scale.push(R::from_f64(s));
            shift.push(R::from_f64(
                self.beta.data()[ch].to_f64() - self.running_mean.data()[ch].to_f64() * s,
            ));
        }
        (scale, shift)
    }

    /// Normalize with frozen running statistics.
    pub fn forward_infer(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        const OP: &str = "batchnorm";
        x.expect_rank(OP, 2)?;
        check_dim(OP, "channels", self.channels(), x.cols())?;
        let mut y = x.clone();
        self.apply_infer_inplace(y.data_mut());
        Ok(y)
    }

    /// In-place inference normalization of row-major rows.
    pub fn apply_infer_inplace(&self, rows: &mut [R]) {
        let (scale, shift) = self.inference_affine();
        for row in rows.chunks_exact_mut(self.channels()) {
            for ((v, s), b) in row.iter_mut().zip(&scale).zip(&shift) {
                *v = *v * *s + *b;
            }
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = R::from_f64(m * r.to_f64() + (1.0 - m) * b);
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = R::from_f64(m * r.to_f64() + (1.0 - m) * b);
        }
    }

    /// Returns `(input grads, d_gamma, d_beta)`.
    pub fn backward(&self, cache: &BnCache<R>, grads: &[&Tensor<R>]) -> Result<(Vec<Tensor<R>>, Tensor<R>, Tensor<R>)> {
        let c = self.channels();
        let mut sum_g = vec![0.0f64; c];
        let mut sum_gx = vec![0.0f64; c];
        for (g, xh) in grads.iter().zip(&cache.x_hat) {
            check_dim("batchnorm_backward", "rows", xh.rows(), g.rows())?;
            for (grow, xrow) in g.data().chunks_exact(c).zip(xh.data().chunks_exact(c)) {
                for ch in 0..c {
                    let gv = grow[ch].to_f64();
                    sum_g[ch] += gv;
                    sum_gx[ch] += gv * xrow[ch].to_f64();
                }
            }
        }
        let n = cache.count as f64;
        let coef: Vec<R> = (0..c)
            .map(|ch| R::from_f64(self.gamma.data()[ch].to_f64() * cache.inv_std[ch].to_f64() / n))
            .collect();
        let sum_g_r: Vec<R> = sum_g.iter().map(|&s| R::from_f64(s)).collect();
        let sum_gx_r: Vec<R> = sum_gx.iter().map(|&s| R::from_f64(s)).collect();
        let n_r = R::from_f64(n);
        let mut dxs = Vec::with_capacity(grads.len());
        for (g, xh) in grads.iter().zip(&cache.x_hat) {
            let mut dx = vec![R::ZERO; g.len()];
            for ((drow, grow), xrow) in dx
                .chunks_exact_mut(c)
                .zip(g.data().chunks_exact(c))
                .zip(xh.data().chunks_exact(c))
            {
                for ch in 0..c {
                    drow[ch] = coef[ch] * (n_r * grow[ch] - sum_g_r[ch] - xrow[ch] * sum_gx_r[ch]);
                }
            }
            dxs.push(Tensor::new(g.shape().to_vec(), dx)?);
        }
        Ok((dxs, Tensor::new(vec![c], sum_gx_r)?, Tensor::new(vec![c], sum_g_r)?))
    }
}

/// Single-sequence convenience: training mode normalizes with batch
/// statistics and updates the running averages; inference mode uses the
/// running averages only.
pub fn batchnorm<R: Real>(x: &Tensor<R>, state: &mut BatchNormState<R>, training: bool) -> Result<Tensor<R>> {
    if training {
        let (mut ys, _, stats) = state.forward_train(&[x])?;
        state.update_running(&stats);
        Ok(ys.remove(0))
    } else {
        state.forward_infer(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_with_unit_stats_is_identity() {
        let x = Tensor::<f32>::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let mut st = BatchNormState::new(2);
        let y = batchnorm(&x, &mut st, false).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn constant_input_yields_beta() {
        let x = Tensor::<f32>::full(&[6, 3], 4.2);
        let mut st = BatchNormState::new(3);
        st.beta = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = batchnorm(&x, &mut st, true).unwrap();
        for row in y.data().chunks(3) {
            assert!((row[0] - 0.5).abs() < 1e-6 && (row[1] + 1.0).abs() < 1e-6 && (row[2] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn momentum_update() {
        let x = Tensor::<f64>::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let mut st = BatchNormState::<f64>::new(1);
        st.running_mean = Tensor::full(&[1], 0.5);
        st.running_var = Tensor::full(&[1], 2.0);
        batchnorm(&x, &mut st, true).unwrap();
        // batch mean 2, biased var 1
        assert!((st.running_mean.data()[0] - (0.99 * 0.5 + 0.01 * 2.0)).abs() < 1e-12);
        assert!((st.running_var.data()[0] - (0.99 * 2.0 + 0.01 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn stats_pool_over_sequences() {
        let a = Tensor::<f64>::from_rows(&[vec![0.0]]).unwrap();
        let b = Tensor::<f64>::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let st = BatchNormState::<f64>::new(1);
        let (_, _, stats) = st.forward_train(&[&a, &b]).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-12);
        assert!((stats.var[0] - 8.0 / 3.0).abs() < 1e-12);
    }
}
