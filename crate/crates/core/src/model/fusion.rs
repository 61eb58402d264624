//! Per-timestep fusion of the two encoder outputs.

use numcore::{Real, Tensor};

use super::config::FusionMode;
use crate::error::{Error, Result};

fn check_lengths<R: Real>(za: &Tensor<R>, zs: &Tensor<R>) -> Result<()> {
    if za.rows() != zs.rows() {
        return Err(Error::Input(format!(
            "fusion needs equal lengths: audio has {} steps, text has {}",
            za.rows(),
            zs.rows()
        )));
    }
    Ok(())
}

/// Concat: `[z_a; z_s]`. Tensor: flattened `[1 z_a] (x) [1 z_s]`, element
/// `(i, j)` at `i * (d_s + 1) + j`, so row 0 is `[1 z_s]` and column 0 is `[1 z_a]`.
pub fn fuse<R: Real>(za: &Tensor<R>, zs: &Tensor<R>, mode: FusionMode) -> Result<Tensor<R>> {
    check_lengths(za, zs)?;
    let (t, da, ds) = (za.rows(), za.cols(), zs.cols());
    match mode {
        FusionMode::Concat => {
            let mut out = Vec::with_capacity(t * (da + ds));
            for i in 0..t {
                out.extend_from_slice(za.row(i));
                out.extend_from_slice(zs.row(i));
            }
            Ok(Tensor::new(vec![t, da + ds], out)?)
        }
        FusionMode::Tensor => {
            let w = (da + 1) * (ds + 1);
            let mut out = vec![R::ZERO; t * w];
            for (step, row) in out.chunks_exact_mut(w).enumerate() {
                let (a, s) = (za.row(step), zs.row(step));
                row[0] = R::ONE;
                row[1..=ds].copy_from_slice(s);
                for (i, &av) in a.iter().enumerate() {
                    let r = &mut row[(i + 1) * (ds + 1)..(i + 2) * (ds + 1)];
                    r[0] = av;
                    for (o, &sv) in r[1..].iter_mut().zip(s) {
                        *o = av * sv;
                    }
                }
            }
            Ok(Tensor::new(vec![t, w], out)?)
        }
    }
}

/// Gradients of [`fuse`] with respect to `z_a` and `z_s`.
pub fn fuse_backward<R: Real>(
    za: &Tensor<R>,
    zs: &Tensor<R>,
    mode: FusionMode,
    grad: &Tensor<R>,
) -> Result<(Tensor<R>, Tensor<R>)> {
    check_lengths(za, zs)?;
    let (t, da, ds) = (za.rows(), za.cols(), zs.cols());
    let mut ga = vec![R::ZERO; t * da];
    let mut gs = vec![R::ZERO; t * ds];
    match mode {
        FusionMode::Concat => {
            for step in 0..t {
                let g = grad.row(step);
                ga[step * da..(step + 1) * da].copy_from_slice(&g[..da]);
                gs[step * ds..(step + 1) * ds].copy_from_slice(&g[da..]);
            }
        }
        FusionMode::Tensor => {
            for step in 0..t {
                let g = grad.row(step);
                let (a, s) = (za.row(step), zs.row(step));
                let ga_row = &mut ga[step * da..(step + 1) * da];
                let gs_row = &mut gs[step * ds..(step + 1) * ds];
                // row i = 0 contributes d/dz_s directly
                for (o, &v) in gs_row.iter_mut().zip(&g[1..=ds]) {
                    *o += v;
                }
                for i in 0..da {
                    let r = &g[(i + 1) * (ds + 1)..(i + 2) * (ds + 1)];
                    let mut acc = r[0];
                    for j in 0..ds {
                        acc += r[j + 1] * s[j];
                        gs_row[j] += r[j + 1] * a[i];
                    }
                    ga_row[i] = acc;
                }
            }
        }
    }
    Ok((Tensor::new(vec![t, da], ga)?, Tensor::new(vec![t, ds], gs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_layout() {
        let a = Tensor::<f32>::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let s = Tensor::<f32>::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(fuse(&a, &s, FusionMode::Concat).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn tensor_toy_matches_outer_product() {
        let (a1, a2, b1, b2) = (2.0f64, 3.0, 5.0, 7.0);
        let a = Tensor::from_rows(&[vec![a1, a2]]).unwrap();
        let s = Tensor::from_rows(&[vec![b1, b2]]).unwrap();
        let f = fuse(&a, &s, FusionMode::Tensor).unwrap();
        let ea = [1.0, a1, a2];
        let es = [1.0, b1, b2];
        let mut oracle = Vec::new();
        for x in ea {
            for y in es {
                oracle.push(x * y);
            }
        }
        assert_eq!(f.data(), &oracle[..]);
    }

    #[test]
    fn tensor_of_zeros_keeps_only_constant() {
        let z = Tensor::<f32>::zeros(&[3, 4]);
        let f = fuse(&z, &z, FusionMode::Tensor).unwrap();
        for row in f.data().chunks(25) {
            assert_eq!(row[0], 1.0);
            assert!(row[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tensor_subsumes_concat() {
        let a = Tensor::<f32>::from_rows(&[vec![0.3, -1.2, 4.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let s = Tensor::<f32>::from_rows(&[vec![0.5, 0.25], vec![-1.0, 9.0]]).unwrap();
        let c = fuse(&a, &s, FusionMode::Concat).unwrap();
        let t = fuse(&a, &s, FusionMode::Tensor).unwrap();
        let ds = 2;
        for step in 0..2 {
            let tr = t.row(step);
            let mut picked: Vec<f32> = (1..=3).map(|i| tr[i * (ds + 1)]).collect();
            picked.extend((1..=ds).map(|j| tr[j]));
            assert_eq!(picked, c.row(step));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let a = Tensor::<f64>::from_rows(&[vec![0.3, -1.2, 0.4], vec![0.1, 0.2, -0.3]]).unwrap();
        let s = Tensor::<f64>::from_rows(&[vec![0.5, 0.25], vec![-1.0, 0.9]]).unwrap();
        for mode in [FusionMode::Concat, FusionMode::Tensor] {
            let out = fuse(&a, &s, mode).unwrap();
            // loss = sum(out * weights) with fixed pseudo-random weights
            let wts: Vec<f64> = (0..out.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
            let g = Tensor::new(out.shape().to_vec(), wts.clone()).unwrap();
            let (ga, gs) = fuse_backward(&a, &s, mode, &g).unwrap();
            let loss = |a: &Tensor<f64>, s: &Tensor<f64>| -> f64 {
                fuse(a, s, mode).unwrap().data().iter().zip(&wts).map(|(x, w)| x * w).sum()
            };
            let h = 1e-6;
            for i in 0..a.len() {
                let (mut up, mut dn) = (a.clone(), a.clone());
                up.data_mut()[i] += h;
                dn.data_mut()[i] -= h;
                let num = (loss(&up, &s) - loss(&dn, &s)) / (2.0 * h);
                assert!((num - ga.data()[i]).abs() < 1e-6, "{mode:?} a[{i}]");
            }
            for i in 0..s.len() {
                let (mut up, mut dn) = (s.clone(), s.clone());
                up.data_mut()[i] += h;
                dn.data_mut()[i] -= h;
                let num = (loss(&a, &up) - loss(&a, &dn)) / (2.0 * h);
                assert!((num - gs.data()[i]).abs() < 1e-6, "{mode:?} s[{i}]");
            }
        }
    }
}
