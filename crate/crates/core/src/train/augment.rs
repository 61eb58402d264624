//! Modality permutation: shuffle the whole time axis of one input stream so
//! its frame statistics survive but its timing information does not.

use numcore::{Real, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

use super::Example;

/// Rows of `x` in a uniformly random order.
pub fn permute_rows<R: Real>(x: &Tensor<R>, rng: &mut impl Rng) -> Tensor<R> {
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.shuffle(rng);
    permute_rows_with(x, &idx)
}

/// Row `i` of the result is row `order[i]` of `x`.
pub fn permute_rows_with<R: Real>(x: &Tensor<R>, order: &[usize]) -> Tensor<R> {
    let mut data = Vec::with_capacity(x.len());
    for &i in order {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Which streams of an example were permuted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Permuted {
    pub audio: bool,
    pub text: bool,
}

/// Per example, independently permute audio with probability `p_a` and text
/// with probability `p_s`. Labels are never touched. Two uniform draws are
/// consumed per example, then one shuffle per permuted stream.
pub fn permute_augment<R: Real>(
    batch: &[&Example<R>],
    p_a: f64,
    p_s: f64,
    rng: &mut impl Rng,
) -> (Vec<Example<R>>, Vec<Permuted>) {
    let mut out = Vec::with_capacity(batch.len());
    let mut flags = Vec::with_capacity(batch.len());
    for ex in batch {
        let f = Permuted {
            audio: rng.random::<f64>() < p_a,
            text: rng.random::<f64>() < p_s,
        };
        out.push(Example {
            audio: if f.audio { permute_rows(&ex.audio, rng) } else { ex.audio.clone() },
            text: if f.text { permute_rows(&ex.text, rng) } else { ex.text.clone() },
            labels: ex.labels.clone(),
        });
        flags.push(f);
    }
    (out, flags)
}
