use numcore::{grad_check, GradCheckReport, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ModelConfig, MultiQt};
use crate::train::{batch_gradients, Example, TrainConfig};

fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape")
}

/// Compare the analytic gradient of the full training objective (multitask
/// mix, l2, batch norm in training mode, dropout with replayed masks)
/// against central differences in f64, on a batch of random calls.
pub fn model_gradient_check(
    config: &ModelConfig,
    train: &TrainConfig,
    audio_lengths: &[usize],
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MultiQt::<f64>::new(config.clone().with_seed(seed))?;
    // Perturb batch-norm scales and biases away from their initial values so
    // their gradients are exercised in a generic position.
    for (name, t, _) in model.params_mut() {
        if name.ends_with("gamma") || name.ends_with("bias") || name.ends_with("beta") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    let examples: Vec<Example<f64>> = audio_lengths
        .iter()
        .map(|&ta| {
            let t_m = ta / config.audio_stride();
            Example {
                audio: random_tensor(ta, config.audio_features, &mut rng),
                text: random_tensor(ta / 2, config.text_features, &mut rng),
                labels: (0..t_m).map(|_| rng.random_range(0..config.classes)).collect(),
            }
        })
        .collect();
    let batch: Vec<&Example<f64>> = examples.iter().collect();
    let dropout_seed: u64 = rng.random();
    let (g, _) = batch_gradients(&model, &batch, train, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
    let analytic: Vec<f64> = g.grads.iter().flat_map(|t| t.data().to_vec()).collect();
    let theta = model.flat_trainable();
    let mut probe = model.clone();
    let report = grad_check(
        |x| {
            probe.set_flat_trainable(x).expect("length");
            batch_gradients(&probe, &batch, train, &mut ChaCha8Rng::seed_from_u64(dropout_seed))
                .expect("forward")
                .0
                .objective
        },
        &theta,
        &analytic,
        None,
        1e-5,
    );
    Ok(report)
}
