//! The full network: per-modality conv encoders, fusion, dense trunk and heads.

use numcore::{softmax, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FusionMode, Modality, ModelConfig};
use super::fusion::{fuse, fuse_backward};
use super::layers::{Block, BlockTape, Classifier, ClassifierTape, ConvBlock, ConvOp, HeadOutputs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiQt<R: Real = f32> {
    config: ModelConfig,
    /// Empty when the modality does not use audio.
    pub audio: Vec<ConvBlock<R>>,
    /// Empty when the modality does not use text.
    pub text: Vec<ConvBlock<R>>,
    pub classifier: Classifier<R>,
}

/// Softmax outputs for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<R: Real = f32> {
    /// `[T_m, K]`
    pub probs: Tensor<R>,
    /// `[T_m, 2]` when the model has a binary head.
    pub probs_bin: Option<Tensor<R>>,
}

impl<R: Real> Prediction<R> {
    /// Most probable class per step; ties go to the lowest class id.
    pub fn labels(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

/// Activations saved by [`MultiQt::forward_batch`].
pub struct BatchTape<R: Real> {
    audio: Vec<BlockTape<R>>,
    text: Vec<BlockTape<R>>,
    za: Vec<Tensor<R>>,
    zs: Vec<Tensor<R>>,
    classifier: ClassifierTape<R>,
}

fn init_encoder<R: Real>(specs: Vec<numcore::ConvSpec>, cfg: &ModelConfig, rng: &mut impl Rng) -> Vec<ConvBlock<R>> {
    specs
        .into_iter()
        .map(|s| Block::new(ConvOp::init(s, rng), cfg.bn_momentum, cfg.bn_eps))
        .collect()
}

impl<R: Real> MultiQt<R> {
    /// Freshly initialized network, seeded by `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        // Both encoders are always drawn so that a unimodal model shares the
        // initial weights of the corresponding half of the bimodal one.
        let audio = init_encoder(config.audio_specs(), &config, &mut rng);
        let text = init_encoder(config.text_specs(), &config, &mut rng);
        let classifier = Classifier::init(
            config.fused_dim(),
            &config.trunk,
            config.classes,
            config.multitask,
            config.trunk_dropout,
            config.bn_momentum,
            config.bn_eps,
            &mut rng,
        );
        Ok(Self {
            audio: if config.modality.uses_audio() { audio } else { Vec::new() },
            text: if config.modality.uses_text() { text } else { Vec::new() },
            classifier,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// Output length, checking the `T_a = 2 T_s` contract.
    pub fn check_inputs(&self, x_a: &Tensor<R>, x_s: &Tensor<R>) -> Result<usize> {
        let c = &self.config;
        x_a.expect_rank("forward", 2)?;
        x_s.expect_rank("forward", 2)?;
        if c.modality.uses_audio() && x_a.cols() != c.audio_features {
            return Err(Error::Input(format!(
                "audio has {} features, model expects {}",
                x_a.cols(),
                c.audio_features
            )));
        }
        if c.modality.uses_text() && x_s.cols() != c.text_features {
            return Err(Error::Input(format!(
                "text has {} features, model expects {}",
                x_s.cols(),
                c.text_features
            )));
        }
        if x_a.rows() != 2 * x_s.rows() {
            return Err(Error::Input(format!(
                "audio length {} must be twice text length {}",
                x_a.rows(),
                x_s.rows()
            )));
        }
        let t_m = x_a.rows() / c.audio_stride();
        if t_m == 0 {
            return Err(Error::Input(format!(
                "audio length {} is shorter than the total stride {}",
                x_a.rows(),
                c.audio_stride()
            )));
        }
        Ok(t_m)
    }

    fn encode(blocks: &[ConvBlock<R>], x: &Tensor<R>) -> Result<Tensor<R>> {
        let mut h = x.clone();
        for b in blocks {
            h = b.forward_infer(&h)?;
        }
        Ok(h)
    }

    /// `z_a`: `[T_a/8, d_a]` (inference mode).
    pub fn encode_audio(&self, x_a: &Tensor<R>) -> Result<Tensor<R>> {
        if self.audio.is_empty() {
            return Err(Error::Input("model has no audio encoder".into()));
        }
        Self::encode(&self.audio, x_a)
    }

    /// `z_s`: `[T_s/4, d_s]` (inference mode).
    pub fn encode_text(&self, x_s: &Tensor<R>) -> Result<Tensor<R>> {
        if self.text.is_empty() {
            return Err(Error::Input("model has no text encoder".into()));
        }
        Self::encode(&self.text, x_s)
    }

    /// `z_m` from the encoder outputs present for this modality.
    pub fn fuse_parts(&self, za: Option<&Tensor<R>>, zs: Option<&Tensor<R>>) -> Result<Tensor<R>> {
        match (self.config.modality, za, zs) {
            (Modality::Audio, Some(a), _) => Ok(a.clone()),
            (Modality::Text, _, Some(s)) => Ok(s.clone()),
            (Modality::Both, Some(a), Some(s)) => fuse(a, s, self.config.fusion),
            _ => Err(Error::Input("encoder output missing for fusion".into())),
        }
    }

    /// Logits of the heads for a fused representation.
    pub fn heads(&self, z_m: &Tensor<R>) -> Result<HeadOutputs<R>> {
        self.classifier.forward_infer(z_m)
    }

    /// Raw logits in inference mode.
    pub fn logits(&self, x_a: &Tensor<R>, x_s: &Tensor<R>) -> Result<HeadOutputs<R>> {
        self.check_inputs(x_a, x_s)?;
        let za = if self.audio.is_empty() { None } else { Some(self.encode_audio(x_a)?) };
        let zs = if self.text.is_empty() { None } else { Some(self.encode_text(x_s)?) };
        let z = self.fuse_parts(za.as_ref(), zs.as_ref())?;
        self.heads(&z)
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x_a: &Tensor<R>, x_s: &Tensor<R>) -> Result<Prediction<R>> {
        let (logits, bin) = self.logits(x_a, x_s)?;
        Ok(Prediction {
            probs: softmax(&logits),
            probs_bin: bin.map(|b| softmax(&b)),
        })
    }

    /// Training-mode forward over a batch of whole calls. Batch statistics are
    /// pooled over every step of every call; dropout draws from `rng` in a
    /// fixed order. Running statistics are not touched (see
    /// [`MultiQt::update_running`]).
    pub fn forward_batch(
        &self,
        inputs: &[(&Tensor<R>, &Tensor<R>)],
        rng: &mut impl Rng,
    ) -> Result<(Vec<HeadOutputs<R>>, BatchTape<R>)> {
        if inputs.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        for (a, s) in inputs {
            self.check_inputs(a, s)?;
        }
        let mut audio = Vec::new();
        let mut h: Vec<Tensor<R>> = inputs.iter().map(|(a, _)| (*a).clone()).collect();
        if self.audio.is_empty() {
            h.clear();
        }
        for b in &self.audio {
            let (out, tape) = b.forward_train(h, self.config.conv_dropout, rng)?;
            audio.push(tape);
            h = out;
        }
        let za = h;
        let mut text = Vec::new();
        let mut h: Vec<Tensor<R>> = inputs.iter().map(|(_, s)| (*s).clone()).collect();
        if self.text.is_empty() {
            h.clear();
        }
        for b in &self.text {
            let (out, tape) = b.forward_train(h, self.config.conv_dropout, rng)?;
            text.push(tape);
            h = out;
        }
        let zs = h;
        let fused = (0..inputs.len())
            .map(|e| self.fuse_parts(za.get(e), zs.get(e)))
            .collect::<Result<Vec<_>>>()?;
        let (outs, classifier) = self.classifier.forward_train(fused, rng)?;
        Ok((
            outs,
            BatchTape {
                audio,
                text,
                za,
                zs,
                classifier,
            },
        ))
    }

    /// Parameter gradients given `d loss / d logits` (and binary logits) per
    /// call, in [`MultiQt::trainable`] order.
    pub fn backward_batch(&self, tape: &BatchTape<R>, grads: &[(Tensor<R>, Option<Tensor<R>>)]) -> Result<Vec<Tensor<R>>> {
        let (g_fused, cls_grads) = self.classifier.backward(&tape.classifier, grads, true)?;
        let (mut ga, mut gs) = (Vec::new(), Vec::new());
        for (e, g) in g_fused.into_iter().enumerate() {
            match self.config.modality {
                Modality::Audio => ga.push(g),
                Modality::Text => gs.push(g),
                Modality::Both => {
                    let (a, s) = fuse_backward(&tape.za[e], &tape.zs[e], self.config.fusion, &g)?;
                    ga.push(a);
                    gs.push(s);
                }
            }
        }
        let mut out = Vec::new();
        out.extend(Self::encoder_backward(&self.audio, &tape.audio, ga)?);
        out.extend(Self::encoder_backward(&self.text, &tape.text, gs)?);
        cls_grads.push_into(&mut out);
        Ok(out)
    }

    fn encoder_backward(blocks: &[ConvBlock<R>], tapes: &[BlockTape<R>], grads: Vec<Tensor<R>>) -> Result<Vec<Tensor<R>>> {
        let mut per_block = Vec::with_capacity(blocks.len());
        let mut g = grads;
        for (i, (b, t)) in blocks.iter().zip(tapes).enumerate().rev() {
            let (dx, bg) = b.backward(t, g, i > 0)?;
            per_block.push(bg);
            g = dx;
        }
        let mut out = Vec::new();
        for bg in per_block.into_iter().rev() {
            bg.push_into(&mut out);
        }
        Ok(out)
    }

    /// Fold the batch statistics of a training step into the running averages.
    pub fn update_running(&mut self, tape: &BatchTape<R>) {
        for (b, t) in self.audio.iter_mut().zip(&tape.audio) {
            b.bn.update_running(&t.stats);
        }
        for (b, t) in self.text.iter_mut().zip(&tape.text) {
            b.bn.update_running(&t.stats);
        }
        self.classifier.update_running(&tape.classifier);
    }

    /// Every named tensor with a flag telling whether it is trainable.
    pub fn params<'a>(&'a self) -> Vec<(String, &'a Tensor<R>, bool)> {
        let mut out = Vec::new();
        let mut f = |n: String, t: &'a Tensor<R>, tr: bool| out.push((n, t, tr));
        let f: &mut dyn FnMut(String, &'a Tensor<R>, bool) = &mut f;
        for (i, b) in self.audio.iter().enumerate() {
            b.visit(&format!("audio.{i}"), f);
        }
        for (i, b) in self.text.iter().enumerate() {
            b.visit(&format!("text.{i}"), f);
        }
        self.classifier.visit("", f);
        out
    }

    pub fn params_mut<'a>(&'a mut self) -> Vec<(String, &'a mut Tensor<R>, bool)> {
        let mut out = Vec::new();
        let mut f = |n: String, t: &'a mut Tensor<R>, tr: bool| out.push((n, t, tr));
        let f: &mut dyn FnMut(String, &'a mut Tensor<R>, bool) = &mut f;
        for (i, b) in self.audio.iter_mut().enumerate() {
            b.visit_mut(&format!("audio.{i}"), f);
        }
        for (i, b) in self.text.iter_mut().enumerate() {
            b.visit_mut(&format!("text.{i}"), f);
        }
        self.classifier.visit_mut("", f);
        out
    }

    /// Trainable tensors, in the order [`MultiQt::backward_batch`] returns gradients.
    pub fn trainable(&self) -> Vec<&Tensor<R>> {
        self.params().into_iter().filter(|p| p.2).map(|p| p.1).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<R>> {
        self.params_mut().into_iter().filter(|p| p.2).map(|p| p.1).collect()
    }

    /// Trainable values concatenated in [`MultiQt::trainable`] order.
    pub fn flat_trainable(&self) -> Vec<f64> {
        self.trainable().iter().flat_map(|t| t.data().iter().map(|v| v.to_f64())).collect()
    }

    /// Inverse of [`MultiQt::flat_trainable`].
    pub fn set_flat_trainable(&mut self, values: &[f64]) -> Result<()> {
        let n = self.num_trainable();
        if values.len() != n {
            return Err(Error::Input(format!("expected {n} values, got {}", values.len())));
        }
        let mut it = values.iter();
        for t in self.trainable_mut() {
            for v in t.data_mut() {
                *v = R::from_f64(*it.next().expect("length checked"));
            }
        }
        Ok(())
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Same network in another precision.
    pub fn cast<S: Real>(&self) -> MultiQt<S> {
        let mut out = MultiQt::<S>::new(self.config.clone()).expect("config already validated");
        for ((_, dst, _), (_, src, _)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    /// Check every parameter is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t, _) in self.params() {
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    /// Fusion mode actually in effect (unimodal models have none).
    pub fn fusion(&self) -> Option<FusionMode> {
        (self.config.modality == Modality::Both).then_some(self.config.fusion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn output_shapes_and_distributions() {
        for modality in [Modality::Audio, Modality::Text, Modality::Both] {
            let m = MultiQt::<f32>::new(ModelConfig::tiny().with_modality(modality).with_multitask(true)).unwrap();
            let p = m.forward(&random(64, 40, 1), &random(32, 29, 2)).unwrap();
            assert_eq!(p.probs.shape(), &[8, 6]);
            assert_eq!(p.probs_bin.as_ref().unwrap().shape(), &[8, 2]);
            for row in p.probs.data().chunks(6) {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn length_mismatch_cites_both_lengths() {
        let m = MultiQt::<f32>::new(ModelConfig::tiny()).unwrap();
        let e = m.forward(&random(64, 40, 1), &random(30, 29, 2)).unwrap_err().to_string();
        assert!(e.contains("64") && e.contains("30"), "{e}");
    }

    #[test]
    fn unimodal_is_restriction_of_bimodal() {
        let both = MultiQt::<f32>::new(ModelConfig::tiny()).unwrap();
        let audio = MultiQt::<f32>::new(ModelConfig::tiny().with_modality(Modality::Audio)).unwrap();
        let x = random(64, 40, 3);
        assert_eq!(both.encode_audio(&x).unwrap(), audio.encode_audio(&x).unwrap());
    }

    #[test]
    fn param_names_and_shapes() {
        let m = MultiQt::<f32>::new(ModelConfig::full().with_multitask(true)).unwrap();
        let p = m.params();
        assert_eq!(p[0].0, "audio.0.weight");
        assert_eq!(p[0].1.shape(), &[10, 40, 64]);
        assert!(p.iter().any(|(n, t, _)| n == "text.1.weight" && t.shape() == [40, 128, 128]));
        assert!(p.iter().any(|(n, t, _)| n == "trunk.0.weight" && t.shape() == [256, 256]));
        assert!(p.iter().any(|(n, t, _)| n == "head_bin.weight" && t.shape() == [256, 2]));
        let t = MultiQt::<f32>::new(ModelConfig::full().with_fusion(FusionMode::Tensor)).unwrap();
        assert!(t.params().iter().any(|(n, t, _)| n == "trunk.0.weight" && t.shape() == [16641, 256]));
    }

    #[test]
    fn zero_input_gives_zero_pre_bn_activations() {
        let m = MultiQt::<f32>::new(ModelConfig::tiny()).unwrap();
        let z = Tensor::<f32>::zeros(&[64, 40]);
        // biases start at zero, so the first conv output is exactly zero
        use crate::model::layers::LinearOp;
        let pre = m.audio[0].op.apply(&z).unwrap();
        assert!(pre.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn text_permutation_changes_output_deterministically() {
        let m = MultiQt::<f32>::new(ModelConfig::tiny()).unwrap();
        let a = random(64, 40, 5);
        let s = random(32, 29, 6);
        let mut perm: Vec<usize> = (0..32).collect();
        perm.reverse();
        let permute = |s: &Tensor<f32>| {
            let rows: Vec<Vec<f32>> = perm.iter().map(|&i| s.row(i).to_vec()).collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let base = m.forward(&a, &s).unwrap();
        let p1 = m.forward(&a, &permute(&s)).unwrap();
        let p2 = m.forward(&a, &permute(&s)).unwrap();
        assert_ne!(base.probs, p1.probs);
        assert_eq!(p1.probs, p2.probs);
    }
}
