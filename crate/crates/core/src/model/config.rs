use numcore::ConvSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature width of one audio frame (log-mel surrogate, 100 frames/s).
pub const AUDIO_FEATURES: usize = 40;
/// Character posterior width: 26 letters, apostrophe, space, CTC blank.
pub const TEXT_FEATURES: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Text,
    Both,
}

impl Modality {
    pub fn uses_audio(self) -> bool {
        matches!(self, Modality::Audio | Modality::Both)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, Modality::Text | Modality::Both)
    }

    pub fn short(self) -> &'static str {
        match self {
            Modality::Audio => "A",
            Modality::Text => "T",
            Modality::Both => "A+T",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "text" => Ok(Modality::Text),
            "both" => Ok(Modality::Both),
            _ => Err(Error::Config(format!("unknown modality `{s}` (audio|text|both)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `[z_a; z_s]`
    Concat,
    /// Flattened outer product `[1 z_a] (x) [1 z_s]`.
    Tensor,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionMode::Concat),
            "tensor" => Ok(FusionMode::Tensor),
            _ => Err(Error::Config(format!("unknown fusion `{s}` (concat|tensor)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
}

impl ConvLayer {
    pub const fn new(kernel: usize, stride: usize, filters: usize) -> Self {
        Self { kernel, stride, filters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub audio_features: usize,
    pub text_features: usize,
    pub audio_layers: Vec<ConvLayer>,
    pub text_layers: Vec<ConvLayer>,
    pub modality: Modality,
    pub fusion: FusionMode,
    /// Hidden widths of the shared dense trunk.
    pub trunk: Vec<usize>,
    /// Output classes including class 0 = "None".
    pub classes: usize,
    /// Adds a binary any-positive head next to the K-class head.
    pub multitask: bool,
    pub conv_dropout: f64,
    pub trunk_dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// Full-size network: audio kernels 10/20/40 with 64/128/128 filters,
    /// text kernels 20/40 with 128/128 filters, all strides 2, trunk 3x256.
    pub fn full() -> Self {
        Self {
            audio_features: AUDIO_FEATURES,
            text_features: TEXT_FEATURES,
            audio_layers: vec![ConvLayer::new(10, 2, 64), ConvLayer::new(20, 2, 128), ConvLayer::new(40, 2, 128)],
            text_layers: vec![ConvLayer::new(20, 2, 128), ConvLayer::new(40, 2, 128)],
            modality: Modality::Both,
            fusion: FusionMode::Concat,
            trunk: vec![256, 256, 256],
            classes: 6,
            multitask: false,
            conv_dropout: 0.2,
            trunk_dropout: 0.4,
            bn_momentum: 0.99,
            bn_eps: 1e-5,
            init_seed: 0,
        }
    }

    /// Same kernels and strides with narrower layers, sized for CPU training
    /// experiments.
    pub fn desk() -> Self {
        Self {
            audio_layers: vec![ConvLayer::new(10, 2, 16), ConvLayer::new(20, 2, 32), ConvLayer::new(40, 2, 32)],
            text_layers: vec![ConvLayer::new(20, 2, 32), ConvLayer::new(40, 2, 32)],
            trunk: vec![64, 64, 64],
            conv_dropout: 0.1,
            trunk_dropout: 0.2,
            ..Self::full()
        }
    }

    /// Very small network for gradient checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            audio_features: AUDIO_FEATURES,
            text_features: TEXT_FEATURES,
            audio_layers: vec![ConvLayer::new(3, 2, 3), ConvLayer::new(4, 2, 4), ConvLayer::new(5, 2, 3)],
            text_layers: vec![ConvLayer::new(4, 2, 3), ConvLayer::new(5, 2, 3)],
            trunk: vec![5, 4],
            ..Self::full()
        }
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    pub fn with_fusion(mut self, fusion: FusionMode) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn with_multitask(mut self, multitask: bool) -> Self {
        self.multitask = multitask;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    fn specs(layers: &[ConvLayer], input: usize) -> Vec<ConvSpec> {
        let mut cin = input;
        layers
            .iter()
            .map(|l| {
                let s = ConvSpec::new(l.kernel, l.stride, cin, l.filters);
                cin = l.filters;
                s
            })
            .collect()
    }

    pub fn audio_specs(&self) -> Vec<ConvSpec> {
        Self::specs(&self.audio_layers, self.audio_features)
    }

    pub fn text_specs(&self) -> Vec<ConvSpec> {
        Self::specs(&self.text_layers, self.text_features)
    }

    pub fn audio_stride(&self) -> usize {
        self.audio_layers.iter().map(|l| l.stride).product()
    }

    pub fn text_stride(&self) -> usize {
        self.text_layers.iter().map(|l| l.stride).product()
    }

    /// `1 + sum_i (k_i - 1) * prod_{j<i} s_j`, in input frames.
    pub fn receptive_field(layers: &[ConvLayer]) -> usize {
        let mut rf = 1;
        let mut jump = 1;
        for l in layers {
            rf += (l.kernel - 1) * jump;
            jump *= l.stride;
        }
        rf
    }

    pub fn audio_receptive_field(&self) -> usize {
        Self::receptive_field(&self.audio_layers)
    }

    pub fn text_receptive_field(&self) -> usize {
        Self::receptive_field(&self.text_layers)
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_layers.last().map_or(0, |l| l.filters)
    }

    pub fn text_dim(&self) -> usize {
        self.text_layers.last().map_or(0, |l| l.filters)
    }

    /// Width of the fused representation fed to the trunk.
    pub fn fused_dim(&self) -> usize {
        match (self.modality, self.fusion) {
            (Modality::Audio, _) => self.audio_dim(),
            (Modality::Text, _) => self.text_dim(),
            (Modality::Both, FusionMode::Concat) => self.audio_dim() + self.text_dim(),
            (Modality::Both, FusionMode::Tensor) => (self.audio_dim() + 1) * (self.text_dim() + 1),
        }
    }

    /// Output length for an audio input of `audio_frames`.
    pub fn output_len(&self, audio_frames: usize) -> usize {
        self.audio_specs().iter().fold(audio_frames, |t, s| s.output_len(t))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.modality.uses_audio() && self.audio_layers.is_empty() {
            return bad("audio encoder needs at least one layer".into());
        }
        if self.modality.uses_text() && self.text_layers.is_empty() {
            return bad("text encoder needs at least one layer".into());
        }
        for l in self.audio_layers.iter().chain(&self.text_layers) {
            if l.kernel == 0 || l.stride == 0 || l.filters == 0 {
                return bad(format!("invalid conv layer {l:?}"));
            }
        }
        // T_a = 2 T_s: the text encoder must downsample half as much as audio.
        if self.audio_stride() != 2 * self.text_stride() {
            return bad(format!(
                "audio stride {} must be twice text stride {}",
                self.audio_stride(),
                self.text_stride()
            ));
        }
        for (name, r) in [("conv_dropout", self.conv_dropout), ("trunk_dropout", self.trunk_dropout)] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} must be in [0, 1), got {r}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_strides_and_receptive_fields() {
        let c = ModelConfig::full();
        assert_eq!(c.audio_stride(), 8);
        assert_eq!(c.text_stride(), 4);
        assert_eq!(c.audio_receptive_field(), 204);
        assert_eq!(c.text_receptive_field(), 98);
        assert_eq!(c.output_len(1600), 200);
        c.validate().unwrap();
    }

    #[test]
    fn fused_dims() {
        let c = ModelConfig::full();
        assert_eq!(c.fused_dim(), 256);
        assert_eq!(c.clone().with_fusion(FusionMode::Tensor).fused_dim(), 129 * 129);
        assert_eq!(c.clone().with_modality(Modality::Audio).fused_dim(), 128);
    }

    #[test]
    fn stride_mismatch_rejected() {
        let mut c = ModelConfig::full();
        c.text_layers[0].stride = 1;
        assert!(c.validate().is_err());
    }
}
