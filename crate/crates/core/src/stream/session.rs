use numcore::{conv1d_range, relu_inplace, softmax, ConvSource, Tensor};

use crate::error::{Error, Result};
use crate::model::{ConvBlock, MultiQt, Prediction};

/// Input rows of one conv layer that later outputs still need.
#[derive(Debug, Clone)]
struct LayerBuffer {
    rows: Vec<f32>,
    /// Absolute index of the first buffered row.
    first: usize,
    /// Rows received so far.
    end: usize,
    /// Outputs produced so far.
    produced: usize,
}

impl LayerBuffer {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            first: 0,
            end: 0,
            produced: 0,
        }
    }
}

/// One encoder run incrementally, layer by layer.
#[derive(Debug, Clone)]
struct EncoderStream {
    layers: Vec<LayerBuffer>,
    channels: usize,
    /// Encoder outputs not yet fused, starting at absolute step `out_first`.
    out: Vec<f32>,
    out_first: usize,
    out_channels: usize,
}

impl EncoderStream {
    fn new(blocks: &[ConvBlock<f32>], channels: usize) -> Self {
        Self {
            layers: blocks.iter().map(|_| LayerBuffer::new()).collect(),
            channels,
            out: Vec::new(),
            out_first: 0,
            out_channels: blocks.last().map_or(channels, |b| b.op.spec.out_channels),
        }
    }

    fn available(&self) -> usize {
        self.out_first + self.out.len() / self.out_channels.max(1)
    }

    /// Feed `rows` to the first layer and run every layer as far as its
    /// inputs allow. With `last` set, the sequence ends here and the missing
    /// right context reads as zeros.
    fn push(&mut self, blocks: &[ConvBlock<f32>], rows: &[f32], last: bool) {
        let mut incoming = rows.to_vec();
        let mut width = self.channels;
        for (buf, block) in self.layers.iter_mut().zip(blocks) {
            let spec = &block.op.spec;
            buf.rows.extend_from_slice(&incoming);
            buf.end += incoming.len() / width;
            let ready = if last { spec.output_len(buf.end) } else { spec.outputs_ready(buf.end) };
            let n = ready.saturating_sub(buf.produced);
            let cout = spec.out_channels;
            let mut y = vec![0.0f32; n * cout];
            if n > 0 {
                let src = ConvSource {
                    rows: &buf.rows,
                    first: buf.first,
                    end: buf.end,
                };
                conv1d_range(src, block.op.weight.data(), block.op.bias.data(), spec, buf.produced, ready, &mut y);
                block.bn.apply_infer_inplace(&mut y);
                relu_inplace(&mut y);
                buf.produced = ready;
            }
            // Rows before the next output's window are never read again.
            let keep_from = spec.window_start(buf.produced).max(0) as usize;
            if keep_from > buf.first {
                let drop = (keep_from - buf.first).min(buf.rows.len() / width);
                buf.rows.drain(..drop * width);
                buf.first += drop;
            }
            incoming = y;
            width = cout;
        }
        self.out.extend_from_slice(&incoming);
    }

    /// Remove and return encoder rows `[out_first, upto)`.
    fn take(&mut self, upto: usize) -> Tensor<f32> {
        let n = upto - self.out_first;
        let data: Vec<f32> = self.out.drain(..n * self.out_channels).collect();
        self.out_first = upto;
        Tensor::new(vec![n, self.out_channels], data).expect("encoder rows")
    }

    fn buffered_rows(&self) -> usize {
        self.layers.iter().map(|b| b.end - b.first).sum::<usize>()
            + self.out.len() / self.out_channels.max(1)
    }
}

/// Incremental inference over one call.
///
/// Chunks of audio (`[t_a, 40]`) and text (`[t_a/2, 29]`) go in; every output
/// step whose receptive field is complete comes out, equal to the offline
/// forward pass on the same call. Each step waits for the right half of its
/// receptive field, so output lags the input by about one second of audio.
#[derive(Debug, Clone)]
pub struct StreamSession<'m> {
    model: &'m MultiQt<f32>,
    audio: Option<EncoderStream>,
    text: Option<EncoderStream>,
    audio_frames: usize,
    emitted: usize,
    finalized: bool,
}

impl<'m> StreamSession<'m> {
    /// A fresh session: nothing buffered, nothing emitted. Left zero padding
    /// is implicit, since rows before frame 0 read as zero.
    pub fn open(model: &'m MultiQt<f32>) -> Self {
        let c = model.config();
        Self {
            model,
            audio: c
                .modality
                .uses_audio()
                .then(|| EncoderStream::new(&model.audio, c.audio_features)),
            text: c.modality.uses_text().then(|| EncoderStream::new(&model.text, c.text_features)),
            audio_frames: 0,
            emitted: 0,
            finalized: false,
        }
    }

    /// Audio frames received.
    pub fn audio_frames(&self) -> usize {
        self.audio_frames
    }

    /// Output steps emitted so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Audio and text feature widths the session expects.
    pub fn features(&self) -> (usize, usize) {
        let c = self.model.config();
        (c.audio_features, c.text_features)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Rows currently held across all layer buffers and pending encoder
    /// outputs. Bounded by the receptive fields plus one chunk, whatever the
    /// call length.
    pub fn buffered_rows(&self) -> usize {
        self.audio.iter().chain(&self.text).map(EncoderStream::buffered_rows).sum()
    }

    fn check_chunk(&self, a: &Tensor<f32>, s: &Tensor<f32>) -> Result<()> {
        if self.finalized {
            return Err(Error::Stream("push after finalize".into()));
        }
        if a.rank() != 2 || s.rank() != 2 {
            return Err(Error::Stream("chunks must be rank-2 [frames, features]".into()));
        }
        let c = self.model.config();
        if !a.rows().is_multiple_of(2) {
            return Err(Error::Stream(format!("audio chunk has an odd frame count {}", a.rows())));
        }
        if s.rows() * 2 != a.rows() {
            return Err(Error::Stream(format!(
                "text chunk has {} frames, expected half of {} audio frames",
                s.rows(),
                a.rows()
            )));
        }
        if c.modality.uses_audio() && a.rows() > 0 && a.cols() != c.audio_features {
            return Err(Error::Stream(format!(
                "audio chunk has {} features, model expects {}",
                a.cols(),
                c.audio_features
            )));
        }
        if c.modality.uses_text() && s.rows() > 0 && s.cols() != c.text_features {
            return Err(Error::Stream(format!(
                "text chunk has {} features, model expects {}",
                s.cols(),
                c.text_features
            )));
        }
        Ok(())
    }

    /// Feed the next chunk and return the newly emitted steps (possibly none).
    pub fn push_chunk(&mut self, a: &Tensor<f32>, s: &Tensor<f32>) -> Result<Prediction<f32>> {
        self.check_chunk(a, s)?;
        self.audio_frames += a.rows();
        self.advance(a, s, false)
    }

    /// End of call: zero-pad the right context and emit the remaining steps,
    /// so the total emitted is `floor(T_a / 8)`. Calling it again emits nothing.
    pub fn finalize(&mut self) -> Result<Prediction<f32>> {
        if self.finalized {
            return self.emit(self.emitted);
        }
        self.finalized = true;
        let (fa, fs) = self.features();
        let (empty_a, empty_s) = (Tensor::zeros(&[0, fa]), Tensor::zeros(&[0, fs]));
        self.advance(&empty_a, &empty_s, true)
    }

    fn advance(&mut self, a: &Tensor<f32>, s: &Tensor<f32>, last: bool) -> Result<Prediction<f32>> {
        let model = self.model;
        if let Some(enc) = &mut self.audio {
            enc.push(&model.audio, a.data(), last);
        }
        if let Some(enc) = &mut self.text {
            enc.push(&model.text, s.data(), last);
        }
        let ready = match (&self.audio, &self.text) {
            (Some(x), Some(y)) => x.available().min(y.available()),
            (Some(x), None) | (None, Some(x)) => x.available(),
            (None, None) => 0,
        };
        self.emit(ready)
    }

    fn emit(&mut self, upto: usize) -> Result<Prediction<f32>> {
        let k = self.model.classes();
        let n = upto - self.emitted;
        if n == 0 {
            return Ok(Prediction {
                probs: Tensor::zeros(&[0, k]),
                probs_bin: self.model.classifier.head_bin.as_ref().map(|_| Tensor::zeros(&[0, 2])),
            });
        }
        let za = self.audio.as_mut().map(|e| e.take(upto));
        let zs = self.text.as_mut().map(|e| e.take(upto));
        let z = self.model.fuse_parts(za.as_ref(), zs.as_ref())?;
        let (logits, bin) = self.model.heads(&z)?;
        self.emitted = upto;
        Ok(Prediction {
            probs: softmax(&logits),
            probs_bin: bin.map(|b| softmax(&b)),
        })
    }
}

/// Stream a whole call through a fresh session in chunks of `chunk_frames`
/// audio frames (rounded up to even) and concatenate everything emitted.
pub fn stream_call(
    model: &MultiQt<f32>,
    audio: &Tensor<f32>,
    text: &Tensor<f32>,
    chunk_frames: &[usize],
) -> Result<Prediction<f32>> {
    let mut session = StreamSession::open(model);
    let mut parts = Vec::new();
    let mut pos = 0;
    let mut sizes = chunk_frames.iter().copied().cycle();
    if chunk_frames.is_empty() {
        return Err(Error::Stream("no chunk sizes given".into()));
    }
    while pos < audio.rows() {
        let n = sizes.next().unwrap_or(2).max(2).next_multiple_of(2).min(audio.rows() - pos);
        let a = audio.slice_rows(pos, pos + n);
        let s = text.slice_rows(pos / 2, (pos + n) / 2);
        parts.push(session.push_chunk(&a, &s)?);
        pos += n;
    }
    parts.push(session.finalize()?);
    concat_predictions(&parts, model.classes())
}

pub fn concat_predictions(parts: &[Prediction<f32>], classes: usize) -> Result<Prediction<f32>> {
    let probs: Vec<Tensor<f32>> = parts.iter().map(|p| p.probs.clone()).collect();
    let probs = Tensor::concat_rows(&probs, classes)?;
    let bins: Option<Vec<Tensor<f32>>> = parts.iter().map(|p| p.probs_bin.clone()).collect();
    let probs_bin = match bins {
        Some(b) if !b.is_empty() => Some(Tensor::concat_rows(&b, 2)?),
        _ => None,
    };
    Ok(Prediction { probs, probs_bin })
}
