//! Building blocks: a linear op (conv or dense) followed by batch norm,
//! ReLU and dropout, plus the dense classifier used as trunk and head.

use numcore::{
    conv1d, conv1d_backward, dense, dense_backward, dropout, relu_backward, relu_inplace, BatchNormState,
    BatchStats, BnCache, ConvSpec, DropoutMask, Real, Tensor,
};
use rand::Rng;

use crate::error::Result;

/// Pre-normalization linear map of a block.
pub trait LinearOp<R: Real> {
    fn apply(&self, x: &Tensor<R>) -> Result<Tensor<R>>;
    /// `(input grad, weight grad, bias grad)`.
    fn backward(&self, x: &Tensor<R>, grad: &Tensor<R>, need_input: bool) -> Result<(Option<Tensor<R>>, Tensor<R>, Tensor<R>)>;
    fn weight(&self) -> &Tensor<R>;
    fn bias(&self) -> &Tensor<R>;
    /// `(weight, bias)`
    fn params_mut(&mut self) -> (&mut Tensor<R>, &mut Tensor<R>);
    fn out_features(&self) -> usize;
}

fn uniform<R: Real>(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Tensor<R> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| R::from_f64(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvOp<R: Real> {
    pub spec: ConvSpec,
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
}

impl<R: Real> ConvOp<R> {
    pub fn init(spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let fan_in = (spec.kernel * spec.in_channels) as f64;
        Self {
            spec,
            weight: uniform(&spec.weight_shape(), (6.0 / fan_in).sqrt(), rng),
            bias: Tensor::zeros(&[spec.out_channels]),
        }
    }
}

impl<R: Real> LinearOp<R> for ConvOp<R> {
    fn apply(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        Ok(conv1d(x, &self.weight, &self.bias, &self.spec)?)
    }

    fn backward(&self, x: &Tensor<R>, grad: &Tensor<R>, need_input: bool) -> Result<(Option<Tensor<R>>, Tensor<R>, Tensor<R>)> {
        let g = conv1d_backward(x, &self.weight, &self.spec, grad, need_input)?;
        Ok((need_input.then_some(g.input), g.weight, g.bias))
    }

    fn weight(&self) -> &Tensor<R> {
        &self.weight
    }
    fn bias(&self) -> &Tensor<R> {
        &self.bias
    }
    fn params_mut(&mut self) -> (&mut Tensor<R>, &mut Tensor<R>) {
        (&mut self.weight, &mut self.bias)
    }
    fn out_features(&self) -> usize {
        self.spec.out_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOp<R: Real> {
    /// `[in, out]`
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
}

impl<R: Real> DenseOp<R> {
    pub fn init(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: uniform(&[inputs, outputs], (gain / inputs as f64).sqrt(), rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }
}

impl<R: Real> LinearOp<R> for DenseOp<R> {
    fn apply(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        Ok(dense(x, &self.weight, &self.bias)?)
    }

    fn backward(&self, x: &Tensor<R>, grad: &Tensor<R>, need_input: bool) -> Result<(Option<Tensor<R>>, Tensor<R>, Tensor<R>)> {
        let g = dense_backward(x, &self.weight, grad, need_input)?;
        Ok((g.input, g.weight, g.bias))
    }

    fn weight(&self) -> &Tensor<R> {
        &self.weight
    }
    fn bias(&self) -> &Tensor<R> {
        &self.bias
    }
    fn params_mut(&mut self) -> (&mut Tensor<R>, &mut Tensor<R>) {
        (&mut self.weight, &mut self.bias)
    }
    fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// linear -> batch norm -> ReLU -> dropout
#[derive(Debug, Clone, PartialEq)]
pub struct Block<R: Real, L> {
    pub op: L,
    pub bn: BatchNormState<R>,
}

pub type ConvBlock<R> = Block<R, ConvOp<R>>;
pub type HiddenBlock<R> = Block<R, DenseOp<R>>;

#[derive(Debug, Clone)]
pub struct BlockGrads<R: Real> {
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
    pub gamma: Tensor<R>,
    pub beta: Tensor<R>,
}

impl<R: Real> BlockGrads<R> {
    pub(crate) fn push_into(self, out: &mut Vec<Tensor<R>>) {
        out.extend([self.weight, self.bias, self.gamma, self.beta]);
    }
}

pub(crate) struct BlockTape<R: Real> {
    inputs: Vec<Tensor<R>>,
    /// Post-ReLU, pre-dropout activations.
    activ: Vec<Tensor<R>>,
    masks: Vec<Option<DropoutMask<R>>>,
    bn: BnCache<R>,
    pub(crate) stats: BatchStats,
}

impl<R: Real, L: LinearOp<R>> Block<R, L> {
    pub fn new(op: L, momentum: f64, eps: f64) -> Self {
        let mut bn = BatchNormState::new(op.out_features());
        bn.momentum = momentum;
        bn.eps = eps;
        Self { op, bn }
    }

    /// Inference: frozen batch-norm statistics, no dropout.
    pub fn forward_infer(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let mut y = self.op.apply(x)?;
        self.bn.apply_infer_inplace(y.data_mut());
        relu_inplace(y.data_mut());
        Ok(y)
    }

    pub(crate) fn forward_train(
        &self,
        xs: Vec<Tensor<R>>,
        rate: f64,
        rng: &mut impl Rng,
    ) -> Result<(Vec<Tensor<R>>, BlockTape<R>)> {
        let pre: Vec<Tensor<R>> = xs.iter().map(|x| self.op.apply(x)).collect::<Result<_>>()?;
        let refs: Vec<&Tensor<R>> = pre.iter().collect();
        let (mut activ, bn, stats) = self.bn.forward_train(&refs)?;
        let mut outs = Vec::with_capacity(activ.len());
        let mut masks = Vec::with_capacity(activ.len());
        for a in activ.iter_mut() {
            relu_inplace(a.data_mut());
            let (y, m) = dropout(a, rate, true, rng)?;
            outs.push(y);
            masks.push(m);
        }
        Ok((
            outs,
            BlockTape {
                inputs: xs,
                activ,
                masks,
                bn,
                stats,
            },
        ))
    }

    pub(crate) fn backward(
        &self,
        tape: &BlockTape<R>,
        grads: Vec<Tensor<R>>,
        need_input: bool,
    ) -> Result<(Vec<Tensor<R>>, BlockGrads<R>)> {
        let mut post = Vec::with_capacity(grads.len());
        for ((mut g, m), a) in grads.into_iter().zip(&tape.masks).zip(&tape.activ) {
            if let Some(m) = m {
                m.apply(&mut g);
            }
            post.push(relu_backward(a, &g));
        }
        let refs: Vec<&Tensor<R>> = post.iter().collect();
        let (pre_grads, gamma, beta) = self.bn.backward(&tape.bn, &refs)?;
        let mut dw = Tensor::zeros(self.op.weight().shape());
        let mut db = Tensor::zeros(self.op.bias().shape());
        let mut dxs = Vec::new();
        for (x, g) in tape.inputs.iter().zip(&pre_grads) {
            let (dx, w, b) = self.op.backward(x, g, need_input)?;
            add_assign(&mut dw, &w);
            add_assign(&mut db, &b);
            if let Some(dx) = dx {
                dxs.push(dx);
            }
        }
        Ok((
            dxs,
            BlockGrads {
                weight: dw,
                bias: db,
                gamma,
                beta,
            },
        ))
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<R>, bool)) {
        f(format!("{prefix}.weight"), self.op.weight(), true);
        f(format!("{prefix}.bias"), self.op.bias(), true);
        f(format!("{prefix}.bn.gamma"), &self.bn.gamma, true);
        f(format!("{prefix}.bn.beta"), &self.bn.beta, true);
        f(format!("{prefix}.bn.running_mean"), &self.bn.running_mean, false);
        f(format!("{prefix}.bn.running_var"), &self.bn.running_var, false);
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<R>, bool)) {
        let Block { op, bn } = self;
        let (w, b) = op.params_mut();
        f(format!("{prefix}.weight"), w, true);
        f(format!("{prefix}.bias"), b, true);
        f(format!("{prefix}.bn.gamma"), &mut bn.gamma, true);
        f(format!("{prefix}.bn.beta"), &mut bn.beta, true);
        f(format!("{prefix}.bn.running_mean"), &mut bn.running_mean, false);
        f(format!("{prefix}.bn.running_var"), &mut bn.running_var, false);
    }
}

pub(crate) fn add_assign<R: Real>(acc: &mut Tensor<R>, x: &Tensor<R>) {
    for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
        *a += *b;
    }
}

/// Dense trunk `g` followed by the softmax head `h` (and optionally a
/// binary head on the same trunk output).
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<R: Real> {
    pub hidden: Vec<HiddenBlock<R>>,
    pub head: DenseOp<R>,
    pub head_bin: Option<DenseOp<R>>,
    pub dropout: f64,
}

pub(crate) struct ClassifierTape<R: Real> {
    pub(crate) hidden: Vec<BlockTape<R>>,
    trunk_out: Vec<Tensor<R>>,
}

#[derive(Debug, Clone)]
pub struct ClassifierGrads<R: Real> {
    pub hidden: Vec<BlockGrads<R>>,
    pub head: (Tensor<R>, Tensor<R>),
    pub head_bin: Option<(Tensor<R>, Tensor<R>)>,
}

impl<R: Real> ClassifierGrads<R> {
    pub(crate) fn push_into(self, out: &mut Vec<Tensor<R>>) {
        for h in self.hidden {
            h.push_into(out);
        }
        out.extend([self.head.0, self.head.1]);
        if let Some((w, b)) = self.head_bin {
            out.extend([w, b]);
        }
    }
}

/// Logits of both heads for one sequence.
pub type HeadOutputs<R> = (Tensor<R>, Option<Tensor<R>>);

impl<R: Real> Classifier<R> {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        binary_head: bool,
        dropout: f64,
        momentum: f64,
        eps: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut width = inputs;
        let hidden = hidden
            .iter()
            .map(|&h| {
                let b = Block::new(DenseOp::init(width, h, 6.0, rng), momentum, eps);
                width = h;
                b
            })
            .collect();
        let head = DenseOp::init(width, classes, 3.0, rng);
        let head_bin = binary_head.then(|| DenseOp::init(width, 2, 3.0, rng));
        Self {
            hidden,
            head,
            head_bin,
            dropout,
        }
    }

    pub fn forward_infer(&self, x: &Tensor<R>) -> Result<HeadOutputs<R>> {
        let mut h = x.clone();
        for b in &self.hidden {
            h = b.forward_infer(&h)?;
        }
        let logits = self.head.apply(&h)?;
        let bin = match &self.head_bin {
            Some(hb) => Some(hb.apply(&h)?),
            None => None,
        };
        Ok((logits, bin))
    }

    pub(crate) fn forward_train(
        &self,
        xs: Vec<Tensor<R>>,
        rng: &mut impl Rng,
    ) -> Result<(Vec<HeadOutputs<R>>, ClassifierTape<R>)> {
        let mut h = xs;
        let mut tapes = Vec::with_capacity(self.hidden.len());
        for b in &self.hidden {
            let (out, tape) = b.forward_train(h, self.dropout, rng)?;
            tapes.push(tape);
            h = out;
        }
        let mut outs = Vec::with_capacity(h.len());
        for x in &h {
            let logits = self.head.apply(x)?;
            let bin = match &self.head_bin {
                Some(hb) => Some(hb.apply(x)?),
                None => None,
            };
            outs.push((logits, bin));
        }
        Ok((
            outs,
            ClassifierTape {
                hidden: tapes,
                trunk_out: h,
            },
        ))
    }

    /// `grads[e] = (d loss / d logits, d loss / d binary logits)` per sequence.
    pub(crate) fn backward(
        &self,
        tape: &ClassifierTape<R>,
        grads: &[(Tensor<R>, Option<Tensor<R>>)],
        need_input: bool,
    ) -> Result<(Vec<Tensor<R>>, ClassifierGrads<R>)> {
        let mut hw = Tensor::zeros(self.head.weight.shape());
        let mut hb = Tensor::zeros(self.head.bias.shape());
        let mut bin_acc = self
            .head_bin
            .as_ref()
            .map(|h| (Tensor::zeros(h.weight.shape()), Tensor::zeros(h.bias.shape())));
        let mut g_trunk = Vec::with_capacity(grads.len());
        for (x, (gl, gb)) in tape.trunk_out.iter().zip(grads) {
            let (dx, w, b) = self.head.backward(x, gl, true)?;
            add_assign(&mut hw, &w);
            add_assign(&mut hb, &b);
            let mut dx = dx.expect("input grad requested");
            if let (Some(head_bin), Some(gb), Some((aw, ab))) = (&self.head_bin, gb, bin_acc.as_mut()) {
                let (dx2, w2, b2) = head_bin.backward(x, gb, true)?;
                add_assign(aw, &w2);
                add_assign(ab, &b2);
                add_assign(&mut dx, &dx2.expect("input grad requested"));
            }
            g_trunk.push(dx);
        }
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        let mut g = g_trunk;
        for (i, (b, t)) in self.hidden.iter().zip(&tape.hidden).enumerate().rev() {
            let (dx, bg) = b.backward(t, g, need_input || i > 0)?;
            hidden_grads.push(bg);
            g = dx;
        }
        hidden_grads.reverse();
        Ok((
            g,
            ClassifierGrads {
                hidden: hidden_grads,
                head: (hw, hb),
                head_bin: bin_acc,
            },
        ))
    }

    pub(crate) fn update_running(&mut self, tape: &ClassifierTape<R>) {
        for (b, t) in self.hidden.iter_mut().zip(&tape.hidden) {
            b.bn.update_running(&t.stats);
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<R>, bool)) {
        for (i, b) in self.hidden.iter().enumerate() {
            b.visit(&format!("{prefix}trunk.{i}"), f);
        }
        f(format!("{prefix}head.weight"), &self.head.weight, true);
        f(format!("{prefix}head.bias"), &self.head.bias, true);
        if let Some(hb) = &self.head_bin {
            f(format!("{prefix}head_bin.weight"), &hb.weight, true);
            f(format!("{prefix}head_bin.bias"), &hb.bias, true);
        }
    }

    pub(crate) fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<R>, bool)) {
        for (i, b) in self.hidden.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}trunk.{i}"), f);
        }
        f(format!("{prefix}head.weight"), &mut self.head.weight, true);
        f(format!("{prefix}head.bias"), &mut self.head.bias, true);
        if let Some(hb) = &mut self.head_bin {
            f(format!("{prefix}head_bin.weight"), &mut hb.weight, true);
            f(format!("{prefix}head_bin.bias"), &mut hb.bias, true);
        }
    }
}
