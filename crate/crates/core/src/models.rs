//! Parametric network family: MLPs and small ConvNets.
//!
//! Parameters always live in one flat [`ParamVector`]; a forward pass receives
//! that vector as a single graph node and slices it per layer, so gradients
//! with respect to "the weights" are gradients with respect to one node.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autograd::{Graph, ParamLayout, ParamVector, Tensor, Var, SKIP};
use crate::error::{Error, Result};
use crate::rng;

const NORM_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.01;
/// Rows per chunk when evaluating outside of training.
const EVAL_CHUNK: usize = 256;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidArch(format!(
                        "unknown {} `{}`", stringify!($name).to_lowercase(), other
                    ))),
                }
            }
        }
    };
}

named_enum!(Family { Mlp => "mlp", ConvNet => "convnet" });
named_enum!(
    /// `Batch` normalises with batch statistics while training and with
    /// statistics frozen from the training set at evaluation time.
    Norm { None => "none", Instance => "instance", Group => "group", Layer => "layer", Batch => "batch" }
);
named_enum!(Activation { Sigmoid => "sigmoid", Relu => "relu", LeakyRelu => "leakyrelu" });
named_enum!(Pooling { None => "none", Max => "max", Avg => "avg" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A flat feature vector of length `n`.
    pub fn flat(n: usize) -> Self {
        Self { channels: 1, height: 1, width: n }
    }

    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// One network of the family, named by its hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ArchSpec {
    pub family: Family,
    pub width: usize,
    pub depth: usize,
    pub norm: Norm,
    pub activation: Activation,
    pub pooling: Pooling,
    pub input: InputShape,
    pub classes: usize,
}

impl ArchSpec {
    pub fn mlp(input: InputShape, width: usize, depth: usize, classes: usize) -> Self {
        Self {
            family: Family::Mlp,
            width,
            depth,
            norm: Norm::None,
            activation: Activation::Relu,
            pooling: Pooling::None,
            input,
            classes,
        }
    }

    /// conv3x3 → instance norm → relu → 2x2 average pool, `depth` times, then a linear head.
    pub fn convnet(input: InputShape, width: usize, depth: usize, classes: usize) -> Self {
        Self {
            family: Family::ConvNet,
            width,
            depth,
            norm: Norm::Instance,
            activation: Activation::Relu,
            pooling: Pooling::Avg,
            input,
            classes,
        }
    }

    /// Short stable identifier, e.g. `convnet-w16-d3-instance-relu-avg`.
    pub fn id(&self) -> String {
        format!(
            "{}-w{}-d{}-{}-{}-{}",
            self.family, self.width, self.depth, self.norm, self.activation, self.pooling
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidArch("width and depth must be at least 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArch("at least two classes are required".into()));
        }
        if self.input.dim() == 0 {
            return Err(Error::InvalidArch("empty input shape".into()));
        }
        if self.family == Family::Mlp {
            if self.norm == Norm::Instance {
                return Err(Error::InvalidArch("instance norm needs spatial feature maps".into()));
            }
            if self.pooling != Pooling::None {
                return Err(Error::InvalidArch("pooling needs spatial feature maps".into()));
            }
        }
        if self.norm == Norm::Group {
            group_count(self.width)?;
        }
        Ok(())
    }
}

fn group_count(channels: usize) -> Result<usize> {
    if channels.is_multiple_of(4) && channels > 4 {
        Ok(4)
    } else if channels.is_multiple_of(2) {
        Ok(2)
    } else {
        Err(Error::InvalidArch(format!("group norm needs an even width, got {}", channels)))
    }
}

#[derive(Clone, Debug)]
struct Block {
    /// Spatial size entering the block (1x1 for MLPs).
    height: usize,
    width: usize,
    in_channels: usize,
    out_channels: usize,
    pooled: bool,
}

/// Frozen per-channel normalisation statistics, one entry per batch-norm layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// How batch-norm layers obtain their statistics.
#[derive(Clone, Copy, Debug)]
pub enum ForwardMode<'a> {
    Train,
    Frozen(&'a BatchStats),
}

/// A labelled mini-batch in row-major `[rows, dim]` layout.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub pixels: &'a [f64],
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(pixels: &'a [f64], labels: &'a [usize]) -> Self {
        Self { pixels, labels }
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }
}

/// A built network: architecture plus the layout of its flat parameter vector.
#[derive(Clone, Debug)]
pub struct Network {
    spec: ArchSpec,
    layout: Arc<ParamLayout>,
    blocks: Vec<Block>,
    head_in: usize,
}

impl Network {
    pub fn build(spec: ArchSpec) -> Result<Self> {
        spec.validate()?;
        let mut parts: Vec<(String, Vec<usize>)> = Vec::new();
        let mut blocks = Vec::with_capacity(spec.depth);
        let norm_params = |parts: &mut Vec<(String, Vec<usize>)>, i: usize, c: usize| {
            if spec.norm != Norm::None {
                parts.push((format!("block{}.norm.scale", i), vec![c]));
                parts.push((format!("block{}.norm.shift", i), vec![c]));
            }
        };
        let head_in = match spec.family {
            Family::Mlp => {
                let mut fan_in = spec.input.dim();
                for i in 0..spec.depth {
                    parts.push((format!("block{}.weight", i), vec![fan_in, spec.width]));
                    parts.push((format!("block{}.bias", i), vec![spec.width]));
                    norm_params(&mut parts, i, spec.width);
                    blocks.push(Block {
                        height: 1,
                        width: 1,
                        in_channels: fan_in,
                        out_channels: spec.width,
                        pooled: false,
                    });
                    fan_in = spec.width;
                }
                fan_in
            }
            Family::ConvNet => {
                let (mut h, mut w, mut c) = (spec.input.height, spec.input.width, spec.input.channels);
                for i in 0..spec.depth {
                    parts.push((format!("block{}.weight", i), vec![9 * c, spec.width]));
                    parts.push((format!("block{}.bias", i), vec![spec.width]));
                    norm_params(&mut parts, i, spec.width);
                    let pooled = spec.pooling != Pooling::None && h >= 2 && w >= 2;
                    blocks.push(Block { height: h, width: w, in_channels: c, out_channels: spec.width, pooled });
                    if pooled {
                        h /= 2;
                        w /= 2;
                    }
                    c = spec.width;
                }
                h * w * c
            }
        };
        parts.push(("head.weight".into(), vec![head_in, spec.classes]));
        parts.push(("head.bias".into(), vec![spec.classes]));
        Ok(Self { spec, layout: Arc::new(ParamLayout::new(parts)), blocks, head_in })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    fn batch_norm_layers(&self) -> usize {
        if self.spec.norm == Norm::Batch {
            self.blocks.len()
        } else {
            0
        }
    }

    /// Kaiming-uniform fan-in draw: weights and biases ~ U(±1/√fan_in),
    /// norm scales 1 and shifts 0.
    pub fn init_weights(&self, seed: u64) -> ParamVector {
        let mut rng = rng::prng(seed);
        let mut p = ParamVector::zeros(self.layout.clone());
        let entries = self.layout.entries().to_vec();
        let mut fan_in = 1;
        for e in &entries {
            let slot = &mut p.values_mut()[e.range()];
            if e.name.ends_with(".norm.scale") {
                slot.fill(1.0);
            } else if e.name.ends_with(".norm.shift") {
                slot.fill(0.0);
            } else {
                if e.name.ends_with(".weight") {
                    fan_in = e.shape[0];
                }
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                for v in slot.iter_mut() {
                    *v = rng::uniform(&mut rng, -bound, bound);
                }
            }
        }
        p
    }

    fn param(&self, g: &mut Graph, theta: Var, name: &str) -> Result<Var> {
        let e = self
            .layout
            .get(name)
            .ok_or_else(|| Error::LayoutMismatch(format!("missing parameter {}", name)))?;
        let idx: Vec<usize> = e.range().collect();
        g.gather(theta, idx.into(), e.shape.clone())
    }

    fn check_theta(&self, g: &Graph, theta: Var) -> Result<()> {
        let n = g.try_value(theta)?.numel();
        if n != self.layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "network has {} parameters, vector has {}",
                self.layout.len(),
                n
            )));
        }
        Ok(())
    }

    /// Logits `[rows, classes]` for inputs `x` of shape `[rows, input.dim()]`.
    pub fn forward(&self, g: &mut Graph, theta: Var, x: Var, mode: ForwardMode<'_>) -> Result<Var> {
        self.forward_impl(g, theta, x, mode, None)
    }

    fn forward_impl(
        &self,
        g: &mut Graph,
        theta: Var,
        x: Var,
        mode: ForwardMode<'_>,
        mut collect: Option<&mut BatchStats>,
    ) -> Result<Var> {
        self.check_theta(g, theta)?;
        let dim = self.spec.input.dim();
        let total = g.try_value(x)?.numel();
        if total == 0 {
            return Err(Error::EmptyBatch);
        }
        if total % dim != 0 {
            return Err(Error::shape("forward", format!("{} inputs are not rows of {}", total, dim)));
        }
        let rows = total / dim;
        if let ForwardMode::Frozen(stats) = mode {
            if stats.layers.len() != self.batch_norm_layers() {
                return Err(Error::shape("forward", "frozen statistics do not match the network".into()));
            }
        }
        let mut h = match self.spec.family {
            Family::Mlp => g.reshape(x, vec![rows, dim])?,
            Family::ConvNet => {
                let s = self.spec.input;
                let hw = s.height * s.width;
                let mut idx = Vec::with_capacity(total);
                for b in 0..rows {
                    for p in 0..hw {
                        for c in 0..s.channels {
                            idx.push(b * dim + c * hw + p);
                        }
                    }
                }
                g.gather(x, idx.into(), vec![rows * hw, s.channels])?
            }
        };
        let mut bn_layer = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            let w = self.param(g, theta, &format!("block{}.weight", i))?;
            let bias = self.param(g, theta, &format!("block{}.bias", i))?;
            let pre = match self.spec.family {
                Family::Mlp => g.matmul(h, w)?,
                Family::ConvNet => {
                    let cols = im2col(g, h, rows, block)?;
                    g.matmul(cols, w)?
                }
            };
            h = g.add_bias(pre, bias)?;
            if self.spec.norm != Norm::None {
                let stats = match (self.spec.norm, mode) {
                    (Norm::Batch, ForwardMode::Frozen(s)) => Some(&s.layers[bn_layer]),
                    _ => None,
                };
                h = self.normalize(g, theta, h, rows, block, i, stats, collect.as_deref_mut())?;
                if self.spec.norm == Norm::Batch {
                    bn_layer += 1;
                }
            }
            h = match self.spec.activation {
                Activation::Relu => g.relu(h)?,
                Activation::LeakyRelu => g.leaky_relu(h, LEAKY_SLOPE)?,
                Activation::Sigmoid => g.sigmoid(h)?,
            };
            if block.pooled {
                h = pool(g, h, rows, block, self.spec.pooling)?;
            }
        }
        let flat = g.reshape(h, vec![rows, self.head_in])?;
        let w = self.param(g, theta, "head.weight")?;
        let b = self.param(g, theta, "head.bias")?;
        let logits = g.matmul(flat, w)?;
        g.add_bias(logits, b)
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &self,
        g: &mut Graph,
        theta: Var,
        h: Var,
        rows: usize,
        block: &Block,
        index: usize,
        frozen: Option<&(Vec<f64>, Vec<f64>)>,
        collect: Option<&mut BatchStats>,
    ) -> Result<Var> {
        let c = block.out_channels;
        let spatial = block.height * block.width;
        let n = rows * spatial * c;
        let group_of = |e: usize| -> usize {
            let (r, ch) = (e / c, e % c);
            let b = r / spatial;
            match self.spec.norm {
                Norm::Instance => b * c + ch,
                Norm::Layer => b,
                Norm::Group => {
                    let gcount = group_count(c).unwrap_or(1);
                    b * gcount + ch / (c / gcount)
                }
                _ => ch,
            }
        };
        let groups = match self.spec.norm {
            Norm::Instance => rows * c,
            Norm::Layer => rows,
            Norm::Group => rows * group_count(c)?,
            _ => c,
        };
        let per_group = (n / groups) as f64;
        let gid: Arc<[usize]> = (0..n).map(group_of).collect::<Vec<_>>().into();
        let shape = g.shape(h).to_vec();

        let normalized = if let Some((mean, var)) = frozen {
            let m = g.constant(Tensor::vector(mean.clone()));
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + NORM_EPS)).collect();
            let inv = g.constant(Tensor::vector(inv));
            let mb = g.gather(m, gid.clone(), shape.clone())?;
            let ib = g.gather(inv, gid.clone(), shape.clone())?;
            let centered = g.sub(h, mb)?;
            g.mul(centered, ib)?
        } else {
            let sums = g.scatter_add(h, gid.clone(), vec![groups])?;
            let mean = g.scale(sums, 1.0 / per_group)?;
            let mb = g.gather(mean, gid.clone(), shape.clone())?;
            let centered = g.sub(h, mb)?;
            let sq = g.mul(centered, centered)?;
            let sq_sums = g.scatter_add(sq, gid.clone(), vec![groups])?;
            let var = g.scale(sq_sums, 1.0 / per_group)?;
            if let Some(stats) = collect {
                stats.layers.push((g.value(mean).data().to_vec(), g.value(var).data().to_vec()));
            }
            let shifted = g.affine(var, 1.0, NORM_EPS)?;
            let inv = g.pow(shifted, -0.5)?;
            let ib = g.gather(inv, gid, shape.clone())?;
            g.mul(centered, ib)?
        };
        let chan: Arc<[usize]> = (0..n).map(|e| e % c).collect::<Vec<_>>().into();
        let scale = self.param(g, theta, &format!("block{}.norm.scale", index))?;
        let shift = self.param(g, theta, &format!("block{}.norm.shift", index))?;
        let sb = g.gather(scale, chan.clone(), shape.clone())?;
        let tb = g.gather(shift, chan, shape)?;
        let scaled = g.mul(normalized, sb)?;
        g.add(scaled, tb)
    }

    /// Mean cross-entropy of the network on `x` against `labels`.
    pub fn loss(
        &self,
        g: &mut Graph,
        theta: Var,
        x: Var,
        labels: Arc<[usize]>,
        mode: ForwardMode<'_>,
    ) -> Result<Var> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.classes) {
            return Err(Error::LabelOutOfRange { label: bad, classes: self.spec.classes });
        }
        let logits = self.forward(g, theta, x, mode)?;
        g.softmax_xent(logits, labels)
    }

    fn batch_input(&self, batch: &Batch<'_>) -> Result<Tensor> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        Tensor::new(vec![batch.rows(), self.spec.input.dim()], batch.pixels.to_vec())
    }

    /// Training loss and its gradient with respect to the parameters.
    pub fn loss_and_grad(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<(f64, ParamVector)> {
        let mut g = Graph::new();
        let theta = g.param(params.to_tensor());
        let x = g.constant(self.batch_input(batch)?);
        let loss = self.loss(&mut g, theta, x, batch.labels.to_vec().into(), ForwardMode::Train)?;
        let value = g.value(loss).item();
        let grad = g.grad(loss, &[theta])?.remove(0);
        Ok((value, params.replaced(&grad)?))
    }

    /// Training-mode loss without gradients.
    pub fn loss_value(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<f64> {
        let mut g = Graph::new();
        let theta = g.constant(params.to_tensor());
        let x = g.constant(self.batch_input(batch)?);
        let loss = self.loss(&mut g, theta, x, batch.labels.to_vec().into(), ForwardMode::Train)?;
        Ok(g.value(loss).item())
    }

    /// Batch-norm statistics of `pixels` under `params`, for evaluation.
    pub fn batch_stats(&self, params: &ParamVector, pixels: &[f64]) -> Result<BatchStats> {
        let mut stats = BatchStats::default();
        if self.batch_norm_layers() == 0 {
            return Ok(stats);
        }
        let rows = pixels.len() / self.spec.input.dim();
        let mut g = Graph::new();
        let theta = g.constant(params.to_tensor());
        let x = g.constant(Tensor::new(vec![rows, self.spec.input.dim()], pixels.to_vec())?);
        self.forward_impl(&mut g, theta, x, ForwardMode::Train, Some(&mut stats))?;
        Ok(stats)
    }

    /// Logits for `pixels`, evaluated in chunks without building gradients.
    pub fn logits(&self, params: &ParamVector, pixels: &[f64], stats: Option<&BatchStats>) -> Result<Vec<f64>> {
        let dim = self.spec.input.dim();
        let empty = BatchStats::default();
        let mode = ForwardMode::Frozen(stats.unwrap_or(&empty));
        let mut out = Vec::with_capacity(pixels.len() / dim * self.spec.classes);
        for chunk in pixels.chunks(EVAL_CHUNK * dim) {
            let mut g = Graph::new();
            let theta = g.constant(params.to_tensor());
            let x = g.constant(Tensor::new(vec![chunk.len() / dim, dim], chunk.to_vec())?);
            let y = self.forward(&mut g, theta, x, mode)?;
            out.extend_from_slice(g.value(y).data());
        }
        Ok(out)
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&self, params: &ParamVector, batch: &Batch<'_>, stats: Option<&BatchStats>) -> Result<f64> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let logits = self.logits(params, batch.pixels, stats)?;
        let correct = logits
            .chunks(self.spec.classes)
            .zip(batch.labels)
            .filter(|(row, &label)| argmax(row) == label)
            .count();
        Ok(correct as f64 / batch.rows() as f64)
    }

    /// Mean cross-entropy evaluated in chunks (evaluation-mode statistics).
    pub fn eval_loss(&self, params: &ParamVector, batch: &Batch<'_>, stats: Option<&BatchStats>) -> Result<f64> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let logits = self.logits(params, batch.pixels, stats)?;
        let mut total = 0.0;
        for (row, &y) in logits.chunks(self.spec.classes).zip(batch.labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            total += lse - row[y];
        }
        Ok(total / batch.rows() as f64)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// 3x3, stride 1, zero-padded patch expansion of an NHWC map `[rows*h*w, c]`.
fn im2col(g: &mut Graph, h: Var, rows: usize, block: &Block) -> Result<Var> {
    let (hh, ww, c) = (block.height, block.width, block.in_channels);
    let out_rows = rows * hh * ww;
    let mut idx = Vec::with_capacity(out_rows * 9 * c);
    for b in 0..rows {
        for y in 0..hh {
            for x in 0..ww {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                        let inside = sy >= 0 && sx >= 0 && (sy as usize) < hh && (sx as usize) < ww;
                        for ch in 0..c {
                            idx.push(if inside {
                                ((b * hh + sy as usize) * ww + sx as usize) * c + ch
                            } else {
                                SKIP
                            });
                        }
                    }
                }
            }
        }
    }
    g.gather(h, idx.into(), vec![out_rows, 9 * c])
}

/// 2x2 stride-2 pooling of an NHWC map; odd trailing rows/columns are dropped.
fn pool(g: &mut Graph, h: Var, rows: usize, block: &Block, kind: Pooling) -> Result<Var> {
    let (hh, ww, c) = (block.height, block.width, block.out_channels);
    let (ho, wo) = (hh / 2, ww / 2);
    let out_shape = vec![rows * ho * wo, c];
    match kind {
        Pooling::Avg => {
            let mut idx = Vec::with_capacity(rows * hh * ww * c);
            for b in 0..rows {
                for y in 0..hh {
                    for x in 0..ww {
                        for ch in 0..c {
                            let (py, px) = (y / 2, x / 2);
                            idx.push(if py < ho && px < wo {
                                ((b * ho + py) * wo + px) * c + ch
                            } else {
                                SKIP
                            });
                        }
                    }
                }
            }
            let s = g.scatter_add(h, idx.into(), out_shape)?;
            g.scale(s, 0.25)
        }
        Pooling::Max => {
            let vals = g.value(h).data();
            let mut idx = Vec::with_capacity(rows * ho * wo * c);
            for b in 0..rows {
                for py in 0..ho {
                    for px in 0..wo {
                        for ch in 0..c {
                            let mut best = SKIP;
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let src = ((b * hh + 2 * py + dy) * ww + 2 * px + dx) * c + ch;
                                if best == SKIP || vals[src] > vals[best] {
                                    best = src;
                                }
                            }
                            idx.push(best);
                        }
                    }
                }
            }
            g.gather(h, idx.into(), out_shape)
        }
        Pooling::None => Ok(h),
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl InputShape {
    pub fn describe(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl Default for InputShape {
    fn default() -> Self {
        Self::flat(1)
    }
}
