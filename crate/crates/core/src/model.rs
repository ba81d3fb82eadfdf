//! The Mosquito-Net architecture: `[conv → batchnorm → relu → maxpool] × blocks`,
//! flatten, `[fc → relu → dropout] × hidden`, and a final fc producing two logits.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng;

use crate::nn::{
    dropout, dropout_backward, relu, relu_backward, softmax, BatchNorm2d, BatchNormCtx, Conv2d,
    Conv2dCtx, DropoutCtx, Linear, LinearCtx, MaxPool2d, MaxPoolCtx, Mode, Parameter, ReluCtx,
};
use crate::tensor::{argmax, Tensor};
use crate::{Error, Result, RngSeed};

/// Class index mapping. Parasitized is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Uninfected = 0,
    Parasitized = 1,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Uninfected, ClassLabel::Parasitized];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Uninfected),
            1 => Some(ClassLabel::Parasitized),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Uninfected => "uninfected",
            ClassLabel::Parasitized => "parasitized",
        }
    }

    /// Case-insensitive parse of `uninfected` / `parasitized`.
    pub fn parse(s: &str) -> Option<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl core::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels of each conv block, in order. May be empty (fc-only model).
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Hidden fc widths; each is followed by relu and dropout.
    pub fc_sizes: Vec<usize>,
    pub num_classes: usize,
    pub dropout_p: f32,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            height: 120,
            width: 120,
            conv_channels: alloc::vec![16, 32, 64],
            kernel: 5,
            stride: 1,
            pad: 2,
            pool_kernel: 2,
            pool_stride: 2,
            fc_sizes: alloc::vec![512, 128],
            num_classes: 2,
            dropout_p: 0.2,
            bn_eps: crate::nn::DEFAULT_BN_EPS,
            bn_momentum: crate::nn::DEFAULT_BN_MOMENTUM,
        }
    }
}

fn join(xs: &[usize]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| {
                Error::Config(format!("{key}: expected a list of integers, got {value:?}"))
            })
        })
        .collect()
}

fn parse_num<T: core::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ModelConfig {
    pub const KEYS: [&'static str; 14] = [
        "in_channels",
        "height",
        "width",
        "conv_channels",
        "kernel",
        "stride",
        "pad",
        "pool_kernel",
        "pool_stride",
        "fc_sizes",
        "num_classes",
        "dropout_p",
        "bn_eps",
        "bn_momentum",
    ];

    /// Sets one field from its textual form; `key` excludes the `model.` prefix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "in_channels" => self.in_channels = parse_num(key, value)?,
            "height" => self.height = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "conv_channels" => self.conv_channels = parse_list(key, value)?,
            "kernel" => self.kernel = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "pad" => self.pad = parse_num(key, value)?,
            "pool_kernel" => self.pool_kernel = parse_num(key, value)?,
            "pool_stride" => self.pool_stride = parse_num(key, value)?,
            "fc_sizes" => self.fc_sizes = parse_list(key, value)?,
            "num_classes" => self.num_classes = parse_num(key, value)?,
            "dropout_p" => self.dropout_p = parse_num(key, value)?,
            "bn_eps" => self.bn_eps = parse_num(key, value)?,
            "bn_momentum" => self.bn_momentum = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "in_channels" => self.in_channels.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "conv_channels" => join(&self.conv_channels),
            "kernel" => self.kernel.to_string(),
            "stride" => self.stride.to_string(),
            "pad" => self.pad.to_string(),
            "pool_kernel" => self.pool_kernel.to_string(),
            "pool_stride" => self.pool_stride.to_string(),
            "fc_sizes" => join(&self.fc_sizes),
            "num_classes" => self.num_classes.to_string(),
            "dropout_p" => self.dropout_p.to_string(),
            "bn_eps" => self.bn_eps.to_string(),
            "bn_momentum" => self.bn_momentum.to_string(),
            _ => return None,
        })
    }

    /// `model.key = value` lines in a fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "model.{key} = {}", self.get(key).unwrap_or_default());
        }
        s
    }

    /// Parses the output of [`ModelConfig::to_text`]. Keys not listed keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed line {line:?}")))?;
            let k = k.trim();
            let k = k.strip_prefix("model.").unwrap_or(k);
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.in_channels, self.height, self.width]
    }

    /// Spatial `(h, w)` of each block's conv output and pool output.
    pub fn spatial_plan(&self) -> Result<Vec<((usize, usize), (usize, usize))>> {
        let conv = |s: usize| -> Result<usize> {
            let padded = s + 2 * self.pad;
            if padded < self.kernel || (padded - self.kernel) % self.stride != 0 {
                return Err(Error::Config(format!(
                    "conv (kernel {}, stride {}, pad {}) does not tile size {s}",
                    self.kernel, self.stride, self.pad
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        let pool = |s: usize| -> Result<usize> {
            if s < self.pool_kernel || (s - self.pool_kernel) % self.pool_stride != 0 {
                return Err(Error::Config(format!(
                    "pool (kernel {}, stride {}) does not tile size {s}; input height/width must divide evenly",
                    self.pool_kernel, self.pool_stride
                )));
            }
            Ok((s - self.pool_kernel) / self.pool_stride + 1)
        };
        let (mut h, mut w) = (self.height, self.width);
        let mut plan = Vec::with_capacity(self.conv_channels.len());
        for _ in &self.conv_channels {
            let (ch, cw) = (conv(h)?, conv(w)?);
            let (ph, pw) = (pool(ch)?, pool(cw)?);
            plan.push(((ch, cw), (ph, pw)));
            (h, w) = (ph, pw);
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("height", self.height),
            ("width", self.width),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("pool_kernel", self.pool_kernel),
            ("pool_stride", self.pool_stride),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.conv_channels.contains(&0) || self.fc_sizes.contains(&0) {
            return Err(Error::Config(
                "channel and neuron counts must be positive".into(),
            ));
        }
        if self.num_classes != 2 {
            return Err(Error::Config(format!(
                "num_classes must be 2 (uninfected, parasitized), got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config(
                "bn_eps must be positive and bn_momentum in [0, 1]".into(),
            ));
        }
        self.spatial_plan().map(|_| ())
    }

    /// Number of features entering the first fc layer.
    pub fn flatten_size(&self) -> Result<usize> {
        let plan = self.spatial_plan()?;
        Ok(match (plan.last(), self.conv_channels.last()) {
            (Some((_, (h, w))), Some(&c)) => c * h * w,
            _ => self.in_channels * self.height * self.width,
        })
    }

    /// Trainable parameter count from the config alone.
    pub fn parameter_count(&self) -> Result<usize> {
        let k2 = self.kernel * self.kernel;
        let mut total = 0;
        let mut cin = self.in_channels;
        for &cout in &self.conv_channels {
            total += k2 * cin * cout + cout + 2 * cout;
            cin = cout;
        }
        let mut din = self.flatten_size()?;
        for &d in self.fc_sizes.iter().chain([self.num_classes].iter()) {
            total += din * d + d;
            din = d;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub pool: MaxPool2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosquitoNet {
    config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    /// Hidden layers followed by the output layer.
    pub fcs: Vec<Linear>,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    conv: Conv2dCtx,
    bn: BatchNormCtx,
    relu: ReluCtx,
    pool: MaxPoolCtx,
    pre_pool_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
struct HiddenTrace {
    fc: LinearCtx,
    relu: ReluCtx,
    dropout: DropoutCtx,
}

/// Everything a forward pass recorded for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    blocks: Vec<BlockTrace>,
    flat_from: Vec<usize>,
    hidden: Vec<HiddenTrace>,
    head: LinearCtx,
    /// Post-relu, pre-pool output of the last conv block (absent for fc-only models).
    pub last_block_activation: Option<Tensor>,
    /// Output spatial shape of each conv block after pooling, `[N, C, H, W]`.
    pub block_output_shapes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: ClassLabel,
    /// `[p(uninfected), p(parasitized)]`
    pub probabilities: [f32; 2],
}

/// Seed streams for model construction.
const INIT_CONV: u64 = 0x100;
const INIT_FC: u64 = 0x200;

impl MosquitoNet {
    /// Builds a freshly initialized network: Kaiming conv/fc weights, zero biases,
    /// unit gamma, zero beta, running stats at mean 0 / variance 1.
    pub fn build(config: ModelConfig, seed: RngSeed) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.conv_channels.len());
        let mut cin = config.in_channels;
        for (i, &cout) in config.conv_channels.iter().enumerate() {
            let conv = Conv2d::new(
                cin,
                cout,
                config.kernel,
                config.stride,
                config.pad,
                seed.fork(INIT_CONV + i as u64),
            )?;
            let mut bn = BatchNorm2d::new(cout);
            bn.eps = config.bn_eps;
            bn.momentum = config.bn_momentum;
            bn.init_running_stats();
            blocks.push(ConvBlock {
                conv,
                bn,
                pool: MaxPool2d {
                    kernel: config.pool_kernel,
                    stride: config.pool_stride,
                },
            });
            cin = cout;
        }
        let mut fcs = Vec::with_capacity(config.fc_sizes.len() + 1);
        let mut din = config.flatten_size()?;
        for (i, &d) in config
            .fc_sizes
            .iter()
            .chain([config.num_classes].iter())
            .enumerate()
        {
            fcs.push(Linear::new(din, d, seed.fork(INIT_FC + i as u64))?);
            din = d;
        }
        Ok(MosquitoNet {
            config,
            blocks,
            fcs,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut ps = Vec::new();
        for b in &self.blocks {
            ps.extend([&b.conv.weight, &b.conv.bias, &b.bn.gamma, &b.bn.beta]);
        }
        for fc in &self.fcs {
            ps.extend([&fc.weight, &fc.bias]);
        }
        ps
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps = Vec::new();
        for b in &mut self.blocks {
            ps.push(&mut b.conv.weight);
            ps.push(&mut b.conv.bias);
            ps.push(&mut b.bn.gamma);
            ps.push(&mut b.bn.beta);
        }
        for fc in &mut self.fcs {
            ps.push(&mut fc.weight);
            ps.push(&mut fc.bias);
        }
        ps
    }

    /// Trainable parameters only; running statistics are buffers and not counted.
    pub fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [c, h, w] = self.config.input_shape();
        match *x.shape() {
            [n, xc, xh, xw] if n > 0 && xc == c && xh == h && xw == w => Ok(()),
            _ => Err(Error::shape("mosquitonet", x.shape(), &[0, c, h, w])),
        }
    }

    /// Train-mode forward: batch statistics (running stats updated) and active dropout.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor,
        rng: &mut R,
    ) -> Result<(Tensor, Trace)> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut shapes = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        let mut last_act = None;
        let nblocks = self.blocks.len();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let (y, conv) = b.conv.forward(&h)?;
            let (y, bn) = b.bn.forward(&y, Mode::Train)?;
            let (y, relu_ctx) = relu(&y);
            let (p, pool) = b.pool.forward(&y)?;
            let pre_pool_shape = y.shape().to_vec();
            if i + 1 == nblocks {
                last_act = Some(y);
            }
            shapes.push(p.shape().to_vec());
            traces.push(BlockTrace {
                conv,
                bn,
                relu: relu_ctx,
                pool,
                pre_pool_shape,
            });
            h = p;
        }
        self.head_forward(h, traces, shapes, last_act, Mode::Train, rng)
    }

    /// Eval-mode forward that records a trace. Never mutates the model.
    pub fn forward_eval_traced(&self, x: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut shapes = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        let mut last_act = None;
        let nblocks = self.blocks.len();
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, conv) = b.conv.forward(&h)?;
            let (y, bn) = b.bn.forward_eval(&y)?;
            let (y, relu_ctx) = relu(&y);
            let (p, pool) = b.pool.forward(&y)?;
            let pre_pool_shape = y.shape().to_vec();
            if i + 1 == nblocks {
                last_act = Some(y);
            }
            shapes.push(p.shape().to_vec());
            traces.push(BlockTrace {
                conv,
                bn,
                relu: relu_ctx,
                pool,
                pre_pool_shape,
            });
            h = p;
        }
        // Eval-mode dropout never draws from the rng.
        let mut rng = RngSeed(0).rng();
        self.head_forward(h, traces, shapes, last_act, Mode::Eval, &mut rng)
    }

    /// Eval-mode logits `[N, 2]`.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_eval_traced(x)?.0)
    }

    fn head_forward<R: Rng + ?Sized>(
        &self,
        h: Tensor,
        blocks: Vec<BlockTrace>,
        block_output_shapes: Vec<Vec<usize>>,
        last_block_activation: Option<Tensor>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Trace)> {
        let flat_from = h.shape().to_vec();
        let n = flat_from[0];
        let mut h = h.reshape(&[n, flat_from[1..].iter().product()])?;
        let (hidden_fcs, head) = self.fcs.split_at(self.fcs.len() - 1);
        let mut hidden = Vec::with_capacity(hidden_fcs.len());
        for fc in hidden_fcs {
            let (y, fc_ctx) = fc.forward(&h)?;
            let (y, relu_ctx) = relu(&y);
            let (y, drop) = dropout(&y, self.config.dropout_p, mode, rng)?;
            hidden.push(HiddenTrace {
                fc: fc_ctx,
                relu: relu_ctx,
                dropout: drop,
            });
            h = y;
        }
        let (logits, head_ctx) = head[0].forward(&h)?;
        Ok((
            logits,
            Trace {
                blocks,
                flat_from,
                hidden,
                head: head_ctx,
                last_block_activation,
                block_output_shapes,
            },
        ))
    }

    /// Backpropagates `grad_logits`, accumulating every parameter gradient.
    /// Returns the gradient with respect to the input images.
    pub fn backward(&mut self, trace: &Trace, grad_logits: &Tensor) -> Result<Tensor> {
        let (hidden_fcs, head) = {
            let n = self.fcs.len() - 1;
            self.fcs.split_at_mut(n)
        };
        let mut g = head[0].backward(&trace.head, grad_logits)?;
        for (fc, t) in hidden_fcs.iter_mut().zip(&trace.hidden).rev() {
            g = dropout_backward(&t.dropout, &g)?;
            g = relu_backward(&t.relu, &g)?;
            g = fc.backward(&t.fc, &g)?;
        }
        let mut g = g.reshape(&trace.flat_from)?;
        for (b, t) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            g = b.pool.backward(&t.pool, &g)?;
            g = relu_backward(&t.relu, &g)?;
            g = b.bn.backward(&t.bn, &g)?;
            g = b.conv.backward(&t.conv, &g)?;
        }
        Ok(g)
    }

    /// Gradient of `grad_logits · logits` with respect to the last block's
    /// post-relu, pre-pool activation. Leaves parameter gradients untouched.
    pub fn last_activation_grad(&self, trace: &Trace, grad_logits: &Tensor) -> Result<Tensor> {
        let Some(last) = self.blocks.last() else {
            return Err(Error::InvalidArgument("model has no conv blocks".into()));
        };
        let (hidden_fcs, head) = self.fcs.split_at(self.fcs.len() - 1);
        let mut g = head[0].input_grad(&trace.head, grad_logits)?;
        for (fc, t) in hidden_fcs.iter().zip(&trace.hidden).rev() {
            g = dropout_backward(&t.dropout, &g)?;
            g = relu_backward(&t.relu, &g)?;
            g = fc.input_grad(&t.fc, &g)?;
        }
        let g = g.reshape(&trace.flat_from)?;
        let t = trace.blocks.last().expect("trace matches model");
        let g = last.pool.backward(&t.pool, &g)?;
        debug_assert_eq!(g.shape(), t.pre_pool_shape.as_slice());
        Ok(g)
    }

    /// Classifies one preprocessed `[C, H, W]` image.
    pub fn predict(&self, image: &Tensor) -> Result<Prediction> {
        let [c, h, w] = self.config.input_shape();
        if image.shape() != [c, h, w] {
            return Err(Error::shape("predict", image.shape(), &[c, h, w]));
        }
        let x = image.clone().reshape(&[1, c, h, w])?;
        Ok(self.predict_batch(&x)?.remove(0))
    }

    pub fn predict_batch(&self, x: &Tensor) -> Result<Vec<Prediction>> {
        let probs = softmax(&self.forward_eval(x)?)?;
        Ok(probs
            .data()
            .chunks_exact(2)
            .map(|p| Prediction {
                label: ClassLabel::from_index(argmax(p)).expect("two classes"),
                probabilities: [p[0], p[1]],
            })
            .collect())
    }

    /// Parameters and running statistics in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.bn.channels();
            out.push((format!("block{i}.conv.weight"), b.conv.weight.value.clone()));
            out.push((format!("block{i}.conv.bias"), b.conv.bias.value.clone()));
            out.push((format!("block{i}.bn.gamma"), b.bn.gamma.value.clone()));
            out.push((format!("block{i}.bn.beta"), b.bn.beta.value.clone()));
            out.push((
                format!("block{i}.bn.running_mean"),
                Tensor::new(&[c], b.bn.running.mean.clone()).expect("channel count"),
            ));
            out.push((
                format!("block{i}.bn.running_var"),
                Tensor::new(&[c], b.bn.running.var.clone()).expect("channel count"),
            ));
        }
        for (i, fc) in self.fcs.iter().enumerate() {
            out.push((format!("fc{i}.weight"), fc.weight.value.clone()));
            out.push((format!("fc{i}.bias"), fc.bias.value.clone()));
        }
        out
    }

    /// Rebuilds a model from `config` and tensors in [`MosquitoNet::named_tensors`] order.
    pub fn from_named_tensors(config: ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = MosquitoNet::build(config, RngSeed(0))?;
        let expected = model.named_tensors();
        if expected.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, want), (got_name, got)) in expected.iter().zip(&tensors) {
            if name != got_name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {name}, found {got_name}"
                )));
            }
            if want.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match config shape {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        let mut it = tensors.into_iter().map(|(_, t)| t);
        let mut next = || it.next().expect("count checked");
        for b in &mut model.blocks {
            b.conv.weight = Parameter::new(next());
            b.conv.bias = Parameter::new(next());
            b.bn.gamma = Parameter::new(next());
            b.bn.beta = Parameter::new(next());
            b.bn.running.mean = next().into_data();
            b.bn.running.var = next().into_data();
            b.bn.running.initialized = true;
        }
        for fc in &mut model.fcs {
            fc.weight = Parameter::new(next());
            fc.bias = Parameter::new(next());
        }
        Ok(model)
    }
}
