//! Small feedforward networks with hand-written backward passes, used as the
//! substrate for pruning tasks.

mod extract;
mod layers;
mod pnet;
mod train;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use layers::{ConvDims, NormCache};

pub use extract::extract_channel_context;
pub use layers::softmax_xent;
pub use pnet::{
    decode as decode_pnet, encode as encode_pnet, read_pnet, write_pnet, PnetError, PNET_MAGIC,
};
pub use train::{accuracy, train, Dataset, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    /// `c_out x c_in x k x k`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    /// `units x inputs`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight of the newest batch in the running statistics.
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// One stage of a network. The loss (softmax cross-entropy) is applied to the
/// output of the last layer and is not a layer itself.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu,
    MaxPool2,
    BatchNorm(BatchNorm),
    Flatten,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::MaxPool2 => "maxpool2",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Flatten => "flatten",
        }
    }

    pub fn has_channels(&self) -> bool {
        matches!(self, Layer::Conv2d(_) | Layer::Dense(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm layers.
    Train,
    /// Running statistics in batch-norm layers.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("layer {index} ({layer}): expected input shape {expected}, got {got:?}")]
    Shape {
        index: usize,
        layer: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("batch of {got} values does not hold {n} samples of shape {shape:?}")]
    Batch {
        n: usize,
        shape: Vec<usize>,
        got: usize,
    },
    #[error("layer {index}: {reason}")]
    Layer { index: usize, reason: String },
    #[error("keep mask has {got} entries for {want} channels")]
    MaskLength { got: usize, want: usize },
    #[error("keep mask removes every channel")]
    EmptyMask,
    #[error("label {label} outside 1..={classes}")]
    Label { label: usize, classes: usize },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

enum Cache {
    None,
    Pool(Vec<usize>),
    Norm(NormCache),
}

/// Activations of one forward pass. `acts[i]` is the input of layer `i`;
/// the last entry holds the logits.
pub struct ForwardPass {
    pub n: usize,
    pub mode: Mode,
    pub acts: Vec<Vec<f64>>,
    pub shapes: Vec<Vec<usize>>,
    caches: Vec<Cache>,
}

impl ForwardPass {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("input activation")
    }
}

fn he_normal(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let s = (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

impl Conv2d {
    pub fn init(c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Self {
            c_in,
            c_out,
            k,
            stride,
            weight: he_normal(rng, c_out * c_in * k * k, c_in * k * k),
            bias: vec![0.0; c_out],
        }
    }
}

impl Dense {
    pub fn init(inputs: usize, units: usize, rng: &mut impl Rng) -> Self {
        Self {
            inputs,
            units,
            weight: he_normal(rng, units * inputs, inputs),
            bias: vec![0.0; units],
        }
    }
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetError> {
        let net = Self {
            input_shape,
            layers,
        };
        net.shapes()?;
        Ok(net)
    }

    /// Per-sample shape entering each layer, followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NetError> {
        let mut shapes = vec![self.input_shape.clone()];
        for (index, layer) in self.layers.iter().enumerate() {
            let s = shapes.last().expect("non-empty");
            let bad = |expected: String| NetError::Shape {
                index,
                layer: layer.name(),
                expected,
                got: s.clone(),
            };
            let out = match layer {
                Layer::Conv2d(c) => match s.as_slice() {
                    &[ch, h, w] if ch == c.c_in && h >= c.k && w >= c.k && c.stride >= 1 => {
                        if c.weight.len() != c.c_out * c.c_in * c.k * c.k || c.bias.len() != c.c_out
                        {
                            return Err(NetError::Layer {
                                index,
                                reason: "conv parameter sizes do not match its dimensions".into(),
                            });
                        }
                        vec![
                            c.c_out,
                            layers::conv_out(h, c.k, c.stride),
                            layers::conv_out(w, c.k, c.stride),
                        ]
                    }
                    _ => return Err(bad(format!("[{}, >={k}, >={k}]", c.c_in, k = c.k))),
                },
                Layer::Dense(d) => match s.as_slice() {
                    &[i] if i == d.inputs => {
                        if d.weight.len() != d.units * d.inputs || d.bias.len() != d.units {
                            return Err(NetError::Layer {
                                index,
                                reason: "dense parameter sizes do not match its dimensions".into(),
                            });
                        }
                        vec![d.units]
                    }
                    _ => return Err(bad(format!("[{}]", d.inputs))),
                },
                Layer::Relu => s.clone(),
                Layer::MaxPool2 => match s.as_slice() {
                    &[c, h, w] if h >= 2 && w >= 2 => vec![c, h / 2, w / 2],
                    _ => return Err(bad("[C, >=2, >=2]".into())),
                },
                Layer::BatchNorm(b) => {
                    let consistent = [b.beta.len(), b.running_mean.len(), b.running_var.len()]
                        .iter()
                        .all(|&l| l == b.channels());
                    if s.first() != Some(&b.channels())
                        || !consistent
                        || !(s.len() == 1 || s.len() == 3)
                    {
                        return Err(bad(format!(
                            "[{}] or [{}, H, W]",
                            b.channels(),
                            b.channels()
                        )));
                    }
                    s.clone()
                }
                Layer::Flatten => vec![s.iter().product()],
            };
            shapes.push(out);
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> usize {
        self.shapes()
            .ok()
            .and_then(|s| s.last().map(|l| l.iter().product()))
            .unwrap_or(0)
    }

    /// Trainable parameters in a fixed order: weight then bias for conv and
    /// dense layers, gamma then beta for batch-norm layers.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv2d(c) => out.extend([c.weight.as_slice(), c.bias.as_slice()]),
                Layer::Dense(d) => out.extend([d.weight.as_slice(), d.bias.as_slice()]),
                Layer::BatchNorm(b) => out.extend([b.gamma.as_slice(), b.beta.as_slice()]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv2d(c) => out.extend([&mut c.weight, &mut c.bias]),
                Layer::Dense(d) => out.extend([&mut d.weight, &mut d.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Indices of layers whose outputs are prunable channels.
    pub fn channel_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].has_channels())
            .collect()
    }

    pub fn channels(&self, layer_index: usize) -> Option<usize> {
        match self.layers.get(layer_index)? {
            Layer::Conv2d(c) => Some(c.c_out),
            Layer::Dense(d) => Some(d.units),
            _ => None,
        }
    }

    pub fn forward(&self, x: &[f64], n: usize, mode: Mode) -> Result<ForwardPass, NetError> {
        self.forward_impl(x, n, mode, None)
    }

    /// Forward pass in which the channels of `layer_index` with a false
    /// `keep` entry are zeroed where they enter the next layer with
    /// parameters, after their per-channel batch-norm, ReLU and pooling.
    pub fn forward_masked(
        &self,
        x: &[f64],
        n: usize,
        mode: Mode,
        layer_index: usize,
        keep: &[bool],
    ) -> Result<ForwardPass, NetError> {
        let next = self.next_param_layer(layer_index)?;
        self.check_mask(layer_index, keep)?;
        self.forward_impl(x, n, mode, Some((next, keep)))
    }

    fn check_mask(&self, layer_index: usize, keep: &[bool]) -> Result<usize, NetError> {
        let want = self.channels(layer_index).ok_or_else(|| NetError::Layer {
            index: layer_index,
            reason: "not a conv2d or dense layer".into(),
        })?;
        if keep.len() != want {
            return Err(NetError::MaskLength {
                got: keep.len(),
                want,
            });
        }
        if !keep.iter().any(|&k| k) {
            return Err(NetError::EmptyMask);
        }
        Ok(want)
    }

    /// The next conv/dense layer after `layer_index`, requiring that only
    /// per-channel layers lie in between.
    pub(crate) fn next_param_layer(&self, layer_index: usize) -> Result<usize, NetError> {
        let err = |reason: &str| NetError::Layer {
            index: layer_index,
            reason: reason.into(),
        };
        if !self
            .layers
            .get(layer_index)
            .is_some_and(Layer::has_channels)
        {
            return Err(err("not a conv2d or dense layer"));
        }
        for j in layer_index + 1..self.layers.len() {
            match self.layers[j] {
                Layer::Conv2d(_) | Layer::Dense(_) => return Ok(j),
                _ => continue,
            }
        }
        Err(err("output layer channels cannot be pruned"))
    }

    fn forward_impl(
        &self,
        x: &[f64],
        n: usize,
        mode: Mode,
        mask: Option<(usize, &[bool])>,
    ) -> Result<ForwardPass, NetError> {
        let shapes = self.shapes()?;
        let sample: usize = self.input_shape.iter().product();
        if x.len() != n * sample || n == 0 {
            return Err(NetError::Batch {
                n,
                shape: self.input_shape.clone(),
                got: x.len(),
            });
        }
        let mut acts = vec![x.to_vec()];
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((at, keep)) = mask {
                if at == i {
                    zero_channels(acts.last_mut().expect("activation"), n, keep);
                }
            }
            let s = &shapes[i];
            let a = acts.last().expect("activation");
            let (y, cache) = match layer {
                Layer::Conv2d(c) => {
                    let d = conv_dims(c, s, n);
                    (layers::conv_forward(a, &c.weight, &c.bias, &d), Cache::None)
                }
                Layer::Dense(d) => (
                    layers::dense_forward(a, &d.weight, &d.bias, n, d.inputs, d.units),
                    Cache::None,
                ),
                Layer::Relu => (a.iter().map(|&v| v.max(0.0)).collect(), Cache::None),
                Layer::MaxPool2 => {
                    let (y, arg) = layers::pool_forward(a, n, s[0], s[1], s[2]);
                    (y, Cache::Pool(arg))
                }
                Layer::BatchNorm(b) => {
                    let group = s[1..].iter().product();
                    let stats = match mode {
                        Mode::Train => None,
                        Mode::Eval => Some((b.running_mean.as_slice(), b.running_var.as_slice())),
                    };
                    let (y, c) =
                        layers::norm_forward(a, n, s[0], group, &b.gamma, &b.beta, stats, b.eps);
                    (y, Cache::Norm(c))
                }
                Layer::Flatten => (a.clone(), Cache::None),
            };
            acts.push(y);
            caches.push(cache);
        }
        Ok(ForwardPass {
            n,
            mode,
            acts,
            shapes,
            caches,
        })
    }

    /// Mean cross-entropy of `pass` against `labels` (1-based) and its
    /// gradient for every entry of [`Network::params`].
    pub fn backward(
        &self,
        pass: &ForwardPass,
        labels: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>), NetError> {
        let classes = self.output_len();
        if labels.len() != pass.n {
            return Err(NetError::Dataset(format!(
                "{} labels for {} samples",
                labels.len(),
                pass.n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y == 0 || y > classes) {
            return Err(NetError::Label {
                label: bad,
                classes,
            });
        }
        let n = pass.n;
        let (loss, mut grad) = softmax_xent(pass.logits(), labels, classes);
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let x = &pass.acts[i];
            let s = &pass.shapes[i];
            grad = match (&self.layers[i], &pass.caches[i]) {
                (Layer::Conv2d(c), _) => {
                    let (dx, dw, db) =
                        layers::conv_backward(x, &c.weight, &grad, &conv_dims(c, s, n));
                    per_layer[i] = vec![dw, db];
                    dx
                }
                (Layer::Dense(d), _) => {
                    let (dx, dw, db) =
                        layers::dense_backward(x, &d.weight, &grad, n, d.inputs, d.units);
                    per_layer[i] = vec![dw, db];
                    dx
                }
                (Layer::Relu, _) => grad
                    .iter()
                    .zip(x)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect(),
                (Layer::MaxPool2, Cache::Pool(arg)) => {
                    let mut dx = vec![0.0; x.len()];
                    for (g, &a) in grad.iter().zip(arg) {
                        dx[a] += g;
                    }
                    dx
                }
                (Layer::BatchNorm(b), Cache::Norm(cache)) => {
                    let group = s[1..].iter().product();
                    let (dx, dg, dbeta) = layers::norm_backward(
                        &grad,
                        cache,
                        n,
                        s[0],
                        group,
                        &b.gamma,
                        pass.mode == Mode::Train,
                    );
                    per_layer[i] = vec![dg, dbeta];
                    dx
                }
                (Layer::Flatten, _) => grad,
                _ => unreachable!("cache kind matches layer kind"),
            };
        }
        Ok((loss, per_layer.into_iter().flatten().collect()))
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// statistics of every batch-norm layer.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        if pass.mode != Mode::Train {
            return;
        }
        for (layer, cache) in self.layers.iter_mut().zip(&pass.caches) {
            if let (Layer::BatchNorm(b), Cache::Norm(c)) = (layer, cache) {
                let m = b.momentum;
                for k in 0..b.channels() {
                    b.running_mean[k] = (1.0 - m) * b.running_mean[k] + m * c.mean[k];
                    b.running_var[k] = (1.0 - m) * b.running_var[k] + m * c.var[k];
                }
            }
        }
    }

    /// Removes the channels of `layer_index` whose `keep` entry is false,
    /// together with their batch-norm entries and the matching input slices
    /// of the next conv/dense layer.
    pub fn prune_channels(&self, layer_index: usize, keep: &[bool]) -> Result<Network, NetError> {
        let channels = self.check_mask(layer_index, keep)?;
        let next = self.next_param_layer(layer_index)?;
        let shapes = self.shapes()?;
        let kept: Vec<usize> = (0..channels).filter(|&c| keep[c]).collect();
        // entries belonging to channel c in a block of `len` channel-major values
        let slab = |len: usize| -> Vec<usize> {
            let g = len / channels;
            kept.iter().flat_map(|&c| c * g..(c + 1) * g).collect()
        };
        let mut out = self.clone();
        match &mut out.layers[layer_index] {
            Layer::Conv2d(c) => {
                let block = c.c_in * c.k * c.k;
                c.weight = kept
                    .iter()
                    .flat_map(|&o| c.weight[o * block..(o + 1) * block].to_vec())
                    .collect();
                c.bias = kept.iter().map(|&o| c.bias[o]).collect();
                c.c_out = kept.len();
            }
            Layer::Dense(d) => {
                d.weight = kept
                    .iter()
                    .flat_map(|&o| d.weight[o * d.inputs..(o + 1) * d.inputs].to_vec())
                    .collect();
                d.bias = kept.iter().map(|&o| d.bias[o]).collect();
                d.units = kept.len();
            }
            _ => unreachable!("checked by check_mask"),
        }
        for j in layer_index + 1..next {
            if let Layer::BatchNorm(b) = &mut out.layers[j] {
                let idx = slab(b.channels());
                let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
                *b = BatchNorm {
                    gamma: pick(&b.gamma),
                    beta: pick(&b.beta),
                    running_mean: pick(&b.running_mean),
                    running_var: pick(&b.running_var),
                    ..*b
                };
            }
        }
        match &mut out.layers[next] {
            Layer::Conv2d(c) => {
                let kk = c.k * c.k;
                let mut w = Vec::with_capacity(c.c_out * kept.len() * kk);
                for o in 0..c.c_out {
                    for &ci in &kept {
                        let base = (o * c.c_in + ci) * kk;
                        w.extend_from_slice(&c.weight[base..base + kk]);
                    }
                }
                c.weight = w;
                c.c_in = kept.len();
            }
            Layer::Dense(d) => {
                let cols = slab(shapes[next][0]);
                d.weight = (0..d.units)
                    .flat_map(|u| cols.iter().map(move |&i| (u, i)))
                    .map(|(u, i)| d.weight[u * d.inputs + i])
                    .collect();
                d.inputs = cols.len();
            }
            _ => unreachable!("next_param_layer returns conv or dense"),
        }
        out.shapes()?;
        Ok(out)
    }
}

fn conv_dims(c: &Conv2d, s: &[usize], n: usize) -> ConvDims {
    ConvDims {
        n,
        c_in: c.c_in,
        h: s[1],
        w: s[2],
        c_out: c.c_out,
        k: c.k,
        stride: c.stride,
    }
}

fn zero_channels(a: &mut [f64], n: usize, keep: &[bool]) {
    let per_sample = a.len() / n;
    let g = per_sample / keep.len();
    for s in 0..n {
        for (c, _) in keep.iter().enumerate().filter(|(_, &k)| !k) {
            let start = s * per_sample + c * g;
            a[start..start + g].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Names accepted by [`build_arch`].
pub const ARCHITECTURES: [&str; 4] = ["tiny_mlp", "tiny_mlp_bn", "tiny_cnn", "tiny_cnn_bn"];

/// `flatten -> dense(hidden) -> [batchnorm] -> relu -> dense(classes)`.
pub fn tiny_mlp(
    input_shape: &[usize],
    classes: usize,
    hidden: usize,
    bn: bool,
    rng: &mut impl Rng,
) -> Network {
    let inputs = input_shape.iter().product();
    let mut layers = vec![
        Layer::Flatten,
        Layer::Dense(Dense::init(inputs, hidden, rng)),
    ];
    if bn {
        layers.push(Layer::BatchNorm(BatchNorm::new(hidden)));
    }
    layers.extend([Layer::Relu, Layer::Dense(Dense::init(hidden, classes, rng))]);
    Network::new(input_shape.to_vec(), layers).expect("consistent architecture")
}

/// `conv(channels, k3) -> [batchnorm] -> relu -> maxpool2 -> flatten -> dense(classes)`.
pub fn tiny_cnn(
    input_shape: &[usize],
    classes: usize,
    channels: usize,
    bn: bool,
    rng: &mut impl Rng,
) -> Network {
    let c_in = input_shape[0];
    let mut layers = vec![Layer::Conv2d(Conv2d::init(c_in, channels, 3, 1, rng))];
    if bn {
        layers.push(Layer::BatchNorm(BatchNorm::new(channels)));
    }
    layers.extend([Layer::Relu, Layer::MaxPool2, Layer::Flatten]);
    let probe =
        Network::new(input_shape.to_vec(), layers.clone()).expect("consistent architecture");
    let flat = probe.output_len();
    layers.push(Layer::Dense(Dense::init(flat, classes, rng)));
    Network::new(input_shape.to_vec(), layers).expect("consistent architecture")
}

/// Builds a registered architecture for `input_shape` (`[C, H, W]`).
pub fn build_arch(
    name: &str,
    input_shape: &[usize],
    classes: usize,
    rng: &mut impl Rng,
) -> Option<Network> {
    Some(match name {
        "tiny_mlp" => tiny_mlp(input_shape, classes, 32, false, rng),
        "tiny_mlp_bn" => tiny_mlp(input_shape, classes, 32, true, rng),
        "tiny_cnn" => tiny_cnn(input_shape, classes, 8, false, rng),
        "tiny_cnn_bn" => tiny_cnn(input_shape, classes, 8, true, rng),
        _ => return None,
    })
}
