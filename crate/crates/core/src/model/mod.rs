//! 3D UNet / UNet-MSS with LeakyReLU activations and sigmoid heads.
//!
//! Each resolution level is two `3x3x3 conv -> instance norm -> LeakyReLU`
//! stages. Downsampling is 2x max-pooling, upsampling a stride-2 transposed
//! convolution followed by skip concatenation. UNet-MSS attaches a `1x1x1`
//! sigmoid head to the top `mss_levels` decoder resolutions; plain UNet keeps
//! only the full-resolution head.
//!
//! All parameters live in one flat `f32` vector so optimizers, clipping and
//! checkpoints work on a single slice.

pub mod ops;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, ScalarVolume};
use ops::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unet,
    UnetMss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub base_features: usize,
    pub depth: usize,
    pub mss_levels: usize,
    pub negative_slope: f32,
    pub variant: Variant,
    /// Initial foreground probability of every head; sets the head bias to its logit.
    pub output_prior: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 1,
            base_features: 16,
            depth: 3,
            mss_levels: 3,
            negative_slope: 0.01,
            variant: Variant::UnetMss,
            output_prior: 0.5,
        }
    }
}

impl ModelConfig {
    /// Number of probability outputs the network produces.
    pub fn output_levels(&self) -> usize {
        match self.variant {
            Variant::Unet => 1,
            Variant::UnetMss => self.mss_levels,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.in_channels != 1 {
            issues.push(format!("model.in_channels: must be 1, got {}", self.in_channels));
        }
        if self.base_features == 0 {
            issues.push("model.base_features: must be >= 1".into());
        }
        if self.depth == 0 || self.depth > 6 {
            issues.push(format!("model.depth: must be in 1..=6, got {}", self.depth));
        }
        if self.mss_levels == 0 || self.mss_levels > self.depth {
            issues.push(format!(
                "model.mss_levels: must be in 1..=depth ({}), got {}",
                self.depth, self.mss_levels
            ));
        }
        if !(self.negative_slope > 0.0 && self.negative_slope < 1.0) {
            issues.push(format!(
                "model.negative_slope: must be in (0, 1), got {}",
                self.negative_slope
            ));
        }
        if !(self.output_prior > 0.0 && self.output_prior < 1.0) {
            issues.push(format!("model.output_prior: must be in (0, 1), got {}", self.output_prior));
        }
        issues
    }

    /// Input extents must be divisible by this.
    pub fn size_divisor(&self) -> usize {
        1 << (self.depth - 1)
    }

    fn features(&self, level: usize) -> usize {
        self.base_features << level
    }
}

/// Named slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug)]
struct ConvSpec {
    cin: usize,
    cout: usize,
    k: usize,
    weight: usize,
    bias: Option<usize>,
}

#[derive(Clone, Debug)]
struct NormSpec {
    channels: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug)]
struct BlockSpec {
    conv1: ConvSpec,
    norm1: NormSpec,
    conv2: ConvSpec,
    norm2: NormSpec,
}

#[derive(Clone, Debug)]
struct UpSpec {
    cin: usize,
    cout: usize,
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    encoders: Vec<BlockSpec>,
    /// Indexed by resolution level `0..depth-1`.
    ups: Vec<UpSpec>,
    decoders: Vec<BlockSpec>,
    /// Head `j` reads the decoder output at resolution level `j`.
    heads: Vec<ConvSpec>,
    groups: Vec<ParamGroup>,
    total: usize,
}

struct LayoutBuilder {
    groups: Vec<ParamGroup>,
    total: usize,
}

impl LayoutBuilder {
    fn alloc(&mut self, name: String, len: usize) -> usize {
        let offset = self.total;
        self.groups.push(ParamGroup { name, offset, len });
        self.total += len;
        offset
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> ConvSpec {
        let weight = self.alloc(format!("{name}.weight"), cout * cin * k * k * k);
        let bias = bias.then(|| self.alloc(format!("{name}.bias"), cout));
        ConvSpec { cin, cout, k, weight, bias }
    }

    fn norm(&mut self, name: &str, channels: usize) -> NormSpec {
        let gamma = self.alloc(format!("{name}.gamma"), channels);
        let beta = self.alloc(format!("{name}.beta"), channels);
        NormSpec { channels, gamma, beta }
    }

    // Convolutions feeding a normalisation carry no bias: it would be
    // cancelled by the mean subtraction.
    fn block(&mut self, name: &str, cin: usize, cout: usize) -> BlockSpec {
        BlockSpec {
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, false),
            norm1: self.norm(&format!("{name}.norm1"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, false),
            norm2: self.norm(&format!("{name}.norm2"), cout),
        }
    }
}

impl Layout {
    fn new(config: &ModelConfig) -> Self {
        let mut b = LayoutBuilder { groups: Vec::new(), total: 0 };
        let depth = config.depth;
        let encoders = (0..depth)
            .map(|i| {
                let cin = if i == 0 { config.in_channels } else { config.features(i - 1) };
                b.block(&format!("enc{i}"), cin, config.features(i))
            })
            .collect();
        let mut ups = Vec::new();
        let mut decoders = Vec::new();
        for i in 0..depth.saturating_sub(1) {
            let (cin, cout) = (config.features(i + 1), config.features(i));
            let weight = b.alloc(format!("up{i}.weight"), cin * cout * 8);
            let bias = b.alloc(format!("up{i}.bias"), cout);
            ups.push(UpSpec { cin, cout, weight, bias });
            decoders.push(b.block(&format!("dec{i}"), 2 * cout, cout));
        }
        let heads = (0..config.output_levels())
            .map(|j| b.conv(&format!("head{j}"), config.features(j), 1, 1, true))
            .collect();
        Layout {
            encoders,
            ups,
            decoders,
            heads,
            groups: b.groups,
            total: b.total,
        }
    }
}

/// Total trainable parameters implied by `config`.
pub fn parameter_count(config: &ModelConfig) -> usize {
    Layout::new(config).total
}

struct BlockCache {
    input: Tensor,
    norm1: ops::NormCache,
    act1: Tensor,
    norm2: ops::NormCache,
    act2: Tensor,
}

/// Activations retained by [`UNet::forward_train`] for the backward pass.
pub struct ForwardCache {
    encoders: Vec<BlockCache>,
    pool_args: Vec<Vec<u32>>,
    ups_input: Vec<Tensor>,
    decoders: Vec<BlockCache>,
    head_inputs: Vec<Tensor>,
    outputs: Vec<Tensor>,
}

/// One sample's predictions, finest level first, each `[1, d, h, w]`.
pub type LevelOutputs = Vec<Tensor>;

#[derive(Clone, Debug)]
pub struct UNet {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f32>,
}

impl UNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let issues = config.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let layout = Layout::new(&config);
        let mut params = vec![0.0f32; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain2 = 2.0 / (1.0 + (config.negative_slope as f64).powi(2));
        let mut fill = |offset: usize, len: usize, fan_in: usize, gain2: f64, rng: &mut ChaCha8Rng| {
            let normal = Normal::new(0.0, (gain2 / fan_in as f64).sqrt()).expect("finite std");
            for p in &mut params[offset..offset + len] {
                *p = normal.sample(rng) as f32;
            }
        };
        for block in layout.encoders.iter().chain(&layout.decoders) {
            for conv in [&block.conv1, &block.conv2] {
                fill(conv.weight, conv.cout * conv.cin * 27, conv.cin * 27, gain2, &mut rng);
            }
        }
        for up in &layout.ups {
            fill(up.weight, up.cin * up.cout * 8, up.cin, gain2, &mut rng);
        }
        for head in &layout.heads {
            fill(head.weight, head.cin, head.cin, 1.0, &mut rng);
        }
        for block in layout.encoders.iter().chain(&layout.decoders) {
            for norm in [&block.norm1, &block.norm2] {
                params[norm.gamma..norm.gamma + norm.channels].fill(1.0);
            }
        }
        let prior = config.output_prior;
        let head_bias = (prior / (1.0 - prior)).ln() as f32;
        for b in layout.heads.iter().filter_map(|h| h.bias) {
            params[b] = head_bias;
        }
        Ok(UNet { config, layout, params })
    }

    /// Rebuilds a network around previously saved parameters.
    pub fn from_params(config: ModelConfig, params: Vec<f32>) -> Result<Self> {
        let issues = config.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "config implies {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(UNet { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.layout.groups
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.config.in_channels {
            return Err(Error::Shape(format!(
                "expected {} input channels, got {}",
                self.config.in_channels, x.channels
            )));
        }
        let div = self.config.size_divisor();
        if x.dims.iter().any(|&d| d == 0 || d % div != 0) {
            return Err(Error::Shape(format!(
                "input extents {:?} must be positive multiples of {div}",
                x.dims
            )));
        }
        Ok(())
    }

    fn p(&self, offset: usize, len: usize) -> &[f32] {
        &self.params[offset..offset + len]
    }

    fn conv(&self, spec: &ConvSpec, x: &Tensor) -> Tensor {
        let w = self.p(spec.weight, spec.cout * spec.cin * spec.k.pow(3));
        let b = spec.bias.map(|o| self.p(o, spec.cout));
        ops::conv3d_forward(x, w, b, spec.cout, spec.k)
    }

    fn norm_act(&self, spec: &NormSpec, x: &Tensor) -> (Tensor, ops::NormCache) {
        let (mut y, cache) = ops::instance_norm_forward(
            x,
            self.p(spec.gamma, spec.channels),
            self.p(spec.beta, spec.channels),
        );
        ops::leaky_relu_inplace(&mut y, self.config.negative_slope);
        (y, cache)
    }

    fn block_forward(&self, spec: &BlockSpec, input: Tensor) -> BlockCache {
        let c1 = self.conv(&spec.conv1, &input);
        let (act1, norm1) = self.norm_act(&spec.norm1, &c1);
        drop(c1);
        let c2 = self.conv(&spec.conv2, &act1);
        let (act2, norm2) = self.norm_act(&spec.norm2, &c2);
        BlockCache { input, norm1, act1, norm2, act2 }
    }

    fn block_backward(
        &self,
        spec: &BlockSpec,
        cache: &BlockCache,
        mut grad: Tensor,
        grads: &mut [f32],
        need_dx: bool,
    ) -> Option<Tensor> {
        let slope = self.config.negative_slope;
        ops::leaky_relu_backward_inplace(&mut grad, &cache.act2, slope);
        let g = self.norm_backward(&spec.norm2, &cache.norm2, &grad, grads);
        let mut g = self
            .conv_backward(&spec.conv2, &cache.act1, &g, grads, true)
            .expect("input gradient requested");
        ops::leaky_relu_backward_inplace(&mut g, &cache.act1, slope);
        let g = self.norm_backward(&spec.norm1, &cache.norm1, &g, grads);
        self.conv_backward(&spec.conv1, &cache.input, &g, grads, need_dx)
    }

    fn norm_backward(&self, spec: &NormSpec, cache: &ops::NormCache, dy: &Tensor, grads: &mut [f32]) -> Tensor {
        let c = spec.channels;
        let (lo, hi) = grads.split_at_mut(spec.beta);
        let dgamma = &mut lo[spec.gamma..spec.gamma + c];
        let dbeta = &mut hi[..c];
        ops::instance_norm_backward(dy, cache, self.p(spec.gamma, c), dgamma, dbeta)
    }

    fn conv_backward(
        &self,
        spec: &ConvSpec,
        x: &Tensor,
        dy: &Tensor,
        grads: &mut [f32],
        need_dx: bool,
    ) -> Option<Tensor> {
        let wlen = spec.cout * spec.cin * spec.k.pow(3);
        let w = self.p(spec.weight, wlen);
        match spec.bias {
            Some(b) => {
                let (lo, hi) = grads.split_at_mut(b);
                ops::conv3d_backward(x, w, dy, spec.k, &mut lo[spec.weight..spec.weight + wlen], Some(&mut hi[..spec.cout]), need_dx)
            }
            None => ops::conv3d_backward(x, w, dy, spec.k, &mut grads[spec.weight..spec.weight + wlen], None, need_dx),
        }
    }

    fn head_forward(&self, spec: &ConvSpec, x: &Tensor) -> Tensor {
        let mut y = self.conv(spec, x);
        y.data.iter_mut().for_each(|v| *v = ops::sigmoid(*v));
        y
    }

    /// Runs the network and keeps every activation needed by [`UNet::backward`].
    pub fn forward_train(&self, input: Tensor) -> Result<(LevelOutputs, ForwardCache)> {
        self.check_input(&input)?;
        let depth = self.config.depth;
        let mut encoders: Vec<BlockCache> = Vec::with_capacity(depth);
        let mut pool_args = Vec::with_capacity(depth - 1);
        encoders.push(self.block_forward(&self.layout.encoders[0], input));
        for i in 1..depth {
            let (pooled, arg) = ops::maxpool2_forward(&encoders[i - 1].act2);
            pool_args.push(arg);
            encoders.push(self.block_forward(&self.layout.encoders[i], pooled));
        }

        // Decoder outputs by level; the bottleneck doubles as the coarsest one.
        let mut level_features: Vec<Option<Tensor>> = vec![None; depth];
        level_features[depth - 1] = Some(encoders[depth - 1].act2.clone());
        let mut ups_input = vec![Tensor::zeros(0, [0, 0, 0]); depth.saturating_sub(1)];
        let mut decoders: Vec<Option<BlockCache>> = (0..depth.saturating_sub(1)).map(|_| None).collect();
        for i in (0..depth.saturating_sub(1)).rev() {
            let below = level_features[i + 1].clone().expect("coarser level computed");
            let up = &self.layout.ups[i];
            let u = ops::upconv2_forward(&below, self.p(up.weight, up.cin * up.cout * 8), self.p(up.bias, up.cout), up.cout);
            ups_input[i] = below;
            let cat = ops::concat_channels(&u, &encoders[i].act2);
            let cache = self.block_forward(&self.layout.decoders[i], cat);
            level_features[i] = Some(cache.act2.clone());
            decoders[i] = Some(cache);
        }

        let mut head_inputs = Vec::new();
        let mut outputs = Vec::new();
        for (j, head) in self.layout.heads.iter().enumerate() {
            let feat = level_features[j].take().expect("level features");
            outputs.push(self.head_forward(head, &feat));
            head_inputs.push(feat);
        }
        let cache = ForwardCache {
            encoders,
            pool_args,
            ups_input,
            decoders: decoders.into_iter().map(|c| c.expect("decoder level")).collect(),
            head_inputs,
            outputs: outputs.clone(),
        };
        Ok((outputs, cache))
    }

    /// Inference pass; identical arithmetic to training mode.
    pub fn forward(&self, input: Tensor) -> Result<LevelOutputs> {
        self.forward_train(input).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients for one sample into `grads`, given the
    /// loss gradient with respect to each output probability.
    pub fn backward(&self, cache: &ForwardCache, d_outputs: &[Tensor], grads: &mut [f32]) -> Result<()> {
        if grads.len() != self.layout.total {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, model has {}",
                grads.len(),
                self.layout.total
            )));
        }
        if d_outputs.len() != cache.outputs.len() {
            return Err(Error::Shape(format!(
                "expected {} output gradients, got {}",
                cache.outputs.len(),
                d_outputs.len()
            )));
        }
        let depth = self.config.depth;
        let mut level_grads: Vec<Option<Tensor>> = vec![None; depth];
        for (j, head) in self.layout.heads.iter().enumerate() {
            let p = &cache.outputs[j];
            let mut dz = d_outputs[j].clone();
            if dz.dims != p.dims || dz.channels != 1 {
                return Err(Error::Shape(format!("output gradient {j} has the wrong shape")));
            }
            dz.data.iter_mut().zip(&p.data).for_each(|(g, &pv)| *g *= pv * (1.0 - pv));
            let dfeat = self
                .conv_backward(head, &cache.head_inputs[j], &dz, grads, true)
                .expect("input gradient requested");
            level_grads[j] = Some(dfeat);
        }

        let mut skip_grads: Vec<Option<Tensor>> = vec![None; depth];
        for i in 0..depth.saturating_sub(1) {
            let g = level_grads[i].take().unwrap_or_else(|| Tensor::zeros(self.layout.decoders[i].norm2.channels, cache.decoders[i].act2.dims));
            let dcat = self
                .block_backward(&self.layout.decoders[i], &cache.decoders[i], g, grads, true)
                .expect("input gradient requested");
            let up = &self.layout.ups[i];
            let (du, dskip) = ops::split_channels(&dcat, up.cout);
            skip_grads[i] = Some(dskip);
            let wlen = up.cin * up.cout * 8;
            let (lo, hi) = grads.split_at_mut(up.bias);
            let dbelow = ops::upconv2_backward(
                &cache.ups_input[i],
                self.p(up.weight, wlen),
                &du,
                &mut lo[up.weight..up.weight + wlen],
                &mut hi[..up.cout],
            );
            level_grads[i + 1] = Some(match level_grads[i + 1].take() {
                Some(mut g) => {
                    g.data.iter_mut().zip(&dbelow.data).for_each(|(a, b)| *a += b);
                    g
                }
                None => dbelow,
            });
        }

        let mut g = level_grads[depth - 1]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.config.features(depth - 1), cache.encoders[depth - 1].act2.dims));
        for i in (0..depth).rev() {
            if let Some(skip) = skip_grads[i].take() {
                g.data.iter_mut().zip(&skip.data).for_each(|(a, b)| *a += b);
            }
            let enc = &cache.encoders[i];
            let dx = self.block_backward(&self.layout.encoders[i], enc, g, grads, i > 0);
            if i == 0 {
                break;
            }
            let dx = dx.expect("input gradient requested");
            g = ops::maxpool2_backward(&dx, &cache.pool_args[i - 1], cache.encoders[i - 1].act2.dims);
        }
        Ok(())
    }

    /// Full-resolution probabilities for one single-channel patch.
    pub fn predict_patch(&self, patch: &ScalarVolume) -> Result<Vec<f32>> {
        let input = Tensor::from_data(1, patch.dims(), patch.data().to_vec());
        let mut outputs = self.forward(input)?;
        Ok(outputs.swap_remove(0).data)
    }
}

/// Spatial extents of each output level for an input of `dims`.
pub fn level_dims(config: &ModelConfig, dims: Dims) -> Vec<Dims> {
    (0..config.output_levels())
        .map(|j| [dims[0] >> j, dims[1] >> j, dims[2] >> j])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(variant: Variant) -> ModelConfig {
        ModelConfig {
            base_features: 2,
            depth: 3,
            mss_levels: 3,
            variant,
            ..ModelConfig::default()
        }
    }

    fn random_input(seed: u64, dims: Dims) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        Tensor::from_data(1, dims, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    }

    #[test]
    fn output_shapes_follow_levels() {
        let net = UNet::new(tiny(Variant::UnetMss), 0).unwrap();
        let out = net.forward(random_input(1, [16, 16, 16])).unwrap();
        let dims: Vec<Dims> = out.iter().map(|t| t.dims).collect();
        assert_eq!(dims, vec![[16; 3], [8; 3], [4; 3]]);
        assert!(out.iter().all(|t| t.channels == 1));
        assert!(out.iter().flat_map(|t| &t.data).all(|v| (0.0..=1.0).contains(v)));

        let plain = UNet::new(tiny(Variant::Unet), 0).unwrap();
        assert_eq!(plain.forward(random_input(1, [8, 8, 8])).unwrap().len(), 1);
    }

    #[test]
    fn indivisible_input_is_a_shape_error() {
        let net = UNet::new(tiny(Variant::UnetMss), 0).unwrap();
        assert!(matches!(net.forward(random_input(1, [6, 8, 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let net = UNet::new(tiny(Variant::UnetMss), 3).unwrap();
        let a = net.forward(random_input(2, [8, 8, 8])).unwrap();
        let b = net.forward(random_input(2, [8, 8, 8])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_prior_sets_head_bias() {
        let cfg = ModelConfig { output_prior: 0.2, ..tiny(Variant::UnetMss) };
        let net = UNet::new(cfg, 0).unwrap();
        let heads: Vec<_> = net.param_groups().iter().filter(|g| g.name.ends_with(".bias") && g.name.starts_with("head")).collect();
        assert_eq!(heads.len(), 3);
        for g in heads {
            assert!((net.params()[g.offset] as f64 - (0.25f64).ln()).abs() < 1e-6);
        }
        let bad = ModelConfig { output_prior: 1.0, ..ModelConfig::default() };
        assert!(bad.validate().iter().any(|i| i.starts_with("model.output_prior")));
    }

    #[test]
    fn toy_parameter_count_by_hand() {
        // conv 1->1 (27) + norm (2) + conv 1->1 (27) + norm (2) + head (1 + 1)
        let cfg = ModelConfig { base_features: 1, depth: 1, mss_levels: 1, ..ModelConfig::default() };
        assert_eq!(parameter_count(&cfg), 60);
        assert_eq!(parameter_count(&cfg), parameter_count(&cfg.clone()));
    }

    #[test]
    fn default_parameter_count_by_layer_arithmetic() {
        let cfg = ModelConfig::default();
        let block = |cin: usize, cout: usize| 27 * cin * cout + 27 * cout * cout + 4 * cout;
        let expected = block(1, 16) + block(16, 32) + block(32, 64)
            + (8 * 32 * 16 + 16) + block(32, 16)
            + (8 * 64 * 32 + 32) + block(64, 32)
            + (16 + 1) + (32 + 1) + (64 + 1);
        assert_eq!(parameter_count(&cfg), expected);
        let doubled = ModelConfig { base_features: 32, ..cfg };
        let ratio = parameter_count(&doubled) as f64 / expected as f64;
        assert!((3.8..4.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn every_parameter_group_receives_gradient() {
        let net = UNet::new(tiny(Variant::UnetMss), 11).unwrap();
        let (out, cache) = net.forward_train(random_input(5, [8, 8, 8])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d: Vec<Tensor> = out
            .iter()
            .map(|t| Tensor::from_data(1, t.dims, (0..t.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&cache, &d, &mut grads).unwrap();
        for g in net.param_groups() {
            assert!(
                grads[g.offset..g.offset + g.len].iter().any(|&v| v != 0.0),
                "dead parameter group {}",
                g.name
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = ModelConfig { base_features: 2, depth: 2, mss_levels: 2, ..ModelConfig::default() };
        let net = UNet::new(cfg.clone(), 4).unwrap();
        let input = random_input(6, [4, 4, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let weights: Vec<Vec<f32>> = net
            .forward(input.clone())
            .unwrap()
            .iter()
            .map(|t| (0..t.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let objective = |net: &UNet| -> f64 {
            net.forward(input.clone())
                .unwrap()
                .iter()
                .zip(&weights)
                .map(|(t, w)| t.data.iter().zip(w).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>())
                .sum()
        };
        let (out, cache) = net.forward_train(input.clone()).unwrap();
        let d: Vec<Tensor> = out
            .iter()
            .zip(&weights)
            .map(|(t, w)| Tensor::from_data(1, t.dims, w.clone()))
            .collect();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&cache, &d, &mut grads).unwrap();
        let mut checked = 0;
        for g in net.param_groups() {
            let i = g.offset + g.len / 2;
            let h = 2e-3f32;
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h as f64);
            let an = grads[i] as f64;
            let tol = 2e-2 * fd.abs().max(an.abs()).max(1e-2);
            assert!((fd - an).abs() <= tol, "{}: fd {fd} vs analytic {an}", g.name);
            checked += 1;
        }
        assert_eq!(checked, net.param_groups().len());
    }
}
