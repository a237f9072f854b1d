//! Fixed-architecture differentiable networks: sequential stacks of dense,
//! convolution, layer-norm and ReLU layers, the two-encoder critic, and the
//! goal-conditioned policy head. Parameters and gradients are exposed as flat
//! vectors so the optimizer, checkpoints, and finite-difference checks all
//! share one layout.

pub mod adam;
pub mod checkpoint;
pub mod fd;
mod features;
mod layers;

pub use adam::Adam;
pub use features::{action_features, obs_features};
pub use layers::{
    conv_out_size, layer_norm_forward, Conv2d, Dense, Layer, LayerCache, LayerNorm,
    LAYER_NORM_EPS,
};

use crate::env::{ActionSpace, ObsSpace};
use crate::error::{Error, Result};
use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use layers::{layer_backward, layer_forward, read_layer_params, write_layer_params};

/// An ordered stack of layers mapping `[B, input_dim]` to `[B, output_dim]`.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub input_dim: usize,
    pub output_dim: usize,
}

pub struct NetCache {
    caches: Vec<LayerCache>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_dim: usize) -> Self {
        let mut dim = input_dim;
        for layer in &layers {
            dim = layer.out_dim(dim);
        }
        Network {
            layers,
            input_dim,
            output_dim: dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Flat parameter view, layer order, weights before biases.
    pub fn read_params(&self, out: &mut [f64]) {
        let mut off = 0;
        for layer in &self.layers {
            let n = layer.param_count();
            read_layer_params(layer, &mut out[off..off + n]);
            off += n;
        }
    }

    pub fn write_params(&mut self, src: &[f64]) {
        let mut off = 0;
        for layer in &mut self.layers {
            let n = layer.param_count();
            write_layer_params(layer, &src[off..off + n]);
            off += n;
        }
    }

    /// Forward pass keeping per-layer state for the backward pass.
    pub fn forward(&self, x: Array2<f64>) -> (Array2<f64>, NetCache) {
        debug_assert_eq!(x.ncols(), self.input_dim);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let (next, cache) = layer_forward(layer, cur);
            caches.push(cache);
            cur = next;
        }
        (cur, NetCache { caches })
    }

    /// Backward pass: accumulates parameter gradients into `grads` (same flat
    /// layout as `read_params`) and returns the gradient w.r.t. the input.
    pub fn backward(&self, cache: &NetCache, gout: Array2<f64>, grads: &mut [f64]) -> Array2<f64> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let mut cur = gout;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let n = layer.param_count();
            let o = offsets[i];
            cur = layer_backward(layer, &cache.caches[i], cur, &mut grads[o..o + n]);
        }
        cur
    }

    /// Smallest |preactivation| feeding any ReLU during a forward pass.
    /// Finite-difference checks reject instances where this margin is small
    /// enough that the probe step could flip a unit.
    pub fn relu_margin(&self, x: Array2<f64>) -> f64 {
        let mut margin = f64::INFINITY;
        let mut cur = x;
        for layer in &self.layers {
            if matches!(layer, Layer::Relu) {
                margin = cur.iter().fold(margin, |m, &v| m.min(v.abs()));
            }
            let (next, _) = layer_forward(layer, cur);
            cur = next;
        }
        margin
    }

    /// Fan-in-scaled uniform initialization for every weight layer
    /// (bound `sqrt(1/fan_in)`); biases zero, layer-norm gain one.
    pub fn init_fan_in(&mut self, rng: &mut ChaCha8Rng) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    let bound = (1.0 / d.w.nrows() as f64).sqrt();
                    d.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                    d.b.fill(0.0);
                }
                Layer::Conv2d(c) => {
                    let bound = (1.0 / c.w.nrows() as f64).sqrt();
                    c.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                    c.b.fill(0.0);
                }
                Layer::LayerNorm(l) => {
                    l.gain.fill(1.0);
                    l.bias.fill(0.0);
                }
                Layer::Relu => {}
            }
        }
    }

    /// Reinitialize the final dense layer with `Unif[-range, range]` weights
    /// and zero bias. Tiny ranges keep early representations aligned.
    pub fn cold_init(&mut self, range: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let last = self
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d),
                _ => None,
            })
            .ok_or_else(|| Error::invalid("network has no dense layer"))?;
        if range > 0.0 {
            last.w.mapv_inplace(|_| rng.random_range(-range..range));
        } else {
            last.w.fill(0.0);
        }
        last.b.fill(0.0);
        Ok(())
    }
}

/// Architecture knobs shared by the critic encoders and the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    /// Prepend the 3-layer convolutional feature extractor (image inputs).
    pub cnn: bool,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub use_layer_norm: bool,
}

impl ArchConfig {
    pub fn for_obs(obs: &ObsSpace, mlp_width: usize, mlp_depth: usize, use_layer_norm: bool) -> Self {
        ArchConfig {
            cnn: obs.is_image(),
            mlp_width,
            mlp_depth,
            use_layer_norm,
        }
    }
}

/// The convolutional trunk: kernels (8, 4, 3), channels (32, 64, 64),
/// strides (4, 2, 1), paddings (2, 1, 1), layer norm before each ReLU.
fn conv3_stack(h: usize, w: usize, c: usize, use_layer_norm: bool) -> Result<Network> {
    let specs = [(8usize, 4usize, 2usize, 32usize), (4, 2, 1, 64), (3, 1, 1, 64)];
    let mut layers = Vec::new();
    let (mut ch, mut cw, mut cc) = (h, w, c);
    for (k, s, p, c_out) in specs {
        if ch + 2 * p < k || cw + 2 * p < k {
            return Err(Error::invalid(format!(
                "image {ch}x{cw} too small for conv kernel {k}"
            )));
        }
        let conv = Conv2d::new(ch, cw, cc, c_out, k, s, p);
        ch = conv.h_out;
        cw = conv.w_out;
        cc = c_out;
        let dim = conv.out_dim();
        layers.push(Layer::Conv2d(conv));
        if use_layer_norm {
            layers.push(Layer::LayerNorm(LayerNorm::new(dim)));
        }
        layers.push(Layer::Relu);
    }
    Ok(Network::new(layers, h * w * c))
}

/// MLP with layer norm before every ReLU and a linear output layer.
/// `depth = 0` degenerates to a single linear map.
fn mlp_stack(input_dim: usize, width: usize, depth: usize, out_dim: usize, use_layer_norm: bool) -> Network {
    let mut layers = Vec::new();
    let mut dim = input_dim;
    for _ in 0..depth {
        layers.push(Layer::Dense(Dense::new(dim, width)));
        if use_layer_norm {
            layers.push(Layer::LayerNorm(LayerNorm::new(width)));
        }
        layers.push(Layer::Relu);
        dim = width;
    }
    layers.push(Layer::Dense(Dense::new(dim, out_dim)));
    Network::new(layers, input_dim)
}

/// Observation encoder: an optional convolutional trunk, auxiliary features
/// (the action, for the state-action head) appended to the trunk output, and
/// an MLP head producing the representation.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub trunk: Option<Network>,
    pub head: Network,
    pub aux_dim: usize,
}

pub struct EncCache {
    trunk: Option<NetCache>,
    head: NetCache,
    trunk_out: usize,
}

impl Encoder {
    pub fn out_dim(&self) -> usize {
        self.head.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.trunk.as_ref().map_or(0, |t| t.param_count()) + self.head.param_count()
    }

    pub fn read_params(&self, out: &mut [f64]) {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        if let Some(t) = &self.trunk {
            t.read_params(&mut out[..split]);
        }
        self.head.read_params(&mut out[split..]);
    }

    pub fn write_params(&mut self, src: &[f64]) {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        if let Some(t) = &mut self.trunk {
            t.write_params(&src[..split]);
        }
        self.head.write_params(&src[split..]);
    }

    /// Forward over observation features plus optional auxiliary features.
    pub fn forward(&self, obs: Array2<f64>, aux: Option<&Array2<f64>>) -> (Array2<f64>, EncCache) {
        debug_assert_eq!(
            aux.map_or(0, |a| a.ncols()),
            self.aux_dim,
            "auxiliary feature width mismatch"
        );
        let (feats, trunk_cache) = match &self.trunk {
            Some(t) => {
                let (f, c) = t.forward(obs);
                (f, Some(c))
            }
            None => (obs, None),
        };
        let trunk_out = feats.ncols();
        let z = match aux {
            Some(a) => concatenate![Axis(1), feats, *a],
            None => feats,
        };
        let (out, head_cache) = self.head.forward(z);
        (
            out,
            EncCache {
                trunk: trunk_cache,
                head: head_cache,
                trunk_out,
            },
        )
    }

    /// Backward: accumulates into `grads` (trunk params then head params) and
    /// returns the gradient w.r.t. the auxiliary features.
    pub fn backward(&self, cache: &EncCache, gout: Array2<f64>, grads: &mut [f64]) -> Array2<f64> {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        let gz = self.head.backward(&cache.head, gout, &mut grads[split..]);
        let gaux = gz.slice(ndarray::s![.., cache.trunk_out..]).to_owned();
        if let (Some(t), Some(tc)) = (&self.trunk, &cache.trunk) {
            let gfeats = gz.slice(ndarray::s![.., ..cache.trunk_out]).to_owned();
            t.backward(tc, gfeats, &mut grads[..split]);
        }
        gaux
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        if let Some(t) = &mut self.trunk {
            t.init_fan_in(rng);
        }
        self.head.init_fan_in(rng);
    }

    pub fn cold_init(&mut self, range: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        self.head.cold_init(range, rng)
    }

    /// ReLU kink margin across trunk and head for one input batch.
    pub fn relu_margin(&self, obs: Array2<f64>, aux: Option<&Array2<f64>>) -> f64 {
        let (feats, trunk_margin) = match &self.trunk {
            Some(t) => {
                let m = t.relu_margin(obs.clone());
                let (f, _) = t.forward(obs);
                (f, m)
            }
            None => (obs, f64::INFINITY),
        };
        let z = match aux {
            Some(a) => concatenate![Axis(1), feats, *a],
            None => feats,
        };
        trunk_margin.min(self.head.relu_margin(z))
    }
}

/// Build an encoder for an observation space. Image observations require the
/// convolutional trunk and vector/tabular observations forbid it.
pub fn build_encoder(obs: &ObsSpace, aux_dim: usize, arch: &ArchConfig, repr_dim: usize) -> Result<Encoder> {
    if repr_dim == 0 {
        return Err(Error::invalid("repr_dim must be positive"));
    }
    let trunk = match (obs, arch.cnn) {
        (ObsSpace::Image { h, w, c }, true) => Some(conv3_stack(*h, *w, *c, arch.use_layer_norm)?),
        (ObsSpace::Image { .. }, false) => {
            return Err(Error::invalid("image observations require the cnn trunk"))
        }
        (_, true) => {
            return Err(Error::invalid(
                "cnn trunk requires image observations",
            ))
        }
        (_, false) => None,
    };
    let feat_dim = trunk.as_ref().map_or(obs.feat_dim(), |t| t.output_dim);
    let head = mlp_stack(
        feat_dim + aux_dim,
        arch.mlp_width,
        arch.mlp_depth,
        repr_dim,
        arch.use_layer_norm,
    );
    Ok(Encoder {
        trunk,
        head,
        aux_dim,
    })
}

/// Paired critic encoders `f(s, a, g) = phi(s, a)^T psi(g)`.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub phi: Encoder,
    pub psi: Encoder,
    pub repr_dim: usize,
}

impl CriticPair {
    pub fn param_count(&self) -> usize {
        self.phi.param_count() + self.psi.param_count()
    }

    pub fn read_params(&self, out: &mut [f64]) {
        let split = self.phi.param_count();
        self.phi.read_params(&mut out[..split]);
        self.psi.read_params(&mut out[split..]);
    }

    pub fn write_params(&mut self, src: &[f64]) {
        let split = self.phi.param_count();
        self.phi.write_params(&src[..split]);
        self.psi.write_params(&src[split..]);
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.param_count()];
        self.read_params(&mut v);
        v
    }

    /// Gradient slices for the two encoders out of one flat buffer.
    pub fn split_grads<'a>(&self, grads: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        grads.split_at_mut(self.phi.param_count())
    }
}

pub fn build_critic(
    obs: &ObsSpace,
    act: &ActionSpace,
    arch: &ArchConfig,
    repr_dim: usize,
) -> Result<CriticPair> {
    let phi = build_encoder(obs, act.feat_dim(), arch, repr_dim)?;
    let psi = build_encoder(obs, 0, arch, repr_dim)?;
    Ok(CriticPair {
        phi,
        psi,
        repr_dim,
    })
}

/// Action distribution family emitted by the policy head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Diagonal Gaussian with a fixed standard deviation over means in
    /// `[low, high]` (clamped only when acting).
    Gaussian { dim: usize, std: f64 },
    Categorical { n: usize },
}

impl PolicyKind {
    pub fn out_dim(&self) -> usize {
        match *self {
            PolicyKind::Gaussian { dim, .. } => dim,
            PolicyKind::Categorical { n } => n,
        }
    }
}

/// Goal-conditioned policy `pi(a | s, g)`: a shared feature trunk applied to
/// the state and goal observations, concatenated, then an MLP head.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub trunk: Option<Network>,
    pub head: Network,
    pub kind: PolicyKind,
}

pub struct PolicyCache {
    trunk_s: Option<NetCache>,
    trunk_g: Option<NetCache>,
    head: NetCache,
    feat_dim: usize,
}

impl PolicyNet {
    pub fn param_count(&self) -> usize {
        self.trunk.as_ref().map_or(0, |t| t.param_count()) + self.head.param_count()
    }

    pub fn read_params(&self, out: &mut [f64]) {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        if let Some(t) = &self.trunk {
            t.read_params(&mut out[..split]);
        }
        self.head.read_params(&mut out[split..]);
    }

    pub fn write_params(&mut self, src: &[f64]) {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        if let Some(t) = &mut self.trunk {
            t.write_params(&src[..split]);
        }
        self.head.write_params(&src[split..]);
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.param_count()];
        self.read_params(&mut v);
        v
    }

    /// Distribution parameters (Gaussian means or categorical logits).
    pub fn forward(&self, s: Array2<f64>, g: Array2<f64>) -> (Array2<f64>, PolicyCache) {
        let (fs, cs, fg, cg) = match &self.trunk {
            Some(t) => {
                let (fs, cs) = t.forward(s);
                let (fg, cg) = t.forward(g);
                (fs, Some(cs), fg, Some(cg))
            }
            None => (s, None, g, None),
        };
        let feat_dim = fs.ncols();
        let z = concatenate![Axis(1), fs, fg];
        let (out, head) = self.head.forward(z);
        (
            out,
            PolicyCache {
                trunk_s: cs,
                trunk_g: cg,
                head,
                feat_dim,
            },
        )
    }

    pub fn backward(&self, cache: &PolicyCache, gout: Array2<f64>, grads: &mut [f64]) {
        let split = self.trunk.as_ref().map_or(0, |t| t.param_count());
        let gz = self.head.backward(&cache.head, gout, &mut grads[split..]);
        if let Some(t) = &self.trunk {
            let gs = gz.slice(ndarray::s![.., ..cache.feat_dim]).to_owned();
            let gg = gz.slice(ndarray::s![.., cache.feat_dim..]).to_owned();
            t.backward(cache.trunk_s.as_ref().unwrap(), gs, &mut grads[..split]);
            t.backward(cache.trunk_g.as_ref().unwrap(), gg, &mut grads[..split]);
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        if let Some(t) = &mut self.trunk {
            t.init_fan_in(rng);
        }
        self.head.init_fan_in(rng);
    }

    pub fn cold_init(&mut self, range: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        self.head.cold_init(range, rng)
    }

    /// ReLU kink margin across trunk (both streams) and head.
    pub fn relu_margin(&self, s: Array2<f64>, g: Array2<f64>) -> f64 {
        let (fs, fg, trunk_margin) = match &self.trunk {
            Some(t) => {
                let m = t.relu_margin(s.clone()).min(t.relu_margin(g.clone()));
                let (fs, _) = t.forward(s);
                let (fg, _) = t.forward(g);
                (fs, fg, m)
            }
            None => (s, g, f64::INFINITY),
        };
        let z = concatenate![Axis(1), fs, fg];
        trunk_margin.min(self.head.relu_margin(z))
    }
}

pub fn build_policy(
    obs: &ObsSpace,
    act: &ActionSpace,
    arch: &ArchConfig,
    policy_std: f64,
) -> Result<PolicyNet> {
    let kind = match *act {
        ActionSpace::Discrete { n } => PolicyKind::Categorical { n },
        ActionSpace::Box { dim, .. } => {
            if policy_std <= 0.0 {
                return Err(Error::invalid("policy std must be positive"));
            }
            PolicyKind::Gaussian {
                dim,
                std: policy_std,
            }
        }
    };
    let trunk = match (obs, arch.cnn) {
        (ObsSpace::Image { h, w, c }, true) => Some(conv3_stack(*h, *w, *c, arch.use_layer_norm)?),
        (ObsSpace::Image { .. }, false) => {
            return Err(Error::invalid("image observations require the cnn trunk"))
        }
        (_, true) => return Err(Error::invalid("cnn trunk requires image observations")),
        (_, false) => None,
    };
    let feat_dim = trunk.as_ref().map_or(obs.feat_dim(), |t| t.output_dim);
    let head = mlp_stack(
        2 * feat_dim,
        arch.mlp_width,
        arch.mlp_depth,
        kind.out_dim(),
        arch.use_layer_norm,
    );
    Ok(PolicyNet { trunk, head, kind })
}
