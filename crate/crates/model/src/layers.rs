//! Parameterised building blocks shared by every module.

use cvvnet_autograd::{BatchNormRefs, ConvSpec, Graph, ParamId, ParamKind, ParamStore, Tensor, Var};
use rand::Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Fan-in scaled uniform initialisation, bound `1/sqrt(fan_in)`.
pub fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// A 3-D convolution (`kernel` over T, H, W) with an optional zero-initialised bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
    /// Pad the time axis by repeating the edge frames instead of zeros.
    pub replicate_time: bool,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        spec: ConvSpec,
        bias: bool,
    ) -> Self {
        let cin_g = cin / spec.groups;
        let fan_in = cin_g * kernel.iter().product::<usize>();
        let shape = [cout, cin_g, kernel[0], kernel[1], kernel[2]];
        let weight = store.add(format!("{name}.weight"), ParamKind::Weight, fan_in_uniform(&shape, fan_in, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), ParamKind::NoDecay, Tensor::zeros(&[cout])));
        Conv { weight, bias, spec, replicate_time: false }
    }

    pub fn with_replicate_time(mut self) -> Self {
        self.replicate_time = true;
        self
    }

    /// Pointwise (1x1x1) convolution with bias.
    pub fn pointwise<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, cin: usize, cout: usize) -> Self {
        Conv::new(store, rng, name, cin, cout, [1, 1, 1], ConvSpec::pointwise(), true)
    }

    /// Depthwise `k x k` spatial convolution with bias, stride 1, zero padding `(k-1)/2`.
    pub fn depthwise<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, ch: usize, k: usize) -> Self {
        Conv::new(store, rng, name, ch, ch, [1, k, k], ConvSpec::same([1, k, k]).with_groups(ch), true)
    }

    pub fn out_channels(&self, store: &ParamStore) -> usize {
        store.get(self.weight).dim(0)
    }

    pub fn in_channels(&self, store: &ParamStore) -> usize {
        store.get(self.weight).dim(1) * self.spec.groups
    }

    /// Applies to `(N, C, T, H, W)`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        let pt = self.spec.padding[0];
        if self.replicate_time && pt > 0 {
            let padded = replicate_pad_time(g, x, pt);
            let mut spec = self.spec;
            spec.padding[0] = 0;
            g.conv3d(padded, w, b, spec)
        } else {
            g.conv3d(x, w, b, self.spec)
        }
    }

    /// Applies to `(N, C, H, W)` by viewing it as a single frame.
    pub fn forward_2d(&self, g: &mut Graph, x: Var) -> Var {
        let s = g.shape(x).to_vec();
        let x5 = g.reshape(x, &[s[0], s[1], 1, s[2], s[3]]);
        let y = self.forward(g, x5);
        let ys = g.shape(y).to_vec();
        g.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }
}

/// Extends `(N, C, T, H, W)` by `pad` copies of the first and last frame.
pub fn replicate_pad_time(g: &mut Graph, x: Var, pad: usize) -> Var {
    let t = g.shape(x)[2];
    let first = g.narrow(x, 2, 0, 1);
    let last = g.narrow(x, 2, t - 1, 1);
    let mut parts = vec![first; pad];
    parts.push(x);
    parts.extend(std::iter::repeat_n(last, pad));
    g.concat(&parts, 2)
}

/// Per-channel batch normalisation, optionally without the shift term.
#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub refs: BatchNormRefs,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, ch: usize, shift: bool) -> Self {
        let gamma = store.add(format!("{name}.gamma"), ParamKind::NoDecay, Tensor::ones(&[ch]));
        let beta = shift.then(|| store.add(format!("{name}.beta"), ParamKind::NoDecay, Tensor::zeros(&[ch])));
        let running_mean = store.add(format!("{name}.running_mean"), ParamKind::Buffer, Tensor::zeros(&[ch]));
        let running_var = store.add(format!("{name}.running_var"), ParamKind::Buffer, Tensor::ones(&[ch]));
        BatchNorm { refs: BatchNormRefs { gamma, beta, running_mean, running_var, momentum: BN_MOMENTUM, eps: BN_EPS } }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        g.batch_norm(x, self.refs)
    }
}
