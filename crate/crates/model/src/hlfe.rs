//! High-Low Frequency feature Extraction on `(N, C, H, W)` feature maps.
//!
//! Two high-frequency paths (a max-pool path and a cascade of depthwise
//! convolutions) run next to a low-frequency attention path whose keys and
//! values come from a 2x2-averaged copy of the input. The three outputs are
//! concatenated, fused back to `C` channels and added to the input.

use cvvnet_autograd::{Graph, ParamStore, Tensor, Var};
use rand::Rng;

use crate::error::{expect_shape, ModelError, Result};
use crate::layers::Conv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HlfeConfig {
    pub channels: usize,
    pub n_heads: usize,
    pub kv_stride: usize,
}

impl HlfeConfig {
    pub fn new(channels: usize, n_heads: usize, kv_stride: usize) -> Result<Self> {
        if channels == 0 || n_heads == 0 || channels % n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "{channels} channels cannot be split into {n_heads} heads"
            )));
        }
        if kv_stride == 0 {
            return Err(ModelError::InvalidConfig("kv_stride must be positive".into()));
        }
        Ok(HlfeConfig { channels, n_heads, kv_stride })
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.n_heads
    }
}

#[derive(Debug, Clone)]
pub struct Hlfe {
    pub config: HlfeConfig,
    pub proj_pool: Conv,
    pub proj_in: Conv,
    pub dw3: Conv,
    pub dw5: Conv,
    pub dw7: Conv,
    pub fuse_ms: Conv,
    pub wq: Conv,
    pub wk: Conv,
    pub wv: Conv,
    pub wo: Conv,
    pub fuse_out: Conv,
}

/// Output of the attention path, optionally with its probabilities shaped
/// `(N * n_heads, H * W, L)` for `L` pooled key tokens.
pub struct Attention {
    pub output: Var,
    pub probs: Option<Tensor>,
}

impl Hlfe {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, prefix: &str, config: HlfeConfig) -> Self {
        let c = config.channels;
        let mut pw = |name: &str, cin: usize| Conv::pointwise(store, rng, &format!("{prefix}.{name}"), cin, c);
        let proj_pool = pw("proj_pool", c);
        let proj_in = pw("proj_in", c);
        let fuse_ms = pw("fuse_ms", 3 * c);
        let wq = pw("wq", c);
        let wk = pw("wk", c);
        let wv = pw("wv", c);
        let wo = pw("wo", c);
        let fuse_out = pw("fuse_out", 3 * c);
        let dw3 = Conv::depthwise(store, rng, &format!("{prefix}.dw3"), c, 3);
        let dw5 = Conv::depthwise(store, rng, &format!("{prefix}.dw5"), c, 5);
        let dw7 = Conv::depthwise(store, rng, &format!("{prefix}.dw7"), c, 7);
        Hlfe { config, proj_pool, proj_in, dw3, dw5, dw7, fuse_ms, wq, wk, wv, wo, fuse_out }
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<[usize; 4]> {
        let s = g.shape(x);
        expect_shape("hlfe input", s, &[None, Some(self.config.channels), None, None])?;
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// `GELU(proj_pool(maxpool3x3(x)))`, max pool with stride 1 and zero padding 1.
    pub fn high_freq_pool_path(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let p = g.max_pool2d(x, 3, 1, 1);
        let y = self.proj_pool.forward_2d(g, p);
        Ok(g.gelu(y))
    }

    /// The three cascaded depthwise stages `(F3, F5, F7)` after `proj_in`.
    pub fn depthwise_cascade(&self, g: &mut Graph, x: Var) -> Result<[Var; 3]> {
        self.check_input(g, x)?;
        let xi = self.proj_in.forward_2d(g, x);
        let f3 = self.dw3.forward_2d(g, xi);
        let f5 = self.dw5.forward_2d(g, f3);
        let f7 = self.dw7.forward_2d(g, f5);
        Ok([f3, f5, f7])
    }

    pub fn high_freq_conv_path(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let [f3, f5, f7] = self.depthwise_cascade(g, x)?;
        let cat = g.concat(&[f3, f5, f7], 1);
        let y = self.fuse_ms.forward_2d(g, cat);
        Ok(g.gelu(y))
    }

    pub fn low_freq_attention(&self, g: &mut Graph, x: Var) -> Result<Attention> {
        self.attention_inner(g, x, false)
    }

    /// As [`Hlfe::low_freq_attention`], also returning the attention probabilities.
    pub fn low_freq_attention_with_probs(&self, g: &mut Graph, x: Var) -> Result<Attention> {
        self.attention_inner(g, x, true)
    }

    fn attention_inner(&self, g: &mut Graph, x: Var, keep_probs: bool) -> Result<Attention> {
        let [n, c, h, w] = self.check_input(g, x)?;
        let s = self.config.kv_stride;
        if h % s != 0 || w % s != 0 {
            return Err(ModelError::IndivisibleSpatial { h, w, stride: s });
        }
        let nh = self.config.n_heads;
        let d = self.config.head_dim();
        let tokens = h * w;
        let pooled = (h / s) * (w / s);

        let q = self.wq.forward_2d(g, x);
        let q = g.reshape(q, &[n, nh, d, tokens]);
        let q = g.permute(q, &[0, 1, 3, 2]);
        let q = g.reshape(q, &[n * nh, tokens, d]);
        let q = g.scale(q, 1.0 / (d as f64).sqrt());

        let xd = g.avg_pool2d(x, s);
        let k = self.wk.forward_2d(g, xd);
        let k = g.reshape(k, &[n * nh, d, pooled]);
        let v = self.wv.forward_2d(g, xd);
        let v = g.reshape(v, &[n * nh, d, pooled]);

        let (o, probs) = g.attention(q, k, v, keep_probs);
        let o = g.reshape(o, &[n, nh, tokens, d]);
        let o = g.permute(o, &[0, 1, 3, 2]);
        let o = g.reshape(o, &[n, c, h, w]);
        let output = self.wo.forward_2d(g, o);
        Ok(Attention { output, probs })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y1 = self.high_freq_pool_path(g, x)?;
        let y2 = self.high_freq_conv_path(g, x)?;
        let y_low = self.low_freq_attention(g, x)?.output;
        let cat = g.concat(&[y1, y2, y_low], 1);
        let fused = self.fuse_out.forward_2d(g, cat);
        Ok(g.add(fused, x))
    }

    /// Applies the module to every frame of `(B, C, T, H, W)` independently.
    pub fn forward_over_time(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        expect_shape("hlfe clip input", &s, &[None, Some(self.config.channels), None, None, None])?;
        let (b, c, t, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let frames = g.permute(x, &[0, 2, 1, 3, 4]);
        let frames = g.reshape(frames, &[b * t, c, h, w]);
        let y = self.forward(g, frames)?;
        let y = g.reshape(y, &[b, t, c, h, w]);
        Ok(g.permute(y, &[0, 2, 1, 3, 4]))
    }
}
