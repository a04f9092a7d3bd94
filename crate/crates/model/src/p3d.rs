//! Pseudo-3D residual block: a spatial `1x3x3` convolution followed by a
//! temporal `3x1x1` convolution, each followed by batch normalisation and
//! ReLU, added to a shortcut.

use cvvnet_autograd::{ConvSpec, Graph, ParamStore, Var};
use rand::Rng;

use crate::error::{expect_shape, Result};
use crate::layers::{BatchNorm, Conv};

#[derive(Debug, Clone)]
pub struct P3dBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub conv_s: Conv,
    pub bn_s: BatchNorm,
    pub conv_t: Conv,
    pub bn_t: BatchNorm,
    /// Projection used when the block changes width or resolution.
    pub shortcut: Option<(Conv, BatchNorm)>,
}

impl P3dBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    ) -> Self {
        let spatial = ConvSpec::same([1, 3, 3]).with_stride([1, stride, stride]);
        let conv_s = Conv::new(store, rng, &format!("{prefix}.conv_s"), in_channels, out_channels, [1, 3, 3], spatial, false);
        let bn_s = BatchNorm::new(store, &format!("{prefix}.bn_s"), out_channels, true);
        let conv_t = Conv::new(
            store,
            rng,
            &format!("{prefix}.conv_t"),
            out_channels,
            out_channels,
            [3, 1, 1],
            ConvSpec::same([3, 1, 1]),
            false,
        )
        .with_replicate_time();
        let bn_t = BatchNorm::new(store, &format!("{prefix}.bn_t"), out_channels, true);
        let shortcut = (stride != 1 || in_channels != out_channels).then(|| {
            let spec = ConvSpec::pointwise().with_stride([1, stride, stride]);
            let conv = Conv::new(store, rng, &format!("{prefix}.short"), in_channels, out_channels, [1, 1, 1], spec, false);
            let bn = BatchNorm::new(store, &format!("{prefix}.short_bn"), out_channels, true);
            (conv, bn)
        });
        P3dBlock { in_channels, out_channels, stride, conv_s, bn_s, conv_t, bn_t, shortcut }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        expect_shape("p3d input", g.shape(x), &[None, Some(self.in_channels), None, None, None])?;
        let y = self.conv_s.forward(g, x);
        let y = self.bn_s.forward(g, y);
        let y = g.relu(y);
        let y = self.conv_t.forward(g, y);
        let y = self.bn_t.forward(g, y);
        let y = g.relu(y);
        let short = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(g, x);
                bn.forward(g, s)
            }
            None => x,
        };
        Ok(g.add(y, short))
    }
}
