//! Everything after the convolutional trunk: temporal max pooling,
//! horizontal pyramid pooling, per-part projections and the BNNeck heads.

use cvvnet_autograd::{BatchNormRefs, Graph, ParamId, ParamKind, ParamStore, Tensor, Var};
use rand::Rng;

use crate::error::{expect_shape, ModelError, Result};
use crate::layers::{fan_in_uniform, BN_EPS, BN_MOMENTUM};

/// Elementwise max over the time axis of `(B, C, T, H, W)`.
pub fn temporal_max_pool(g: &mut Graph, x: Var) -> Result<Var> {
    expect_shape("temporal max pool input", g.shape(x), &[None, None, None, None, None])?;
    Ok(g.max_axis(x, 2))
}

/// Validates `bins` against a feature height and returns the part count.
pub fn hpp_parts(h: usize, bins: &[usize]) -> Result<usize> {
    if bins.is_empty() {
        return Err(ModelError::InvalidConfig("hpp needs at least one level".into()));
    }
    for &k in bins {
        if k == 0 || h % k != 0 {
            return Err(ModelError::IndivisibleHeight { h, bins: k });
        }
    }
    Ok(bins.iter().sum())
}

/// Horizontal pyramid pooling of `(B, C, H, W)` into `(B, P, C)`.
///
/// Level `k` cuts the map into `k` equal horizontal bands; each band becomes
/// `max + mean` over its rows and columns. Parts are ordered level by level,
/// top band first.
pub fn hpp_forward(x: &Tensor, bins: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let s = x.shape();
    expect_shape("hpp input", s, &[None, None, None, None])?;
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let p = hpp_parts(h, bins)?;
    let xd = x.data();
    let mut out = vec![0.0; b * p * c];
    let mut arg = vec![0usize; b * p * c];
    for bi in 0..b {
        let mut part = 0;
        for &k in bins {
            let band = h / k;
            for strip in 0..k {
                for ci in 0..c {
                    let plane = (bi * c + ci) * h * w;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_ix = 0;
                    let mut sum = 0.0;
                    for r in strip * band..(strip + 1) * band {
                        for (col, &v) in xd[plane + r * w..plane + (r + 1) * w].iter().enumerate() {
                            sum += v;
                            if v > best {
                                best = v;
                                best_ix = plane + r * w + col;
                            }
                        }
                    }
                    let o = (bi * p + part) * c + ci;
                    out[o] = best + sum / (band * w) as f64;
                    arg[o] = best_ix;
                }
                part += 1;
            }
        }
    }
    Ok((Tensor::new(&[b, p, c], out), arg))
}

pub fn hpp(g: &mut Graph, x: Var, bins: &[usize]) -> Result<Var> {
    let (out, arg) = hpp_forward(g.value(x), bins)?;
    let bins = bins.to_vec();
    Ok(g.op(
        &[x],
        out,
        Box::new(move |ctx| {
            let s = ctx.inputs[0].shape();
            let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
            let p: usize = bins.iter().sum();
            let gout = ctx.grad.data();
            let mut gx = Tensor::zeros(s);
            let gd = gx.data_mut();
            for (&ix, &gv) in arg.iter().zip(gout) {
                gd[ix] += gv;
            }
            for bi in 0..b {
                let mut part = 0;
                for &k in &bins {
                    let band = h / k;
                    let inv = 1.0 / (band * w) as f64;
                    for strip in 0..k {
                        for ci in 0..c {
                            let share = gout[(bi * p + part) * c + ci] * inv;
                            let plane = (bi * c + ci) * h * w;
                            for v in &mut gd[plane + strip * band * w..plane + (strip + 1) * band * w] {
                                *v += share;
                            }
                        }
                        part += 1;
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}

/// Multiplies every part of `(B, P, I)` by its own `(I, O)` matrix from a `(P, I, O)` stack.
fn per_part_matmul(g: &mut Graph, x: Var, w: Var) -> Var {
    let xp = g.permute(x, &[1, 0, 2]);
    let y = g.bmm(xp, w, false, false);
    g.permute(y, &[1, 0, 2])
}

/// Independent bias-free linear map per part, `(B, P, C) -> (B, P, D)`.
#[derive(Debug, Clone, Copy)]
pub struct PartFc {
    pub weight: ParamId,
    pub parts: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl PartFc {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: &str, parts: usize, in_dim: usize, out_dim: usize) -> Self {
        let w = fan_in_uniform(&[parts, in_dim, out_dim], in_dim, rng);
        let weight = store.add(format!("{name}.weight"), ParamKind::Weight, w);
        PartFc { weight, parts, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        expect_shape("part fc input", g.shape(x), &[None, Some(self.parts), Some(self.in_dim)])?;
        let w = g.param(self.weight);
        Ok(per_part_matmul(g, x, w))
    }
}

pub struct NeckOutput {
    /// Features fed to the triplet loss; the input embedding itself.
    pub triplet_feats: Var,
    /// Batch-normalised embedding, `(B, P, D)`.
    pub normalized: Var,
    /// `(B, P, num_classes)`.
    pub logits: Var,
}

/// Batch normalisation over all `P * D` embedding features (scale only)
/// followed by a bias-free classifier per part.
#[derive(Debug, Clone, Copy)]
pub struct BnNeck {
    pub bn: BatchNormRefs,
    pub classifier: ParamId,
    pub parts: usize,
    pub dim: usize,
    pub num_classes: usize,
}

impl BnNeck {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        parts: usize,
        dim: usize,
        num_classes: usize,
    ) -> Self {
        let f = parts * dim;
        let bn = BatchNormRefs {
            gamma: store.add(format!("{name}.bn.gamma"), ParamKind::NoDecay, Tensor::ones(&[f])),
            beta: None,
            running_mean: store.add(format!("{name}.bn.running_mean"), ParamKind::Buffer, Tensor::zeros(&[f])),
            running_var: store.add(format!("{name}.bn.running_var"), ParamKind::Buffer, Tensor::ones(&[f])),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        };
        let w = fan_in_uniform(&[parts, dim, num_classes], dim, rng);
        let classifier = store.add(format!("{name}.classifier.weight"), ParamKind::Weight, w);
        BnNeck { bn, classifier, parts, dim, num_classes }
    }

    pub fn forward(&self, g: &mut Graph, emb: Var) -> Result<NeckOutput> {
        expect_shape("bnneck input", g.shape(emb), &[None, Some(self.parts), Some(self.dim)])?;
        let b = g.shape(emb)[0];
        let flat = g.reshape(emb, &[b, self.parts * self.dim]);
        let normed = g.batch_norm(flat, self.bn);
        let normalized = g.reshape(normed, &[b, self.parts, self.dim]);
        let w = g.param(self.classifier);
        let logits = per_part_matmul(g, normalized, w);
        Ok(NeckOutput { triplet_feats: emb, normalized, logits })
    }
}
