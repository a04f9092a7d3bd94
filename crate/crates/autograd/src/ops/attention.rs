use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per batch: `softmax(q @ k) @ v^T` with `q: (B,M,d)`, `k: (B,d,L)`, `v: (B,d,L)`.
/// Returns the `(B,M,d)` output and the `(B,M,L)` probabilities.
pub fn attention_forward(q: &Tensor, k: &Tensor, v: &Tensor) -> (Tensor, Tensor) {
    let (qs, ks) = (q.shape(), k.shape());
    assert_eq!(qs.len(), 3, "attention q must be (B,M,d)");
    assert_eq!(ks.len(), 3, "attention k must be (B,d,L)");
    assert_eq!(k.shape(), v.shape(), "attention k and v shapes differ");
    let (b, m, d) = (qs[0], qs[1], qs[2]);
    assert_eq!((ks[0], ks[1]), (b, d), "attention q/k mismatch: {qs:?} vs {ks:?}");
    let l = ks[2];
    let mut out = vec![0.0; b * m * d];
    let mut probs = vec![0.0; b * m * l];
    for bi in 0..b {
        let kb = &k.data()[bi * d * l..(bi + 1) * d * l];
        let vb = &v.data()[bi * d * l..(bi + 1) * d * l];
        for i in 0..m {
            let qi = &q.data()[(bi * m + i) * d..(bi * m + i + 1) * d];
            let row = &mut probs[(bi * m + i) * l..(bi * m + i + 1) * l];
            for (j, &qj) in qi.iter().enumerate() {
                for (r, &kv) in row.iter_mut().zip(&kb[j * l..(j + 1) * l]) {
                    *r += qj * kv;
                }
            }
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - mx).exp();
                s += *r;
            }
            let inv = 1.0 / s;
            for r in row.iter_mut() {
                *r *= inv;
            }
            let oi = &mut out[(bi * m + i) * d..(bi * m + i + 1) * d];
            for (j, o) in oi.iter_mut().enumerate() {
                *o = dot(row, &vb[j * l..(j + 1) * l]);
            }
        }
    }
    (Tensor::new(&[b, m, d], out), Tensor::new(&[b, m, l], probs))
}

impl Graph<'_> {
    /// Fused attention without logit scaling; see [`attention_forward`]. Any scaling of
    /// the logits must be applied to `q` beforehand. The probabilities are
    /// returned as a plain tensor when `keep_probs` is set.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, keep_probs: bool) -> (Var, Option<Tensor>) {
        let (out, probs) = attention_forward(self.value(q), self.value(k), self.value(v));
        let kept = keep_probs.then(|| probs.clone());
        let var = self.op(
            &[q, k, v],
            out,
            Box::new(move |c| {
                let (q, k, v, g) = (c.inputs[0], c.inputs[1], c.inputs[2], c.grad);
                let (b, m, d) = (q.dim(0), q.dim(1), q.dim(2));
                let l = k.dim(2);
                let mut gq = vec![0.0; b * m * d];
                let mut gk = vec![0.0; b * d * l];
                let mut gv = vec![0.0; b * d * l];
                let mut ds = vec![0.0; l];
                for bi in 0..b {
                    let kb = &k.data()[bi * d * l..(bi + 1) * d * l];
                    let vb = &v.data()[bi * d * l..(bi + 1) * d * l];
                    let gkb = &mut gk[bi * d * l..(bi + 1) * d * l];
                    let gvb = &mut gv[bi * d * l..(bi + 1) * d * l];
                    for i in 0..m {
                        let r = (bi * m + i) * d..(bi * m + i + 1) * d;
                        let (qi, gi) = (&q.data()[r.clone()], &g.data()[r.clone()]);
                        let p = &probs.data()[(bi * m + i) * l..(bi * m + i + 1) * l];
                        ds.iter_mut().for_each(|x| *x = 0.0);
                        for (j, &gij) in gi.iter().enumerate() {
                            let vrow = &vb[j * l..(j + 1) * l];
                            for (dsv, &vv) in ds.iter_mut().zip(vrow) {
                                *dsv += gij * vv;
                            }
                            for (gvv, &pv) in gvb[j * l..(j + 1) * l].iter_mut().zip(p) {
                                *gvv += gij * pv;
                            }
                        }
                        let dp = dot(&ds, p);
                        for (dsv, &pv) in ds.iter_mut().zip(p) {
                            *dsv = pv * (*dsv - dp);
                        }
                        let gqi = &mut gq[r];
                        for (j, &qij) in qi.iter().enumerate() {
                            let krow = &kb[j * l..(j + 1) * l];
                            gqi[j] = dot(&ds, krow);
                            for (gkv, &dsv) in gkb[j * l..(j + 1) * l].iter_mut().zip(&ds) {
                                *gkv += qij * dsv;
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::new(&[b, m, d], gq)),
                    Some(Tensor::new(&[b, d, l], gk)),
                    Some(Tensor::new(&[b, d, l], gv)),
                ]
            }),
        );
        (var, kept)
    }
}
