use crate::graph::{Graph, Var};
use crate::ops::conv::conv_out_len;
use crate::tensor::Tensor;

/// Max pooling over `(N,C,H,W)` with zero padding. Padded cells take part
/// in the max with value 0. Returns the output and, per output cell, the
/// flat input index of the winner (`usize::MAX` when a padded cell won).
pub fn max_pool2d_forward(x: &Tensor, k: usize, stride: usize, pad: usize) -> (Tensor, Vec<usize>) {
    let s = x.shape();
    assert_eq!(s.len(), 4, "max_pool2d expects (N,C,H,W)");
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let oh = conv_out_len(h, k, stride, pad);
    let ow = conv_out_len(w, k, stride, pad);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_ix = usize::MAX;
                for a in 0..k {
                    for b in 0..k {
                        let ih = (i * stride + a) as isize - pad as isize;
                        let iw = (j * stride + b) as isize - pad as isize;
                        let (v, ix) = if ih < 0 || iw < 0 || ih >= h as isize || iw >= w as isize {
                            (0.0, usize::MAX)
                        } else {
                            let ix = base + ih as usize * w + iw as usize;
                            (xd[ix], ix)
                        };
                        if v > best {
                            best = v;
                            best_ix = ix;
                        }
                    }
                }
                out.push(best);
                arg.push(best_ix);
            }
        }
    }
    (Tensor::new(&[n, c, oh, ow], out), arg)
}

/// Non-overlapping average pooling (kernel = stride = `k`) over `(N,C,H,W)`.
pub fn avg_pool2d_forward(x: &Tensor, k: usize) -> Tensor {
    let s = x.shape();
    assert_eq!(s.len(), 4, "avg_pool2d expects (N,C,H,W)");
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(h % k == 0 && w % k == 0, "avg_pool2d: {h}x{w} not divisible by {k}");
    let (oh, ow) = (h / k, w / k);
    let inv = 1.0 / (k * k) as f64;
    let xd = x.data();
    let mut out = vec![0.0; n * c * oh * ow];
    for plane in 0..n * c {
        for ih in 0..h {
            let row = &xd[(plane * h + ih) * w..(plane * h + ih + 1) * w];
            let orow = &mut out[(plane * oh + ih / k) * ow..(plane * oh + ih / k + 1) * ow];
            for (iw, &v) in row.iter().enumerate() {
                orow[iw / k] += v;
            }
        }
    }
    for v in &mut out {
        *v *= inv;
    }
    Tensor::new(&[n, c, oh, ow], out)
}

impl Graph<'_> {
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let (out, arg) = max_pool2d_forward(self.value(x), k, stride, pad);
        self.op(
            &[x],
            out,
            Box::new(move |c| {
                let mut gx = Tensor::zeros(c.inputs[0].shape());
                let gd = gx.data_mut();
                for (&ix, &g) in arg.iter().zip(c.grad.data()) {
                    if ix != usize::MAX {
                        gd[ix] += g;
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn avg_pool2d(&mut self, x: Var, k: usize) -> Var {
        let out = avg_pool2d_forward(self.value(x), k);
        self.op(
            &[x],
            out,
            Box::new(move |c| {
                let s = c.inputs[0].shape();
                let (h, w) = (s[2], s[3]);
                let (oh, ow) = (h / k, w / k);
                let inv = 1.0 / (k * k) as f64;
                let mut gx = Tensor::zeros(s);
                let gd = gx.data_mut();
                let g = c.grad.data();
                for plane in 0..s[0] * s[1] {
                    for ih in 0..h {
                        for iw in 0..w {
                            gd[(plane * h + ih) * w + iw] = g[(plane * oh + ih / k) * ow + iw / k] * inv;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Maximum along `axis`, removing it. Ties go to the lowest index.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Var {
        let s = self.shape(x).to_vec();
        let outer: usize = s[..axis].iter().product();
        let d = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        assert!(d >= 1, "max over empty axis");
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = f64::NEG_INFINITY;
                let mut bi = o * d * inner + i;
                for j in 0..d {
                    let v = xd[(o * d + j) * inner + i];
                    if v > best {
                        best = v;
                        bi = (o * d + j) * inner + i;
                    }
                }
                out.push(best);
                arg.push(bi);
            }
        }
        let mut os = s.clone();
        os.remove(axis);
        self.op(
            &[x],
            Tensor::new(&os, out),
            Box::new(move |c| {
                let mut gx = Tensor::zeros(c.inputs[0].shape());
                let gd = gx.data_mut();
                for (&ix, &g) in arg.iter().zip(c.grad.data()) {
                    gd[ix] += g;
                }
                vec![Some(gx)]
            }),
        )
    }
}
