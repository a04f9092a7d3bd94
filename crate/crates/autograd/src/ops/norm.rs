use crate::graph::{Graph, Mode, Var};
use crate::params::ParamId;
use crate::tensor::Tensor;

/// Softmax over the last axis with max subtraction.
pub fn softmax_last(x: &Tensor) -> Tensor {
    let d = *x.shape().last().expect("softmax on rank-0 tensor");
    let mut out = vec![0.0; x.numel()];
    for (row, src) in out.chunks_mut(d).zip(x.data().chunks(d)) {
        let m = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, &v) in row.iter_mut().zip(src) {
            *o = (v - m).exp();
            s += *o;
        }
        let inv = 1.0 / s;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    Tensor::new(x.shape(), out)
}

/// Batch normalization parameters and state.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormRefs {
    pub gamma: ParamId,
    pub beta: Option<ParamId>,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl Graph<'_> {
    pub fn softmax_last(&mut self, x: Var) -> Var {
        let out = softmax_last(self.value(x));
        self.op(
            &[x],
            out,
            Box::new(|c| {
                let y = c.output;
                let d = *y.shape().last().unwrap();
                let mut gx = Vec::with_capacity(y.numel());
                for (yr, gr) in y.data().chunks(d).zip(c.grad.data().chunks(d)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    gx.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                vec![Some(Tensor::new(y.shape(), gx))]
            }),
        )
    }

    /// Per-channel batch normalization of `(N, C, ...)`.
    ///
    /// Training graphs normalize with biased batch statistics and fold the
    /// unbiased variance into the running estimates; eval graphs use the
    /// running estimates.
    pub fn batch_norm(&mut self, x: Var, bn: BatchNormRefs) -> Var {
        let shape = self.shape(x).to_vec();
        assert!(shape.len() >= 2, "batch_norm needs (N, C, ...)");
        let (n, ch) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let m = n * inner;
        let xd = self.value(x).data().to_vec();
        let (mean, var) = match self.mode() {
            Mode::Train => {
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for (c, (mu, va)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += xd[(i * ch + c) * inner..(i * ch + c + 1) * inner].iter().sum::<f64>();
                    }
                    *mu = s / m as f64;
                    let mut q = 0.0;
                    for i in 0..n {
                        q += xd[(i * ch + c) * inner..(i * ch + c + 1) * inner]
                            .iter()
                            .map(|v| (v - *mu) * (v - *mu))
                            .sum::<f64>();
                    }
                    *va = q / m as f64;
                }
                if let Some(store) = self.params_mut() {
                    let unbias = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 1.0 };
                    let rm = store.get_mut(bn.running_mean);
                    for (r, &mu) in rm.data_mut().iter_mut().zip(&mean) {
                        *r = (1.0 - bn.momentum) * *r + bn.momentum * mu;
                    }
                    let rv = store.get_mut(bn.running_var);
                    for (r, &va) in rv.data_mut().iter_mut().zip(&var) {
                        *r = (1.0 - bn.momentum) * *r + bn.momentum * va * unbias;
                    }
                }
                (mean, var)
            }
            Mode::Eval => {
                let p = self.params();
                (p.get(bn.running_mean).data().to_vec(), p.get(bn.running_var).data().to_vec())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        for i in 0..n {
            for c in 0..ch {
                let r = (i * ch + c) * inner..(i * ch + c + 1) * inner;
                for (o, &v) in xhat[r.clone()].iter_mut().zip(&xd[r]) {
                    *o = (v - mean[c]) * inv_std[c];
                }
            }
        }
        let gamma = self.param(bn.gamma);
        let beta = bn.beta.map(|b| self.param(b));
        let gv = self.value(gamma).data().to_vec();
        let bv = beta.map(|b| self.value(b).data().to_vec());
        let mut out = xhat.clone();
        for i in 0..n {
            for c in 0..ch {
                let shift = bv.as_ref().map_or(0.0, |b| b[c]);
                for o in &mut out[(i * ch + c) * inner..(i * ch + c + 1) * inner] {
                    *o = *o * gv[c] + shift;
                }
            }
        }
        let train = self.mode() == Mode::Train;
        let mut inputs = vec![x, gamma];
        inputs.extend(beta);
        let has_beta = beta.is_some();
        self.op(
            &inputs,
            Tensor::new(&shape, out),
            Box::new(move |c| {
                let g = c.grad.data();
                let gamma = c.inputs[1].data();
                let mut gx = vec![0.0; g.len()];
                let mut ggamma = vec![0.0; ch];
                let mut gbeta = vec![0.0; ch];
                for cc in 0..ch {
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for i in 0..n {
                        let r = (i * ch + cc) * inner..(i * ch + cc + 1) * inner;
                        for (gv, xh) in g[r.clone()].iter().zip(&xhat[r]) {
                            sum_g += gv;
                            sum_gx += gv * xh;
                        }
                    }
                    ggamma[cc] = sum_gx;
                    gbeta[cc] = sum_g;
                    let scale = gamma[cc] * inv_std[cc];
                    for i in 0..n {
                        let r = (i * ch + cc) * inner..(i * ch + cc + 1) * inner;
                        for ((o, gv), xh) in gx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xhat[r]) {
                            *o = if train {
                                scale * (gv - sum_g / m as f64 - xh * sum_gx / m as f64)
                            } else {
                                scale * gv
                            };
                        }
                    }
                }
                let mut v = vec![Some(Tensor::new(&shape, gx)), Some(Tensor::new(&[ch], ggamma))];
                if has_beta {
                    v.push(Some(Tensor::new(&[ch], gbeta)));
                }
                v
            }),
        )
    }
}
