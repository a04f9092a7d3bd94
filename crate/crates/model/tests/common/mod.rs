//! Naive loop implementations used as independent references.
#![allow(dead_code)]

use cvvnet_autograd::{ParamStore, Tensor};
use rand::Rng;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn param(store: &ParamStore, name: &str) -> Tensor {
    store.get(store.id(name).unwrap_or_else(|| panic!("no parameter {name}"))).clone()
}

/// Replaces every stored tensor with N(0, scale^2) noise, so that zero
/// biases and identity normalisation do not hide mistakes.
pub fn randomize(store: &mut ParamStore, scale: f64, rng: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        let name = store.entry(id).name.clone();
        let t = if name.ends_with("running_var") {
            Tensor::randn(&shape, rng).map(|v| 0.5 + v.abs())
        } else {
            Tensor::randn(&shape, rng).map(|v| v * scale)
        };
        store.set(id, t);
    }
}

/// Dense 4-D array view helpers.
pub fn at4(t: &Tensor, n: usize, c: usize, h: usize, w: usize) -> f64 {
    t.at(&[n, c, h, w])
}

/// Stride-1 zero-padded 2-D convolution. `w` is `(Cout, Cin/groups, 1, k, k)`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, groups: usize) -> Tensor {
    let [n, cin, h, wd] = [x.dim(0), x.dim(1), x.dim(2), x.dim(3)];
    let cout = w.dim(0);
    let cg = w.dim(1);
    let k = w.dim(3);
    let pad = (k - 1) / 2;
    assert_eq!(cg * groups, cin);
    let opg = cout / groups;
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    for ni in 0..n {
        for co in 0..cout {
            let g = co / opg;
            for i in 0..h {
                for j in 0..wd {
                    let mut s = b.map_or(0.0, |b| b.data()[co]);
                    for ci in 0..cg {
                        for a in 0..k {
                            for bb in 0..k {
                                let ii = i as isize + a as isize - pad as isize;
                                let jj = j as isize + bb as isize - pad as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                    continue;
                                }
                                s += w.at(&[co, ci, 0, a, bb]) * x.at(&[ni, g * cg + ci, ii as usize, jj as usize]);
                            }
                        }
                    }
                    out.set(&[ni, co, i, j], s);
                }
            }
        }
    }
    out
}

/// Pointwise convolution over any `(N, C, ...)` tensor with a `(Cout, Cin, 1, 1, 1)` weight.
pub fn pointwise(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let n = x.dim(0);
    let cin = x.dim(1);
    let inner: usize = x.shape()[2..].iter().product();
    let cout = w.dim(0);
    let mut shape = x.shape().to_vec();
    shape[1] = cout;
    let mut out = vec![0.0; n * cout * inner];
    for ni in 0..n {
        for co in 0..cout {
            for p in 0..inner {
                let mut s = b.data()[co];
                for ci in 0..cin {
                    s += w.data()[co * cin + ci] * x.data()[(ni * cin + ci) * inner + p];
                }
                out[(ni * cout + co) * inner + p] = s;
            }
        }
    }
    Tensor::new(&shape, out)
}

/// 3x3 max over the zero-padded neighbourhood.
pub fn maxpool3(x: &Tensor) -> Tensor {
    let [n, c, h, w] = [x.dim(0), x.dim(1), x.dim(2), x.dim(3)];
    let mut out = Tensor::zeros(x.shape());
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let mut m = f64::NEG_INFINITY;
                    for di in -1isize..=1 {
                        for dj in -1isize..=1 {
                            let (ii, jj) = (i as isize + di, j as isize + dj);
                            let v = if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                0.0
                            } else {
                                x.at(&[ni, ci, ii as usize, jj as usize])
                            };
                            m = m.max(v);
                        }
                    }
                    out.set(&[ni, ci, i, j], m);
                }
            }
        }
    }
    out
}

pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    Tensor::concat(parts, 1)
}

pub struct HlfeOracle<'a> {
    pub store: &'a ParamStore,
    pub prefix: String,
    pub heads: usize,
    pub stride: usize,
}

impl HlfeOracle<'_> {
    fn w(&self, name: &str) -> Tensor {
        param(self.store, &format!("{}.{name}.weight", self.prefix))
    }
    fn b(&self, name: &str) -> Tensor {
        param(self.store, &format!("{}.{name}.bias", self.prefix))
    }
    fn pw(&self, name: &str, x: &Tensor) -> Tensor {
        pointwise(x, &self.w(name), &self.b(name))
    }

    pub fn pool_path(&self, x: &Tensor) -> Tensor {
        self.pw("proj_pool", &maxpool3(x)).map(gelu)
    }

    pub fn cascade(&self, x: &Tensor) -> [Tensor; 3] {
        let c = x.dim(1);
        let xi = self.pw("proj_in", x);
        let f3 = conv2d(&xi, &self.w("dw3"), Some(&self.b("dw3")), c);
        let f5 = conv2d(&f3, &self.w("dw5"), Some(&self.b("dw5")), c);
        let f7 = conv2d(&f5, &self.w("dw7"), Some(&self.b("dw7")), c);
        [f3, f5, f7]
    }

    pub fn conv_path(&self, x: &Tensor) -> Tensor {
        let [f3, f5, f7] = self.cascade(x);
        self.pw("fuse_ms", &concat_channels(&[&f3, &f5, &f7])).map(gelu)
    }

    /// Token-by-token multi-head attention with explicitly pooled keys and values.
    pub fn attention(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = [x.dim(0), x.dim(1), x.dim(2), x.dim(3)];
        let s = self.stride;
        let d = c / self.heads;
        let (wq, bq) = (self.w("wq"), self.b("wq"));
        let (wk, bk) = (self.w("wk"), self.b("wk"));
        let (wv, bv) = (self.w("wv"), self.b("wv"));
        let lin = |wt: &Tensor, bt: &Tensor, v: &[f64]| -> Vec<f64> {
            (0..c).map(|o| bt.data()[o] + (0..c).map(|i| wt.data()[o * c + i] * v[i]).sum::<f64>()).collect()
        };
        let mut mixed = Tensor::zeros(x.shape());
        for ni in 0..n {
            let mut keys = Vec::new();
            let mut vals = Vec::new();
            for pi in 0..h / s {
                for pj in 0..w / s {
                    let mut avg = vec![0.0; c];
                    for (ci, a) in avg.iter_mut().enumerate() {
                        for a2 in 0..s {
                            for b2 in 0..s {
                                *a += x.at(&[ni, ci, pi * s + a2, pj * s + b2]);
                            }
                        }
                        *a /= (s * s) as f64;
                    }
                    keys.push(lin(&wk, &bk, &avg));
                    vals.push(lin(&wv, &bv, &avg));
                }
            }
            for i in 0..h {
                for j in 0..w {
                    let xv: Vec<f64> = (0..c).map(|ci| x.at(&[ni, ci, i, j])).collect();
                    let q = lin(&wq, &bq, &xv);
                    for head in 0..self.heads {
                        let r = head * d..(head + 1) * d;
                        let logits: Vec<f64> = keys
                            .iter()
                            .map(|k| q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                            .collect();
                        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                        let z: f64 = e.iter().sum();
                        for dd in 0..d {
                            let v: f64 = e.iter().zip(&vals).map(|(p, v)| p / z * v[head * d + dd]).sum();
                            mixed.set(&[ni, head * d + dd, i, j], v);
                        }
                    }
                }
            }
        }
        self.pw("wo", &mixed)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let cat = concat_channels(&[&self.pool_path(x), &self.conv_path(x), &self.attention(x)]);
        self.pw("fuse_out", &cat).zip_map(x, |a, b| a + b)
    }
}

/// Finite-difference check of every trainable tensor whose name starts with
/// `prefix`. `build` constructs a scalar loss on the supplied graph. Train
/// mode runs on a scratch copy of the store so running statistics never leak
/// between evaluations.
pub fn check_params(
    store: &ParamStore,
    prefix: &str,
    train: bool,
    step: f64,
    build: impl Fn(&mut cvvnet_autograd::Graph) -> cvvnet_autograd::Var,
) -> Vec<cvvnet_autograd::gradcheck::GradCheck> {
    use cvvnet_autograd::gradcheck::check_tensor;
    use cvvnet_autograd::Graph;
    let eval_loss = |s: &ParamStore| -> f64 {
        let mut scratch = s.clone();
        let mut g = if train { Graph::train(&mut scratch) } else { Graph::eval(s) };
        let l = build(&mut g);
        g.value(l).item()
    };
    let mut scratch = store.clone();
    let mut g = if train { Graph::train(&mut scratch) } else { Graph::eval_with_grad(store) };
    let l = build(&mut g);
    let grads = g.backward(l);
    let mut out = Vec::new();
    for (id, e) in store.iter() {
        if !e.kind.trainable() || !e.name.starts_with(prefix) {
            continue;
        }
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(e.value.shape()));
        out.push(check_tensor(&e.name, &e.value, &analytic, step, |t| {
            let mut s = store.clone();
            s.set(id, t.clone());
            eval_loss(&s)
        }));
    }
    out
}

pub fn identity_pointwise(c_out: usize, c_in: usize) -> Tensor {
    let mut t = Tensor::zeros(&[c_out, c_in, 1, 1, 1]);
    for i in 0..c_out.min(c_in) {
        t.set(&[i, i, 0, 0, 0], 1.0);
    }
    t
}

pub fn set(store: &mut ParamStore, name: &str, t: Tensor) {
    let id = store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    store.set(id, t);
}
