//! Grouped 3-D convolution over `(N, C, T, H, W)` inputs.
//!
//! 2-D convolutions are expressed with `T = 1` and a temporal kernel of 1.
//! General kernels go through im2col + GEMM; pointwise and depthwise kernels
//! take direct paths.

use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub groups: usize,
}

impl ConvSpec {
    /// Stride 1, zero padding `(k-1)/2` on every axis.
    pub fn same(kernel: [usize; 3]) -> Self {
        ConvSpec { stride: [1; 3], padding: kernel.map(|k| (k - 1) / 2), groups: 1 }
    }

    pub fn pointwise() -> Self {
        ConvSpec { stride: [1; 3], padding: [0; 3], groups: 1 }
    }

    pub fn with_stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// Output spatial size along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(len + 2 * pad >= k, "kernel {k} larger than padded input {len}+2*{pad}");
    (len + 2 * pad - k) / stride + 1
}

#[derive(Debug, Clone, Copy)]
struct Geo {
    n: usize,
    cin: usize,
    cout: usize,
    groups: usize,
    cin_g: usize,
    cout_g: usize,
    inp: [usize; 3],
    k: [usize; 3],
    out: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

impl Geo {
    fn new(x: &[usize], w: &[usize], spec: &ConvSpec) -> Self {
        assert_eq!(x.len(), 5, "conv3d input must be (N,C,T,H,W), got {x:?}");
        assert_eq!(w.len(), 5, "conv3d weight must be (Cout,Cin/g,kT,kH,kW), got {w:?}");
        let g = spec.groups;
        assert!(g >= 1 && x[1] % g == 0 && w[0] % g == 0, "channels not divisible by groups");
        assert_eq!(w[1], x[1] / g, "weight expects {} input channels per group, input has {}", w[1], x[1] / g);
        let inp = [x[2], x[3], x[4]];
        let k = [w[2], w[3], w[4]];
        let out = [0, 1, 2].map(|i| conv_out_len(inp[i], k[i], spec.stride[i], spec.padding[i]));
        Geo {
            n: x[0],
            cin: x[1],
            cout: w[0],
            groups: g,
            cin_g: x[1] / g,
            cout_g: w[0] / g,
            inp,
            k,
            out,
            stride: spec.stride,
            pad: spec.padding,
        }
    }

    fn in_vol(&self) -> usize {
        self.inp.iter().product()
    }

    fn out_vol(&self) -> usize {
        self.out.iter().product()
    }

    fn k_vol(&self) -> usize {
        self.k.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.k == [1, 1, 1] && self.stride == [1, 1, 1] && self.pad == [0, 0, 0]
    }

    fn is_depthwise(&self) -> bool {
        self.cin_g == 1 && self.cout_g == 1
    }

    /// Range of output indices `o` along an axis for which `o*s + kk - p` is inside `[0, len)`.
    fn valid(&self, axis: usize, kk: usize) -> (usize, usize) {
        let (s, p, len, olen) = (self.stride[axis], self.pad[axis], self.inp[axis], self.out[axis]);
        // need o*s + kk >= p  and  o*s + kk - p < len
        let lo = if kk >= p { 0 } else { (p - kk).div_ceil(s) };
        let hi = if len + p > kk { ((len + p - kk - 1) / s + 1).min(olen) } else { 0 };
        (lo, hi.max(lo))
    }

    fn col_rows(&self) -> usize {
        self.cin_g * self.k_vol()
    }
}

/// Fills `cols` (`cin_g*kvol x out_vol`) from one group of one sample.
fn im2col(geo: &Geo, x: &[f64], cols: &mut [f64]) {
    let [it, ih, iw] = geo.inp;
    let [kt, kh, kw] = geo.k;
    let [_, oh, ow] = geo.out;
    let [st, sh, sw] = geo.stride;
    let [pt, ph, pw] = geo.pad;
    let l = geo.out_vol();
    cols.fill(0.0);
    for ci in 0..geo.cin_g {
        let xc = &x[ci * it * ih * iw..(ci + 1) * it * ih * iw];
        for a in 0..kt {
            let (t0, t1) = geo.valid(0, a);
            for b in 0..kh {
                let (h0, h1) = geo.valid(1, b);
                for c in 0..kw {
                    let (w0, w1) = geo.valid(2, c);
                    let row = ((ci * kt + a) * kh + b) * kw + c;
                    let dst = &mut cols[row * l..(row + 1) * l];
                    for o_t in t0..t1 {
                        let i_t = o_t * st + a - pt;
                        for o_h in h0..h1 {
                            let i_h = o_h * sh + b - ph;
                            let src = &xc[(i_t * ih + i_h) * iw..];
                            let d = &mut dst[(o_t * oh + o_h) * ow..];
                            if sw == 1 {
                                let i_w0 = w0 + c - pw;
                                d[w0..w1].copy_from_slice(&src[i_w0..i_w0 + (w1 - w0)]);
                            } else {
                                for o_w in w0..w1 {
                                    d[o_w] = src[o_w * sw + c - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into one group of one sample's input gradient.
fn col2im(geo: &Geo, cols: &[f64], gx: &mut [f64]) {
    let [it, ih, iw] = geo.inp;
    let [kt, kh, kw] = geo.k;
    let [_, oh, ow] = geo.out;
    let [st, sh, sw] = geo.stride;
    let [pt, ph, pw] = geo.pad;
    let l = geo.out_vol();
    for ci in 0..geo.cin_g {
        let gc = &mut gx[ci * it * ih * iw..(ci + 1) * it * ih * iw];
        for a in 0..kt {
            let (t0, t1) = geo.valid(0, a);
            for b in 0..kh {
                let (h0, h1) = geo.valid(1, b);
                for c in 0..kw {
                    let (w0, w1) = geo.valid(2, c);
                    let row = ((ci * kt + a) * kh + b) * kw + c;
                    let srcrow = &cols[row * l..(row + 1) * l];
                    for o_t in t0..t1 {
                        let i_t = o_t * st + a - pt;
                        for o_h in h0..h1 {
                            let i_h = o_h * sh + b - ph;
                            let s = &srcrow[(o_t * oh + o_h) * ow..];
                            let d = &mut gc[(i_t * ih + i_h) * iw..];
                            for o_w in w0..w1 {
                                d[o_w * sw + c - pw] += s[o_w];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Direct depthwise kernel: one input channel to one output channel.
fn depthwise_channel(geo: &Geo, x: &[f64], w: &[f64], out: &mut [f64]) {
    let [_, ih, iw] = geo.inp;
    let [kt, kh, kw] = geo.k;
    let [_, oh, ow] = geo.out;
    let [st, sh, sw] = geo.stride;
    let [pt, ph, pw] = geo.pad;
    for a in 0..kt {
        let (t0, t1) = geo.valid(0, a);
        for b in 0..kh {
            let (h0, h1) = geo.valid(1, b);
            for c in 0..kw {
                let (w0, w1) = geo.valid(2, c);
                let wv = w[(a * kh + b) * kw + c];
                if wv == 0.0 {
                    continue;
                }
                for o_t in t0..t1 {
                    let i_t = o_t * st + a - pt;
                    for o_h in h0..h1 {
                        let i_h = o_h * sh + b - ph;
                        let src = &x[(i_t * ih + i_h) * iw..];
                        let d = &mut out[(o_t * oh + o_h) * ow..];
                        for o_w in w0..w1 {
                            d[o_w] += wv * src[o_w * sw + c - pw];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_channel_backward(geo: &Geo, x: &[f64], w: &[f64], gy: &[f64], gx: Option<&mut [f64]>, gw: &mut [f64]) {
    let [_, ih, iw] = geo.inp;
    let [kt, kh, kw] = geo.k;
    let [_, oh, ow] = geo.out;
    let [st, sh, sw] = geo.stride;
    let [pt, ph, pw] = geo.pad;
    let mut gx = gx;
    for a in 0..kt {
        let (t0, t1) = geo.valid(0, a);
        for b in 0..kh {
            let (h0, h1) = geo.valid(1, b);
            for c in 0..kw {
                let (w0, w1) = geo.valid(2, c);
                let widx = (a * kh + b) * kw + c;
                let wv = w[widx];
                let mut acc = 0.0;
                for o_t in t0..t1 {
                    let i_t = o_t * st + a - pt;
                    for o_h in h0..h1 {
                        let i_h = o_h * sh + b - ph;
                        let base = (i_t * ih + i_h) * iw;
                        let g = &gy[(o_t * oh + o_h) * ow..];
                        for o_w in w0..w1 {
                            acc += g[o_w] * x[base + o_w * sw + c - pw];
                        }
                        if let Some(gx) = gx.as_deref_mut() {
                            for o_w in w0..w1 {
                                gx[base + o_w * sw + c - pw] += wv * g[o_w];
                            }
                        }
                    }
                }
                gw[widx] += acc;
            }
        }
    }
}

pub fn conv3d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
    let geo = Geo::new(x.shape(), w.shape(), spec);
    let (s_in, s_out, kv) = (geo.in_vol(), geo.out_vol(), geo.k_vol());
    let mut out = vec![0.0; geo.n * geo.cout * s_out];
    let xd = x.data();
    let wd = w.data();
    let kk = geo.col_rows();
    let mut cols = if geo.is_pointwise() || geo.is_depthwise() { Vec::new() } else { vec![0.0; kk * s_out] };
    for n in 0..geo.n {
        for g in 0..geo.groups {
            let xg = &xd[(n * geo.cin + g * geo.cin_g) * s_in..(n * geo.cin + (g + 1) * geo.cin_g) * s_in];
            let og = &mut out[(n * geo.cout + g * geo.cout_g) * s_out..(n * geo.cout + (g + 1) * geo.cout_g) * s_out];
            let wg = &wd[g * geo.cout_g * kk..(g + 1) * geo.cout_g * kk];
            if geo.is_depthwise() {
                depthwise_channel(&geo, xg, &wg[..kv], og);
            } else if geo.is_pointwise() {
                gemm(1.0, MatRef::new(wg, geo.cout_g, kk), MatRef::new(xg, kk, s_out), 0.0, og);
            } else {
                im2col(&geo, xg, &mut cols);
                gemm(1.0, MatRef::new(wg, geo.cout_g, kk), MatRef::new(&cols, kk, s_out), 0.0, og);
            }
        }
    }
    if let Some(b) = b {
        assert_eq!(b.shape(), &[geo.cout], "conv bias must have shape [Cout]");
        for n in 0..geo.n {
            for co in 0..geo.cout {
                let bv = b.data()[co];
                for v in &mut out[(n * geo.cout + co) * s_out..(n * geo.cout + co + 1) * s_out] {
                    *v += bv;
                }
            }
        }
    }
    Tensor::new(&[geo.n, geo.cout, geo.out[0], geo.out[1], geo.out[2]], out)
}

/// Gradients of a convolution: `(d input, d weight, d bias)`.
pub fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    spec: &ConvSpec,
    need_x: bool,
    need_b: bool,
) -> (Option<Tensor>, Tensor, Option<Tensor>) {
    let geo = Geo::new(x.shape(), w.shape(), spec);
    let (s_in, s_out, kv) = (geo.in_vol(), geo.out_vol(), geo.k_vol());
    let kk = geo.col_rows();
    let xd = x.data();
    let wd = w.data();
    let gyd = gy.data();
    let mut gx = if need_x { vec![0.0; xd.len()] } else { Vec::new() };
    let mut gw = vec![0.0; wd.len()];
    let general = !(geo.is_pointwise() || geo.is_depthwise());
    let mut cols = if general { vec![0.0; kk * s_out] } else { Vec::new() };
    let mut gcols = if general && need_x { vec![0.0; kk * s_out] } else { Vec::new() };
    for n in 0..geo.n {
        for g in 0..geo.groups {
            let xr = (n * geo.cin + g * geo.cin_g) * s_in..(n * geo.cin + (g + 1) * geo.cin_g) * s_in;
            let xg = &xd[xr.clone()];
            let gyg = &gyd[(n * geo.cout + g * geo.cout_g) * s_out..(n * geo.cout + (g + 1) * geo.cout_g) * s_out];
            let wr = g * geo.cout_g * kk..(g + 1) * geo.cout_g * kk;
            let wg = &wd[wr.clone()];
            let gwg = &mut gw[wr];
            if geo.is_depthwise() {
                let gxg = if need_x { Some(&mut gx[xr]) } else { None };
                depthwise_channel_backward(&geo, xg, &wg[..kv], gyg, gxg, gwg);
            } else if geo.is_pointwise() {
                gemm(1.0, MatRef::new(gyg, geo.cout_g, s_out), MatRef::t(xg, s_out, kk), 1.0, gwg);
                if need_x {
                    gemm(1.0, MatRef::t(wg, kk, geo.cout_g), MatRef::new(gyg, geo.cout_g, s_out), 1.0, &mut gx[xr]);
                }
            } else {
                im2col(&geo, xg, &mut cols);
                gemm(1.0, MatRef::new(gyg, geo.cout_g, s_out), MatRef::t(&cols, s_out, kk), 1.0, gwg);
                if need_x {
                    gemm(1.0, MatRef::t(wg, kk, geo.cout_g), MatRef::new(gyg, geo.cout_g, s_out), 0.0, &mut gcols);
                    col2im(&geo, &gcols, &mut gx[xr]);
                }
            }
        }
    }
    let gb = need_b.then(|| {
        let mut gb = vec![0.0; geo.cout];
        for n in 0..geo.n {
            for (co, acc) in gb.iter_mut().enumerate() {
                *acc += gyd[(n * geo.cout + co) * s_out..(n * geo.cout + co + 1) * s_out].iter().sum::<f64>();
            }
        }
        Tensor::new(&[geo.cout], gb)
    });
    let gx = need_x.then(|| Tensor::new(x.shape(), gx));
    (gx, Tensor::new(w.shape(), gw), gb)
}

impl Graph<'_> {
    /// 3-D convolution, `x: (N,Cin,T,H,W)`, `w: (Cout,Cin/groups,kT,kH,kW)`, bias `(Cout)`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Var {
        let out = conv3d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &spec);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let has_b = b.is_some();
        self.op(
            &inputs,
            out,
            Box::new(move |c| {
                let (gx, gw, gb) = conv3d_backward(c.inputs[0], c.inputs[1], c.grad, &spec, true, has_b);
                let mut v = vec![gx, Some(gw)];
                if has_b {
                    v.push(gb);
                }
                v
            }),
        )
    }

    /// 2-D convolution on `(N,C,H,W)` with a `(Cout,Cin/groups,kH,kW)` weight.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize, groups: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be (N,C,H,W)");
        assert_eq!(ws.len(), 4, "conv2d weight must be (Cout,Cin/g,kH,kW)");
        let x5 = self.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]]);
        let w5 = self.reshape(w, &[ws[0], ws[1], 1, ws[2], ws[3]]);
        let spec = ConvSpec { stride: [1, stride, stride], padding: [0, padding, padding], groups };
        let y = self.conv3d(x5, w5, b, spec);
        let ys = self.shape(y).to_vec();
        self.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Literal seven-loop convolution.
    fn naive(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
        let geo = Geo::new(x.shape(), w.shape(), spec);
        let mut out = Tensor::zeros(&[geo.n, geo.cout, geo.out[0], geo.out[1], geo.out[2]]);
        for n in 0..geo.n {
            for co in 0..geo.cout {
                let g = co / geo.cout_g;
                for ot in 0..geo.out[0] {
                    for oh in 0..geo.out[1] {
                        for ow in 0..geo.out[2] {
                            let mut acc = b.map_or(0.0, |b| b.data()[co]);
                            for ci in 0..geo.cin_g {
                                for a in 0..geo.k[0] {
                                    for bb in 0..geo.k[1] {
                                        for cc in 0..geo.k[2] {
                                            let it = (ot * geo.stride[0] + a) as isize - geo.pad[0] as isize;
                                            let ih = (oh * geo.stride[1] + bb) as isize - geo.pad[1] as isize;
                                            let iw = (ow * geo.stride[2] + cc) as isize - geo.pad[2] as isize;
                                            if it < 0
                                                || ih < 0
                                                || iw < 0
                                                || it >= geo.inp[0] as isize
                                                || ih >= geo.inp[1] as isize
                                                || iw >= geo.inp[2] as isize
                                            {
                                                continue;
                                            }
                                            acc += w.at(&[co, ci, a, bb, cc])
                                                * x.at(&[n, g * geo.cin_g + ci, it as usize, ih as usize, iw as usize]);
                                        }
                                    }
                                }
                            }
                            out.set(&[n, co, ot, oh, ow], acc);
                        }
                    }
                }
            }
        }
        out
    }

    fn check(xs: &[usize], ws: &[usize], spec: ConvSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::randn(xs, &mut rng);
        let w = Tensor::randn(ws, &mut rng);
        let b = Tensor::randn(&[ws[0]], &mut rng);
        let fast = conv3d_forward(&x, &w, Some(&b), &spec);
        let slow = naive(&x, &w, Some(&b), &spec);
        assert_eq!(fast.shape(), slow.shape());
        assert!(fast.max_abs_diff(&slow) < 1e-12, "forward mismatch for {spec:?}");

        // adjoint identity: <gy, conv(x)> linear in x and w
        let gy = Tensor::randn(fast.shape(), &mut rng);
        let (gx, gw, gb) = conv3d_backward(&x, &w, &gy, &spec, true, true);
        let dot = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
        let y0 = conv3d_forward(&x, &w, None, &spec);
        // <gy, conv(x, w)> = <gx, x> = <gw, w>
        assert!((dot(&gy, &y0) - dot(gx.as_ref().unwrap(), &x)).abs() < 1e-9);
        assert!((dot(&gy, &y0) - dot(&gw, &w)).abs() < 1e-9);
        assert!((gb.unwrap().sum() - gy.sum()).abs() < 1e-9);
    }

    #[test]
    fn general_kernel_matches_naive() {
        check(&[2, 3, 4, 5, 6], &[4, 3, 3, 3, 3], ConvSpec::same([3, 3, 3]));
    }

    #[test]
    fn strided_spatial_kernel_matches_naive() {
        check(&[1, 2, 3, 6, 5], &[3, 2, 1, 3, 3], ConvSpec::same([1, 3, 3]).with_stride([1, 2, 2]));
    }

    #[test]
    fn temporal_kernel_matches_naive() {
        check(&[2, 2, 4, 3, 3], &[2, 2, 3, 1, 1], ConvSpec::same([3, 1, 1]));
    }

    #[test]
    fn pointwise_and_grouped_match_naive() {
        check(&[2, 4, 2, 3, 3], &[6, 4, 1, 1, 1], ConvSpec::pointwise());
        check(&[1, 4, 1, 5, 5], &[4, 2, 1, 3, 3], ConvSpec::same([1, 3, 3]).with_groups(2));
        check(&[1, 4, 2, 4, 4], &[8, 4, 1, 1, 1], ConvSpec::pointwise().with_stride([1, 2, 2]));
    }

    #[test]
    fn depthwise_matches_naive() {
        for k in [3, 5, 7] {
            check(&[2, 3, 1, 6, 5], &[3, 1, 1, k, k], ConvSpec::same([1, k, k]).with_groups(3));
        }
    }
}
