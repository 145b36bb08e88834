//! Activation, pooling, and shape-plumbing layers.

use crate::math;
use crate::tensor::Tensor;
use crate::rng::SeedStream;
use alloc::vec::Vec;

pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self { mask: None }
    }

    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        x.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        self.forward_infer(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("backward without forward_train");
        let mut dx = dy.clone();
        for (v, m) in dx.data_mut().iter_mut().zip(mask.iter()) {
            if !m {
                *v = 0.0;
            }
        }
        dx
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

pub struct TanhLayer {
    cached_y: Option<Tensor>,
}

impl TanhLayer {
    pub fn new() -> Self {
        Self { cached_y: None }
    }

    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        x.map(math::tanh)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.forward_infer(x);
        self.cached_y = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let y = self.cached_y.take().expect("backward without forward_train");
        let mut dx = dy.clone();
        for (v, yv) in dx.data_mut().iter_mut().zip(y.data().iter()) {
            *v *= 1.0 - yv * yv;
        }
        dx
    }
}

impl Default for TanhLayer {
    fn default() -> Self {
        Self::new()
    }
}

/// 2x2 max pooling, stride 2, on `(C,N,H,W)`.
pub struct MaxPool2 {
    argmax: Option<Vec<u8>>,
    in_dims: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self { argmax: None, in_dims: Vec::new() }
    }

    fn pool(x: &Tensor, record: Option<&mut Vec<u8>>) -> Tensor {
        let d = x.dims();
        let (c, n, h, w) = (d[0], d[1], d[2], d[3]);
        debug_assert!(h % 2 == 0 && w % 2 == 0);
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Tensor::zeros(&[c, n, oh, ow]);
        let src = x.data();
        let dst = y.data_mut();
        let mut args = record.map(|a| {
            a.clear();
            a.resize(c * n * oh * ow, 0u8);
            a
        });
        for cn in 0..c * n {
            let base = cn * h * w;
            let obase = cn * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = base + (2 * oy) * w + 2 * ox;
                    let cand = [src[i00], src[i00 + 1], src[i00 + w], src[i00 + w + 1]];
                    let mut best = 0usize;
                    for k in 1..4 {
                        if cand[k] > cand[best] {
                            best = k;
                        }
                    }
                    dst[obase + oy * ow + ox] = cand[best];
                    if let Some(a) = args.as_deref_mut() {
                        a[obase + oy * ow + ox] = best as u8;
                    }
                }
            }
        }
        y
    }

    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        Self::pool(x, None)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.in_dims = x.dims().to_vec();
        let mut args = self.argmax.take().unwrap_or_default();
        let y = Self::pool(x, Some(&mut args));
        self.argmax = Some(args);
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let args = self.argmax.take().expect("backward without forward_train");
        let (c, n, h, w) = (self.in_dims[0], self.in_dims[1], self.in_dims[2], self.in_dims[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut dx = Tensor::zeros(&self.in_dims);
        let dst = dx.data_mut();
        let src = dy.data();
        for cn in 0..c * n {
            let base = cn * h * w;
            let obase = cn * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = src[obase + oy * ow + ox];
                    let k = args[obase + oy * ow + ox] as usize;
                    let (ky, kx) = (k / 2, k % 2);
                    dst[base + (2 * oy + ky) * w + 2 * ox + kx] += g;
                }
            }
        }
        dx
    }
}

impl Default for MaxPool2 {
    fn default() -> Self {
        Self::new()
    }
}

/// Nearest-neighbour 2x upsampling on `(C,N,H,W)`. Stateless.
pub fn upsample2(x: &Tensor) -> Tensor {
    let d = x.dims();
    let (c, n, h, w) = (d[0], d[1], d[2], d[3]);
    let mut y = Tensor::zeros(&[c, n, 2 * h, 2 * w]);
    let src = x.data();
    let dst = y.data_mut();
    for cn in 0..c * n {
        let base = cn * h * w;
        let obase = cn * 4 * h * w;
        for yy in 0..h {
            for xx in 0..w {
                let v = src[base + yy * w + xx];
                let o = obase + (2 * yy) * 2 * w + 2 * xx;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * w] = v;
                dst[o + 2 * w + 1] = v;
            }
        }
    }
    y
}

/// Adjoint of [`upsample2`]: sums each 2x2 block.
pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let d = dy.dims();
    let (c, n, h2, w2) = (d[0], d[1], d[2], d[3]);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros(&[c, n, h, w]);
    let src = dy.data();
    let dst = dx.data_mut();
    for cn in 0..c * n {
        let base = cn * h * w;
        let obase = cn * h2 * w2;
        for yy in 0..h {
            for xx in 0..w {
                let o = obase + (2 * yy) * w2 + 2 * xx;
                dst[base + yy * w + xx] = src[o] + src[o + 1] + src[o + w2] + src[o + w2 + 1];
            }
        }
    }
    dx
}

/// Concatenate along the channel axis. With the channel-major layout this is
/// a plain buffer concatenation.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (da, db) = (a.dims(), b.dims());
    debug_assert_eq!(&da[1..], &db[1..]);
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[da[0] + db[0], da[1], da[2], da[3]], data)
}

/// Split a channel-concatenated gradient back into its two parts.
pub fn split_channels(dy: &Tensor, c_first: usize) -> (Tensor, Tensor) {
    let d = dy.dims();
    let rest: usize = d[1] * d[2] * d[3];
    let cut = c_first * rest;
    let a = Tensor::from_vec(&[c_first, d[1], d[2], d[3]], dy.data()[..cut].to_vec());
    let b = Tensor::from_vec(&[d[0] - c_first, d[1], d[2], d[3]], dy.data()[cut..].to_vec());
    (a, b)
}

/// Fully connected layer on `(features, batch)` columns.
pub struct Linear {
    pub w: Tensor, // (out, in)
    pub b: Tensor, // (out)
    pub gw: Tensor,
    pub gb: Tensor,
    fin: usize,
    fout: usize,
    cached_input: Option<Tensor>,
}

impl Linear {
    pub fn new(fin: usize, fout: usize, rng: &mut SeedStream) -> Self {
        let std = math::sqrt(2.0 / fin as f32);
        Self {
            w: rng.normal_tensor_scaled(&[fout, fin], std),
            b: Tensor::zeros(&[fout]),
            gw: Tensor::zeros(&[fout, fin]),
            gb: Tensor::zeros(&[fout]),
            fin,
            fout,
            cached_input: None,
        }
    }

    fn forward_impl(&self, x: &Tensor) -> Tensor {
        let n = x.dims()[1];
        let mut y = Tensor::zeros(&[self.fout, n]);
        super::sgemm_nn(self.fout, self.fin, n, self.w.data(), x.data(), 0.0, y.data_mut());
        let yd = y.data_mut();
        for o in 0..self.fout {
            let bias = self.b.data()[o];
            for v in &mut yd[o * n..(o + 1) * n] {
                *v += bias;
            }
        }
        y
    }

    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        self.forward_impl(x)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.forward_impl(x);
        self.cached_input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let x = self.cached_input.take().expect("backward without forward_train");
        let n = x.dims()[1];
        super::sgemm_nt(self.fout, n, self.fin, dy.data(), x.data(), 1.0, self.gw.data_mut());
        for o in 0..self.fout {
            let mut acc = 0.0;
            for v in &dy.data()[o * n..(o + 1) * n] {
                acc += v;
            }
            self.gb.data_mut()[o] += acc;
        }
        if !need_dx {
            return None;
        }
        let mut dx = Tensor::zeros(&[self.fin, n]);
        super::sgemm_tn(self.fin, self.fout, n, self.w.data(), dy.data(), 0.0, dx.data_mut());
        Some(dx)
    }

    pub fn param_slots(&mut self) -> [(&mut Tensor, &mut Tensor); 2] {
        [(&mut self.w, &mut self.gw), (&mut self.b, &mut self.gb)]
    }
}

/// Global average pool `(C,N,H,W) -> (C,N)`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let d = x.dims();
    let (c, n, hw) = (d[0], d[1], d[2] * d[3]);
    let mut y = Tensor::zeros(&[c, n]);
    let src = x.data();
    let dst = y.data_mut();
    for cn in 0..c * n {
        let mut acc = 0.0f32;
        for v in &src[cn * hw..(cn + 1) * hw] {
            acc += v;
        }
        dst[cn] = acc / hw as f32;
    }
    y
}

pub fn global_avg_pool_backward(dy: &Tensor, in_dims: &[usize]) -> Tensor {
    let (c, n, hw) = (in_dims[0], in_dims[1], in_dims[2] * in_dims[3]);
    let mut dx = Tensor::zeros(in_dims);
    let dst = dx.data_mut();
    for cn in 0..c * n {
        let g = dy.data()[cn] / hw as f32;
        for v in &mut dst[cn * hw..(cn + 1) * hw] {
            *v = g;
        }
    }
    dx
}
