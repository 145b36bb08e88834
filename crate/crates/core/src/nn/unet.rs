//! Compact U-Net: per-level Conv/ReLU/Conv/ReLU encoder blocks joined by 2x2
//! max pooling, a nearest-upsample decoder with 1x1 channel projections and
//! skip concatenations, and a 1x1 output head (optionally tanh-bounded).

use super::conv::Conv2d;
use super::layers::{concat_channels, split_channels, upsample2, upsample2_backward, MaxPool2, Relu, TanhLayer};
use crate::rng::SeedStream;
use crate::tensor::Tensor;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub levels: usize,
    pub base_filters: usize,
    pub final_tanh: bool,
}

pub struct UNet {
    pub cfg: UNetConfig,
    enc_a: Vec<Conv2d>,
    enc_b: Vec<Conv2d>,
    enc_a_relu: Vec<Relu>,
    enc_b_relu: Vec<Relu>,
    pools: Vec<MaxPool2>,
    up_proj: Vec<Conv2d>,
    dec_conv: Vec<Conv2d>,
    dec_relu: Vec<Relu>,
    final_conv: Conv2d,
    final_tanh: Option<TanhLayer>,
}

impl UNet {
    pub fn new(cfg: UNetConfig, rng: &mut SeedStream) -> Self {
        assert!(cfg.levels >= 2, "u-net needs at least two levels");
        let ch = |i: usize| cfg.base_filters << i;
        let mut enc_a = Vec::new();
        let mut enc_b = Vec::new();
        for i in 0..cfg.levels {
            let cin = if i == 0 { cfg.in_channels } else { ch(i - 1) };
            enc_a.push(Conv2d::new(cin, ch(i), 3, rng));
            enc_b.push(Conv2d::new(ch(i), ch(i), 3, rng));
        }
        let mut up_proj = Vec::new();
        let mut dec_conv = Vec::new();
        for i in 0..cfg.levels - 1 {
            up_proj.push(Conv2d::new(ch(i + 1), ch(i), 1, rng));
            dec_conv.push(Conv2d::new(2 * ch(i), ch(i), 3, rng));
        }
        let final_conv = Conv2d::new(ch(0), cfg.out_channels, 1, rng);
        Self {
            cfg,
            enc_a,
            enc_b,
            enc_a_relu: (0..cfg.levels).map(|_| Relu::new()).collect(),
            enc_b_relu: (0..cfg.levels).map(|_| Relu::new()).collect(),
            pools: (0..cfg.levels - 1).map(|_| MaxPool2::new()).collect(),
            up_proj,
            dec_conv,
            dec_relu: (0..cfg.levels - 1).map(|_| Relu::new()).collect(),
            final_conv,
            final_tanh: if cfg.final_tanh { Some(TanhLayer::new()) } else { None },
        }
    }

    /// Spatial size must be divisible by 2^(levels-1).
    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        let l = self.cfg.levels;
        let mut skips: Vec<Tensor> = Vec::with_capacity(l - 1);
        let mut cur = x.clone();
        for i in 0..l {
            cur = self.enc_a_relu[i].forward_infer(&self.enc_a[i].forward_infer(&cur));
            cur = self.enc_b_relu[i].forward_infer(&self.enc_b[i].forward_infer(&cur));
            if i < l - 1 {
                skips.push(cur.clone());
                cur = self.pools[i].forward_infer(&cur);
            }
        }
        for i in (0..l - 1).rev() {
            cur = upsample2(&cur);
            cur = self.up_proj[i].forward_infer(&cur);
            cur = concat_channels(&cur, &skips[i]);
            cur = self.dec_relu[i].forward_infer(&self.dec_conv[i].forward_infer(&cur));
        }
        let y = self.final_conv.forward_infer(&cur);
        match &self.final_tanh {
            Some(t) => t.forward_infer(&y),
            None => y,
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let l = self.cfg.levels;
        let mut skips: Vec<Tensor> = Vec::with_capacity(l - 1);
        let mut cur = x.clone();
        for i in 0..l {
            cur = self.enc_a_relu[i].forward_train(&self.enc_a[i].forward_train(&cur));
            cur = self.enc_b_relu[i].forward_train(&self.enc_b[i].forward_train(&cur));
            if i < l - 1 {
                skips.push(cur.clone());
                cur = self.pools[i].forward_train(&cur);
            }
        }
        for i in (0..l - 1).rev() {
            cur = upsample2(&cur);
            cur = self.up_proj[i].forward_train(&cur);
            cur = concat_channels(&cur, &skips[i]);
            cur = self.dec_relu[i].forward_train(&self.dec_conv[i].forward_train(&cur));
        }
        let y = self.final_conv.forward_train(&cur);
        match &mut self.final_tanh {
            Some(t) => t.forward_train(&y),
            None => y,
        }
    }

    /// Backward through the whole net; accumulates parameter gradients and
    /// returns the input gradient when `need_dx`.
    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let l = self.cfg.levels;
        let ch = |i: usize| self.cfg.base_filters << i;
        let mut d = match &mut self.final_tanh {
            Some(t) => t.backward(dy),
            None => dy.clone(),
        };
        d = self.final_conv.backward(&d, true).unwrap();
        let mut dskips: Vec<Option<Tensor>> = (0..l - 1).map(|_| None).collect();
        for i in 0..l - 1 {
            d = self.dec_relu[i].backward(&d);
            d = self.dec_conv[i].backward(&d, true).unwrap();
            let (dup, dskip) = split_channels(&d, ch(i));
            dskips[i] = Some(dskip);
            d = self.up_proj[i].backward(&dup, true).unwrap();
            d = upsample2_backward(&d);
        }
        for i in (0..l).rev() {
            if i < l - 1 {
                d = self.pools[i].backward(&d);
                d.add_assign(dskips[i].as_ref().unwrap());
            }
            d = self.enc_b_relu[i].backward(&d);
            d = self.enc_b[i].backward(&d, true).unwrap();
            d = self.enc_a_relu[i].backward(&d);
            match self.enc_a[i].backward(&d, need_dx || i > 0) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }

    pub fn param_slots(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        let mut slots = Vec::new();
        for c in self.enc_a.iter_mut().chain(self.enc_b.iter_mut()) {
            slots.extend(c.param_slots());
        }
        for c in self.up_proj.iter_mut().chain(self.dec_conv.iter_mut()) {
            slots.extend(c.param_slots());
        }
        slots.extend(self.final_conv.param_slots());
        slots
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.enc_a.iter().enumerate() {
            out.extend(c.named_tensors(&format!("enc{i}a")));
        }
        for (i, c) in self.enc_b.iter().enumerate() {
            out.extend(c.named_tensors(&format!("enc{i}b")));
        }
        for (i, c) in self.up_proj.iter().enumerate() {
            out.extend(c.named_tensors(&format!("up{i}")));
        }
        for (i, c) in self.dec_conv.iter().enumerate() {
            out.extend(c.named_tensors(&format!("dec{i}")));
        }
        out.extend(self.final_conv.named_tensors("head"));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.enc_a.iter_mut().enumerate() {
            out.extend(c.named_tensors_mut(&format!("enc{i}a")));
        }
        for (i, c) in self.enc_b.iter_mut().enumerate() {
            out.extend(c.named_tensors_mut(&format!("enc{i}b")));
        }
        for (i, c) in self.up_proj.iter_mut().enumerate() {
            out.extend(c.named_tensors_mut(&format!("up{i}")));
        }
        for (i, c) in self.dec_conv.iter_mut().enumerate() {
            out.extend(c.named_tensors_mut(&format!("dec{i}")));
        }
        out.extend(self.final_conv.named_tensors_mut("head"));
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn tiny(tanh: bool) -> (UNet, SeedStream) {
        let mut rng = SeedStream::new(31);
        let net = UNet::new(
            UNetConfig {
                in_channels: 2,
                out_channels: 2,
                levels: 2,
                base_filters: 4,
                final_tanh: tanh,
            },
            &mut rng,
        );
        (net, rng)
    }

    #[test]
    fn output_shape_matches_input() {
        let (net, mut rng) = tiny(false);
        let x = rng.normal_tensor(&[2, 3, 8, 8]);
        let y = net.forward_infer(&x);
        assert_eq!(y.dims(), &[2, 3, 8, 8]);
    }

    #[test]
    fn train_and_infer_forward_agree() {
        let (mut net, mut rng) = tiny(true);
        let x = rng.normal_tensor(&[2, 1, 8, 8]);
        let yi = net.forward_infer(&x);
        let yt = net.forward_train(&x);
        for (a, b) in yi.data().iter().zip(yt.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// Central finite differences on an (almost) piecewise-linear network.
    /// Coordinates whose second difference is non-negligible have a relu kink
    /// inside the stencil and are excluded; the rest must match tightly.
    #[test]
    fn input_gradient_matches_finite_differences() {
        for tanh in [false, true] {
            let (mut net, mut rng) = tiny(tanh);
            let x = rng.normal_tensor(&[2, 1, 8, 8]).scaled(0.5);
            let r = rng.normal_tensor(&[2, 1, 8, 8]);
            let _y = net.forward_train(&x);
            let dx = net.backward(&r, true).unwrap();

            let loss = |img: &Tensor, net: &UNet| -> f64 {
                net.forward_infer(img)
                    .data()
                    .iter()
                    .zip(r.data())
                    .map(|(a, b)| (*a as f64) * (*b as f64))
                    .sum()
            };
            let l0 = loss(&x, &net);
            let h = 2e-3f32;
            let mut smooth = 0;
            let mut dot = 0.0f64;
            let mut nfd = 0.0f64;
            let mut nan = 0.0f64;
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let (lp, lm) = (loss(&xp, &net), loss(&xm, &net));
                let fd = ((lp - lm) / (2.0 * h as f64)) as f32;
                let an = dx.data()[i];
                dot += (fd as f64) * (an as f64);
                nfd += (fd as f64) * (fd as f64);
                nan += (an as f64) * (an as f64);
                let curv = (lp + lm - 2.0 * l0).abs();
                if curv < 1e-5 {
                    smooth += 1;
                    assert!(
                        (fd - an).abs() < 3e-3 * (1.0 + fd.abs().max(an.abs())),
                        "tanh={tanh} i={i}: fd={fd} analytic={an}"
                    );
                }
            }
            assert!(smooth >= 20, "tanh={tanh}: too few smooth coords ({smooth})");
            let cos = dot / (nfd.sqrt() * nan.sqrt());
            assert!(cos > 0.99, "tanh={tanh}: fd/analytic cosine {cos}");
        }
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        let (mut net, mut rng) = tiny(false);
        let x = rng.normal_tensor(&[2, 1, 8, 8]).scaled(0.5);
        let r = rng.normal_tensor(&[2, 1, 8, 8]);
        let _ = net.forward_train(&x);
        net.backward(&r, false);

        let loss = |net: &UNet| -> f64 {
            net.forward_infer(&x)
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };
        let l0 = loss(&net);
        let h = 2e-3f32;
        // probe a few weight coordinates in the first and last conv
        for (which, idx) in [(0usize, 0usize), (0, 7), (1, 0), (1, 5)] {
            let an = match which {
                0 => net.enc_a[0].gw.data()[idx],
                _ => net.final_conv.gw.data()[idx],
            };
            let tweak = |net: &mut UNet, delta: f32| {
                let t = match which {
                    0 => &mut net.enc_a[0].w,
                    _ => &mut net.final_conv.w,
                };
                t.data_mut()[idx] += delta;
            };
            tweak(&mut net, h);
            let lp = loss(&net);
            tweak(&mut net, -2.0 * h);
            let lm = loss(&net);
            tweak(&mut net, h);
            let fd = ((lp - lm) / (2.0 * h as f64)) as f32;
            let curv = (lp + lm - 2.0 * l0).abs();
            if curv < 1e-5 {
                assert!(
                    (fd - an).abs() < 3e-3 * (1.0 + fd.abs()),
                    "w[{which}][{idx}]: fd={fd} analytic={an}"
                );
            }
        }
    }
}
