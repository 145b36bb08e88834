//! 2D convolution lowered to a single GEMM via im2col.

use super::{sgemm_nn, sgemm_nt, sgemm_tn};
use crate::rng::SeedStream;
use crate::tensor::Tensor;
use crate::math;
use alloc::vec;
use alloc::vec::Vec;

/// Square convolution, stride 1. Kernel 3 uses padding 1, kernel 1 uses
/// padding 0, so spatial size is always preserved.
pub struct Conv2d {
    pub w: Tensor,  // (cout, cin*ks*ks)
    pub b: Tensor,  // (cout)
    pub gw: Tensor,
    pub gb: Tensor,
    cin: usize,
    cout: usize,
    ks: usize,
    pad: usize,
    cached_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, ks: usize, rng: &mut SeedStream) -> Self {
        assert!(ks == 1 || ks == 3);
        let fan_in = cin * ks * ks;
        let std = math::sqrt(2.0 / fan_in as f32);
        Self {
            w: rng.normal_tensor_scaled(&[cout, fan_in], std),
            b: Tensor::zeros(&[cout]),
            gw: Tensor::zeros(&[cout, fan_in]),
            gb: Tensor::zeros(&[cout]),
            cin,
            cout,
            ks,
            pad: if ks == 3 { 1 } else { 0 },
            cached_input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    fn im2col(&self, x: &Tensor) -> Vec<f32> {
        let d = x.dims();
        let (c, n, h, w) = (d[0], d[1], d[2], d[3]);
        debug_assert_eq!(c, self.cin);
        let nhw = n * h * w;
        let k = c * self.ks * self.ks;
        let mut col = vec![0.0f32; k * nhw];
        let src = x.data();
        let pad = self.pad as isize;
        for ch in 0..c {
            for dy in 0..self.ks {
                for dx in 0..self.ks {
                    let row = (ch * self.ks + dy) * self.ks + dx;
                    let dst_row = &mut col[row * nhw..(row + 1) * nhw];
                    let oy = dy as isize - pad;
                    let ox = dx as isize - pad;
                    // Valid output x range for this tap.
                    let x_lo = (-ox).max(0) as usize;
                    let x_hi = ((w as isize - ox).min(w as isize)).max(0) as usize;
                    for img in 0..n {
                        for y in 0..h {
                            let sy = y as isize + oy;
                            let dst_off = (img * h + y) * w;
                            if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                                continue; // stays zero
                            }
                            let src_off =
                                ((ch * n + img) * h + sy as usize) * w + (x_lo as isize + ox) as usize;
                            let len = x_hi - x_lo;
                            dst_row[dst_off + x_lo..dst_off + x_lo + len]
                                .copy_from_slice(&src[src_off..src_off + len]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[f32], dims: &[usize]) -> Tensor {
        let (c, n, h, w) = (dims[0], dims[1], dims[2], dims[3]);
        let nhw = n * h * w;
        let mut dx = Tensor::zeros(dims);
        let dst = dx.data_mut();
        let pad = self.pad as isize;
        for ch in 0..c {
            for dy in 0..self.ks {
                for dx_ in 0..self.ks {
                    let row = (ch * self.ks + dy) * self.ks + dx_;
                    let src_row = &dcol[row * nhw..(row + 1) * nhw];
                    let oy = dy as isize - pad;
                    let ox = dx_ as isize - pad;
                    let x_lo = (-ox).max(0) as usize;
                    let x_hi = ((w as isize - ox).min(w as isize)).max(0) as usize;
                    for img in 0..n {
                        for y in 0..h {
                            let sy = y as isize + oy;
                            if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                                continue;
                            }
                            let src_off = (img * h + y) * w;
                            let dst_off =
                                ((ch * n + img) * h + sy as usize) * w + (x_lo as isize + ox) as usize;
                            for i in 0..(x_hi - x_lo) {
                                dst[dst_off + i] += src_row[src_off + x_lo + i];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn forward_impl(&self, x: &Tensor) -> Tensor {
        let d = x.dims();
        let (n, h, w) = (d[1], d[2], d[3]);
        let nhw = n * h * w;
        let k = self.cin * self.ks * self.ks;
        let col = self.im2col(x);
        let mut y = Tensor::zeros(&[self.cout, n, h, w]);
        sgemm_nn(self.cout, k, nhw, self.w.data(), &col, 0.0, y.data_mut());
        let yd = y.data_mut();
        for o in 0..self.cout {
            let bias = self.b.data()[o];
            for v in &mut yd[o * nhw..(o + 1) * nhw] {
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

    /// Accumulates gw/gb; returns dx unless `need_dx` is false.
    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let x = self.cached_input.take().expect("backward without forward_train");
        let d = x.dims().to_vec();
        let (n, h, w) = (d[1], d[2], d[3]);
        let nhw = n * h * w;
        let k = self.cin * self.ks * self.ks;
        debug_assert_eq!(dy.dims(), &[self.cout, n, h, w]);

        let col = self.im2col(&x);
        // dW += dY * col^T
        sgemm_nt(self.cout, nhw, k, dy.data(), &col, 1.0, self.gw.data_mut());
        // db += row sums of dY
        for o in 0..self.cout {
            let mut acc = 0.0f32;
            for v in &dy.data()[o * nhw..(o + 1) * nhw] {
                acc += v;
            }
            self.gb.data_mut()[o] += acc;
        }
        if !need_dx {
            return None;
        }
        let mut dcol = vec![0.0f32; k * nhw];
        sgemm_tn(k, self.cout, nhw, self.w.data(), dy.data(), 0.0, &mut dcol);
        Some(self.col2im(&dcol, &d))
    }

    pub fn param_slots(&mut self) -> [(&mut Tensor, &mut Tensor); 2] {
        [(&mut self.w, &mut self.gw), (&mut self.b, &mut self.gb)]
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(alloc::string::String, &Tensor)> {
        use alloc::format;
        vec![(format!("{prefix}.w"), &self.w), (format!("{prefix}.b"), &self.b)]
    }

    pub fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(alloc::string::String, &mut Tensor)> {
        use alloc::format;
        vec![(format!("{prefix}.w"), &mut self.w), (format!("{prefix}.b"), &mut self.b)]
    }
}
