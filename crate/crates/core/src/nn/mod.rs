//! Small layer-wise neural network engine.
//!
//! Activations use a channel-major `(channels, batch, height, width)` layout
//! so every convolution becomes one matrix product over the fused
//! `batch*height*width` axis. Layers cache what they need for backprop when
//! run through their `*_train` entry points; inference entry points take
//! `&self` and are safe to share across threads.

pub mod adam;
pub mod conv;
pub mod layers;
pub mod resample;
pub mod unet;

pub use adam::{cosine_lr, step_decay_lr, Adam};
pub use conv::Conv2d;
pub use layers::{concat_channels, split_channels, Linear, MaxPool2, Relu, TanhLayer};
pub use unet::{UNet, UNetConfig};

use crate::tensor::Tensor;
use alloc::vec::Vec;

/// C = A(m,k) * B(k,n) + beta*C, all row-major.
pub(crate) fn sgemm_nn(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C = A(m,k) * B^T where B is stored row-major as (n,k).
pub(crate) fn sgemm_nt(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C = A^T * B where A is stored row-major as (k,m).
pub(crate) fn sgemm_tn(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Stack per-image `(C,H,W)` tensors into the internal `(C,N,H,W)` layout.
pub fn pack_batch(images: &[&Tensor]) -> Tensor {
    let n = images.len();
    assert!(n > 0);
    let d = images[0].dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let hw = h * w;
    let mut out = Tensor::zeros(&[c, n, h, w]);
    let dst = out.data_mut();
    for (i, img) in images.iter().enumerate() {
        debug_assert_eq!(img.dims(), d);
        let src = img.data();
        for ch in 0..c {
            let s = &src[ch * hw..(ch + 1) * hw];
            let o = (ch * n + i) * hw;
            dst[o..o + hw].copy_from_slice(s);
        }
    }
    out
}

/// Extract image `i` of a `(C,N,H,W)` tensor as `(C,H,W)`.
pub fn unpack_image(batch: &Tensor, i: usize) -> Tensor {
    let d = batch.dims();
    let (c, n, h, w) = (d[0], d[1], d[2], d[3]);
    debug_assert!(i < n);
    let hw = h * w;
    let mut out = Tensor::zeros(&[c, h, w]);
    let dst = out.data_mut();
    let src = batch.data();
    for ch in 0..c {
        let s = (ch * n + i) * hw;
        dst[ch * hw..(ch + 1) * hw].copy_from_slice(&src[s..s + hw]);
    }
    out
}

/// Unpack a whole `(C,N,H,W)` batch into per-image tensors.
pub fn unpack_batch(batch: &Tensor) -> Vec<Tensor> {
    (0..batch.dims()[1]).map(|i| unpack_image(batch, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn gemm_variants_agree_with_naive() {
        let mut rng = SeedStream::new(11);
        let (m, k, n) = (5, 7, 6);
        let a = rng.normal_tensor(&[m, k]);
        let b = rng.normal_tensor(&[k, n]);
        let mut naive = alloc::vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a.data()[i * k + l] * b.data()[l * n + j];
                }
                naive[i * n + j] = acc;
            }
        }
        let mut c = alloc::vec![0.0f32; m * n];
        sgemm_nn(m, k, n, a.data(), b.data(), 0.0, &mut c);
        for (x, y) in c.iter().zip(naive.iter()) {
            assert!((x - y).abs() < 1e-4);
        }

        // A * B^T with B^T stored as (n,k)
        let mut bt = alloc::vec![0.0f32; n * k];
        for l in 0..k {
            for j in 0..n {
                bt[j * k + l] = b.data()[l * n + j];
            }
        }
        let mut c2 = alloc::vec![0.0f32; m * n];
        sgemm_nt(m, k, n, a.data(), &bt, 0.0, &mut c2);
        for (x, y) in c2.iter().zip(naive.iter()) {
            assert!((x - y).abs() < 1e-4);
        }

        // A^T * B with A^T stored as (k,m)
        let mut at = alloc::vec![0.0f32; k * m];
        for i in 0..m {
            for l in 0..k {
                at[l * m + i] = a.data()[i * k + l];
            }
        }
        let mut c3 = alloc::vec![0.0f32; m * n];
        sgemm_tn(m, k, n, &at, b.data(), 0.0, &mut c3);
        for (x, y) in c3.iter().zip(naive.iter()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn pack_unpack_roundtrip() {
        let mut rng = SeedStream::new(3);
        let imgs: Vec<Tensor> = (0..3).map(|_| rng.normal_tensor(&[2, 4, 5])).collect();
        let refs: Vec<&Tensor> = imgs.iter().collect();
        let batch = pack_batch(&refs);
        assert_eq!(batch.dims(), &[2, 3, 4, 5]);
        for (i, img) in imgs.iter().enumerate() {
            assert_eq!(&unpack_image(&batch, i), img);
        }
    }
}
