//! Bilinear resampling with an exact adjoint.
//!
//! The optimization drivers pull loss gradients computed at model resolution
//! back onto larger canvases (whole-image phase and random patches), so the
//! scatter path must be the exact transpose of the gather path. Both
//! directions share one weight computation to guarantee that.

use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Per-axis source taps: (lo index, hi index, hi weight).
fn axis_taps(dst: usize, src: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f32 / dst as f32;
    (0..dst)
        .map(|i| {
            let s = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f32);
            let lo = s as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f32)
        })
        .collect()
}

/// Resample a rectangular region `(y0, x0, rh, rw)` of a `(C,H,W)` image to
/// `(C, oh, ow)`.
pub fn resize_region(
    img: &Tensor,
    y0: usize,
    x0: usize,
    rh: usize,
    rw: usize,
    oh: usize,
    ow: usize,
) -> Tensor {
    let d = img.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    debug_assert!(y0 + rh <= h && x0 + rw <= w);
    let ty = axis_taps(oh, rh);
    let tx = axis_taps(ow, rw);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let src = img.data();
    let dst = out.data_mut();
    for ch in 0..c {
        let base = ch * h * w;
        for (oy, &(ylo, yhi, fy)) in ty.iter().enumerate() {
            let r0 = base + (y0 + ylo) * w + x0;
            let r1 = base + (y0 + yhi) * w + x0;
            let orow = ch * oh * ow + oy * ow;
            for (ox, &(xlo, xhi, fx)) in tx.iter().enumerate() {
                let top = src[r0 + xlo] * (1.0 - fx) + src[r0 + xhi] * fx;
                let bot = src[r1 + xlo] * (1.0 - fx) + src[r1 + xhi] * fx;
                dst[orow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Exact adjoint of [`resize_region`]: scatters `dy` (`(C,oh,ow)`) back into
/// a `(C,H,W)` accumulator.
pub fn resize_region_adjoint(
    dy: &Tensor,
    into: &mut Tensor,
    y0: usize,
    x0: usize,
    rh: usize,
    rw: usize,
) {
    let od = dy.dims();
    let (c, oh, ow) = (od[0], od[1], od[2]);
    let d = into.dims();
    let (h, w) = (d[1], d[2]);
    debug_assert_eq!(d[0], c);
    debug_assert!(y0 + rh <= h && x0 + rw <= w);
    let ty = axis_taps(oh, rh);
    let tx = axis_taps(ow, rw);
    let src = dy.data();
    let dst = into.data_mut();
    for ch in 0..c {
        let base = ch * h * w;
        for (oy, &(ylo, yhi, fy)) in ty.iter().enumerate() {
            let r0 = base + (y0 + ylo) * w + x0;
            let r1 = base + (y0 + yhi) * w + x0;
            let orow = ch * oh * ow + oy * ow;
            for (ox, &(xlo, xhi, fx)) in tx.iter().enumerate() {
                let g = src[orow + ox];
                dst[r0 + xlo] += g * (1.0 - fx) * (1.0 - fy);
                dst[r0 + xhi] += g * fx * (1.0 - fy);
                dst[r1 + xlo] += g * (1.0 - fx) * fy;
                dst[r1 + xhi] += g * fx * fy;
            }
        }
    }
}

/// Whole-image bilinear resize of a `(C,H,W)` tensor.
pub fn resize(img: &Tensor, oh: usize, ow: usize) -> Tensor {
    let d = img.dims();
    resize_region(img, 0, 0, d[1], d[2], oh, ow)
}

/// Adjoint of [`resize`], accumulating into a fresh `(C,H,W)` tensor.
pub fn resize_adjoint(dy: &Tensor, h: usize, w: usize) -> Tensor {
    let c = dy.dims()[0];
    let mut out = Tensor::zeros(&[c, h, w]);
    resize_region_adjoint(dy, &mut out, 0, 0, h, w);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn constant_images_stay_constant() {
        let img = Tensor::filled(&[1, 9, 7], 0.37);
        let out = resize(&img, 4, 13);
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_when_sizes_match() {
        let mut rng = SeedStream::new(1);
        let img = rng.normal_tensor(&[2, 6, 6]);
        let out = resize(&img, 6, 6);
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = SeedStream::new(17);
        for (src, dst) in [((1, 8, 8), (5, 5)), ((2, 6, 9), (12, 4))] {
            let x = rng.normal_tensor(&[src.0, src.1, src.2]);
            let y = rng.normal_tensor(&[src.0, dst.0, dst.1]);
            let ax = resize(&x, dst.0, dst.1);
            let aty = resize_adjoint(&y, src.1, src.2);
            let lhs: f64 =
                ax.data().iter().zip(y.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            let rhs: f64 =
                x.data().iter().zip(aty.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            assert!((lhs - rhs).abs() < 1e-4, "lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn region_adjoint_inner_product_identity() {
        let mut rng = SeedStream::new(23);
        let x = rng.normal_tensor(&[1, 10, 10]);
        let (y0, x0, rh, rw, oh, ow) = (2, 3, 6, 5, 4, 4);
        let y = rng.normal_tensor(&[1, oh, ow]);
        let ax = resize_region(&x, y0, x0, rh, rw, oh, ow);
        let mut aty = Tensor::zeros(&[1, 10, 10]);
        resize_region_adjoint(&y, &mut aty, y0, x0, rh, rw);
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }
}
