//! Procedural class-conditional dataset generation and dataset plumbing.
//!
//! Ten fixed shape families act as the label vocabulary. Every image is a
//! single antialiased shape on a uniform background with randomized position,
//! scale, rotation, and intensities; generation is a pure function of the
//! arguments.

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive, SeedStream};
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

pub const SHAPE_FAMILIES: [&str; 10] =
    ["circle", "square", "triangle", "cross", "ring", "star", "crescent", "bar", "dotgrid", "frame"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    HeldOut,
    All,
}

impl Split {
    pub fn tag(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HeldOut => "held-out",
            Split::All => "all",
        }
    }
}

/// Labeled image dataset. All images share one `(C,H,W)` shape; labels are
/// class ids below `num_classes`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_dims(&self) -> &[usize] {
        self.images[0].dims()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::InvalidConfig("image/label counts differ"));
        }
        let dims = self.images[0].dims().to_vec();
        for img in &self.images {
            if img.dims() != dims {
                return Err(Error::ShapeMismatch {
                    context: "dataset",
                    expected: String::from("uniform image shape"),
                    got: img.shape_string(),
                });
            }
            if !img.all_finite() {
                return Err(Error::DegenerateInput("non-finite pixel"));
            }
        }
        for &l in &self.labels {
            if l >= self.num_classes {
                return Err(Error::ClassOutOfRange { class: l, classes: self.num_classes });
            }
        }
        Ok(())
    }

    /// Deterministic disjoint split; `frac` of the samples (rounded down, at
    /// least 1 for non-empty sets) go to the held-out side.
    pub fn split_holdout(&self, frac: f32, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let n = self.len();
        let mut rng = SeedStream::new(derive(seed, "split"));
        let perm = rng.permutation(n);
        let n_held = if n == 0 { 0 } else { ((n as f32 * frac) as usize).max(1).min(n - 1) };
        let mut held = LabeledDataset {
            images: Vec::new(),
            labels: Vec::new(),
            num_classes: self.num_classes,
            split: Split::HeldOut,
        };
        let mut train = LabeledDataset {
            images: Vec::new(),
            labels: Vec::new(),
            num_classes: self.num_classes,
            split: Split::Train,
        };
        for (k, &i) in perm.iter().enumerate() {
            let dst = if k < n_held { &mut held } else { &mut train };
            dst.images.push(self.images[i].clone());
            dst.labels.push(self.labels[i]);
        }
        (train, held)
    }

    /// Subset containing only the given class.
    pub fn filter_class(&self, class: usize) -> LabeledDataset {
        let mut out = LabeledDataset {
            images: Vec::new(),
            labels: Vec::new(),
            num_classes: self.num_classes,
            split: self.split,
        };
        for (img, &l) in self.images.iter().zip(self.labels.iter()) {
            if l == class {
                out.images.push(img.clone());
                out.labels.push(l);
            }
        }
        out
    }
}

struct ShapeParams {
    cx: f32,
    cy: f32,
    radius: f32,
    rot: f32,
    fg: f32,
    bg: f32,
}

fn signed_distance(family: usize, u: f32, v: f32, r: f32) -> f32 {
    match family {
        // circle
        0 => math::sqrt(u * u + v * v) - r,
        // square
        1 => u.abs().max(v.abs()) - 0.82 * r,
        // triangle (equilateral, pointing up before rotation)
        2 => {
            let k = 1.7320508f32; // sqrt(3)
            let h = 0.95 * r;
            let d1 = v - h * 0.5;
            let d2 = (k * u.abs() - v) * 0.5 - h * 0.25;
            d1.max(d2) * 0.8
        }
        // cross
        3 => {
            let bar1 = (u.abs() - r).max(v.abs() - 0.32 * r);
            let bar2 = (v.abs() - r).max(u.abs() - 0.32 * r);
            bar1.min(bar2)
        }
        // ring
        4 => (math::sqrt(u * u + v * v) - 0.78 * r).abs() - 0.22 * r,
        // five-point star via angular radius modulation
        5 => {
            let ang = math::atan2(v, u);
            let period = 2.0 * math::PI / 5.0;
            let mut a = ang % period;
            if a < 0.0 {
                a += period;
            }
            let tri = (a / period - 0.5).abs() * 2.0; // 0 between spikes, 1 at spike
            let radius = r * (0.38 + 0.62 * tri);
            math::sqrt(u * u + v * v) - radius
        }
        // crescent: disc minus offset disc
        6 => {
            let outer = math::sqrt(u * u + v * v) - r;
            let du = u - 0.52 * r;
            let inner = math::sqrt(du * du + v * v) - 0.82 * r;
            outer.max(-inner)
        }
        // bar
        7 => (u.abs() - r).max(v.abs() - 0.3 * r),
        // 3x3 dot grid
        8 => {
            let mut best = f32::INFINITY;
            for gy in -1i32..=1 {
                for gx in -1i32..=1 {
                    let du = u - gx as f32 * 0.68 * r;
                    let dv = v - gy as f32 * 0.68 * r;
                    best = best.min(math::sqrt(du * du + dv * dv) - 0.21 * r);
                }
            }
            best
        }
        // frame (square ring)
        9 => (u.abs().max(v.abs()) - 0.74 * r).abs() - 0.2 * r,
        _ => unreachable!(),
    }
}

fn render_shape(family: usize, p: &ShapeParams, size: usize) -> Tensor {
    let mut img = Tensor::zeros(&[1, size, size]);
    let data = img.data_mut();
    let (sr, cr) = (math::sin(p.rot), math::cos(p.rot));
    let edge = 0.75f32; // antialias half-width in pixels
    for y in 0..size {
        for x in 0..size {
            let dx = x as f32 + 0.5 - p.cx;
            let dy = y as f32 + 0.5 - p.cy;
            let u = cr * dx + sr * dy;
            let v = -sr * dx + cr * dy;
            let d = signed_distance(family, u, v, p.radius);
            // smoothstep from fg (inside) to bg (outside)
            let t = ((d + edge) / (2.0 * edge)).clamp(0.0, 1.0);
            let t = t * t * (3.0 - 2.0 * t);
            data[y * size + x] = p.fg * (1.0 - t) + p.bg * t;
        }
    }
    img
}

/// Deterministic procedural dataset: `count` images of `size`x`size` over `k`
/// shape classes, class-balanced to within one sample.
pub fn gen_shapes(seed: u64, count: usize, k: usize, size: usize) -> Result<LabeledDataset> {
    if k == 0 || k > 10 {
        return Err(Error::UnsupportedClassCount(k));
    }
    if !matches!(size, 28 | 32 | 64) {
        return Err(Error::UnsupportedSize(size));
    }
    if count < k {
        return Err(Error::CountBelowClasses { count, classes: k });
    }
    let mut rng = SeedStream::new(derive(seed, "gen-shapes"));
    let s = size as f32;
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let family = i % k;
        let params = ShapeParams {
            cx: rng.uniform_in(0.38, 0.62) * s,
            cy: rng.uniform_in(0.38, 0.62) * s,
            radius: rng.uniform_in(0.2, 0.34) * s,
            rot: rng.uniform_in(0.0, 2.0 * math::PI),
            fg: rng.uniform_in(0.25, 1.0),
            bg: rng.uniform_in(-1.0, -0.35),
        };
        images.push(render_shape(family, &params, size));
        labels.push(family);
    }
    let ds = LabeledDataset { images, labels, num_classes: k, split: Split::All };
    ds.validate()?;
    Ok(ds)
}
