//! A minimal dense f32 tensor.
//!
//! Shapes are plain `Vec<usize>`; layout is row-major in the listed dim
//! order. Images are `(channels, height, width)`; batched network
//! activations are `(channels, batch, height, width)` so that every
//! convolution lowers to a single matrix product over the fused
//! `batch*height*width` axis.

use crate::math;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(dims: &[usize], value: f32) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![value; n] }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "dims/data length mismatch");
        Self { dims: dims.to_vec(), data }
    }

    pub fn scalar(value: f32) -> Self {
        Self { dims: vec![1], data: vec![value] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterpret with new dims of identical element count.
    pub fn reshaped(mut self, dims: &[usize]) -> Self {
        assert_eq!(dims.iter().product::<usize>(), self.data.len());
        self.dims = dims.to_vec();
        self
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.dims == other.dims
    }

    pub fn shape_string(&self) -> alloc::string::String {
        let mut s = alloc::string::String::from("(");
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                s.push('x');
            }
            s.push_str(&d.to_string());
        }
        s.push(')');
        s
    }

    // ---- elementwise ----

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, a: f32) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (v, o) in self.data.iter_mut().zip(other.data.iter()) {
            *v += o;
        }
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f32, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (v, o) in self.data.iter_mut().zip(other.data.iter()) {
            *v += a * o;
        }
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(other.data.iter()).map(|(a, b)| a - b).collect();
        Tensor { dims: self.dims.clone(), data }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(other.data.iter()).map(|(a, b)| a + b).collect();
        Tensor { dims: self.dims.clone(), data }
    }

    pub fn scaled(&self, a: f32) -> Tensor {
        self.map(|v| v * a)
    }

    pub fn clamp(&mut self, lo: f32, hi: f32) {
        for v in &mut self.data {
            *v = v.max(lo).min(hi);
        }
    }

    // ---- reductions ----

    pub fn mean(&self) -> f32 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0f64;
        for &v in &self.data {
            acc += v as f64;
        }
        (acc / self.data.len() as f64) as f32
    }

    /// Population standard deviation over all elements.
    pub fn std(&self) -> f32 {
        if self.data.is_empty() {
            return 0.0;
        }
        let m = self.mean() as f64;
        let mut acc = 0.0f64;
        for &v in &self.data {
            let d = v as f64 - m;
            acc += d * d;
        }
        math::sqrt64(acc / self.data.len() as f64) as f32
    }

    pub fn l2_norm(&self) -> f32 {
        let mut acc = 0.0f64;
        for &v in &self.data {
            acc += (v as f64) * (v as f64);
        }
        math::sqrt64(acc) as f32
    }

    /// Mean of |x| over all elements.
    pub fn mean_abs(&self) -> f32 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0f64;
        for &v in &self.data {
            acc += v.abs() as f64;
        }
        (acc / self.data.len() as f64) as f32
    }

    /// Mean squared value; `mean_sq(a - b)` is the per-element MSE.
    pub fn mean_sq(&self) -> f32 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0f64;
        for &v in &self.data {
            acc += (v as f64) * (v as f64);
        }
        (acc / self.data.len() as f64) as f32
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Relative L2 distance: ||a-b|| / max(||a||, ||b||, eps).
pub fn rel_l2(a: &Tensor, b: &Tensor) -> f32 {
    let d = a.sub(b).l2_norm();
    let n = a.l2_norm().max(b.l2_norm()).max(1e-12);
    d / n
}
