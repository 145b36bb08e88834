//! Desk-scale score distillation with a learned manifold corrective.
//!
//! This crate holds the math: variance schedules, forward diffusion, small
//! U-Nets trained by layer-wise backprop, the SDS / cond / proj / LMC loss
//! operator family, optimization drivers over differentiable image
//! parameterizations, a distillation-trained translator, and the image
//! statistics used to evaluate all of it. Everything is deterministic given
//! a seed and runs single-threaded on the CPU.
//!
//! IO, file formats, and the command-line front end live in the companion
//! `lmc-cli` crate; this crate is `no_std`-compatible (with `alloc`).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod corrective;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod losses;
pub mod math;
pub mod nn;
pub mod optimize;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod translate;

pub use error::{Error, Result};
pub use tensor::Tensor;
