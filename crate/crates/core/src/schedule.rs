//! Continuous-time variance schedule.
//!
//! The cumulative signal coefficient `alpha_bar(t)` is stored as a dense
//! knot table over t in [0, 1] with linear interpolation in between, so the
//! rest of the toolkit can treat t as continuous.

use crate::error::{Error, Result};
use crate::math;
use alloc::vec::Vec;

const CLAMP_LO: f32 = 1e-4;
const CLAMP_HI: f32 = 1.0 - 1e-4;

#[derive(Debug, Clone)]
pub struct VarianceSchedule {
    knots: Vec<f32>,
}

impl VarianceSchedule {
    /// Cosine schedule: `cos^2((t+s)/(1+s) * pi/2) / cos^2(s/(1+s) * pi/2)`
    /// with `s = 0.008`, clamped to `[1e-4, 1 - 1e-4]`.
    pub fn cosine(knots: usize) -> Result<Self> {
        if knots < 16 {
            return Err(Error::InvalidConfig("schedule needs at least 16 knots"));
        }
        let s = 0.008f64;
        let f = |t: f64| -> f64 {
            let c = math::cos64((t + s) / (1.0 + s) * core::f64::consts::FRAC_PI_2);
            c * c
        };
        let f0 = f(0.0);
        let table = (0..knots)
            .map(|i| {
                let t = i as f64 / (knots - 1) as f64;
                let v = (f(t) / f0) as f32;
                v.clamp(CLAMP_LO, CLAMP_HI)
            })
            .collect();
        Ok(Self { knots: table })
    }

    pub fn default_cosine() -> Self {
        Self::cosine(1000).expect("default knot count is valid")
    }

    /// Build a schedule from explicit knot values (useful for tests and
    /// custom schedules). Values must lie strictly inside (0, 1) and be
    /// non-increasing.
    pub fn from_knots(knots: Vec<f32>) -> Result<Self> {
        if knots.len() < 16 {
            return Err(Error::InvalidConfig("schedule needs at least 16 knots"));
        }
        for w in knots.windows(2) {
            if w[1] > w[0] {
                return Err(Error::InvalidConfig("schedule knots must be non-increasing"));
            }
        }
        if knots.iter().any(|v| *v <= 0.0 || *v >= 1.0) {
            return Err(Error::InvalidConfig("schedule knots must lie in (0, 1)"));
        }
        Ok(Self { knots })
    }

    pub fn num_knots(&self) -> usize {
        self.knots.len()
    }

    /// `alpha_bar(t)` by linear interpolation; t is clamped into [0, 1].
    pub fn alpha_bar(&self, t: f32) -> f32 {
        let n = self.knots.len();
        let x = t.clamp(0.0, 1.0) * (n - 1) as f32;
        let i = (x as usize).min(n - 2);
        let frac = x - i as f32;
        self.knots[i] * (1.0 - frac) + self.knots[i + 1] * frac
    }

    pub fn sqrt_alpha_bar(&self, t: f32) -> f32 {
        math::sqrt(self.alpha_bar(t))
    }

    pub fn sqrt_one_minus_alpha_bar(&self, t: f32) -> f32 {
        math::sqrt(1.0 - self.alpha_bar(t))
    }

    pub fn knot_values(&self) -> &[f32] {
        &self.knots
    }
}
