//! Float helpers routed through libm so results are identical with and
//! without `std`.

pub const PI: f32 = core::f32::consts::PI;

#[inline(always)]
pub fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline(always)]
pub fn cos(x: f32) -> f32 {
    libm::cosf(x)
}

#[inline(always)]
pub fn sin(x: f32) -> f32 {
    libm::sinf(x)
}

#[inline(always)]
pub fn tanh(x: f32) -> f32 {
    libm::tanhf(x)
}

#[inline(always)]
pub fn exp(x: f32) -> f32 {
    libm::expf(x)
}

#[inline(always)]
pub fn ln(x: f32) -> f32 {
    libm::logf(x)
}

#[inline(always)]
pub fn log10(x: f32) -> f32 {
    libm::log10f(x)
}

#[inline(always)]
pub fn floor(x: f32) -> f32 {
    libm::floorf(x)
}

#[inline(always)]
pub fn round(x: f32) -> f32 {
    libm::roundf(x)
}

#[inline(always)]
pub fn powi(x: f32, n: i32) -> f32 {
    libm::powf(x, n as f32)
}

#[inline(always)]
pub fn atan2(y: f32, x: f32) -> f32 {
    libm::atan2f(y, x)
}

#[inline(always)]
pub fn cos64(x: f64) -> f64 {
    libm::cos(x)
}

#[inline(always)]
pub fn sin64(x: f64) -> f64 {
    libm::sin(x)
}

#[inline(always)]
pub fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}
