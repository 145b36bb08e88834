//! Tiny raster line plots (spectra, histograms) exported as PNGs.

use crate::error::CliResult;
use crate::pngio::save_png;
use lmc_core::Tensor;
use std::path::Path;

const W: usize = 480;
const H: usize = 320;
const MARGIN: usize = 32;

struct Canvas {
    px: Vec<f32>, // single channel in [-1, 1]
}

impl Canvas {
    fn new() -> Self {
        Self { px: vec![1.0; W * H] }
    }

    fn set(&mut self, x: isize, y: isize, v: f32) {
        if x >= 0 && (x as usize) < W && y >= 0 && (y as usize) < H {
            self.px[y as usize * W + x as usize] = v;
        }
    }

    fn line(&mut self, x0: f32, y0: f32, x1: f32, y1: f32, v: f32) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()) as usize).max(1) * 2;
        for s in 0..=steps {
            let f = s as f32 / steps as f32;
            self.set((x0 + f * (x1 - x0)).round() as isize, (y0 + f * (y1 - y0)).round() as isize, v);
        }
    }

    fn into_tensor(self) -> Tensor {
        Tensor::from_vec(&[1, H, W], self.px)
    }
}

/// Plot one or more series over a shared x axis (bin index) and save as PNG.
/// Series are drawn in progressively lighter greys.
pub fn line_plot(series: &[(&str, &[f32])], path: &Path) -> CliResult<()> {
    let mut canvas = Canvas::new();
    // axes
    canvas.line(MARGIN as f32, (H - MARGIN) as f32, (W - MARGIN) as f32, (H - MARGIN) as f32, -1.0);
    canvas.line(MARGIN as f32, MARGIN as f32, MARGIN as f32, (H - MARGIN) as f32, -1.0);

    let finite: Vec<f32> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return save_png(&canvas.into_tensor(), path);
    }
    let lo = finite.iter().fold(f32::INFINITY, |a, &b| a.min(b));
    let hi = finite.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    let span = (hi - lo).max(1e-6);
    let plot_w = (W - 2 * MARGIN) as f32;
    let plot_h = (H - 2 * MARGIN) as f32;

    for (si, (_, s)) in series.iter().enumerate() {
        if s.len() < 2 {
            continue;
        }
        let shade = -1.0 + 1.4 * si as f32 / series.len().max(1) as f32;
        for i in 0..s.len() - 1 {
            if !s[i].is_finite() || !s[i + 1].is_finite() {
                continue;
            }
            let x0 = MARGIN as f32 + plot_w * i as f32 / (s.len() - 1) as f32;
            let x1 = MARGIN as f32 + plot_w * (i + 1) as f32 / (s.len() - 1) as f32;
            let y0 = (H - MARGIN) as f32 - plot_h * (s[i] - lo) / span;
            let y1 = (H - MARGIN) as f32 - plot_h * (s[i + 1] - lo) / span;
            canvas.line(x0, y0, x1, y1, shade);
        }
    }
    save_png(&canvas.into_tensor(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_render_without_panicking() {
        let dir = tempfile::tempdir().unwrap();
        let a: Vec<f32> = (0..40).map(|i| (i as f32 * 0.3).sin()).collect();
        let b: Vec<f32> = (0..40).map(|i| i as f32 * 0.01).collect();
        line_plot(&[("a", &a), ("b", &b)], &dir.path().join("p.png")).unwrap();
        assert!(dir.path().join("p.png").exists());
        // degenerate input still writes a file
        line_plot(&[("nan", &[f32::NAN, f32::NAN])], &dir.path().join("q.png")).unwrap();
    }
}
