//! PNG export/import for `[-1, 1]` image tensors.

use crate::error::{CliError, CliResult};
use lmc_core::Tensor;
use std::path::Path;

fn to_byte(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn save_png(img: &Tensor, path: &Path) -> CliResult<()> {
    let d = img.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    match c {
        1 => {
            let buf: Vec<u8> = img.data().iter().map(|v| to_byte(*v)).collect();
            image::save_buffer(path, &buf, w as u32, h as u32, image::ColorType::L8)
                .map_err(|e| CliError::validation(format!("png write failed: {e}")))
        }
        3 => {
            let hw = h * w;
            let mut buf = vec![0u8; hw * 3];
            for p in 0..hw {
                for ch in 0..3 {
                    buf[p * 3 + ch] = to_byte(img.data()[ch * hw + p]);
                }
            }
            image::save_buffer(path, &buf, w as u32, h as u32, image::ColorType::Rgb8)
                .map_err(|e| CliError::validation(format!("png write failed: {e}")))
        }
        other => Err(CliError::validation(format!("cannot export {other}-channel image"))),
    }
}

/// Load a PNG as a single-channel `[-1, 1]` tensor (color inputs are
/// converted to luma).
pub fn load_png(path: &Path) -> CliResult<Tensor> {
    let img = image::open(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data: Vec<f32> = img.as_raw().iter().map(|b| *b as f32 / 127.5 - 1.0).collect();
    Ok(Tensor::from_vec(&[1, h as usize, w as usize], data))
}

/// Tile images (all one shape) into a contact-sheet tensor, row-major.
pub fn contact_sheet(images: &[Tensor], per_row: usize) -> Tensor {
    assert!(!images.is_empty());
    let d = images[0].dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let rows = images.len().div_ceil(per_row);
    let mut sheet = Tensor::filled(&[c, rows * h, per_row * w], -1.0);
    let sd = sheet.data_mut();
    for (i, img) in images.iter().enumerate() {
        let (ry, rx) = (i / per_row, i % per_row);
        for ch in 0..c {
            for y in 0..h {
                let src = &img.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
                let off = (ch * rows * h + ry * h + y) * per_row * w + rx * w;
                sd[off..off + w].copy_from_slice(src);
            }
        }
    }
    sheet
}
