//! IDX image/label files (big-endian magic, dimension sizes, raw bytes).
//! Pixel bytes map linearly from [0, 255] onto [-1, 1].

use crate::error::{CliError, CliResult};
use lmc_core::data::{LabeledDataset, Split};
use lmc_core::Tensor;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> CliResult<u32> {
    bytes
        .get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| CliError::validation("idx file truncated"))
}

pub fn byte_to_value(b: u8) -> f32 {
    b as f32 * (2.0 / 255.0) - 1.0
}

pub fn value_to_byte(v: f32) -> u8 {
    ((v + 1.0) * (255.0 / 2.0)).round().clamp(0.0, 255.0) as u8
}

pub fn decode_images(bytes: &[u8]) -> CliResult<Vec<Tensor>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(CliError::validation(format!(
            "idx image magic mismatch: 0x{magic:08x} (expected 0x{IMAGE_MAGIC:08x})"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let payload = &bytes[16..];
    if payload.len() != n * h * w {
        return Err(CliError::validation(format!(
            "idx image payload inconsistent: {} bytes for {}x{}x{}",
            payload.len(),
            n,
            h,
            w
        )));
    }
    Ok((0..n)
        .map(|i| {
            let data = payload[i * h * w..(i + 1) * h * w].iter().map(|b| byte_to_value(*b)).collect();
            Tensor::from_vec(&[1, h, w], data)
        })
        .collect())
}

pub fn decode_labels(bytes: &[u8]) -> CliResult<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(CliError::validation(format!(
            "idx label magic mismatch: 0x{magic:08x} (expected 0x{LABEL_MAGIC:08x})"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(CliError::validation(format!(
            "idx label payload inconsistent: {} bytes for {n} labels",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|b| *b as usize).collect())
}

pub fn encode_images(images: &[Tensor]) -> Vec<u8> {
    let d = images.first().map(|t| t.dims().to_vec()).unwrap_or(vec![1, 0, 0]);
    let (h, w) = (d[1], d[2]);
    let mut out = Vec::with_capacity(16 + images.len() * h * w);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(h as u32).to_be_bytes());
    out.extend_from_slice(&(w as u32).to_be_bytes());
    for img in images {
        out.extend(img.data().iter().map(|v| value_to_byte(*v)));
    }
    out
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|l| *l as u8));
    out
}

/// Load an image/label file pair into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> CliResult<LabeledDataset> {
    let ib = std::fs::read(images_path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", images_path.display())))?;
    let lb = std::fs::read(labels_path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", labels_path.display())))?;
    let images = decode_images(&ib)?;
    let labels = decode_labels(&lb)?;
    if images.len() != labels.len() {
        return Err(CliError::validation(format!(
            "idx pair inconsistent: {} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map(|m| m + 1).unwrap_or(1);
    let ds = LabeledDataset { images, labels, num_classes, split: Split::All };
    ds.validate().map_err(CliError::from)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bytes_map_to_minus_one() {
        let mut f = Vec::new();
        f.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        f.extend_from_slice(&4u32.to_be_bytes());
        f.extend_from_slice(&2u32.to_be_bytes());
        f.extend_from_slice(&2u32.to_be_bytes());
        f.extend(std::iter::repeat(0u8).take(16));
        let imgs = decode_images(&f).unwrap();
        assert_eq!(imgs.len(), 4);
        for img in imgs {
            for v in img.data() {
                assert_eq!(*v, -1.0);
            }
        }
    }

    #[test]
    fn byte_mapping_examples() {
        assert_eq!(byte_to_value(255), 1.0);
        assert!((byte_to_value(127) - (127.0 * 2.0 / 255.0 - 1.0)).abs() < 1e-7);
        assert!((byte_to_value(127) + 0.00392).abs() < 1e-4);
        assert_eq!(value_to_byte(byte_to_value(127)), 127);
    }

    #[test]
    fn truncated_payload_is_inconsistent() {
        let mut f = Vec::new();
        f.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        f.extend_from_slice(&2u32.to_be_bytes());
        f.extend_from_slice(&2u32.to_be_bytes());
        f.extend_from_slice(&2u32.to_be_bytes());
        f.extend(std::iter::repeat(7u8).take(5)); // needs 8
        let err = decode_images(&f).unwrap_err();
        assert!(err.to_string().contains("inconsistent"));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut f = Vec::new();
        f.extend_from_slice(&0xdeadbeefu32.to_be_bytes());
        f.extend_from_slice(&[0u8; 12]);
        assert!(decode_images(&f).unwrap_err().to_string().contains("magic"));
        assert!(decode_labels(&f).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn encode_decode_reproduces_files_byte_for_byte() {
        // round trip: encode(decode(file)) == file for well-formed inputs
        let mut f = Vec::new();
        f.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        f.extend_from_slice(&3u32.to_be_bytes());
        f.extend_from_slice(&4u32.to_be_bytes());
        f.extend_from_slice(&5u32.to_be_bytes());
        f.extend((0..60).map(|i| (i * 4 + 3) as u8));
        let imgs = decode_images(&f).unwrap();
        assert_eq!(encode_images(&imgs), f);

        let mut lf = Vec::new();
        lf.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lf.extend_from_slice(&6u32.to_be_bytes());
        lf.extend([0u8, 1, 2, 3, 2, 1]);
        let labels = decode_labels(&lf).unwrap();
        assert_eq!(encode_labels(&labels), lf);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i.idx");
        let lp = dir.path().join("l.idx");
        let imgs: Vec<Tensor> = (0..3).map(|_| Tensor::zeros(&[1, 2, 2])).collect();
        std::fs::write(&ip, encode_images(&imgs)).unwrap();
        std::fs::write(&lp, encode_labels(&[0, 1])).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("inconsistent"));
    }
}
