//! Chunked checkpoint container.
//!
//! Layout: 8-byte magic `LMCD0001`, little-endian u32 version, u32 entry
//! count, per entry (u32 name length, UTF-8 name, u8 dtype tag {f32 = 1},
//! u8 rank, u32 dims..., row-major f32 payload), trailing CRC32 over all
//! preceding bytes. Metadata strings ride along as reserved `__meta/<key>`
//! rank-1 entries holding one byte per element, which keeps the wire format
//! single-dtype while round-tripping exactly.

use crate::error::{CliError, CliResult};
use lmc_core::Tensor;
use std::collections::BTreeMap;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"LMCD0001";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const META_PREFIX: &str = "__meta/";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(|s| s.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        self.meta(key)
            .ok_or_else(|| CliError::validation(format!("checkpoint missing metadata '{key}'")))?
            .parse()
            .map_err(|_| CliError::validation(format!("checkpoint metadata '{key}' is malformed")))
    }
}

fn push_entry(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = ckpt.tensors.len() + ckpt.metadata.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (name, tensor) in &ckpt.tensors {
        push_entry(&mut out, name, tensor.dims(), tensor.data());
    }
    for (key, value) in &ckpt.metadata {
        let name = format!("{META_PREFIX}{key}");
        let data: Vec<f32> = value.as_bytes().iter().map(|b| *b as f32).collect();
        push_entry(&mut out, &name, &[data.len()], &data);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::validation("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> CliResult<Checkpoint> {
    if bytes.len() < MAGIC.len() + 8 + 4 {
        return Err(CliError::validation("checkpoint too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(CliError::validation("checkpoint magic mismatch: not an LMCD0001 file"));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let expected = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != expected {
        return Err(CliError::validation("checkpoint corrupted: CRC32 mismatch"));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::validation(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut ckpt = Checkpoint::default();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CliError::validation("checkpoint entry name is not UTF-8"))?;
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(CliError::validation(format!("unknown dtype tag {dtype}")));
        }
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4)?;
        let data: Vec<f32> =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(key) = name.strip_prefix(META_PREFIX) {
            let value: String = data.iter().map(|f| *f as u8 as char).collect();
            ckpt.metadata.insert(key.to_string(), value);
        } else {
            ckpt.tensors.push((name, Tensor::from_vec(&dims, data)));
        }
    }
    if r.pos != body.len() {
        return Err(CliError::validation("checkpoint has trailing bytes"));
    }
    Ok(ckpt)
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, encode(ckpt))?;
    Ok(())
}

pub fn load(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::validation(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode(&bytes)
}

/// Load with a helpful dependency error naming the producing subcommand.
pub fn load_required(path: &Path, producer: &str) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::validation(format!(
            "checkpoint not found at {}; produce it with `lmc {producer}` first",
            path.display()
        )));
    }
    load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.tensors.push(("a.w".into(), Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 0.0, 3.25, 9.0, -0.125])));
        ckpt.tensors.push(("a.b".into(), Tensor::from_vec(&[3], vec![0.5, 1.5, -2.0])));
        ckpt.tensors.push(("head".into(), Tensor::from_vec(&[1], vec![42.0])));
        ckpt.metadata.insert("seed".into(), "7".into());
        ckpt.metadata.insert("arch".into(), "unet/3/32".into());
        ckpt
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let ckpt = sample();
        let bytes = encode(&ckpt);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ckpt);
        // encoding the decoded checkpoint reproduces the bytes
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let ckpt = sample();
        let mut bytes = encode(&ckpt);
        bytes[8] = 2; // version field
        // refresh the CRC so the version check is what trips
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn flipped_payload_byte_is_corruption() {
        let mut bytes = encode(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("CRC32"), "{err}");
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/dir/ckpt.bin");
        let ckpt = sample();
        save(&ckpt, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ckpt);
    }

    #[test]
    fn missing_checkpoint_names_the_producer() {
        let err = load_required(Path::new("/nonexistent/denoiser.ckpt"), "train-diffusion")
            .unwrap_err();
        assert!(err.to_string().contains("train-diffusion"));
    }
}
