//! Checkpoint plumbing for the four network types: architecture metadata
//! plus named parameter tensors, with strict shape checking on load.

use crate::checkpoint::{load_required, save, Checkpoint};
use crate::config::MeanModeChoice;
use crate::error::{CliError, CliResult};
use lmc_core::analysis::ProbeClassifier;
use lmc_core::corrective::CorrectiveNet;
use lmc_core::diffusion::Denoiser;
use lmc_core::translate::TranslatorNet;
use lmc_core::Tensor;
use std::collections::BTreeMap;
use std::path::Path;

fn pack(kind: &str, named: Vec<(String, &Tensor)>, meta: BTreeMap<String, String>) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    ckpt.metadata = meta;
    ckpt.metadata.insert("kind".into(), kind.into());
    for (name, t) in named {
        ckpt.tensors.push((name, t.clone()));
    }
    ckpt
}

fn fill(named: Vec<(String, &mut Tensor)>, ckpt: &Checkpoint, kind: &str) -> CliResult<()> {
    if ckpt.meta("kind") != Some(kind) {
        return Err(CliError::validation(format!(
            "checkpoint kind mismatch: expected {kind}, found {}",
            ckpt.meta("kind").unwrap_or("<none>")
        )));
    }
    if ckpt.tensors.len() != named.len() {
        return Err(CliError::validation(format!(
            "checkpoint holds {} tensors, network expects {}",
            ckpt.tensors.len(),
            named.len()
        )));
    }
    for (name, dst) in named {
        let src = ckpt
            .tensor(&name)
            .ok_or_else(|| CliError::validation(format!("checkpoint missing tensor '{name}'")))?;
        if src.dims() != dst.dims() {
            return Err(CliError::validation(format!(
                "checkpoint tensor '{name}' has shape {}, expected {}",
                src.shape_string(),
                dst.shape_string()
            )));
        }
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}

pub struct NetMeta {
    pub seed: u64,
    pub step: usize,
    pub config_digest: String,
}

impl NetMeta {
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("step".into(), self.step.to_string());
        m.insert("config_digest".into(), self.config_digest.clone());
        m
    }
}

pub fn save_denoiser(net: &Denoiser, levels: usize, base: usize, meta: &NetMeta, path: &Path) -> CliResult<()> {
    let mut m = meta.to_map();
    m.insert("img_channels".into(), net.img_channels.to_string());
    m.insert("num_classes".into(), net.num_classes.to_string());
    m.insert("levels".into(), levels.to_string());
    m.insert("base_filters".into(), base.to_string());
    save(&pack("denoiser", net.named_tensors(), m), path)
}

pub fn load_denoiser(path: &Path) -> CliResult<Denoiser> {
    let ckpt = load_required(path, "train-diffusion")?;
    let img_channels: usize = ckpt.meta_parse("img_channels")?;
    let num_classes: usize = ckpt.meta_parse("num_classes")?;
    let levels: usize = ckpt.meta_parse("levels")?;
    let base: usize = ckpt.meta_parse("base_filters")?;
    let seed: u64 = ckpt.meta_parse("seed")?;
    let mut net = Denoiser::new(img_channels, num_classes, levels, base, seed);
    fill(net.named_tensors_mut(), &ckpt, "denoiser")?;
    Ok(net)
}

pub fn save_corrective(
    net: &CorrectiveNet,
    levels: usize,
    base: usize,
    mean_mode: MeanModeChoice,
    meta: &NetMeta,
    path: &Path,
) -> CliResult<()> {
    let mut m = meta.to_map();
    m.insert("img_channels".into(), net.img_channels.to_string());
    m.insert("levels".into(), levels.to_string());
    m.insert("base_filters".into(), base.to_string());
    m.insert(
        "mean_mode".into(),
        match mean_mode {
            MeanModeChoice::Own => "own".into(),
            MeanModeChoice::Ref => "ref".into(),
        },
    );
    save(&pack("corrective", net.named_tensors(), m), path)
}

pub fn load_corrective(path: &Path) -> CliResult<(CorrectiveNet, MeanModeChoice)> {
    let ckpt = load_required(path, "train-corrective")?;
    let img_channels: usize = ckpt.meta_parse("img_channels")?;
    let levels: usize = ckpt.meta_parse("levels")?;
    let base: usize = ckpt.meta_parse("base_filters")?;
    let seed: u64 = ckpt.meta_parse("seed")?;
    let mode = match ckpt.meta("mean_mode") {
        Some("ref") => MeanModeChoice::Ref,
        _ => MeanModeChoice::Own,
    };
    let mut net = CorrectiveNet::new(img_channels, levels, base, seed);
    fill(net.named_tensors_mut(), &ckpt, "corrective")?;
    Ok((net, mode))
}

pub fn save_probe(net: &ProbeClassifier, img_channels: usize, meta: &NetMeta, path: &Path) -> CliResult<()> {
    let mut m = meta.to_map();
    m.insert("img_channels".into(), img_channels.to_string());
    m.insert("num_classes".into(), net.num_classes.to_string());
    save(&pack("probe", net.named_tensors(), m), path)
}

pub fn load_probe(path: &Path) -> CliResult<ProbeClassifier> {
    let ckpt = load_required(path, "train-probe")?;
    let img_channels: usize = ckpt.meta_parse("img_channels")?;
    let num_classes: usize = ckpt.meta_parse("num_classes")?;
    let seed: u64 = ckpt.meta_parse("seed")?;
    let mut net = ProbeClassifier::new(img_channels, num_classes, seed);
    fill(net.named_tensors_mut(), &ckpt, "probe")?;
    Ok(net)
}

pub fn save_translator(
    net: &TranslatorNet,
    levels: usize,
    base: usize,
    meta: &NetMeta,
    path: &Path,
) -> CliResult<()> {
    let mut m = meta.to_map();
    m.insert("img_channels".into(), net.img_channels.to_string());
    m.insert("num_classes".into(), net.num_classes.to_string());
    m.insert("levels".into(), levels.to_string());
    m.insert("base_filters".into(), base.to_string());
    save(&pack("translator", net.named_tensors(), m), path)
}

pub fn load_translator(path: &Path) -> CliResult<TranslatorNet> {
    let ckpt = load_required(path, "train-translator")?;
    let img_channels: usize = ckpt.meta_parse("img_channels")?;
    let num_classes: usize = ckpt.meta_parse("num_classes")?;
    let levels: usize = ckpt.meta_parse("levels")?;
    let base: usize = ckpt.meta_parse("base_filters")?;
    let seed: u64 = ckpt.meta_parse("seed")?;
    let mut net = TranslatorNet::new(img_channels, num_classes, levels, base, seed);
    fill(net.named_tensors_mut(), &ckpt, "translator")?;
    Ok(net)
}
