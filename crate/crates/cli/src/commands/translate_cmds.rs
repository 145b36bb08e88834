//! train-translator and translate.

use super::{dataset, dataset_split, schedule};
use crate::config::RunConfig;
use crate::csvio;
use crate::error::{CliError, CliResult};
use crate::nets::{self, NetMeta};
use crate::pngio::{load_png, save_png};
use crate::rundir::RunDir;
use lmc_core::analysis::{feature_distance, retrieval_accuracy};
use lmc_core::nn::resample::resize;
use lmc_core::translate::{heldout_reconstruction, train_translator as core_train, translate, DistillConfig};
use lmc_core::Tensor;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn train_translator(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "train-translator", cfg)?;
    let den = nets::load_denoiser(Path::new(&cfg.diffusion.checkpoint))?;
    let (cor, _) = nets::load_corrective(Path::new(&cfg.corrective.checkpoint))?;
    let (_, train, held) = dataset_split(cfg)?;
    let t = &cfg.translate;
    if t.target_classes.iter().any(|&c| c >= train.num_classes) {
        return Err(CliError::validation(format!(
            "translate.target_classes {:?} exceed dataset classes {}",
            t.target_classes, train.num_classes
        )));
    }
    let source = train.filter_class(t.source_class);
    let source_held = held.filter_class(t.source_class);
    if source.is_empty() {
        return Err(CliError::validation(format!(
            "no samples of source class {} in the train split",
            t.source_class
        )));
    }
    let sched = schedule(cfg)?;
    let core_cfg = DistillConfig {
        steps: t.steps,
        batch: t.batch,
        lr: t.lr,
        lr_decay: t.lr_decay,
        lr_decay_every: t.lr_decay_every,
        omega: cfg.loss.omega.unwrap_or(15.0),
        lmc_weight: t.lmc_weight,
        l2_weight: t.l2_weight,
        transition_frac: t.transition_frac,
        seed: cfg.seed,
        trace_every: t.trace_every,
        eval_every: t.eval_every,
    };
    let heldout_ref = if source_held.is_empty() { None } else { Some(&source_held) };
    let (net, trace) = core_train(
        &source,
        &t.target_classes,
        &den,
        &cor,
        &core_cfg,
        t.levels,
        t.base_filters,
        train.num_classes,
        heldout_ref,
        &sched,
    )?;
    csvio::write_distill_trace(&trace, &run.file("trace.csv"))?;
    run.record_output("trace.csv");

    let meta = NetMeta { seed: cfg.seed, step: t.steps, config_digest: run.digest.clone() };
    nets::save_translator(&net, t.levels, t.base_filters, &meta, Path::new(&t.checkpoint))?;
    run.record("checkpoint", json!(t.checkpoint));
    run.record("source_samples", json!(source.len()));
    if let Some(h) = heldout_ref {
        run.record("heldout_recon", json!(heldout_reconstruction(&net, h, &t.target_classes)?));
    }

    // per-class evaluation when the probe exists
    let probe_path = Path::new(&cfg.analysis.probe_checkpoint);
    if probe_path.exists() && !source_held.is_empty() {
        let probe = nets::load_probe(probe_path)?;
        let mut f = std::fs::File::create(run.file("eval.csv"))?;
        writeln!(f, "target_class,retrieval,identity_retrieval,mean_feature_distance")?;
        let mut total_hits = 0.0f64;
        for &target in &t.target_classes {
            let translated: Vec<Tensor> = source_held
                .images
                .iter()
                .map(|img| translate(&net, img, target))
                .collect::<Result<_, _>>()?;
            let intended = vec![target; translated.len()];
            let acc = retrieval_accuracy(&probe, &translated, &intended)?;
            let id_acc = retrieval_accuracy(&probe, &source_held.images, &intended)?;
            let mut fd = 0.0f64;
            for (a, b) in translated.iter().zip(&source_held.images) {
                fd += feature_distance(&probe, a, b) as f64;
            }
            writeln!(f, "{target},{acc},{id_acc},{}", fd / translated.len() as f64)?;
            total_hits += acc as f64;
        }
        run.record_output("eval.csv");
        run.record("mean_retrieval", json!(total_hits / t.target_classes.len() as f64));
    }
    run.finish()?;
    Ok(run.path)
}

pub fn translate_cmd(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "translate", cfg)?;
    let net = nets::load_translator(Path::new(&cfg.translate.checkpoint))?;
    let t = &cfg.translate;
    let input = match &t.input {
        Some(path) => {
            let img = load_png(Path::new(path))?;
            let res = cfg.data.size;
            resize(&img, res, res)
        }
        None => {
            let ds = dataset(cfg)?;
            if t.input_index >= ds.len() {
                return Err(CliError::validation(format!(
                    "translate.input_index {} out of range for dataset of {}",
                    t.input_index,
                    ds.len()
                )));
            }
            ds.images[t.input_index].clone()
        }
    };
    save_png(&input, &run.file("input.png"))?;
    run.record_output("input.png");
    let out = translate(&net, &input, t.output_class)?;
    save_png(&out, &run.file("output.png"))?;
    run.record_output("output.png");
    run.record("output_class", json!(t.output_class));
    run.finish()?;
    Ok(run.path)
}
