//! gen-data and the three training subcommands.

use super::{dataset, dataset_split, schedule};
use crate::checkpoint::{load, save, Checkpoint};
use crate::config::RunConfig;
use crate::csvio;
use crate::error::{CliError, CliResult};
use crate::nets::{self, NetMeta};
use crate::pngio::{contact_sheet, save_png};
use crate::rundir::RunDir;
use crate::idx;
use lmc_core::analysis::{image_stats, retrieval_accuracy, train_probe as core_train_probe, ProbeConfig};
use lmc_core::corrective::{
    generate_triplets, mean_lk, train_corrective as core_train_corrective, BiasModel,
    CorrectiveTrainConfig, TripletSet,
};
use lmc_core::diffusion::{
    held_out_diffusion_loss, train_denoiser, Denoiser, TrainConfig,
};
use lmc_core::nn::{pack_batch, unpack_batch};
use lmc_core::Tensor;
use serde_json::json;
use std::path::{Path, PathBuf};

pub fn gen_data(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "gen-data", cfg)?;
    let ds = dataset(cfg)?;
    std::fs::write(run.file("images.idx"), idx::encode_images(&ds.images))?;
    std::fs::write(run.file("labels.idx"), idx::encode_labels(&ds.labels))?;
    run.record_output("images.idx");
    run.record_output("labels.idx");
    let preview: Vec<Tensor> = ds.images.iter().take(64).cloned().collect();
    save_png(&contact_sheet(&preview, 8), &run.file("contact_sheet.png"))?;
    run.record_output("contact_sheet.png");
    let stats = image_stats(&ds.images)?;
    csvio::write_image_stats(&stats, &run.file("stats.csv"))?;
    run.record_output("stats.csv");
    run.record("count", json!(ds.len()));
    run.record("classes", json!(ds.num_classes));
    run.record("band_ratio", json!(stats.band_ratio));
    run.finish()?;
    Ok(run.path)
}

pub fn train_diffusion(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "train-diffusion", cfg)?;
    let (_, train, held) = dataset_split(cfg)?;
    let sched = schedule(cfg)?;
    let d = &cfg.diffusion;
    let core_cfg = TrainConfig {
        steps: d.steps,
        batch: d.batch,
        lr: d.lr,
        lr_decay: d.lr_decay,
        lr_decay_every: d.lr_decay_every,
        label_dropout: d.label_dropout,
        t_min: d.t_min,
        t_max: d.t_max,
        weight: d.weight.to_core(),
        seed: cfg.seed,
        trace_every: d.trace_every,
    };
    // held-out loss of the freshly initialized network, for the summary
    let img_c = train.image_dims()[0];
    let fresh = Denoiser::new(img_c, train.num_classes, d.levels, d.base_filters, cfg.seed);
    let init_loss = held_out_diffusion_loss(&fresh, &held, &sched, 2, true, cfg.seed)?;
    drop(fresh);

    let (net, trace) = train_denoiser(&train, &sched, &core_cfg, d.levels, d.base_filters)?;
    let final_cond = held_out_diffusion_loss(&net, &held, &sched, 2, true, cfg.seed)?;
    let final_uncond = held_out_diffusion_loss(&net, &held, &sched, 2, false, cfg.seed)?;
    csvio::write_train_trace(&trace, &run.file("trace.csv"))?;
    run.record_output("trace.csv");

    let meta = NetMeta { seed: cfg.seed, step: d.steps, config_digest: run.digest.clone() };
    nets::save_denoiser(&net, d.levels, d.base_filters, &meta, Path::new(&d.checkpoint))?;
    run.record("checkpoint", json!(d.checkpoint));
    run.record("heldout_loss_init", json!(init_loss));
    run.record("heldout_loss_final", json!(final_cond));
    run.record("heldout_loss_final_uncond", json!(final_uncond));
    run.record("loss_ratio", json!(final_cond / init_loss));
    run.record("params", json!(net.num_params()));
    run.finish()?;
    Ok(run.path)
}

// triplet cache layout inside the checkpoint container: batched z/xhat
// stacks plus the t vector
fn triplets_to_checkpoint(trips: &TripletSet) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    let zrefs: Vec<&Tensor> = trips.zs.iter().collect();
    let xrefs: Vec<&Tensor> = trips.xhats.iter().collect();
    ckpt.tensors.push(("z".into(), pack_batch(&zrefs)));
    ckpt.tensors.push(("xhat".into(), pack_batch(&xrefs)));
    ckpt.tensors.push(("t".into(), Tensor::from_vec(&[trips.ts.len()], trips.ts.clone())));
    ckpt.metadata.insert("kind".into(), "triplets".into());
    ckpt
}

fn triplets_from_checkpoint(ckpt: &Checkpoint) -> CliResult<TripletSet> {
    if ckpt.meta("kind") != Some("triplets") {
        return Err(CliError::validation("not a triplet cache"));
    }
    let z = ckpt.tensor("z").ok_or_else(|| CliError::validation("triplet cache missing z"))?;
    let xhat =
        ckpt.tensor("xhat").ok_or_else(|| CliError::validation("triplet cache missing xhat"))?;
    let t = ckpt.tensor("t").ok_or_else(|| CliError::validation("triplet cache missing t"))?;
    Ok(TripletSet {
        zs: unpack_batch(z),
        xhats: unpack_batch(xhat),
        ts: t.data().to_vec(),
    })
}

pub fn train_corrective(
    cfg: &RunConfig,
    out_root: &Path,
    cache_override: Option<&Path>,
) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "train-corrective", cfg)?;
    let den = nets::load_denoiser(Path::new(&cfg.diffusion.checkpoint))?;
    let (_, train, held) = dataset_split(cfg)?;
    let sched = schedule(cfg)?;
    let c = &cfg.corrective;

    let cache_path: Option<PathBuf> = cache_override
        .map(|p| p.to_path_buf())
        .or_else(|| c.triplet_cache.as_ref().map(PathBuf::from));
    let trips = match &cache_path {
        Some(p) if p.exists() => triplets_from_checkpoint(&load(p)?)?,
        _ => {
            let t = generate_triplets(&den, &train, c.triplets, cfg.seed, &sched)?;
            if let Some(p) = &cache_path {
                save(&triplets_to_checkpoint(&t), p)?;
                run.record("triplet_cache_written", json!(p.display().to_string()));
            }
            t
        }
    };
    run.record("triplets", json!(trips.len()));

    let core_cfg = CorrectiveTrainConfig {
        steps: c.steps,
        batch: c.batch,
        lr: c.lr,
        lr_decay: c.lr_decay,
        lr_decay_every: c.lr_decay_every,
        mean_mode: c.mean_mode.to_core(),
        seed: cfg.seed,
        trace_every: c.trace_every,
    };
    let (net, trace) = core_train_corrective(&trips, &core_cfg, c.levels, c.base_filters)?;
    csvio::write_train_trace(&trace, &run.file("trace.csv"))?;
    run.record_output("trace.csv");

    // quality summary on fresh held-out triplets: trained net vs identity
    let eval = generate_triplets(&den, &held, 512, cfg.seed ^ 0x5eed, &sched)?;
    let mode = c.mean_mode.to_core();
    let lk_net = mean_lk(|z, t| net.predict_raw(z, t), &eval, mode)?;
    let lk_id = mean_lk(|z, _| z.clone(), &eval, mode)?;
    run.record("heldout_lk_trained", json!(lk_net));
    run.record("heldout_lk_identity", json!(lk_id));

    let meta = NetMeta { seed: cfg.seed, step: c.steps, config_digest: run.digest.clone() };
    nets::save_corrective(&net, c.levels, c.base_filters, c.mean_mode, &meta, Path::new(&c.checkpoint))?;
    run.record("checkpoint", json!(c.checkpoint));
    run.finish()?;
    Ok(run.path)
}

pub fn train_probe(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "train-probe", cfg)?;
    let (_, train, held) = dataset_split(cfg)?;
    let a = &cfg.analysis;
    let probe_cfg = ProbeConfig {
        steps: a.probe_steps,
        batch: a.probe_batch,
        lr: a.probe_lr,
        seed: cfg.seed,
        accuracy_gate: a.probe_accuracy_gate,
    };
    let probe = core_train_probe(&train, &held, &probe_cfg)?;
    let acc = retrieval_accuracy(&probe, &held.images, &held.labels)?;
    let meta = NetMeta { seed: cfg.seed, step: a.probe_steps, config_digest: run.digest.clone() };
    nets::save_probe(&probe, train.image_dims()[0], &meta, Path::new(&a.probe_checkpoint))?;
    run.record("checkpoint", json!(a.probe_checkpoint));
    run.record("heldout_accuracy", json!(acc));
    run.finish()?;
    Ok(run.path)
}
