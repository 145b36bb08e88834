//! synthesize, edit, and variants.

use super::{dataset, schedule};
use crate::config::{ParamChoice, RunConfig};
use crate::csvio;
use crate::error::{CliError, CliResult};
use crate::nets;
use crate::pngio::{load_png, save_png};
use crate::rundir::RunDir;
use crate::threads::parallel_map;
use lmc_core::analysis::pairwise_diversity;
use lmc_core::corrective::CorrectiveNet;
use lmc_core::diffusion::Denoiser;
use lmc_core::losses::EpsMode;
use lmc_core::nn::resample::resize;
use lmc_core::optimize::{
    run_edit, run_synthesis, DirectPixels, LatentGrid, LossKind, OptimConfig, Parameterization,
    RunTrace, TaskNets,
};
use lmc_core::rng::derive_indexed;
use lmc_core::schedule::VarianceSchedule;
use lmc_core::Tensor;
use serde_json::json;
use std::path::{Path, PathBuf};

pub(crate) struct OptimEnv {
    pub denoiser: Denoiser,
    pub corrective: Option<CorrectiveNet>,
    pub kind: LossKind,
    pub lcfg: lmc_core::losses::LossConfig,
    pub sched: VarianceSchedule,
}

/// Load the networks the configured loss needs and resolve the loss config
/// (guidance default comes from the task).
pub(crate) fn load_env(cfg: &RunConfig, default_omega: f32) -> CliResult<OptimEnv> {
    let denoiser = nets::load_denoiser(Path::new(&cfg.diffusion.checkpoint))?;
    let (corrective, mean_mode) = if cfg.loss.kind.needs_corrective() {
        let (c, mode) = nets::load_corrective(Path::new(&cfg.corrective.checkpoint))?;
        (Some(c), mode.to_core())
    } else {
        (None, cfg.corrective.mean_mode.to_core())
    };
    Ok(OptimEnv {
        denoiser,
        corrective,
        kind: cfg.loss.kind.to_core(),
        lcfg: cfg.loss.to_core(default_omega, mean_mode),
        sched: schedule(cfg)?,
    })
}

fn make_param(cfg: &RunConfig) -> Box<dyn Parameterization + Sync> {
    match cfg.optimize.parameterization {
        ParamChoice::Pixels => Box::new(DirectPixels { canvas: cfg.optimize.canvas }),
        ParamChoice::Grid => {
            Box::new(LatentGrid { grid: cfg.optimize.grid, canvas: cfg.optimize.canvas })
        }
    }
}

fn write_run_outputs(
    run: &mut RunDir,
    image: &Tensor,
    trace: &RunTrace,
    stem: &str,
) -> CliResult<()> {
    let png = format!("{stem}.png");
    save_png(image, &run.file(&png))?;
    run.record_output(&png);
    let csv = format!("{stem}_trace.csv");
    csvio::write_optim_trace(&trace.rows, &run.file(&csv))?;
    run.record_output(&csv);
    for (step, snap) in &trace.snapshots {
        let name = format!("{stem}_step{step:05}.png");
        save_png(snap, &run.file(&name))?;
        run.record_output(&name);
    }
    Ok(())
}

fn maybe_probe_score(cfg: &RunConfig, image: &Tensor, class: usize) -> Option<(usize, f32)> {
    let path = Path::new(&cfg.analysis.probe_checkpoint);
    if !path.exists() {
        return None;
    }
    let probe = nets::load_probe(path).ok()?;
    let at_model = resize(image, cfg.optimize.model_res, cfg.optimize.model_res);
    Some((probe.classify(&at_model), probe.class_score(&at_model, class)))
}

pub fn synthesize(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "synthesize", cfg)?;
    let env = load_env(cfg, 8.0)?;
    let param = make_param(cfg);
    let mut ocfg = cfg.optimize.to_core(cfg.seed);
    ocfg.lambda_anchor = 0.0;
    let nets = TaskNets { denoiser: &env.denoiser, corrective: env.corrective.as_ref() };
    let (img, trace) = run_synthesis(
        &nets,
        Some(cfg.optimize.target_class),
        param.as_ref(),
        &ocfg,
        &env.lcfg,
        env.kind,
        cfg.loss.eps_mode.to_core(),
        1,
        &env.sched,
    )?;
    write_run_outputs(&mut run, &img, &trace, "final")?;
    if let Some((cls, score)) = maybe_probe_score(cfg, &img, cfg.optimize.target_class) {
        run.record("probe_class", json!(cls));
        run.record("probe_target_score", json!(score));
    }
    run.record("loss", json!(env.kind.name()));
    run.record("omega", json!(env.lcfg.omega));
    run.finish()?;
    Ok(run.path)
}

/// Resolve the image to edit: an explicit PNG or a dataset sample, resized
/// to the canvas. Returns the image and its source class when known.
pub(crate) fn edit_input(cfg: &RunConfig) -> CliResult<(Tensor, Option<usize>)> {
    let canvas = cfg.optimize.canvas;
    match &cfg.optimize.input {
        Some(path) => {
            let img = load_png(Path::new(path))?;
            Ok((resize(&img, canvas, canvas), cfg.optimize.source_class))
        }
        None => {
            let ds = dataset(cfg)?;
            let i = cfg.optimize.input_index;
            if i >= ds.len() {
                return Err(CliError::validation(format!(
                    "optimize.input_index {i} out of range for dataset of {}",
                    ds.len()
                )));
            }
            let label = cfg.optimize.source_class.or(Some(ds.labels[i]));
            Ok((resize(&ds.images[i], canvas, canvas), label))
        }
    }
}

pub fn edit(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "edit", cfg)?;
    let env = load_env(cfg, 15.0)?;
    let param = make_param(cfg);
    let (input, source_class) = edit_input(cfg)?;
    save_png(&input, &run.file("input.png"))?;
    run.record_output("input.png");
    let mut ocfg = cfg.optimize.to_core(cfg.seed);
    ocfg.lambda_anchor = cfg.optimize.lambda_l2;
    let nets = TaskNets { denoiser: &env.denoiser, corrective: env.corrective.as_ref() };
    let (img, trace) = run_edit(
        &nets,
        &input,
        Some(cfg.optimize.target_class),
        source_class,
        param.as_ref(),
        &ocfg,
        &env.lcfg,
        env.kind,
        cfg.loss.eps_mode.to_core(),
        &env.sched,
    )?;
    write_run_outputs(&mut run, &img, &trace, "output")?;
    if let Some((cls, score)) = maybe_probe_score(cfg, &img, cfg.optimize.target_class) {
        run.record("probe_class", json!(cls));
        run.record("probe_target_score", json!(score));
    }
    run.record("loss", json!(env.kind.name()));
    run.record("omega", json!(env.lcfg.omega));
    run.finish()?;
    Ok(run.path)
}

pub fn variants(cfg: &RunConfig, out_root: &Path) -> CliResult<PathBuf> {
    let mut run = RunDir::create(out_root, "variants", cfg)?;
    let env = load_env(cfg, 15.0)?;
    let param = make_param(cfg);
    let (input, source_class) = edit_input(cfg)?;
    save_png(&input, &run.file("input.png"))?;
    run.record_output("input.png");
    let n = cfg.optimize.variants.max(1);
    let mut ocfg = cfg.optimize.to_core(cfg.seed);
    ocfg.lambda_anchor = cfg.optimize.lambda_l2;
    let mode = cfg
        .optimize
        .variants_eps
        .map(|m| m.to_core())
        .unwrap_or(EpsMode::FixedCondOnly);

    // one independent, internally deterministic run per derived seed; the
    // seeds match core::optimize::run_variants
    let nets = TaskNets { denoiser: &env.denoiser, corrective: env.corrective.as_ref() };
    let results: Vec<CliResult<(Tensor, RunTrace)>> = parallel_map(
        (0..n).collect::<Vec<usize>>(),
        |i| {
            let cfg_i = OptimConfig {
                seed: derive_indexed(ocfg.seed, "variant", i as u64),
                ..ocfg.clone()
            };
            run_edit(
                &nets,
                &input,
                Some(cfg.optimize.target_class),
                source_class,
                param.as_ref(),
                &cfg_i,
                &env.lcfg,
                env.kind,
                mode,
                &env.sched,
            )
            .map_err(CliError::from)
        },
    );
    let mut images = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        let (img, trace) = r?;
        write_run_outputs(&mut run, &img, &trace, &format!("variant{i:02}"))?;
        images.push(img);
    }
    if images.len() >= 2 {
        run.record("pairwise_diversity", json!(pairwise_diversity(&images)?));
    }
    run.record("eps_mode", json!(format!("{mode:?}")));
    run.finish()?;
    Ok(run.path)
}
