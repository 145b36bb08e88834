//! Plain CSV writers for traces and metric tables.

use crate::error::CliResult;
use lmc_core::analysis::ImageStats;
use lmc_core::diffusion::TraceRow;
use lmc_core::losses::Component;
use lmc_core::optimize::StepRow;
use lmc_core::translate::DistillTraceRow;
use std::io::Write;
use std::path::Path;

fn create(path: &Path) -> CliResult<std::fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::fs::File::create(path)?)
}

fn fmt(v: f32) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_train_trace(rows: &[TraceRow], path: &Path) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "step,loss,loss_t_low,loss_t_mid,loss_t_high")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.step,
            fmt(r.loss),
            fmt(r.bucket_losses[0]),
            fmt(r.bucket_losses[1]),
            fmt(r.bucket_losses[2])
        )?;
    }
    Ok(())
}

pub fn write_optim_trace(rows: &[StepRow], path: &Path) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "step,t,omega_lr,grad_norm,cond,proj,lmc,pos,neg,anchor")?;
    for r in rows {
        let comp = |c: Component| {
            r.component_norms
                .iter()
                .find(|(k, _)| *k == c)
                .map(|(_, n)| format!("{n}"))
                .unwrap_or_default()
        };
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.t),
            fmt(r.lr),
            fmt(r.grad_norm),
            comp(Component::Cond),
            comp(Component::Proj),
            comp(Component::Lmc),
            comp(Component::Pos),
            comp(Component::Neg),
            fmt(r.anchor_norm),
        )?;
    }
    Ok(())
}

pub fn write_distill_trace(rows: &[DistillTraceRow], path: &Path) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "step,lambda_lmc,lambda_l2,recon_l2,grad_norm,heldout_recon")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.step,
            fmt(r.lambda_lmc),
            fmt(r.lambda_l2),
            fmt(r.recon_l2),
            fmt(r.grad_norm),
            fmt(r.heldout_recon)
        )?;
    }
    Ok(())
}

pub fn write_image_stats(stats: &ImageStats, path: &Path) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "kind,index,value")?;
    for (i, v) in stats.log_power.iter().enumerate() {
        writeln!(f, "log_power,{i},{v}")?;
    }
    for (i, v) in stats.deriv_hist.iter().enumerate() {
        writeln!(f, "deriv_hist,{i},{v}")?;
    }
    writeln!(f, "band_ratio,0,{}", stats.band_ratio)?;
    Ok(())
}

pub struct EvalRow {
    pub loss: String,
    pub omega: f32,
    pub feature_distance: f32,
    pub retrieval: f32,
    pub band_ratio: f32,
    pub source_band_ratio: f32,
}

pub fn write_eval_table(rows: &[EvalRow], path: &Path) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "loss,omega,feature_distance,retrieval,band_ratio,source_band_ratio")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.loss, r.omega, r.feature_distance, r.retrieval, r.band_ratio, r.source_band_ratio
        )?;
    }
    Ok(())
}
