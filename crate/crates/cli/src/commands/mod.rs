//! Subcommand implementations. Each command consumes the validated config,
//! writes its outputs into a fresh run directory, and returns that path.

mod analyze_cmds;
mod optimize_cmds;
mod train_cmds;
mod translate_cmds;

pub use analyze_cmds::{analyze, eval_table, gradcheck_cmd};
pub use optimize_cmds::{edit, synthesize, variants};
pub use train_cmds::{gen_data, train_corrective, train_diffusion, train_probe};
pub use translate_cmds::{train_translator, translate_cmd};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::idx;
use lmc_core::data::{gen_shapes, LabeledDataset};
use lmc_core::schedule::VarianceSchedule;
use std::path::Path;

/// Materialize the configured dataset (procedural shapes or IDX files).
pub fn dataset(cfg: &RunConfig) -> CliResult<LabeledDataset> {
    match cfg.data.source {
        DataSource::Shapes => {
            gen_shapes(cfg.seed, cfg.data.count, cfg.data.classes, cfg.data.size)
                .map_err(CliError::from)
        }
        DataSource::Idx => {
            let images = cfg.data.idx_images.as_ref().ok_or_else(|| {
                CliError::validation("data.source=idx requires data.idx_images")
            })?;
            let labels = cfg.data.idx_labels.as_ref().ok_or_else(|| {
                CliError::validation("data.source=idx requires data.idx_labels")
            })?;
            idx::load_idx(Path::new(images), Path::new(labels))
        }
    }
}

/// Dataset plus its deterministic train/held-out split.
pub fn dataset_split(cfg: &RunConfig) -> CliResult<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let full = dataset(cfg)?;
    let (train, held) = full.split_holdout(cfg.data.holdout_frac, cfg.seed);
    Ok((full, train, held))
}

pub fn schedule(cfg: &RunConfig) -> CliResult<VarianceSchedule> {
    VarianceSchedule::cosine(cfg.diffusion.knots).map_err(CliError::from)
}
