//! Strict JSON run configuration: one document with one section per
//! subsystem, unknown keys rejected, a mandatory seed, SHA-256 digests of
//! the canonicalized form, and `--set section.key=value` overrides.

use crate::error::{CliError, CliResult};
use lmc_core::corrective::MeanMode;
use lmc_core::diffusion::TimeWeight;
use lmc_core::losses::EpsMode;
use lmc_core::optimize::LossKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub corrective: CorrectiveSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub translate: TranslateSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            data: Default::default(),
            diffusion: Default::default(),
            corrective: Default::default(),
            loss: Default::default(),
            optimize: Default::default(),
            translate: Default::default(),
            analysis: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Shapes,
    Idx,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub count: usize,
    pub classes: usize,
    pub size: usize,
    pub holdout_frac: f32,
    pub idx_images: Option<String>,
    pub idx_labels: Option<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Shapes,
            count: 4096,
            classes: 4,
            size: 32,
            holdout_frac: 0.05,
            idx_images: None,
            idx_labels: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub checkpoint: String,
    pub levels: usize,
    pub base_filters: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub label_dropout: f32,
    pub t_min: f32,
    pub t_max: f32,
    pub weight: WeightChoice,
    pub knots: usize,
    pub trace_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    One,
    OneMinusAlphaBar,
}

impl WeightChoice {
    pub fn to_core(self) -> TimeWeight {
        match self {
            WeightChoice::One => TimeWeight::One,
            WeightChoice::OneMinusAlphaBar => TimeWeight::OneMinusAlphaBar,
        }
    }
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            checkpoint: "artifacts/denoiser.ckpt".into(),
            levels: 3,
            base_filters: 32,
            steps: 20_000,
            batch: 2,
            lr: 3e-4,
            lr_decay: 0.9,
            lr_decay_every: 10_000,
            label_dropout: 0.1,
            t_min: 0.02,
            t_max: 0.98,
            weight: WeightChoice::One,
            knots: 1000,
            trace_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectiveSection {
    pub checkpoint: String,
    pub triplet_cache: Option<String>,
    pub triplets: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub mean_mode: MeanModeChoice,
    pub levels: usize,
    pub base_filters: usize,
    pub trace_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanModeChoice {
    Own,
    Ref,
}

impl MeanModeChoice {
    pub fn to_core(self) -> MeanMode {
        match self {
            MeanModeChoice::Own => MeanMode::Own,
            MeanModeChoice::Ref => MeanMode::Ref,
        }
    }
}

impl Default for CorrectiveSection {
    fn default() -> Self {
        Self {
            checkpoint: "artifacts/corrective.ckpt".into(),
            triplet_cache: None,
            triplets: 8192,
            steps: 4000,
            batch: 8,
            lr: 1e-4,
            lr_decay: 0.9,
            lr_decay_every: 10_000,
            mean_mode: MeanModeChoice::Own,
            levels: 3,
            base_filters: 32,
            trace_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKindChoice {
    Sds,
    Cond,
    LmcSds,
    Dds,
    Mssds,
}

impl LossKindChoice {
    pub fn to_core(self) -> LossKind {
        match self {
            LossKindChoice::Sds => LossKind::Sds,
            LossKindChoice::Cond => LossKind::CondOnly,
            LossKindChoice::LmcSds => LossKind::LmcSds,
            LossKindChoice::Dds => LossKind::Dds,
            LossKindChoice::Mssds => LossKind::MsSds,
        }
    }

    pub fn needs_corrective(self) -> bool {
        matches!(self, LossKindChoice::LmcSds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsModeChoice {
    Resample,
    Fixed,
    FixedCondOnly,
}

impl EpsModeChoice {
    pub fn to_core(self) -> EpsMode {
        match self {
            EpsModeChoice::Resample => EpsMode::Resample,
            EpsModeChoice::Fixed => EpsMode::Fixed,
            EpsModeChoice::FixedCondOnly => EpsMode::FixedCondOnly,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub kind: LossKindChoice,
    /// Guidance weight; when absent, synthesis uses 8 and editing or
    /// translation use 15.
    pub omega: Option<f32>,
    pub rescale_by_inv_omega: bool,
    pub drop_proj_weight: bool,
    pub eps_mode: EpsModeChoice,
    pub mssds_k: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            kind: LossKindChoice::LmcSds,
            omega: None,
            rescale_by_inv_omega: true,
            drop_proj_weight: true,
            eps_mode: EpsModeChoice::Resample,
            mssds_k: 5,
        }
    }
}

impl LossSection {
    pub fn to_core(&self, default_omega: f32, mean_mode: MeanMode) -> lmc_core::losses::LossConfig {
        lmc_core::losses::LossConfig {
            omega: self.omega.unwrap_or(default_omega),
            rescale_by_inv_omega: self.rescale_by_inv_omega,
            drop_proj_weight: self.drop_proj_weight,
            mean_mode,
            mssds_k: self.mssds_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamChoice {
    Pixels,
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub steps: usize,
    pub lr: f32,
    pub decay_floor: f32,
    /// Cosine horizon in steps; defaults to `steps` when absent.
    pub decay_horizon: Option<usize>,
    pub lambda_l2: f32,
    pub whole_image_phase: usize,
    pub patches_per_step: usize,
    pub canvas: usize,
    pub model_res: usize,
    pub target_class: usize,
    /// Source class for delta losses; editing defaults to the input label.
    pub source_class: Option<usize>,
    /// PNG to edit; absent means `input_index` picks from the dataset.
    pub input: Option<String>,
    pub input_index: usize,
    pub variants: usize,
    /// Noise policy for the variants subcommand; defaults to fixed_cond_only.
    pub variants_eps: Option<EpsModeChoice>,
    pub parameterization: ParamChoice,
    pub grid: usize,
    pub snapshot_every: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.1,
            decay_floor: 0.03,
            decay_horizon: None,
            lambda_l2: 0.1,
            whole_image_phase: 150,
            patches_per_step: 2,
            canvas: 96,
            model_res: 32,
            target_class: 0,
            source_class: None,
            input: None,
            input_index: 0,
            variants: 8,
            variants_eps: None,
            parameterization: ParamChoice::Pixels,
            grid: 24,
            snapshot_every: 0,
        }
    }
}

impl OptimizeSection {
    pub fn to_core(&self, seed: u64) -> lmc_core::optimize::OptimConfig {
        lmc_core::optimize::OptimConfig {
            steps: self.steps,
            lr: self.lr,
            decay_floor: self.decay_floor,
            decay_horizon: self.decay_horizon.unwrap_or(self.steps),
            lambda_anchor: 0.0, // set per task
            whole_image_phase: self.whole_image_phase,
            patches_per_step: self.patches_per_step,
            canvas: self.canvas,
            model_res: self.model_res,
            t_min: 0.02,
            t_max: 0.98,
            seed,
            snapshot_every: self.snapshot_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateSection {
    pub checkpoint: String,
    pub source_class: usize,
    pub target_classes: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub lmc_weight: (f32, f32),
    pub l2_weight: (f32, f32),
    pub transition_frac: f32,
    pub levels: usize,
    pub base_filters: usize,
    pub trace_every: usize,
    pub eval_every: usize,
    /// Class to translate toward in the `translate` subcommand.
    pub output_class: usize,
    pub input: Option<String>,
    pub input_index: usize,
}

impl Default for TranslateSection {
    fn default() -> Self {
        Self {
            checkpoint: "artifacts/translator.ckpt".into(),
            source_class: 0,
            target_classes: vec![1, 2, 3, 5],
            steps: 4000,
            batch: 8,
            lr: 1e-4,
            lr_decay: 0.9,
            lr_decay_every: 50_000,
            lmc_weight: (0.1, 1.0),
            l2_weight: (1.0, 0.1),
            transition_frac: 0.1,
            levels: 4,
            base_filters: 32,
            trace_every: 100,
            eval_every: 0,
            output_class: 1,
            input: None,
            input_index: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub probe_checkpoint: String,
    pub probe_steps: usize,
    pub probe_batch: usize,
    pub probe_lr: f32,
    pub probe_accuracy_gate: f32,
    /// Directory of PNGs to analyze; absent means the configured dataset.
    pub input_dir: Option<String>,
    pub eval_images: usize,
    pub omegas: Vec<f32>,
    pub losses: Vec<LossKindChoice>,
    pub edit_steps: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            probe_checkpoint: "artifacts/probe.ckpt".into(),
            probe_steps: 3000,
            probe_batch: 16,
            probe_lr: 1e-3,
            probe_accuracy_gate: 0.9,
            input_dir: None,
            eval_images: 16,
            omegas: vec![2.0, 4.0, 8.0, 15.0],
            losses: vec![
                LossKindChoice::Sds,
                LossKindChoice::Dds,
                LossKindChoice::Mssds,
                LossKindChoice::LmcSds,
            ],
            edit_steps: 150,
        }
    }
}

// ---------------------------------------------------------------------------
// loading, overrides, canonicalization, digest
// ---------------------------------------------------------------------------

fn sort_value(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<String, serde_json::Value> =
                map.into_iter().map(|(k, val)| (k, sort_value(val))).collect();
            serde_json::Value::Object(sorted.into_iter().collect())
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(sort_value).collect())
        }
        other => other,
    }
}

/// Canonical JSON: recursively key-sorted, compact separators.
pub fn canonical_json(cfg: &RunConfig) -> CliResult<String> {
    let v = serde_json::to_value(cfg)?;
    Ok(serde_json::to_string(&sort_value(v))?)
}

/// SHA-256 hex digest of the canonical form.
pub fn config_digest(cfg: &RunConfig) -> CliResult<String> {
    let canon = canonical_json(cfg)?;
    let hash = Sha256::digest(canon.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

/// Apply one `section.key=value` override onto the JSON tree. The path must
/// already exist (unknown keys are rejected with the offending path).
fn apply_override(tree: &mut serde_json::Value, spec: &str) -> CliResult<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override '{spec}' is not key=value")))?;
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = &mut *tree;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::validation(format!("config path '{path}' is not an object")))?;
        match obj.get_mut(*part) {
            Some(next) => {
                if i + 1 == parts.len() {
                    let parsed: serde_json::Value = serde_json::from_str(raw)
                        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
                    *next = parsed;
                    return Ok(());
                }
                cur = next;
            }
            None => {
                return Err(CliError::validation(format!(
                    "unknown config key at '{}'",
                    parts[..=i].join(".")
                )))
            }
        }
    }
    Ok(())
}

/// Load a config from an optional file, apply `--set` overrides and the
/// optional seed override, and re-validate strictly.
pub fn load_config(
    path: Option<&Path>,
    sets: &[String],
    seed_override: Option<u64>,
) -> CliResult<RunConfig> {
    let mut tree: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("config parse error: {e}")))?
        }
        None => {
            let seed = seed_override.ok_or_else(|| {
                CliError::validation("no config file given: --seed is required")
            })?;
            serde_json::to_value(RunConfig::with_seed(seed))?
        }
    };
    for s in sets {
        apply_override(&mut tree, s)?;
    }
    if let Some(seed) = seed_override {
        tree["seed"] = serde_json::Value::from(seed);
    }
    let cfg: RunConfig = serde_json::from_value(tree)
        .map_err(|e| CliError::validation(format!("config validation error: {e}")))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_under_key_order() {
        let cfg = RunConfig::with_seed(7);
        let d1 = config_digest(&cfg).unwrap();
        let d2 = config_digest(&cfg).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.len(), 64);
    }

    #[test]
    fn overrides_change_the_digest() {
        let mut tree = serde_json::to_value(RunConfig::with_seed(7)).unwrap();
        apply_override(&mut tree, "diffusion.steps=500").unwrap();
        let cfg: RunConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.diffusion.steps, 500);
        assert_ne!(
            config_digest(&cfg).unwrap(),
            config_digest(&RunConfig::with_seed(7)).unwrap()
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let mut tree = serde_json::to_value(RunConfig::with_seed(7)).unwrap();
        let err = apply_override(&mut tree, "diffusion.stepz=500").unwrap_err();
        assert!(err.to_string().contains("diffusion.stepz"));

        let bad = r#"{"seed": 1, "diffusion": {"not_a_key": 3}}"#;
        let parsed: Result<RunConfig, _> = serde_json::from_str(bad);
        let msg = parsed.unwrap_err().to_string();
        assert!(msg.contains("not_a_key"), "{msg}");
    }

    #[test]
    fn string_overrides_parse_enums() {
        let mut tree = serde_json::to_value(RunConfig::with_seed(7)).unwrap();
        apply_override(&mut tree, r#"loss.kind="sds""#).unwrap();
        apply_override(&mut tree, "loss.omega=2.0").unwrap();
        let cfg: RunConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.loss.kind, LossKindChoice::Sds);
        assert_eq!(cfg.loss.omega, Some(2.0));
    }

    #[test]
    fn canonical_json_round_trips() {
        let cfg = RunConfig::with_seed(42);
        let canon = canonical_json(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&canon).unwrap();
        assert_eq!(config_digest(&back).unwrap(), config_digest(&cfg).unwrap());
    }
}
