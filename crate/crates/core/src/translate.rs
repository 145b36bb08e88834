//! Feed-forward image translation trained from scratch with the corrected
//! distillation gradient as the only semantic supervision, plus a scheduled
//! L2 reconstruction term that hands over from reconstruction to editing.

use crate::corrective::BiasModel;
use crate::data::LabeledDataset;
use crate::diffusion::{freq_encode, NoisePredictor};
use crate::error::{Error, Result};
use crate::losses::{grad_lmc_sds, EpsMode, EpsilonPolicy, LossConfig};
use crate::math;
use crate::nn::{pack_batch, step_decay_lr, unpack_batch, unpack_image, Adam, UNet, UNetConfig};
use crate::rng::{derive, SeedStream};
use crate::schedule::VarianceSchedule;
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

/// Class-conditional translator: tanh-headed U-Net over the image plus the
/// frequency-encoded target-class scalar.
pub struct TranslatorNet {
    unet: UNet,
    pub num_classes: usize,
    pub img_channels: usize,
}

impl TranslatorNet {
    pub fn new(
        img_channels: usize,
        num_classes: usize,
        levels: usize,
        base_filters: usize,
        seed: u64,
    ) -> Self {
        let mut rng = SeedStream::new(derive(seed, "translator-init"));
        let unet = UNet::new(
            UNetConfig {
                in_channels: img_channels + 10,
                out_channels: img_channels,
                levels,
                base_filters,
                final_tanh: true,
            },
            &mut rng,
        );
        Self { unet, num_classes, img_channels }
    }

    fn class_scalar(&self, class: usize) -> f32 {
        if self.num_classes > 1 {
            class as f32 / (self.num_classes - 1) as f32
        } else {
            0.0
        }
    }

    fn assemble(&self, entries: &[(&Tensor, usize)]) -> Tensor {
        let n = entries.len();
        let d = entries[0].0.dims();
        let (c, h, w) = (d[0], d[1], d[2]);
        let hw = h * w;
        let mut input = Tensor::zeros(&[c + 10, n, h, w]);
        let dst = input.data_mut();
        for (i, (img, class)) in entries.iter().enumerate() {
            for ch in 0..c {
                let o = (ch * n + i) * hw;
                dst[o..o + hw].copy_from_slice(&img.data()[ch * hw..(ch + 1) * hw]);
            }
            let enc = freq_encode(self.class_scalar(*class));
            for (k, v) in enc.iter().enumerate() {
                let o = ((c + k) * n + i) * hw;
                dst[o..o + hw].fill(*v);
            }
        }
        input
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.unet.named_tensors()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.unet.named_tensors_mut()
    }
}

/// Single deterministic forward pass.
pub fn translate(net: &TranslatorNet, image: &Tensor, class: usize) -> Result<Tensor> {
    if class >= net.num_classes {
        return Err(Error::ClassOutOfRange { class, classes: net.num_classes });
    }
    let input = net.assemble(&[(image, class)]);
    Ok(unpack_image(&net.unet.forward_infer(&input), 0))
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub omega: f32,
    /// Corrected-loss weight ramps from `lmc_weight.0` to `lmc_weight.1`.
    pub lmc_weight: (f32, f32),
    /// Reconstruction weight ramps from `l2_weight.0` to `l2_weight.1`.
    pub l2_weight: (f32, f32),
    /// Fraction of training over which the cosine handover happens.
    pub transition_frac: f32,
    pub seed: u64,
    pub trace_every: usize,
    /// Evaluate held-out reconstruction every N steps (0 disables).
    pub eval_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            batch: 8,
            lr: 1e-4,
            lr_decay: 0.9,
            lr_decay_every: 50_000,
            omega: 15.0,
            lmc_weight: (0.1, 1.0),
            l2_weight: (1.0, 0.1),
            transition_frac: 0.1,
            seed: 7,
            trace_every: 100,
            eval_every: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.transition_frac > 0.0 && self.transition_frac <= 1.0) {
            return Err(Error::InvalidConfig("transition_frac must lie in (0, 1]"));
        }
        for v in [self.lmc_weight.0, self.lmc_weight.1, self.l2_weight.0, self.l2_weight.1] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig("schedule weights must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// `(lambda_lmc, lambda_l2)` at `step`: cosine handover over the first
    /// `transition_frac` of training, constant afterwards.
    pub fn schedule_weights(&self, step: usize) -> (f32, f32) {
        let horizon = ((self.steps as f32 * self.transition_frac) as usize).max(1);
        let u = if step >= horizon {
            1.0
        } else {
            0.5 * (1.0 - math::cos(math::PI * step as f32 / horizon as f32))
        };
        (
            self.lmc_weight.0 + (self.lmc_weight.1 - self.lmc_weight.0) * u,
            self.l2_weight.0 + (self.l2_weight.1 - self.l2_weight.0) * u,
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistillTraceRow {
    pub step: usize,
    pub lambda_lmc: f32,
    pub lambda_l2: f32,
    /// Mean per-pixel squared reconstruction error of the training batch.
    pub recon_l2: f32,
    /// Mean distillation gradient norm over the batch.
    pub grad_norm: f32,
    /// Held-out reconstruction error, when evaluated this step.
    pub heldout_recon: f32,
}

/// Train the translator on one source class toward the target classes.
/// Supervision per image: the corrected distillation gradient at the
/// network output (weighted by the ramping schedule) plus the scheduled L2
/// pull toward the input. Deterministic per config.
#[allow(clippy::too_many_arguments)]
pub fn train_translator<P: NoisePredictor, B: BiasModel>(
    source_data: &LabeledDataset,
    target_classes: &[usize],
    denoiser: &P,
    corrective: &B,
    cfg: &DistillConfig,
    levels: usize,
    base_filters: usize,
    num_classes: usize,
    heldout: Option<&LabeledDataset>,
    sched: &VarianceSchedule,
) -> Result<(TranslatorNet, Vec<DistillTraceRow>)> {
    cfg.validate()?;
    if target_classes.is_empty() {
        return Err(Error::InvalidConfig("no target classes"));
    }
    if source_data.is_empty() {
        return Err(Error::InvalidConfig("empty source dataset"));
    }
    for &c in target_classes {
        if c >= num_classes {
            return Err(Error::ClassOutOfRange { class: c, classes: num_classes });
        }
    }
    let d = source_data.image_dims().to_vec();
    let mut net = TranslatorNet::new(d[0], num_classes, levels, base_filters, cfg.seed);
    let mut adam = Adam::new();
    let mut rng = SeedStream::new(derive(cfg.seed, "translator-train"));
    let mut policy = EpsilonPolicy::new(EpsMode::Resample, derive(cfg.seed, "translator-eps"));
    let lcfg_base = LossConfig { omega: cfg.omega, ..LossConfig::default() };
    let mut trace = Vec::new();
    let mut acc = (0.0f64, 0.0f64, 0usize);

    for step in 0..cfg.steps {
        let (lam_lmc, lam_l2) = cfg.schedule_weights(step);
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.below(source_data.len())).collect();
        let classes: Vec<usize> =
            (0..cfg.batch).map(|_| target_classes[rng.below(target_classes.len())]).collect();
        let ts: Vec<f32> = (0..cfg.batch).map(|_| rng.uniform_in(0.02, 0.98)).collect();
        let entries: Vec<(&Tensor, usize)> =
            idx.iter().zip(&classes).map(|(&i, &c)| (&source_data.images[i], c)).collect();
        let input = net.assemble(&entries);
        let outs_batch = net.unet.forward_train(&input);
        let outs = unpack_batch(&outs_batch);

        let mut douts: Vec<Tensor> = Vec::with_capacity(cfg.batch);
        let mut recon = 0.0f64;
        let mut gnorm = 0.0f64;
        for (bi, &i) in idx.iter().enumerate() {
            let g = grad_lmc_sds(
                denoiser,
                Some(corrective),
                &outs[bi],
                classes[bi],
                ts[bi],
                &mut policy,
                &lcfg_base,
                sched,
            )?;
            gnorm += g.diag.grad_norm as f64;
            let pull = outs[bi].sub(&source_data.images[i]);
            recon += pull.mean_sq() as f64;
            let mut dout = g.grad.scaled(lam_lmc);
            dout.axpy(lam_l2, &pull);
            dout.scale(1.0 / cfg.batch as f32);
            douts.push(dout);
        }
        let recon = (recon / cfg.batch as f64) as f32;
        if !recon.is_finite() {
            return Err(Error::Diverged { step, loss: recon });
        }
        let dy = pack_batch(&douts.iter().collect::<Vec<_>>());
        net.unet.backward(&dy, false);
        let lr = step_decay_lr(cfg.lr, cfg.lr_decay, cfg.lr_decay_every, step);
        adam.step(&mut net.unet.param_slots(), lr);

        acc.0 += recon as f64;
        acc.1 += gnorm / cfg.batch as f64;
        acc.2 += 1;
        let log_now = cfg.trace_every > 0 && (step + 1) % cfg.trace_every == 0;
        if log_now {
            let heldout_recon = if cfg.eval_every > 0
                && (step + 1) % cfg.eval_every == 0
                && heldout.is_some()
            {
                heldout_reconstruction(&net, heldout.unwrap(), target_classes)?
            } else {
                f32::NAN
            };
            trace.push(DistillTraceRow {
                step: step + 1,
                lambda_lmc: lam_lmc,
                lambda_l2: lam_l2,
                recon_l2: (acc.0 / acc.2 as f64) as f32,
                grad_norm: (acc.1 / acc.2 as f64) as f32,
                heldout_recon,
            });
            acc = (0.0, 0.0, 0);
        }
    }
    Ok((net, trace))
}

/// Mean per-pixel squared distance between translated held-out images and
/// their inputs, cycling over the target classes.
pub fn heldout_reconstruction(
    net: &TranslatorNet,
    data: &LabeledDataset,
    target_classes: &[usize],
) -> Result<f32> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty evaluation dataset"));
    }
    let mut total = 0.0f64;
    for (i, img) in data.images.iter().enumerate() {
        let cls = target_classes[i % target_classes.len()];
        let out = translate(net, img, cls)?;
        total += out.sub(img).mean_sq() as f64;
    }
    Ok((total / data.len() as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrective::CorrectiveNet;
    use crate::diffusion::Denoiser;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = DistillConfig { steps: 1000, transition_frac: 0.1, ..DistillConfig::default() };
        let (l0, r0) = cfg.schedule_weights(0);
        assert!((l0 - 0.1).abs() < 1e-6 && (r0 - 1.0).abs() < 1e-6);
        let (l1, r1) = cfg.schedule_weights(100);
        assert!((l1 - 1.0).abs() < 1e-6 && (r1 - 0.1).abs() < 1e-6);
        let (lm, rm) = cfg.schedule_weights(50);
        assert!((lm - 0.55).abs() < 1e-5, "cosine midpoint {lm}");
        assert!((rm - 0.55).abs() < 1e-5);
        // constant after the transition
        let (le, re) = cfg.schedule_weights(999);
        assert!((le - 1.0).abs() < 1e-6 && (re - 0.1).abs() < 1e-6);
    }

    #[test]
    fn translate_is_deterministic_and_bounded() {
        let net = TranslatorNet::new(1, 6, 2, 4, 3);
        let mut rng = SeedStream::new(8);
        let img = rng.normal_tensor(&[1, 16, 16]).scaled(0.4);
        let a = translate(&net, &img, 2).unwrap();
        let b = translate(&net, &img, 2).unwrap();
        assert_eq!(a.data(), b.data());
        for v in a.data() {
            assert!(*v > -1.0 && *v < 1.0);
        }
        assert!(matches!(
            translate(&net, &img, 6),
            Err(Error::ClassOutOfRange { class: 6, classes: 6 })
        ));
        // different classes produce different outputs
        let c = translate(&net, &img, 0).unwrap();
        assert!(crate::tensor::rel_l2(&a, &c) > 1e-7);
    }

    #[test]
    fn zero_step_training_returns_initialization() {
        let data = crate::data::gen_shapes(7, 12, 6, 32).unwrap().filter_class(0);
        let den = Denoiser::new(1, 6, 2, 4, 30);
        let cor = CorrectiveNet::new(1, 2, 4, 31);
        let sched = VarianceSchedule::default_cosine();
        let cfg = DistillConfig { steps: 0, seed: 19, ..DistillConfig::default() };
        let (net, trace) =
            train_translator(&data, &[1, 2], &den, &cor, &cfg, 2, 4, 6, None, &sched).unwrap();
        assert!(trace.is_empty());
        let fresh = TranslatorNet::new(1, 6, 2, 4, 19);
        for ((_, a), (_, b)) in net.named_tensors().iter().zip(fresh.named_tensors()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn short_training_runs_and_logs() {
        let ds = crate::data::gen_shapes(7, 24, 6, 32).unwrap();
        let source = ds.filter_class(0);
        let den = Denoiser::new(1, 6, 2, 4, 40);
        let cor = CorrectiveNet::new(1, 2, 4, 41);
        let sched = VarianceSchedule::default_cosine();
        let cfg = DistillConfig {
            steps: 12,
            batch: 2,
            trace_every: 4,
            eval_every: 4,
            seed: 5,
            ..DistillConfig::default()
        };
        let (net, trace) =
            train_translator(&source, &[1, 2, 3, 5], &den, &cor, &cfg, 2, 4, 6, Some(&source), &sched)
                .unwrap();
        assert_eq!(trace.len(), 3);
        assert!(trace.iter().all(|r| r.recon_l2.is_finite()));
        assert!(trace.iter().all(|r| r.heldout_recon.is_finite()));
        let out = translate(&net, &source.images[0], 1).unwrap();
        assert_eq!(out.dims(), source.images[0].dims());
    }

    #[test]
    fn rejects_bad_targets() {
        let data = crate::data::gen_shapes(7, 12, 4, 32).unwrap().filter_class(0);
        let den = Denoiser::new(1, 4, 2, 4, 1);
        let cor = CorrectiveNet::new(1, 2, 4, 2);
        let sched = VarianceSchedule::default_cosine();
        let cfg = DistillConfig::default();
        assert!(train_translator(&data, &[], &den, &cor, &cfg, 2, 4, 4, None, &sched).is_err());
        assert!(train_translator(&data, &[9], &den, &cor, &cfg, 2, 4, 4, None, &sched).is_err());
    }
}
