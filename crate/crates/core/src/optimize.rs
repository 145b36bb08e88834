//! Optimization drivers: synthesis and editing through differentiable image
//! parameterizations, with a whole-image warm-up phase followed by random
//! resampled patches, an L2 anchor for edits, Adam updates, and cosine
//! learning-rate decay.

use crate::corrective::BiasModel;
use crate::diffusion::NoisePredictor;
use crate::error::{Error, Result};
use crate::losses::{
    grad_cond, grad_dds, grad_lmc_sds, grad_mssds, grad_sds, Component, EpsMode, EpsilonPolicy,
    GradResult, LossConfig,
};
use crate::nn::adam::{cosine_lr, Adam};
use crate::nn::resample::{resize, resize_adjoint, resize_region, resize_region_adjoint};
use crate::rng::{derive, derive_indexed, SeedStream};
use crate::schedule::VarianceSchedule;
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Differentiable map from parameters to a canvas image, with the exact
/// adjoint of its linearization.
pub trait Parameterization {
    fn render(&self, theta: &Tensor) -> Tensor;
    fn pullback(&self, canvas_grad: &Tensor) -> Tensor;
    /// Parameters whose render is a constant `fill` canvas.
    fn init_theta(&self, channels: usize, fill: f32) -> Tensor;
    /// Parameters approximating the given canvas image.
    fn theta_from_image(&self, image: &Tensor) -> Tensor;
}

/// The identity parameterization: the canvas pixels themselves.
pub struct DirectPixels {
    pub canvas: usize,
}

impl Parameterization for DirectPixels {
    fn render(&self, theta: &Tensor) -> Tensor {
        theta.clone()
    }

    fn pullback(&self, canvas_grad: &Tensor) -> Tensor {
        canvas_grad.clone()
    }

    fn init_theta(&self, channels: usize, fill: f32) -> Tensor {
        Tensor::filled(&[channels, self.canvas, self.canvas], fill)
    }

    fn theta_from_image(&self, image: &Tensor) -> Tensor {
        image.clone()
    }
}

/// A low-resolution latent grid rendered to the canvas by bilinear
/// upsampling; the pullback is the exact transpose of the upsampler.
pub struct LatentGrid {
    pub grid: usize,
    pub canvas: usize,
}

impl Parameterization for LatentGrid {
    fn render(&self, theta: &Tensor) -> Tensor {
        resize(theta, self.canvas, self.canvas)
    }

    fn pullback(&self, canvas_grad: &Tensor) -> Tensor {
        resize_adjoint(canvas_grad, self.grid, self.grid)
    }

    fn init_theta(&self, channels: usize, fill: f32) -> Tensor {
        Tensor::filled(&[channels, self.grid, self.grid], fill)
    }

    fn theta_from_image(&self, image: &Tensor) -> Tensor {
        resize(image, self.grid, self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Sds,
    CondOnly,
    LmcSds,
    Dds,
    MsSds,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Sds => "sds",
            LossKind::CondOnly => "cond",
            LossKind::LmcSds => "lmc_sds",
            LossKind::Dds => "dds",
            LossKind::MsSds => "mssds",
        }
    }
}

/// Frozen networks driving an optimization task.
pub struct TaskNets<'a, P: NoisePredictor, B: BiasModel> {
    pub denoiser: &'a P,
    pub corrective: Option<&'a B>,
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub steps: usize,
    pub lr: f32,
    pub decay_floor: f32,
    pub decay_horizon: usize,
    /// L2 pull toward the initial image (edits; 0 disables).
    pub lambda_anchor: f32,
    pub whole_image_phase: usize,
    pub patches_per_step: usize,
    pub canvas: usize,
    pub model_res: usize,
    pub t_min: f32,
    pub t_max: f32,
    pub seed: u64,
    /// Record an intermediate canvas every N steps (0 disables).
    pub snapshot_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.1,
            decay_floor: 0.03,
            decay_horizon: 300,
            lambda_anchor: 0.0,
            whole_image_phase: 150,
            patches_per_step: 2,
            canvas: 96,
            model_res: 32,
            t_min: 0.02,
            t_max: 0.98,
            seed: 7,
            snapshot_every: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("optimization needs at least one step"));
        }
        if self.canvas < self.model_res {
            return Err(Error::InvalidConfig("canvas must be at least the model resolution"));
        }
        if self.patches_per_step == 0 {
            return Err(Error::InvalidConfig("patches_per_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepRow {
    pub step: usize,
    pub t: f32,
    pub lr: f32,
    pub grad_norm: f32,
    pub component_norms: Vec<(Component, f32)>,
    pub anchor_norm: f32,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub rows: Vec<StepRow>,
    pub snapshots: Vec<(usize, Tensor)>,
}

/// Dispatch one gradient evaluation at model resolution.
#[allow(clippy::too_many_arguments)]
pub fn compute_grad<P: NoisePredictor, B: BiasModel>(
    kind: LossKind,
    nets: &TaskNets<'_, P, B>,
    z: &Tensor,
    y: Option<usize>,
    y_ref: Option<usize>,
    z_ref: Option<&Tensor>,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    let need_y = || y.ok_or(Error::InvalidConfig("this loss needs a target class"));
    match kind {
        LossKind::Sds => grad_sds(nets.denoiser, z, need_y()?, t, policy, cfg, sched),
        LossKind::CondOnly => grad_cond(nets.denoiser, z, y, t, policy, cfg, sched),
        LossKind::LmcSds => {
            grad_lmc_sds(nets.denoiser, nets.corrective, z, need_y()?, t, policy, cfg, sched)
        }
        LossKind::Dds => grad_dds(nets.denoiser, z, z_ref, need_y()?, y_ref, t, policy, cfg, sched),
        LossKind::MsSds => {
            grad_mssds(nets.denoiser, z, need_y()?, t, cfg.mssds_k, policy, cfg, sched)
        }
    }
}

fn sample_patch(rng: &mut SeedStream, canvas: usize, model_res: usize) -> (usize, usize, usize) {
    let side = model_res + rng.below(canvas - model_res + 1);
    let y0 = rng.below(canvas - side + 1);
    let x0 = rng.below(canvas - side + 1);
    (y0, x0, side)
}

struct RunSetup<'a> {
    y: Option<usize>,
    y_ref: Option<usize>,
    anchor: Option<&'a Tensor>, // canvas-resolution initial image
}

#[allow(clippy::too_many_arguments)]
fn drive<P: NoisePredictor, B: BiasModel>(
    nets: &TaskNets<'_, P, B>,
    mut theta: Tensor,
    setup: RunSetup<'_>,
    param: &dyn Parameterization,
    ocfg: &OptimConfig,
    lcfg: &LossConfig,
    kind: LossKind,
    policy_mode: EpsMode,
    sched: &VarianceSchedule,
) -> Result<(Tensor, RunTrace)> {
    ocfg.validate()?;
    lcfg.validate()?;
    let m = ocfg.model_res;
    let canvas = ocfg.canvas;
    let channels = param.render(&theta).dims()[0];
    let mut rng = SeedStream::new(derive(ocfg.seed, "optimize"));
    let mut policy = EpsilonPolicy::new(policy_mode, derive(ocfg.seed, "policy"));
    let mut adam = Adam::new();
    let mut trace = RunTrace::default();
    let z_init = setup.anchor.cloned();
    let z_ref_model = z_init.as_ref().map(|img| resize(img, m, m));

    for step in 0..ocfg.steps {
        let z_canvas = param.render(&theta);
        let mut canvas_grad = Tensor::zeros(&[channels, canvas, canvas]);
        let mut t_acc = 0.0f32;
        let mut comp_acc: Vec<(Component, f32)> = Vec::new();
        let mut calls = 0usize;

        if step < ocfg.whole_image_phase || canvas == m {
            let z_m = resize(&z_canvas, m, m);
            let t = rng.uniform_in(ocfg.t_min, ocfg.t_max);
            let g = compute_grad(
                kind,
                nets,
                &z_m,
                setup.y,
                setup.y_ref,
                z_ref_model.as_ref(),
                t,
                &mut policy,
                lcfg,
                sched,
            )?;
            canvas_grad = resize_adjoint(&g.grad, canvas, canvas);
            t_acc += t;
            calls += 1;
            for (c, n) in &g.diag.component_norms {
                comp_acc.push((*c, *n));
            }
        } else {
            let mut weight = Tensor::zeros(&[channels, canvas, canvas]);
            let ones = Tensor::filled(&[channels, m, m], 1.0);
            for _ in 0..ocfg.patches_per_step {
                let (y0, x0, side) = sample_patch(&mut rng, canvas, m);
                let z_p = resize_region(&z_canvas, y0, x0, side, side, m, m);
                let t = rng.uniform_in(ocfg.t_min, ocfg.t_max);
                let z_ref_patch =
                    z_init.as_ref().map(|img| resize_region(img, y0, x0, side, side, m, m));
                let g = compute_grad(
                    kind,
                    nets,
                    &z_p,
                    setup.y,
                    setup.y_ref,
                    z_ref_patch.as_ref(),
                    t,
                    &mut policy,
                    lcfg,
                    sched,
                )?;
                resize_region_adjoint(&g.grad, &mut canvas_grad, y0, x0, side, side);
                resize_region_adjoint(&ones, &mut weight, y0, x0, side, side);
                t_acc += t;
                calls += 1;
                for (c, n) in &g.diag.component_norms {
                    comp_acc.push((*c, *n));
                }
            }
            // average overlapping patch contributions
            let wd = weight.data().to_vec();
            let gd = canvas_grad.data_mut();
            for i in 0..gd.len() {
                if wd[i] > 1e-6 {
                    gd[i] /= wd[i];
                }
            }
        }

        let mut anchor_norm = 0.0;
        if ocfg.lambda_anchor > 0.0 {
            if let Some(init) = &z_init {
                let pull = z_canvas.sub(init);
                anchor_norm = pull.l2_norm() * ocfg.lambda_anchor;
                canvas_grad.axpy(ocfg.lambda_anchor, &pull);
            }
        }

        let mut dtheta = param.pullback(&canvas_grad);
        if !dtheta.all_finite() || !theta.all_finite() {
            return Err(Error::Diverged { step, loss: f32::NAN });
        }
        let lr = cosine_lr(ocfg.lr, ocfg.decay_floor, ocfg.decay_horizon, step);
        adam.step(&mut [(&mut theta, &mut dtheta)], lr);

        // aggregate per-component means over this step's calls
        let mut comp_mean: Vec<(Component, f32)> = Vec::new();
        for (c, n) in comp_acc {
            match comp_mean.iter_mut().find(|(k, _)| *k == c) {
                Some((_, acc)) => *acc += n,
                None => comp_mean.push((c, n)),
            }
        }
        for (_, n) in comp_mean.iter_mut() {
            *n /= calls as f32;
        }
        trace.rows.push(StepRow {
            step,
            t: t_acc / calls as f32,
            lr,
            grad_norm: canvas_grad.l2_norm(),
            component_norms: comp_mean,
            anchor_norm,
        });
        if ocfg.snapshot_every > 0 && (step + 1) % ocfg.snapshot_every == 0 {
            trace.snapshots.push((step + 1, param.render(&theta)));
        }
    }
    let mut out = param.render(&theta);
    out.clamp(-1.0, 1.0);
    Ok((out, trace))
}

/// Optimize a mid-grey canvas toward the class under the chosen loss.
#[allow(clippy::too_many_arguments)]
pub fn run_synthesis<P: NoisePredictor, B: BiasModel>(
    nets: &TaskNets<'_, P, B>,
    y: Option<usize>,
    param: &dyn Parameterization,
    ocfg: &OptimConfig,
    lcfg: &LossConfig,
    kind: LossKind,
    policy_mode: EpsMode,
    channels: usize,
    sched: &VarianceSchedule,
) -> Result<(Tensor, RunTrace)> {
    let theta = param.init_theta(channels, 0.0);
    drive(
        nets,
        theta,
        RunSetup { y, y_ref: None, anchor: None },
        param,
        ocfg,
        lcfg,
        kind,
        policy_mode,
        sched,
    )
}

/// Optimize an existing image toward the target class, optionally anchored
/// to its initial pixels; `y_ref` names the source class for delta losses.
#[allow(clippy::too_many_arguments)]
pub fn run_edit<P: NoisePredictor, B: BiasModel>(
    nets: &TaskNets<'_, P, B>,
    image: &Tensor,
    y_target: Option<usize>,
    y_ref: Option<usize>,
    param: &dyn Parameterization,
    ocfg: &OptimConfig,
    lcfg: &LossConfig,
    kind: LossKind,
    policy_mode: EpsMode,
    sched: &VarianceSchedule,
) -> Result<(Tensor, RunTrace)> {
    let d = image.dims();
    if d[1] != ocfg.canvas || d[2] != ocfg.canvas {
        return Err(Error::ShapeMismatch {
            context: "run_edit",
            expected: alloc::format!("({},{},{})", d[0], ocfg.canvas, ocfg.canvas),
            got: image.shape_string(),
        });
    }
    let theta = param.theta_from_image(image);
    drive(
        nets,
        theta,
        RunSetup { y: y_target, y_ref, anchor: Some(image) },
        param,
        ocfg,
        lcfg,
        kind,
        policy_mode,
        sched,
    )
}

/// Repeat an edit `n` times with independent noise-policy draws (one derived
/// seed per variant). Fixed-cond-only policies give diverse results; the
/// resampling policy is the mode-seeking baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_variants<P: NoisePredictor, B: BiasModel>(
    nets: &TaskNets<'_, P, B>,
    image: &Tensor,
    y_target: Option<usize>,
    y_ref: Option<usize>,
    n: usize,
    param: &dyn Parameterization,
    ocfg: &OptimConfig,
    lcfg: &LossConfig,
    kind: LossKind,
    policy_mode: EpsMode,
    sched: &VarianceSchedule,
) -> Result<Vec<(Tensor, RunTrace)>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let cfg_i =
            OptimConfig { seed: derive_indexed(ocfg.seed, "variant", i as u64), ..ocfg.clone() };
        out.push(run_edit(
            nets, image, y_target, y_ref, param, &cfg_i, lcfg, kind, policy_mode, sched,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrective::CorrectiveNet;
    use crate::diffusion::Denoiser;
    use crate::schedule::VarianceSchedule;

    fn tiny_nets() -> (Denoiser, CorrectiveNet, VarianceSchedule) {
        (
            Denoiser::new(1, 4, 2, 4, 100),
            CorrectiveNet::new(1, 2, 4, 101),
            VarianceSchedule::default_cosine(),
        )
    }

    #[test]
    fn latent_grid_pullback_matches_finite_differences() {
        // linear probe loss L = <render(theta), r>; its exact gradient is
        // pullback(r)
        let grid = LatentGrid { grid: 8, canvas: 32 };
        let mut rng = SeedStream::new(1);
        let theta = rng.normal_tensor(&[1, 8, 8]);
        let r = rng.normal_tensor(&[1, 32, 32]);
        let an = grid.pullback(&r);
        let loss = |th: &Tensor| -> f64 {
            grid.render(th)
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };
        let h = 1e-3f32;
        let mut max_rel = 0.0f32;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp.data_mut()[i] += h;
            let mut tm = theta.clone();
            tm.data_mut()[i] -= h;
            let fd = ((loss(&tp) - loss(&tm)) / (2.0 * h as f64)) as f32;
            let rel = (fd - an.data()[i]).abs() / (1.0_f32).max(fd.abs()).max(an.data()[i].abs());
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-3, "max rel {max_rel}");
    }

    #[test]
    fn direct_pixels_pullback_is_identity() {
        let p = DirectPixels { canvas: 16 };
        let mut rng = SeedStream::new(2);
        let g = rng.normal_tensor(&[1, 16, 16]);
        assert_eq!(p.pullback(&g), g);
    }

    #[test]
    fn patch_sampler_stays_in_bounds() {
        let mut rng = SeedStream::new(3);
        for _ in 0..2000 {
            let (y0, x0, side) = sample_patch(&mut rng, 96, 32);
            assert!(side >= 32 && side <= 96);
            assert!(y0 + side <= 96 && x0 + side <= 96);
        }
    }

    #[test]
    fn zero_gradient_loss_leaves_initialization_unchanged() {
        // CondOnly with a null label is an exact zero gradient.
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 32 };
        let ocfg = OptimConfig {
            steps: 5,
            canvas: 32,
            model_res: 32,
            whole_image_phase: 5,
            seed: 9,
            ..OptimConfig::default()
        };
        let (out, _) = run_synthesis(
            &nets,
            None,
            &param,
            &ocfg,
            &LossConfig::default(),
            LossKind::CondOnly,
            EpsMode::Resample,
            1,
            &sched,
        )
        .unwrap();
        for v in out.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 48 };
        let ocfg = OptimConfig {
            steps: 8,
            canvas: 48,
            model_res: 32,
            whole_image_phase: 4,
            seed: 11,
            ..OptimConfig::default()
        };
        let run = || {
            run_synthesis(
                &nets,
                Some(1),
                &param,
                &ocfg,
                &LossConfig::default(),
                LossKind::LmcSds,
                EpsMode::FixedCondOnly,
                1,
                &sched,
            )
            .unwrap()
            .0
        };
        let a = run();
        let b = run();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn strong_anchor_pins_the_edit_to_the_input() {
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 32 };
        let image = crate::data::gen_shapes(5, 4, 4, 32).unwrap().images[0].clone();
        let ocfg = OptimConfig {
            steps: 20,
            lr: 1e-4,
            canvas: 32,
            model_res: 32,
            whole_image_phase: 20,
            lambda_anchor: 1e6,
            seed: 4,
            ..OptimConfig::default()
        };
        let (out, trace) = run_edit(
            &nets,
            &image,
            Some(2),
            Some(0),
            &param,
            &ocfg,
            &LossConfig { omega: 15.0, ..LossConfig::default() },
            LossKind::Sds,
            EpsMode::Resample,
            &sched,
        )
        .unwrap();
        let max_delta =
            out.data().iter().zip(image.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(max_delta < 1e-2, "max pixel delta {max_delta}");
        assert_eq!(trace.rows.len(), 20);
        assert!(trace.rows.iter().all(|r| r.anchor_norm.is_finite()));
    }

    #[test]
    fn edit_requires_canvas_sized_input() {
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 64 };
        let image = Tensor::zeros(&[1, 32, 32]);
        let ocfg = OptimConfig { canvas: 64, ..OptimConfig::default() };
        assert!(run_edit(
            &nets,
            &image,
            Some(1),
            None,
            &param,
            &ocfg,
            &LossConfig::default(),
            LossKind::Sds,
            EpsMode::Resample,
            &sched,
        )
        .is_err());
    }

    #[test]
    fn variants_reduce_to_single_edit() {
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 32 };
        let image = crate::data::gen_shapes(6, 4, 4, 32).unwrap().images[1].clone();
        let ocfg = OptimConfig {
            steps: 4,
            canvas: 32,
            model_res: 32,
            whole_image_phase: 4,
            seed: 21,
            ..OptimConfig::default()
        };
        let lcfg = LossConfig { omega: 15.0, ..LossConfig::default() };
        let vs = run_variants(
            &nets,
            &image,
            Some(2),
            Some(1),
            1,
            &param,
            &ocfg,
            &lcfg,
            LossKind::LmcSds,
            EpsMode::FixedCondOnly,
            &sched,
        )
        .unwrap();
        assert_eq!(vs.len(), 1);
        let solo_cfg = OptimConfig { seed: derive_indexed(21, "variant", 0), ..ocfg.clone() };
        let (solo, _) = run_edit(
            &nets,
            &image,
            Some(2),
            Some(1),
            &param,
            &solo_cfg,
            &lcfg,
            LossKind::LmcSds,
            EpsMode::FixedCondOnly,
            &sched,
        )
        .unwrap();
        for (a, b) in vs[0].0.data().iter().zip(solo.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn trace_records_loss_components() {
        let (den, cor, sched) = tiny_nets();
        let nets = TaskNets { denoiser: &den, corrective: Some(&cor) };
        let param = DirectPixels { canvas: 32 };
        let ocfg = OptimConfig {
            steps: 3,
            canvas: 32,
            model_res: 32,
            whole_image_phase: 3,
            seed: 2,
            ..OptimConfig::default()
        };
        let (_, trace) = run_synthesis(
            &nets,
            Some(0),
            &param,
            &ocfg,
            &LossConfig::default(),
            LossKind::LmcSds,
            EpsMode::Resample,
            1,
            &sched,
        )
        .unwrap();
        for row in &trace.rows {
            let names: Vec<&str> = row.component_norms.iter().map(|(c, _)| c.name()).collect();
            assert!(names.contains(&"cond") && names.contains(&"lmc"));
        }
    }
}
