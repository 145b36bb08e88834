//! Distillation gradient operators.
//!
//! Every operator evaluates frozen networks at `z_t = sqrt(ab) z +
//! sqrt(1-ab) eps` and returns an image-space gradient without
//! backpropagating through the networks; the explicit chain factor
//! `dz_t/dz = sqrt(ab)` is applied by the operator so the additive
//! decomposition of the guided gradient into its conditioning and
//! single-step-denoising parts holds exactly and testably.

use crate::corrective::{apply_corrective, BiasModel, MeanMode};
use crate::diffusion::{cfg_combine, forward_diffuse, predict_x0, NoisePredictor};
use crate::error::{Error, Result};
use crate::rng::{derive, SeedStream};
use crate::schedule::VarianceSchedule;
use crate::tensor::Tensor;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Cond,
    Proj,
    Lmc,
    Pos,
    Neg,
}

impl Component {
    pub fn name(&self) -> &'static str {
        match self {
            Component::Cond => "cond",
            Component::Proj => "proj",
            Component::Lmc => "lmc",
            Component::Pos => "pos",
            Component::Neg => "neg",
        }
    }
}

/// Scalar diagnostics attached to every gradient.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub t: f32,
    pub omega: f32,
    pub grad_norm: f32,
    pub component_norms: Vec<(Component, f32)>,
    /// True when the proj-side weight `sqrt(ab)/sqrt(1-ab)` was dropped.
    pub weight_dropped: bool,
    /// True when the cond and lmc terms saw the same `z_t`.
    pub shared_zt: bool,
    /// True when the total was rescaled by `1/omega`.
    pub rescaled: bool,
    /// Operator-specific scalars (e.g. the DDS proj cancellation residual).
    pub extra: Vec<(&'static str, f32)>,
}

impl Diagnostics {
    fn new(t: f32, omega: f32) -> Self {
        Self {
            t,
            omega,
            grad_norm: 0.0,
            component_norms: Vec::new(),
            weight_dropped: false,
            shared_zt: false,
            rescaled: false,
            extra: Vec::new(),
        }
    }
}

/// An image-space gradient plus its named components. The gradient always
/// equals the sum of the components (up to float roundoff).
#[derive(Debug, Clone)]
pub struct GradResult {
    pub grad: Tensor,
    pub components: Vec<(Component, Tensor)>,
    pub diag: Diagnostics,
}

impl GradResult {
    fn finish(grad: Tensor, components: Vec<(Component, Tensor)>, mut diag: Diagnostics) -> Self {
        diag.grad_norm = grad.l2_norm();
        diag.component_norms = components.iter().map(|(c, t)| (*c, t.l2_norm())).collect();
        Self { grad, components, diag }
    }

    pub fn component(&self, c: Component) -> Option<&Tensor> {
        self.components.iter().find(|(k, _)| *k == c).map(|(_, t)| t)
    }

    /// Max relative deviation between `grad` and the component sum.
    pub fn component_sum_residual(&self) -> f32 {
        let mut sum = Tensor::zeros(self.grad.dims());
        for (_, c) in &self.components {
            sum.add_assign(c);
        }
        crate::tensor::rel_l2(&sum, &self.grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsMode {
    /// Fresh noise on every operator call.
    Resample,
    /// One stored draw reused everywhere.
    Fixed,
    /// Stored draw for the conditioning term only; the corrective term keeps
    /// sampling.
    FixedCondOnly,
}

/// Per-optimization-run noise policy. Owns its stream; not shared between
/// runs.
pub struct EpsilonPolicy {
    pub mode: EpsMode,
    rng: SeedStream,
    stored: Option<Tensor>,
}

impl EpsilonPolicy {
    pub fn new(mode: EpsMode, seed: u64) -> Self {
        Self { mode, rng: SeedStream::new(derive(seed, "eps-policy")), stored: None }
    }

    fn stored_or_init(&mut self, dims: &[usize]) -> Result<Tensor> {
        if let Some(s) = &self.stored {
            if s.dims() != dims {
                return Err(Error::InvalidConfig("epsilon policy called with a new shape"));
            }
            return Ok(s.clone());
        }
        let eps = self.rng.normal_tensor(dims);
        self.stored = Some(eps.clone());
        Ok(eps)
    }

    /// Noise for the guided/conditioning path.
    pub fn primary(&mut self, dims: &[usize]) -> Result<Tensor> {
        match self.mode {
            EpsMode::Resample => Ok(self.rng.normal_tensor(dims)),
            EpsMode::Fixed | EpsMode::FixedCondOnly => self.stored_or_init(dims),
        }
    }

    /// Noise for the manifold/corrective path.
    pub fn secondary(&mut self, dims: &[usize]) -> Result<Tensor> {
        match self.mode {
            EpsMode::Fixed => self.stored_or_init(dims),
            EpsMode::Resample | EpsMode::FixedCondOnly => Ok(self.rng.normal_tensor(dims)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossConfig {
    pub omega: f32,
    pub rescale_by_inv_omega: bool,
    pub drop_proj_weight: bool,
    pub mean_mode: MeanMode,
    pub mssds_k: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            omega: 8.0,
            rescale_by_inv_omega: true,
            drop_proj_weight: true,
            mean_mode: MeanMode::Own,
            mssds_k: 5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::InvalidConfig("omega must be positive"));
        }
        if self.mssds_k == 0 {
            return Err(Error::InvalidConfig("mssds_k must be at least 1"));
        }
        Ok(())
    }
}

/// Guided single-noise gradient: `(eps_guided - eps) * sqrt(ab)`, with its
/// cond/proj components attached.
pub fn grad_sds<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    y: usize,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    if cfg.omega < 1.0 {
        return Err(Error::InvalidConfig("guided operators need omega >= 1"));
    }
    let eps = policy.primary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let outs = pred.predict_many(&[(&zt, Some(y), t), (&zt, None, t)]);
    let (eps_c, eps_u) = (&outs[0], &outs[1]);
    let a = sched.sqrt_alpha_bar(t);

    let guided = cfg_combine(eps_c, eps_u, cfg.omega);
    let grad = guided.sub(&eps).scaled(a);
    let cond = eps_c.sub(eps_u).scaled(cfg.omega * a);
    let proj = eps_u.sub(&eps).scaled(a);
    let diag = Diagnostics::new(t, cfg.omega);
    Ok(GradResult::finish(
        grad,
        alloc::vec![(Component::Cond, cond), (Component::Proj, proj)],
        diag,
    ))
}

/// Conditioning gradient `omega * (eps_cond - eps_uncond) * sqrt(ab)`.
/// A null label yields an exact zero (both branches coincide).
pub fn grad_cond<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    y: Option<usize>,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    let diag = Diagnostics::new(t, cfg.omega);
    let grad = match y {
        None => Tensor::zeros(z.dims()),
        Some(cls) => {
            let eps = policy.primary(z.dims())?;
            let zt = forward_diffuse(z, t, &eps, sched)?;
            let outs = pred.predict_many(&[(&zt, Some(cls), t), (&zt, None, t)]);
            let a = sched.sqrt_alpha_bar(t);
            outs[0].sub(&outs[1]).scaled(cfg.omega * a)
        }
    };
    let comps = alloc::vec![(Component::Cond, grad.clone())];
    Ok(GradResult::finish(grad, comps, diag))
}

/// Single-step-denoising gradient in noise space:
/// `(eps_uncond - eps) * sqrt(ab)`.
pub fn grad_proj<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    let eps = policy.primary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let eps_u = pred.predict(&zt, None, t);
    let a = sched.sqrt_alpha_bar(t);
    let grad = eps_u.sub(&eps).scaled(a);
    let comps = alloc::vec![(Component::Proj, grad.clone())];
    Ok(GradResult::finish(grad, comps, Diagnostics::new(t, cfg.omega)))
}

/// The same gradient written against the denoised estimate:
/// `(sqrt(ab)/sqrt(1-ab)) * (z - x_hat) * sqrt(ab)`, or without the leading
/// weight when `drop_proj_weight` is set.
pub fn grad_proj_x0<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    let eps = policy.primary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let eps_u = pred.predict(&zt, None, t);
    let x_hat = predict_x0(&zt, &eps_u, t, sched);
    let a = sched.sqrt_alpha_bar(t);
    let s = sched.sqrt_one_minus_alpha_bar(t);
    let weight = if cfg.drop_proj_weight { 1.0 } else { a / s };
    let grad = z.sub(&x_hat).scaled(weight * a);
    let mut diag = Diagnostics::new(t, cfg.omega);
    diag.weight_dropped = cfg.drop_proj_weight;
    let comps = alloc::vec![(Component::Proj, grad.clone())];
    Ok(GradResult::finish(grad, comps, diag))
}

/// Manifold-corrective gradient: `(normalized b(z,t) - x_hat) * sqrt(ab)`,
/// with `x_hat` from the unconditional branch and no proj-side weight.
pub fn grad_lmc<P: NoisePredictor, B: BiasModel>(
    pred: &P,
    bias: Option<&B>,
    z: &Tensor,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    let bias = bias.ok_or(Error::MissingCorrective)?;
    let eps = policy.secondary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let eps_u = pred.predict(&zt, None, t);
    let x_hat = predict_x0(&zt, &eps_u, t, sched);
    let corrected = apply_corrective(bias, z, t, &x_hat, cfg.mean_mode)?;
    let a = sched.sqrt_alpha_bar(t);
    let grad = corrected.sub(&x_hat).scaled(a);
    let mut diag = Diagnostics::new(t, cfg.omega);
    diag.weight_dropped = true;
    let comps = alloc::vec![(Component::Lmc, grad.clone())];
    Ok(GradResult::finish(grad, comps, diag))
}

/// Full corrected loss: cond + lmc, rescaled by `1/omega` when configured.
/// The two terms build their own `z_t` from their own policy draws.
pub fn grad_lmc_sds<P: NoisePredictor, B: BiasModel>(
    pred: &P,
    bias: Option<&B>,
    z: &Tensor,
    y: usize,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    let bias = bias.ok_or(Error::MissingCorrective)?;
    let eps_c = policy.primary(z.dims())?;
    let eps_l = policy.secondary(z.dims())?;
    let zt_c = forward_diffuse(z, t, &eps_c, sched)?;
    let zt_l = forward_diffuse(z, t, &eps_l, sched)?;
    let outs = pred.predict_many(&[(&zt_c, Some(y), t), (&zt_c, None, t), (&zt_l, None, t)]);
    let a = sched.sqrt_alpha_bar(t);

    let cond = outs[0].sub(&outs[1]).scaled(cfg.omega * a);
    let x_hat = predict_x0(&zt_l, &outs[2], t, sched);
    let corrected = apply_corrective(bias, z, t, &x_hat, cfg.mean_mode)?;
    let lmc = corrected.sub(&x_hat).scaled(a);

    let scale = if cfg.rescale_by_inv_omega { 1.0 / cfg.omega } else { 1.0 };
    let cond = cond.scaled(scale);
    let lmc = lmc.scaled(scale);
    let grad = cond.add(&lmc);
    let mut diag = Diagnostics::new(t, cfg.omega);
    diag.rescaled = cfg.rescale_by_inv_omega;
    diag.weight_dropped = true;
    diag.shared_zt = policy.mode == EpsMode::Fixed;
    Ok(GradResult::finish(
        grad,
        alloc::vec![(Component::Cond, cond), (Component::Lmc, lmc)],
        diag,
    ))
}

/// Delta gradient: the guided gradient toward `y_target` minus the guided
/// gradient toward `y_ref`, both evaluated at the current image with shared
/// `(eps, t)` so the single-step-denoising parts cancel exactly.
#[allow(clippy::too_many_arguments)]
pub fn grad_dds<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    z_ref: Option<&Tensor>,
    y_target: usize,
    y_ref: Option<usize>,
    t: f32,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    if cfg.omega < 1.0 {
        return Err(Error::InvalidConfig("guided operators need omega >= 1"));
    }
    let y_ref = y_ref.ok_or(Error::MissingReference)?;
    let z_ref = z_ref.ok_or(Error::MissingReference)?;
    let eps = policy.primary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let outs =
        pred.predict_many(&[(&zt, Some(y_target), t), (&zt, Some(y_ref), t), (&zt, None, t)]);
    let a = sched.sqrt_alpha_bar(t);

    let pos = cfg_combine(&outs[0], &outs[2], cfg.omega).sub(&eps).scaled(a);
    let neg = cfg_combine(&outs[1], &outs[2], cfg.omega).sub(&eps).scaled(-a);
    let grad = pos.add(&neg);
    let mut diag = Diagnostics::new(t, cfg.omega);
    // both terms share eps_uncond and eps, so their proj parts are identical
    let proj_pos = outs[2].sub(&eps).scaled(a);
    let proj_neg = outs[2].sub(&eps).scaled(a);
    diag.extra.push(("dds_proj_residual", proj_pos.sub(&proj_neg).l2_norm()));
    diag.extra.push(("dds_ref_distance", z.sub(z_ref).l2_norm()));
    Ok(GradResult::finish(
        grad,
        alloc::vec![(Component::Pos, pos), (Component::Neg, neg)],
        diag,
    ))
}

/// Multi-step variant: the proj part compares `z` against a `k`-step
/// deterministic denoised estimate on the unconditional branch; the cond
/// part is the usual guided difference. `k = 1` reduces the proj part to
/// [`grad_proj_x0`].
#[allow(clippy::too_many_arguments)]
pub fn grad_mssds<P: NoisePredictor>(
    pred: &P,
    z: &Tensor,
    y: usize,
    t: f32,
    k: usize,
    policy: &mut EpsilonPolicy,
    cfg: &LossConfig,
    sched: &VarianceSchedule,
) -> Result<GradResult> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("mssds needs k >= 1"));
    }
    if cfg.omega < 1.0 {
        return Err(Error::InvalidConfig("guided operators need omega >= 1"));
    }
    let eps = policy.primary(z.dims())?;
    let zt = forward_diffuse(z, t, &eps, sched)?;
    let outs = pred.predict_many(&[(&zt, Some(y), t), (&zt, None, t)]);
    let a = sched.sqrt_alpha_bar(t);
    let cond = outs[0].sub(&outs[1]).scaled(cfg.omega * a);

    // k deterministic sub-steps from t down to 0 on the unconditional branch
    let mut cur = zt;
    let mut x_hat = Tensor::zeros(z.dims());
    for i in 0..k {
        let t_cur = t * (1.0 - i as f32 / k as f32);
        let eps_hat = if i == 0 { outs[1].clone() } else { pred.predict(&cur, None, t_cur) };
        x_hat = predict_x0(&cur, &eps_hat, t_cur, sched);
        if i + 1 < k {
            let t_next = t * (1.0 - (i + 1) as f32 / k as f32);
            let an = sched.sqrt_alpha_bar(t_next);
            let sn = sched.sqrt_one_minus_alpha_bar(t_next);
            let mut znext = x_hat.scaled(an);
            znext.axpy(sn, &eps_hat);
            cur = znext;
        }
    }
    let s = sched.sqrt_one_minus_alpha_bar(t);
    let weight = if cfg.drop_proj_weight { 1.0 } else { a / s };
    let proj = z.sub(&x_hat).scaled(weight * a);
    let grad = cond.add(&proj);
    let mut diag = Diagnostics::new(t, cfg.omega);
    diag.weight_dropped = cfg.drop_proj_weight;
    diag.extra.push(("mssds_k", k as f32));
    Ok(GradResult::finish(
        grad,
        alloc::vec![(Component::Cond, cond), (Component::Proj, proj)],
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Denoiser;
    use crate::schedule::VarianceSchedule;
    use crate::tensor::rel_l2;

    /// Oracle predictor that returns a fixed tensor for every branch.
    struct OracleConst(Tensor);
    impl NoisePredictor for OracleConst {
        fn predict(&self, _z: &Tensor, _y: Option<usize>, _t: f32) -> Tensor {
            self.0.clone()
        }
    }

    /// Bias stub returning a fixed raw prediction.
    struct BiasConst(Tensor);
    impl BiasModel for BiasConst {
        fn predict_raw(&self, _z: &Tensor, _t: f32) -> Tensor {
            self.0.clone()
        }
    }

    fn setup() -> (Denoiser, VarianceSchedule, Tensor) {
        let net = Denoiser::new(1, 4, 2, 4, 21);
        let sched = VarianceSchedule::default_cosine();
        let mut rng = SeedStream::new(50);
        let z = rng.normal_tensor(&[1, 8, 8]).scaled(0.5);
        (net, sched, z)
    }

    /// Mirror of the policy's stored draw, for constructing oracles.
    fn policy_eps(seed: u64, dims: &[usize]) -> Tensor {
        SeedStream::new(derive(seed, "eps-policy")).normal_tensor(dims)
    }

    #[test]
    fn decomposition_identity_over_random_draws() {
        let (net, sched, _) = setup();
        let mut rng = SeedStream::new(60);
        for i in 0..20 {
            let z = rng.normal_tensor(&[1, 8, 8]).scaled(0.6);
            let t = rng.uniform_in(0.02, 0.98);
            let omega = rng.uniform_in(1.0, 20.0);
            let cfg = LossConfig { omega, ..LossConfig::default() };
            let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 1000 + i);
            let r = grad_sds(&net, &z, (i % 4) as usize, t, &mut policy, &cfg, &sched).unwrap();
            assert!(r.component_sum_residual() < 1e-6, "draw {i}: {}", r.component_sum_residual());
        }
    }

    #[test]
    fn perfect_denoiser_gives_zero_sds() {
        let (_, sched, z) = setup();
        let eps = policy_eps(5, z.dims());
        let oracle = OracleConst(eps.clone());
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 5);
        let cfg = LossConfig { omega: 7.5, ..LossConfig::default() };
        let r = grad_sds(&oracle, &z, 0, 0.5, &mut policy, &cfg, &sched).unwrap();
        assert!(r.diag.grad_norm < 1e-5, "norm {}", r.diag.grad_norm);
    }

    #[test]
    fn cond_null_label_is_exact_zero_and_linear_in_omega() {
        let (net, sched, z) = setup();
        let cfg = LossConfig::default();
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 9);
        let r = grad_cond(&net, &z, None, 0.5, &mut policy, &cfg, &sched).unwrap();
        assert_eq!(r.diag.grad_norm, 0.0);

        let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, 9);
        let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, 9);
        let c1 = LossConfig { omega: 4.0, ..LossConfig::default() };
        let c2 = LossConfig { omega: 8.0, ..LossConfig::default() };
        let g1 = grad_cond(&net, &z, Some(2), 0.5, &mut p1, &c1, &sched).unwrap();
        let g2 = grad_cond(&net, &z, Some(2), 0.5, &mut p2, &c2, &sched).unwrap();
        assert!(rel_l2(&g1.grad.scaled(2.0), &g2.grad) < 1e-6);
    }

    #[test]
    fn proj_equivalence_with_weight() {
        let (net, sched, z) = setup();
        let cfg = LossConfig { drop_proj_weight: false, ..LossConfig::default() };
        for (seed, t) in [(3u64, 0.1f32), (4, 0.5), (5, 0.9)] {
            let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, seed);
            let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, seed);
            let a = grad_proj(&net, &z, t, &mut p1, &cfg, &sched).unwrap();
            let b = grad_proj_x0(&net, &z, t, &mut p2, &cfg, &sched).unwrap();
            assert!(rel_l2(&a.grad, &b.grad) < 1e-5, "t={t}: {}", rel_l2(&a.grad, &b.grad));
        }
    }

    #[test]
    fn proj_scalar_example() {
        // alpha_bar = 0.25, z = 0.8, eps = 0.1, eps_hat = 0.2:
        // noise-space residual 0.1 matches (a/s)(z - x_hat).
        let sched = VarianceSchedule::from_knots(alloc::vec![0.25; 16]).unwrap();
        let oracle = OracleConst(Tensor::scalar(0.2));
        let z = Tensor::scalar(0.8);
        // a Fixed policy whose stored draw is exactly eps = 0.1
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 0);
        policy.stored = Some(Tensor::scalar(0.1));
        let cfg = LossConfig { drop_proj_weight: false, ..LossConfig::default() };
        let a = grad_proj(&oracle, &z, 0.5, &mut policy, &cfg, &sched).unwrap();
        // (eps_hat - eps) * sqrt(ab) = 0.1 * 0.5
        assert!((a.grad.data()[0] - 0.05).abs() < 1e-6);
        let mut policy2 = EpsilonPolicy::new(EpsMode::Fixed, 0);
        policy2.stored = Some(Tensor::scalar(0.1));
        let b = grad_proj_x0(&oracle, &z, 0.5, &mut policy2, &cfg, &sched).unwrap();
        assert!((b.grad.data()[0] - 0.05).abs() < 1e-6);
    }

    #[test]
    fn proj_weight_toggle_changes_the_gradient() {
        let (net, sched, z) = setup();
        let keep = LossConfig { drop_proj_weight: false, ..LossConfig::default() };
        let drop = LossConfig { drop_proj_weight: true, ..LossConfig::default() };
        let t = 0.5f32;
        let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, 8);
        let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, 8);
        let a = grad_proj_x0(&net, &z, t, &mut p1, &keep, &sched).unwrap();
        let b = grad_proj_x0(&net, &z, t, &mut p2, &drop, &sched).unwrap();
        assert!(!a.diag.weight_dropped);
        assert!(b.diag.weight_dropped);
        let ratio = sched.sqrt_alpha_bar(t) / sched.sqrt_one_minus_alpha_bar(t);
        assert!(rel_l2(&b.grad.scaled(ratio), &a.grad) < 1e-5);
    }

    #[test]
    fn lmc_zero_when_bias_matches_xhat() {
        let (_, sched, z) = setup();
        let t = 0.6f32;
        let seed = 77u64;
        // mirror the secondary draw of a FixedCondOnly policy: primary (none
        // consumed) ... here mode Resample draws secondary first; emulate by
        // computing via an identical stream
        let mut mirror = SeedStream::new(derive(seed, "eps-policy"));
        let eps = mirror.normal_tensor(z.dims());
        let zt = forward_diffuse(&z, t, &eps, &sched).unwrap();
        let oracle = OracleConst(Tensor::zeros(z.dims()));
        let x_hat = predict_x0(&zt, &Tensor::zeros(z.dims()), t, &sched);
        let bias = BiasConst(x_hat);
        let mut policy = EpsilonPolicy::new(EpsMode::Resample, seed);
        let cfg = LossConfig::default();
        let r = grad_lmc(&oracle, Some(&bias), &z, t, &mut policy, &cfg, &sched).unwrap();
        assert!(r.diag.grad_norm < 1e-6, "norm {}", r.diag.grad_norm);
    }

    #[test]
    fn lmc_requires_the_corrective() {
        let (net, sched, z) = setup();
        let mut policy = EpsilonPolicy::new(EpsMode::Resample, 1);
        let cfg = LossConfig::default();
        let r = grad_lmc::<_, BiasConst>(&net, None, &z, 0.5, &mut policy, &cfg, &sched);
        assert!(matches!(r, Err(Error::MissingCorrective)));
    }

    #[test]
    fn lmc_sds_components_sum_and_rescale() {
        let (net, sched, z) = setup();
        let mut rng = SeedStream::new(70);
        let bias = BiasConst(rng.normal_tensor(z.dims()).scaled(0.3));
        let on = LossConfig { omega: 8.0, rescale_by_inv_omega: true, ..LossConfig::default() };
        let off = LossConfig { omega: 8.0, rescale_by_inv_omega: false, ..LossConfig::default() };
        let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, 2);
        let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, 2);
        let a = grad_lmc_sds(&net, Some(&bias), &z, 1, 0.5, &mut p1, &on, &sched).unwrap();
        let b = grad_lmc_sds(&net, Some(&bias), &z, 1, 0.5, &mut p2, &off, &sched).unwrap();
        assert!(a.component_sum_residual() < 1e-6);
        assert!((a.diag.grad_norm - b.diag.grad_norm / 8.0).abs() < 1e-5 * b.diag.grad_norm);
    }

    #[test]
    fn fixed_cond_only_fixes_cond_and_resamples_lmc() {
        let (net, sched, z) = setup();
        let mut rng = SeedStream::new(71);
        let bias = BiasConst(rng.normal_tensor(z.dims()).scaled(0.3));
        let cfg = LossConfig { omega: 8.0, ..LossConfig::default() };
        let mut policy = EpsilonPolicy::new(EpsMode::FixedCondOnly, 33);
        let r1 = grad_lmc_sds(&net, Some(&bias), &z, 2, 0.5, &mut policy, &cfg, &sched).unwrap();
        let r2 = grad_lmc_sds(&net, Some(&bias), &z, 2, 0.5, &mut policy, &cfg, &sched).unwrap();
        let c1 = r1.component(Component::Cond).unwrap();
        let c2 = r2.component(Component::Cond).unwrap();
        let l1 = r1.component(Component::Lmc).unwrap();
        let l2 = r2.component(Component::Lmc).unwrap();
        assert_eq!(c1.data(), c2.data(), "cond must reuse the stored eps");
        assert!(rel_l2(l1, l2) > 1e-6, "lmc must keep sampling");
        assert!(!r1.diag.shared_zt);
    }

    #[test]
    fn policy_contracts() {
        let (net, sched, z) = setup();
        let cfg = LossConfig { omega: 4.0, ..LossConfig::default() };
        // fixed: identical grads across calls
        let mut fixed = EpsilonPolicy::new(EpsMode::Fixed, 3);
        let a = grad_sds(&net, &z, 1, 0.4, &mut fixed, &cfg, &sched).unwrap();
        let b = grad_sds(&net, &z, 1, 0.4, &mut fixed, &cfg, &sched).unwrap();
        assert_eq!(a.grad.data(), b.grad.data());
        // resample: they differ
        let mut res = EpsilonPolicy::new(EpsMode::Resample, 3);
        let c = grad_sds(&net, &z, 1, 0.4, &mut res, &cfg, &sched).unwrap();
        let d = grad_sds(&net, &z, 1, 0.4, &mut res, &cfg, &sched).unwrap();
        assert!(rel_l2(&c.grad, &d.grad) > 1e-6);
    }

    #[test]
    fn dds_identical_terms_cancel() {
        let (net, sched, z) = setup();
        let cfg = LossConfig { omega: 15.0, ..LossConfig::default() };
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 6);
        let r =
            grad_dds(&net, &z, Some(&z), 2, Some(2), 0.5, &mut policy, &cfg, &sched).unwrap();
        assert_eq!(r.diag.grad_norm, 0.0);
        let resid = r.diag.extra.iter().find(|(k, _)| *k == "dds_proj_residual").unwrap().1;
        assert!(resid < 1e-6);
    }

    #[test]
    fn dds_requires_reference() {
        let (net, sched, z) = setup();
        let cfg = LossConfig { omega: 15.0, ..LossConfig::default() };
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 6);
        assert!(matches!(
            grad_dds(&net, &z, Some(&z), 2, None, 0.5, &mut policy, &cfg, &sched),
            Err(Error::MissingReference)
        ));
        assert!(matches!(
            grad_dds(&net, &z, None, 2, Some(0), 0.5, &mut policy, &cfg, &sched),
            Err(Error::MissingReference)
        ));
    }

    #[test]
    fn mssds_k1_proj_equals_grad_proj_x0() {
        let (net, sched, z) = setup();
        for drop in [true, false] {
            let cfg = LossConfig { omega: 8.0, drop_proj_weight: drop, ..LossConfig::default() };
            let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, 12);
            let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, 12);
            let ms = grad_mssds(&net, &z, 1, 0.7, 1, &mut p1, &cfg, &sched).unwrap();
            let px = grad_proj_x0(&net, &z, 0.7, &mut p2, &cfg, &sched).unwrap();
            let proj = ms.component(Component::Proj).unwrap();
            assert!(rel_l2(proj, &px.grad) < 1e-6, "drop={drop}: {}", rel_l2(proj, &px.grad));
        }
    }

    #[test]
    fn mssds_needs_positive_k() {
        let (net, sched, z) = setup();
        let cfg = LossConfig::default();
        let mut policy = EpsilonPolicy::new(EpsMode::Fixed, 12);
        assert!(grad_mssds(&net, &z, 1, 0.7, 0, &mut policy, &cfg, &sched).is_err());
    }

    #[test]
    fn proj_and_lmc_are_omega_independent() {
        let (net, sched, z) = setup();
        let mut rng = SeedStream::new(72);
        let bias = BiasConst(rng.normal_tensor(z.dims()).scaled(0.3));
        for (o1, o2) in [(2.0f32, 16.0f32)] {
            let c1 = LossConfig { omega: o1, rescale_by_inv_omega: false, ..LossConfig::default() };
            let c2 = LossConfig { omega: o2, rescale_by_inv_omega: false, ..LossConfig::default() };
            let mut p1 = EpsilonPolicy::new(EpsMode::Fixed, 4);
            let mut p2 = EpsilonPolicy::new(EpsMode::Fixed, 4);
            let a = grad_proj(&net, &z, 0.5, &mut p1, &c1, &sched).unwrap();
            let b = grad_proj(&net, &z, 0.5, &mut p2, &c2, &sched).unwrap();
            assert_eq!(a.grad.data(), b.grad.data());
            let mut p3 = EpsilonPolicy::new(EpsMode::Fixed, 4);
            let mut p4 = EpsilonPolicy::new(EpsMode::Fixed, 4);
            let c = grad_lmc(&net, Some(&bias), &z, 0.5, &mut p3, &c1, &sched).unwrap();
            let d = grad_lmc(&net, Some(&bias), &z, 0.5, &mut p4, &c2, &sched).unwrap();
            assert_eq!(c.grad.data(), d.grad.data());
        }
    }
}
