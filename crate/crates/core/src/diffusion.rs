//! Forward diffusion, the conditional noise-prediction network, its training
//! loop with classifier-free label dropout, and reverse-process sampling for
//! sanity checks.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{pack_batch, step_decay_lr, unpack_batch, Adam, UNet, UNetConfig};
use crate::rng::{derive, SeedStream};
use crate::schedule::VarianceSchedule;
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

/// 10-dimensional frequency encoding of a scalar: sin/cos at 5 octaves.
pub fn freq_encode(v: f32) -> [f32; 10] {
    let mut out = [0.0f32; 10];
    for k in 0..5 {
        let w = (1 << k) as f32 * math::PI * v;
        out[2 * k] = math::sin(w);
        out[2 * k + 1] = math::cos(w);
    }
    out
}

/// `z_t = sqrt(alpha_bar) * z + sqrt(1 - alpha_bar) * eps`.
pub fn forward_diffuse(z: &Tensor, t: f32, eps: &Tensor, sched: &VarianceSchedule) -> Result<Tensor> {
    if !z.same_shape(eps) {
        return Err(Error::ShapeMismatch {
            context: "forward_diffuse",
            expected: z.shape_string(),
            got: eps.shape_string(),
        });
    }
    let a = sched.sqrt_alpha_bar(t);
    let s = sched.sqrt_one_minus_alpha_bar(t);
    let mut out = z.scaled(a);
    out.axpy(s, eps);
    Ok(out)
}

/// Classifier-free guidance: `omega * eps_cond + (1 - omega) * eps_uncond`.
pub fn cfg_combine(eps_cond: &Tensor, eps_uncond: &Tensor, omega: f32) -> Tensor {
    let mut out = eps_cond.scaled(omega);
    out.axpy(1.0 - omega, eps_uncond);
    out
}

/// Anything that predicts noise from `(z_t, y, t)`. Loss operators accept
/// this trait so tests can substitute closed-form oracles.
pub trait NoisePredictor {
    fn predict(&self, z_t: &Tensor, y: Option<usize>, t: f32) -> Tensor;

    /// Batched entry point; implementations may fuse requests into one pass.
    fn predict_many(&self, requests: &[(&Tensor, Option<usize>, f32)]) -> Vec<Tensor> {
        requests.iter().map(|(z, y, t)| self.predict(z, *y, *t)).collect()
    }
}

/// Single-step denoised estimate `x_hat = (z_t - sqrt(1-ab) eps_hat) / sqrt(ab)`.
pub fn predict_x0(z_t: &Tensor, eps_hat: &Tensor, t: f32, sched: &VarianceSchedule) -> Tensor {
    let a = sched.sqrt_alpha_bar(t);
    let s = sched.sqrt_one_minus_alpha_bar(t);
    let mut out = z_t.clone();
    out.axpy(-s, eps_hat);
    out.scale(1.0 / a);
    out
}

/// Conditional noise-prediction U-Net. The timestep and the class id enter as
/// 10-dimensional frequency encodings concatenated to every pixel; a flag
/// channel distinguishes the unconditional branch from class 0.
pub struct Denoiser {
    unet: UNet,
    pub num_classes: usize,
    pub img_channels: usize,
}

impl Denoiser {
    pub fn new(
        img_channels: usize,
        num_classes: usize,
        levels: usize,
        base_filters: usize,
        seed: u64,
    ) -> Self {
        let mut rng = SeedStream::new(derive(seed, "denoiser-init"));
        let unet = UNet::new(
            UNetConfig {
                in_channels: img_channels + 21,
                out_channels: img_channels,
                levels,
                base_filters,
                final_tanh: false,
            },
            &mut rng,
        );
        Self { unet, num_classes, img_channels }
    }

    fn class_scalar(&self, y: usize) -> f32 {
        if self.num_classes > 1 {
            y as f32 / (self.num_classes - 1) as f32
        } else {
            0.0
        }
    }

    /// Build the `(C+21, N, H, W)` network input for a batch of requests.
    fn assemble(&self, requests: &[(&Tensor, Option<usize>, f32)]) -> Tensor {
        let n = requests.len();
        let d = requests[0].0.dims();
        let (c, h, w) = (d[0], d[1], d[2]);
        let hw = h * w;
        let mut input = Tensor::zeros(&[c + 21, n, h, w]);
        let dst = input.data_mut();
        for (i, (z, y, t)) in requests.iter().enumerate() {
            debug_assert_eq!(z.dims(), d);
            for ch in 0..c {
                let o = (ch * n + i) * hw;
                dst[o..o + hw].copy_from_slice(&z.data()[ch * hw..(ch + 1) * hw]);
            }
            let tenc = freq_encode(*t);
            for (k, tv) in tenc.iter().enumerate() {
                let o = ((c + k) * n + i) * hw;
                dst[o..o + hw].fill(*tv);
            }
            let (yenc, flag) = match y {
                Some(cls) => (freq_encode(self.class_scalar(*cls)), 1.0),
                None => ([0.0; 10], 0.0),
            };
            for (k, yv) in yenc.iter().enumerate() {
                let o = ((c + 10 + k) * n + i) * hw;
                dst[o..o + hw].fill(*yv);
            }
            let o = ((c + 20) * n + i) * hw;
            dst[o..o + hw].fill(flag);
        }
        input
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.unet.named_tensors()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.unet.named_tensors_mut()
    }

    pub fn num_params(&self) -> usize {
        self.unet.num_params()
    }

    /// Vector-Jacobian product with the network input: gradient of
    /// `<predict(z_t, y, t), upstream>` with respect to `z_t`. Used by the
    /// gradient diagnostics that compare full backpropagation against the
    /// omitted-Jacobian operators.
    pub fn input_gradient(
        &mut self,
        z_t: &Tensor,
        y: Option<usize>,
        t: f32,
        upstream: &Tensor,
    ) -> Tensor {
        let input = self.assemble(&[(z_t, y, t)]);
        let _ = self.unet.forward_train(&input);
        let d = z_t.dims();
        let dy = pack_batch(&[upstream]);
        let dx = self.unet.backward(&dy, true).expect("input gradient requested");
        // keep only the image channels; encodings are constants
        let hw = d[1] * d[2];
        let mut out = Tensor::zeros(d);
        out.data_mut()[..d[0] * hw].copy_from_slice(&dx.data()[..d[0] * hw]);
        out
    }
}

impl NoisePredictor for Denoiser {
    fn predict(&self, z_t: &Tensor, y: Option<usize>, t: f32) -> Tensor {
        self.predict_many(&[(z_t, y, t)]).pop().unwrap()
    }

    fn predict_many(&self, requests: &[(&Tensor, Option<usize>, f32)]) -> Vec<Tensor> {
        let input = self.assemble(requests);
        let out = self.unet.forward_infer(&input);
        unpack_batch(&out)
    }
}

/// How the per-sample diffusion loss is weighted over t.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeWeight {
    /// w(t) = 1.
    One,
    /// w(t) = 1 - alpha_bar(t); de-emphasizes low-noise steps.
    OneMinusAlphaBar,
}

impl TimeWeight {
    fn eval(&self, t: f32, sched: &VarianceSchedule) -> f32 {
        match self {
            TimeWeight::One => 1.0,
            TimeWeight::OneMinusAlphaBar => 1.0 - sched.alpha_bar(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub label_dropout: f32,
    pub t_min: f32,
    pub t_max: f32,
    pub weight: TimeWeight,
    pub seed: u64,
    /// Trace row cadence (steps); 0 disables intermediate rows.
    pub trace_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch: 2,
            lr: 3e-4,
            lr_decay: 0.9,
            lr_decay_every: 10_000,
            label_dropout: 0.1,
            t_min: 0.02,
            t_max: 0.98,
            weight: TimeWeight::One,
            seed: 7,
            trace_every: 100,
        }
    }
}

/// One row of the training trace: running mean loss overall and per t-bucket
/// (t < 1/3, t < 2/3, rest) since the previous row.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f32,
    pub bucket_losses: [f32; 3],
}

struct BucketAcc {
    sum: [f64; 3],
    count: [usize; 3],
    total: f64,
    n: usize,
}

impl BucketAcc {
    fn new() -> Self {
        Self { sum: [0.0; 3], count: [0; 3], total: 0.0, n: 0 }
    }

    fn push(&mut self, t: f32, loss: f32) {
        let b = if t < 1.0 / 3.0 {
            0
        } else if t < 2.0 / 3.0 {
            1
        } else {
            2
        };
        self.sum[b] += loss as f64;
        self.count[b] += 1;
        self.total += loss as f64;
        self.n += 1;
    }

    fn flush(&mut self, step: usize) -> TraceRow {
        let mut buckets = [f32::NAN; 3];
        for b in 0..3 {
            if self.count[b] > 0 {
                buckets[b] = (self.sum[b] / self.count[b] as f64) as f32;
            }
        }
        let row = TraceRow {
            step,
            loss: if self.n > 0 { (self.total / self.n as f64) as f32 } else { f32::NAN },
            bucket_losses: buckets,
        };
        *self = Self::new();
        row
    }
}

/// Train a denoiser on the dataset. Deterministic per config.
pub fn train_denoiser(
    data: &LabeledDataset,
    sched: &VarianceSchedule,
    cfg: &TrainConfig,
    levels: usize,
    base_filters: usize,
) -> Result<(Denoiser, Vec<TraceRow>)> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training dataset"));
    }
    data.validate()?;
    let d = data.image_dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let mut net = Denoiser::new(c, data.num_classes, levels, base_filters, cfg.seed);
    let mut adam = Adam::new();
    let mut rng = SeedStream::new(derive(cfg.seed, "denoiser-train"));
    let mut trace = Vec::new();
    let mut acc = BucketAcc::new();
    let numel = (c * h * w) as f32;

    for step in 0..cfg.steps {
        // sample the batch
        let mut zs: Vec<&Tensor> = Vec::with_capacity(cfg.batch);
        let mut ts: Vec<f32> = Vec::with_capacity(cfg.batch);
        let mut ys: Vec<Option<usize>> = Vec::with_capacity(cfg.batch);
        let mut eps_list: Vec<Tensor> = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let i = rng.below(data.len());
            zs.push(&data.images[i]);
            ts.push(rng.uniform_in(cfg.t_min, cfg.t_max));
            let dropped = rng.uniform() < cfg.label_dropout;
            ys.push(if dropped { None } else { Some(data.labels[i]) });
            eps_list.push(rng.normal_tensor(d));
        }
        let zts: Vec<Tensor> = (0..cfg.batch)
            .map(|i| forward_diffuse(zs[i], ts[i], &eps_list[i], sched))
            .collect::<Result<_>>()?;
        let reqs: Vec<(&Tensor, Option<usize>, f32)> =
            (0..cfg.batch).map(|i| (&zts[i], ys[i], ts[i])).collect();
        let input = net.assemble(&reqs);
        let pred = net.unet.forward_train(&input); // (c, B, h, w)

        // residual and loss
        let eps_batch = pack_batch(&eps_list.iter().collect::<Vec<_>>());
        let mut dy = pred.sub(&eps_batch);
        let mut loss = 0.0f64;
        {
            // per-sample weight and loss bookkeeping on the (c,B,h,w) layout
            let hw = h * w;
            let dyd = dy.data_mut();
            for (i, t) in ts.iter().enumerate() {
                let wt = cfg.weight.eval(*t, sched);
                let mut sample_loss = 0.0f64;
                for ch in 0..c {
                    let o = (ch * cfg.batch + i) * hw;
                    for v in &dyd[o..o + hw] {
                        sample_loss += (*v as f64) * (*v as f64);
                    }
                }
                sample_loss = wt as f64 * sample_loss / numel as f64;
                loss += sample_loss;
                acc.push(*t, sample_loss as f32);
                if wt != 1.0 {
                    for ch in 0..c {
                        let o = (ch * cfg.batch + i) * hw;
                        for v in &mut dyd[o..o + hw] {
                            *v *= wt;
                        }
                    }
                }
            }
        }
        let loss = (loss / cfg.batch as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        dy.scale(2.0 / (numel * cfg.batch as f32));
        net.unet.backward(&dy, false);
        let lr = step_decay_lr(cfg.lr, cfg.lr_decay, cfg.lr_decay_every, step);
        adam.step(&mut net.unet.param_slots(), lr);

        if cfg.trace_every > 0 && (step + 1) % cfg.trace_every == 0 {
            trace.push(acc.flush(step + 1));
        }
    }
    if acc.n > 0 {
        trace.push(acc.flush(cfg.steps));
    }
    Ok((net, trace))
}

/// Mean per-element diffusion loss over a dataset with fresh (t, eps) draws;
/// `conditional` selects the branch being evaluated.
pub fn held_out_diffusion_loss(
    net: &Denoiser,
    data: &LabeledDataset,
    sched: &VarianceSchedule,
    draws_per_image: usize,
    conditional: bool,
    seed: u64,
) -> Result<f32> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty evaluation dataset"));
    }
    let mut rng = SeedStream::new(derive(seed, "heldout-ldiff"));
    let d = data.image_dims().to_vec();
    let mut total = 0.0f64;
    let mut count = 0usize;
    let chunk = 16usize;
    let mut pending: Vec<(Tensor, Option<usize>, f32, Tensor)> = Vec::new();
    let flush = |pending: &mut Vec<(Tensor, Option<usize>, f32, Tensor)>,
                     total: &mut f64,
                     count: &mut usize| {
        if pending.is_empty() {
            return;
        }
        let reqs: Vec<(&Tensor, Option<usize>, f32)> =
            pending.iter().map(|(z, y, t, _)| (z, *y, *t)).collect();
        let preds = net.predict_many(&reqs);
        for (p, (_, _, _, eps)) in preds.iter().zip(pending.iter()) {
            *total += p.sub(eps).mean_sq() as f64;
            *count += 1;
        }
        pending.clear();
    };
    for (img, &label) in data.images.iter().zip(data.labels.iter()) {
        for _ in 0..draws_per_image {
            let t = rng.uniform_in(0.02, 0.98);
            let eps = rng.normal_tensor(&d);
            let zt = forward_diffuse(img, t, &eps, sched)?;
            pending.push((zt, if conditional { Some(label) } else { None }, t, eps));
            if pending.len() >= chunk {
                flush(&mut pending, &mut total, &mut count);
            }
        }
    }
    flush(&mut pending, &mut total, &mut count);
    Ok((total / count as f64) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Ancestral,
    Ddim,
}

/// Reverse-process sampling over a uniform t grid. DDIM mode is fully
/// deterministic given the seed (which only draws the initial noise).
pub fn sample(
    net: &Denoiser,
    y: Option<usize>,
    steps: usize,
    mode: SampleMode,
    seed: u64,
    sched: &VarianceSchedule,
    dims: &[usize],
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::InvalidConfig("sampling needs at least one step"));
    }
    let mut rng = SeedStream::new(derive(seed, "sample"));
    let mut z = rng.normal_tensor(dims);
    for i in 0..steps {
        let t_cur = 1.0 - i as f32 / steps as f32;
        let t_next = 1.0 - (i + 1) as f32 / steps as f32;
        let eps_hat = net.predict(&z, y, t_cur);
        let x_hat = predict_x0(&z, &eps_hat, t_cur, sched);
        if i + 1 == steps {
            z = x_hat;
            break;
        }
        let ab_cur = sched.alpha_bar(t_cur);
        let ab_next = sched.alpha_bar(t_next);
        let a_next = math::sqrt(ab_next);
        let s_next = math::sqrt(1.0 - ab_next);
        match mode {
            SampleMode::Ddim => {
                let mut znext = x_hat.scaled(a_next);
                znext.axpy(s_next, &eps_hat);
                z = znext;
            }
            SampleMode::Ancestral => {
                let var = (1.0 - ab_next) / (1.0 - ab_cur) * (1.0 - ab_cur / ab_next);
                let sigma = math::sqrt(var.max(0.0));
                let dir = math::sqrt((s_next * s_next - sigma * sigma).max(0.0));
                let mut znext = x_hat.scaled(a_next);
                znext.axpy(dir, &eps_hat);
                let xi = rng.normal_tensor(dims);
                znext.axpy(sigma, &xi);
                z = znext;
            }
        }
    }
    z.clamp(-1.0, 1.0);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::VarianceSchedule;

    fn const_schedule(ab: f32) -> VarianceSchedule {
        VarianceSchedule::from_knots(alloc::vec![ab; 16]).unwrap()
    }

    #[test]
    fn forward_diffuse_scalar_example() {
        // alpha_bar = 0.25, z = 1.0, eps = 0.5 -> 0.5*1.0 + sqrt(0.75)*0.5
        let sched = const_schedule(0.25);
        let z = Tensor::scalar(1.0);
        let eps = Tensor::scalar(0.5);
        let zt = forward_diffuse(&z, 0.5, &eps, &sched).unwrap();
        assert!((zt.data()[0] - 0.93301270).abs() < 1e-6);
    }

    #[test]
    fn forward_diffuse_zero_noise() {
        let sched = VarianceSchedule::default_cosine();
        let mut rng = SeedStream::new(1);
        let z = rng.normal_tensor(&[1, 4, 4]);
        let eps = Tensor::zeros(&[1, 4, 4]);
        for t in [0.1, 0.5, 0.9] {
            let zt = forward_diffuse(&z, t, &eps, &sched).unwrap();
            let a = sched.sqrt_alpha_bar(t);
            for (o, i) in zt.data().iter().zip(z.data()) {
                assert_eq!(*o, a * i);
            }
        }
    }

    #[test]
    fn forward_diffuse_identity_limit() {
        let sched = VarianceSchedule::default_cosine();
        let mut rng = SeedStream::new(2);
        let z = rng.normal_tensor(&[1, 4, 4]);
        let eps = rng.normal_tensor(&[1, 4, 4]);
        let zt = forward_diffuse(&z, 0.0, &eps, &sched).unwrap();
        for (o, i) in zt.data().iter().zip(z.data()) {
            assert!((o - i).abs() < 0.05);
        }
    }

    #[test]
    fn forward_diffuse_shape_mismatch() {
        let sched = VarianceSchedule::default_cosine();
        let z = Tensor::zeros(&[1, 4, 4]);
        let eps = Tensor::zeros(&[1, 2, 2]);
        assert!(forward_diffuse(&z, 0.5, &eps, &sched).is_err());
    }

    #[test]
    fn predict_x0_scalar_example() {
        // alpha_bar = 0.25, z_t = 0.48660, eps_hat = 0.2 -> approx 0.62679
        let sched = const_schedule(0.25);
        let zt = Tensor::scalar(0.48660);
        let eh = Tensor::scalar(0.2);
        let x = predict_x0(&zt, &eh, 0.5, &sched);
        assert!((x.data()[0] - 0.62679).abs() < 1e-4);
    }

    #[test]
    fn predict_x0_inverts_forward_diffuse() {
        let sched = VarianceSchedule::default_cosine();
        let mut rng = SeedStream::new(3);
        for t in [0.05, 0.3, 0.7, 0.95] {
            let z = rng.normal_tensor(&[1, 8, 8]);
            let eps = rng.normal_tensor(&[1, 8, 8]);
            let zt = forward_diffuse(&z, t, &eps, &sched).unwrap();
            // oracle predictor returning the true noise recovers z exactly
            let x = predict_x0(&zt, &eps, t, &sched);
            assert!(crate::tensor::rel_l2(&x, &z) < 1e-5, "t={t}");
            // and the round trip back to z_t is tight
            let a = sched.sqrt_alpha_bar(t);
            let s = sched.sqrt_one_minus_alpha_bar(t);
            let mut zt2 = x.scaled(a);
            zt2.axpy(s, &eps);
            assert!(crate::tensor::rel_l2(&zt2, &zt) < 1e-6, "t={t}");
        }
    }

    #[test]
    fn cfg_identities() {
        let mut rng = SeedStream::new(4);
        let ec = rng.normal_tensor(&[1, 6, 6]);
        let eu = rng.normal_tensor(&[1, 6, 6]);
        let w1 = cfg_combine(&ec, &eu, 1.0);
        assert!(crate::tensor::rel_l2(&w1, &ec) < 1e-7);
        let w0 = cfg_combine(&ec, &eu, 0.0);
        assert!(crate::tensor::rel_l2(&w0, &eu) < 1e-7);
        // Eq. 4 form vs rewritten form omega*(ec-eu) + eu
        for omega in [0.5f32, 7.5, 15.0] {
            let lhs = cfg_combine(&ec, &eu, omega);
            let mut rhs = ec.sub(&eu).scaled(omega);
            rhs.add_assign(&eu);
            assert!(crate::tensor::rel_l2(&lhs, &rhs) < 1e-6, "omega={omega}");
        }
    }

    #[test]
    fn denoiser_accepts_null_label_and_matches_shape() {
        let net = Denoiser::new(1, 4, 2, 4, 9);
        let mut rng = SeedStream::new(5);
        let z = rng.normal_tensor(&[1, 8, 8]);
        let out_c = net.predict(&z, Some(2), 0.4);
        let out_u = net.predict(&z, None, 0.4);
        assert_eq!(out_c.dims(), z.dims());
        assert_eq!(out_u.dims(), z.dims());
        assert!(out_c.all_finite() && out_u.all_finite());
        // branches must differ (flag + label channels)
        assert!(crate::tensor::rel_l2(&out_c, &out_u) > 1e-6);
    }

    #[test]
    fn batched_prediction_matches_single() {
        let net = Denoiser::new(1, 4, 2, 4, 10);
        let mut rng = SeedStream::new(6);
        let z1 = rng.normal_tensor(&[1, 8, 8]);
        let z2 = rng.normal_tensor(&[1, 8, 8]);
        let batch = net.predict_many(&[(&z1, Some(0), 0.3), (&z2, None, 0.8)]);
        let s1 = net.predict(&z1, Some(0), 0.3);
        let s2 = net.predict(&z2, None, 0.8);
        assert!(crate::tensor::rel_l2(&batch[0], &s1) < 1e-5);
        assert!(crate::tensor::rel_l2(&batch[1], &s2) < 1e-5);
    }

    #[test]
    fn zero_steps_training_returns_initialization() {
        let data = crate::data::gen_shapes(7, 8, 4, 32).unwrap();
        let sched = VarianceSchedule::default_cosine();
        let cfg = TrainConfig { steps: 0, seed: 42, ..TrainConfig::default() };
        let (net, trace) = train_denoiser(&data, &sched, &cfg, 2, 4).unwrap();
        let fresh = Denoiser::new(1, 4, 2, 4, 42);
        for ((_, a), (_, b)) in net.named_tensors().iter().zip(fresh.named_tensors().iter()) {
            assert_eq!(a.data(), b.data());
        }
        assert!(trace.is_empty());
    }

    #[test]
    fn short_training_smoke() {
        let data = crate::data::gen_shapes(7, 32, 2, 32).unwrap();
        let sched = VarianceSchedule::default_cosine();
        let cfg = TrainConfig {
            steps: 30,
            batch: 2,
            lr: 1e-3,
            trace_every: 10,
            seed: 1,
            ..TrainConfig::default()
        };
        let (net, trace) = train_denoiser(&data, &sched, &cfg, 2, 8).unwrap();
        assert_eq!(trace.len(), 3);
        for row in &trace {
            assert!(row.loss.is_finite());
        }
        let l = held_out_diffusion_loss(&net, &data, &sched, 1, true, 99).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn ddim_sampling_is_deterministic() {
        let net = Denoiser::new(1, 2, 2, 4, 12);
        let sched = VarianceSchedule::default_cosine();
        let a = sample(&net, Some(1), 3, SampleMode::Ddim, 5, &sched, &[1, 8, 8]).unwrap();
        let b = sample(&net, Some(1), 3, SampleMode::Ddim, 5, &sched, &[1, 8, 8]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn single_step_sampling_is_x0_prediction() {
        let net = Denoiser::new(1, 2, 2, 4, 13);
        let sched = VarianceSchedule::default_cosine();
        let dims = [1usize, 8, 8];
        let out = sample(&net, Some(0), 1, SampleMode::Ddim, 77, &sched, &dims).unwrap();
        // reproduce: initial noise comes from the same derived stream
        let mut rng = SeedStream::new(derive(77, "sample"));
        let z = rng.normal_tensor(&dims);
        let eps_hat = net.predict(&z, Some(0), 1.0);
        let mut x = predict_x0(&z, &eps_hat, 1.0, &sched);
        x.clamp(-1.0, 1.0);
        for (a, b) in out.data().iter().zip(x.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
