//! The learned manifold corrective: triplet generation from a trained
//! denoiser, the statistics-normalized training loss, and normalized
//! application at inference time.

use crate::data::LabeledDataset;
use crate::diffusion::{forward_diffuse, predict_x0, NoisePredictor, TraceRow};
use crate::error::{Error, Result};
use crate::nn::{pack_batch, step_decay_lr, unpack_batch, unpack_image, Adam, UNet, UNetConfig};
use crate::rng::{derive, SeedStream};
use crate::schedule::VarianceSchedule;
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

/// Which mean re-enters after rescaling in the normalized space: the
/// prediction's own mean (literal reading of the training loss) or the
/// reference's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    Own,
    Ref,
}

/// Match `pred`'s global statistics to `reference`'s spread:
/// `(sigma_ref / sigma_pred) * (pred - mu_pred) + mu`, where `mu` is
/// `mu_pred` (Own) or `mu_ref` (Ref). Statistics are taken per image over
/// all pixels and channels jointly.
pub fn stat_normalize(pred: &Tensor, reference: &Tensor, mode: MeanMode) -> Result<Tensor> {
    if !pred.same_shape(reference) {
        return Err(Error::ShapeMismatch {
            context: "stat_normalize",
            expected: reference.shape_string(),
            got: pred.shape_string(),
        });
    }
    let sp = pred.std();
    if sp <= 1e-8 {
        return Err(Error::DegenerateInput("stat_normalize: prediction has zero variance"));
    }
    let sr = reference.std();
    let mp = pred.mean();
    let mu = match mode {
        MeanMode::Own => mp,
        MeanMode::Ref => reference.mean(),
    };
    let k = sr / sp;
    Ok(pred.map(|v| k * (v - mp) + mu))
}

/// Backward pass of [`stat_normalize`] with respect to `pred`, given the
/// upstream gradient `g`. The normalization statistics are differentiated
/// through (this is the training path; inference treats them as constants).
pub fn stat_normalize_backward(
    pred: &Tensor,
    reference: &Tensor,
    mode: MeanMode,
    g: &Tensor,
) -> Result<Tensor> {
    let m = pred.len() as f64;
    let sp = pred.std() as f64;
    if sp <= 1e-8 {
        return Err(Error::DegenerateInput("stat_normalize: prediction has zero variance"));
    }
    let sr = reference.std() as f64;
    let mp = pred.mean() as f64;
    let k = sr / sp;
    let mut gsum = 0.0f64;
    let mut gu = 0.0f64; // sum g_j * (p_j - mu_p)
    for (gj, pj) in g.data().iter().zip(pred.data().iter()) {
        gsum += *gj as f64;
        gu += *gj as f64 * (*pj as f64 - mp);
    }
    let mut out = Tensor::zeros(pred.dims());
    let od = out.data_mut();
    for i in 0..od.len() {
        let gi = g.data()[i] as f64;
        let ui = pred.data()[i] as f64 - mp;
        let mut v = k * gi - k * gsum / m - k * ui * gu / (m * sp * sp);
        if mode == MeanMode::Own {
            v += gsum / m;
        }
        od[i] = v as f32;
    }
    Ok(out)
}

/// Anything usable as the bias model in the corrective loss operators.
pub trait BiasModel {
    fn predict_raw(&self, z: &Tensor, t: f32) -> Tensor;
}

/// Normalized application of the bias model: predicts `b(z, t)` and matches
/// its statistics against the reference (the single-step denoised estimate it
/// will be compared with).
pub fn apply_corrective(
    bias: &impl BiasModel,
    z: &Tensor,
    t: f32,
    reference: &Tensor,
    mode: MeanMode,
) -> Result<Tensor> {
    stat_normalize(&bias.predict_raw(z, t), reference, mode)
}

/// Training triplets `(z, x_hat_t, t)` in struct-of-arrays form.
#[derive(Debug, Clone, Default)]
pub struct TripletSet {
    pub zs: Vec<Tensor>,
    pub xhats: Vec<Tensor>,
    pub ts: Vec<f32>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// Subset with t in [lo, hi).
    pub fn filter_t(&self, lo: f32, hi: f32) -> TripletSet {
        let mut out = TripletSet::default();
        for i in 0..self.len() {
            if self.ts[i] >= lo && self.ts[i] < hi {
                out.zs.push(self.zs[i].clone());
                out.xhats.push(self.xhats[i].clone());
                out.ts.push(self.ts[i]);
            }
        }
        out
    }
}

/// Draw `n` triplets: random dataset image, `t ~ U(0.02, 0.98)`, fresh noise,
/// and the unconditional single-step denoised estimate.
pub fn generate_triplets(
    net: &impl NoisePredictor,
    data: &LabeledDataset,
    n: usize,
    seed: u64,
    sched: &VarianceSchedule,
) -> Result<TripletSet> {
    if n > 0 && data.is_empty() {
        return Err(Error::InvalidConfig("cannot draw triplets from an empty dataset"));
    }
    let mut rng = SeedStream::new(derive(seed, "triplets"));
    let mut out = TripletSet::default();
    let chunk = 16usize;
    let mut pending: Vec<(Tensor, Tensor, f32)> = Vec::new(); // (z, z_t, t)
    let flush = |pending: &mut Vec<(Tensor, Tensor, f32)>, out: &mut TripletSet| {
        if pending.is_empty() {
            return;
        }
        let reqs: Vec<(&Tensor, Option<usize>, f32)> =
            pending.iter().map(|(_, zt, t)| (zt, None, *t)).collect();
        let preds = net.predict_many(&reqs);
        for (eps_hat, (z, zt, t)) in preds.iter().zip(pending.drain(..)) {
            out.zs.push(z);
            out.xhats.push(predict_x0(&zt, eps_hat, t, sched));
            out.ts.push(t);
        }
    };
    let dims = if n > 0 { data.image_dims().to_vec() } else { Vec::new() };
    for _ in 0..n {
        let i = rng.below(data.len());
        let t = rng.uniform_in(0.02, 0.98);
        let eps = rng.normal_tensor(&dims);
        let zt = forward_diffuse(&data.images[i], t, &eps, sched)?;
        pending.push((data.images[i].clone(), zt, t));
        if pending.len() >= chunk {
            flush(&mut pending, &mut out);
        }
    }
    flush(&mut pending, &mut out);
    Ok(out)
}

/// The bias network: a tanh-headed U-Net over the image plus the
/// frequency-encoded timestep.
pub struct CorrectiveNet {
    unet: UNet,
    pub img_channels: usize,
}

impl CorrectiveNet {
    pub fn new(img_channels: usize, levels: usize, base_filters: usize, seed: u64) -> Self {
        let mut rng = SeedStream::new(derive(seed, "corrective-init"));
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
        Self { unet, img_channels }
    }

    fn assemble(&self, entries: &[(&Tensor, f32)]) -> Tensor {
        let n = entries.len();
        let d = entries[0].0.dims();
        let (c, h, w) = (d[0], d[1], d[2]);
        let hw = h * w;
        let mut input = Tensor::zeros(&[c + 10, n, h, w]);
        let dst = input.data_mut();
        for (i, (z, t)) in entries.iter().enumerate() {
            for ch in 0..c {
                let o = (ch * n + i) * hw;
                dst[o..o + hw].copy_from_slice(&z.data()[ch * hw..(ch + 1) * hw]);
            }
            let tenc = crate::diffusion::freq_encode(*t);
            for (k, tv) in tenc.iter().enumerate() {
                let o = ((c + k) * n + i) * hw;
                dst[o..o + hw].fill(*tv);
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

impl BiasModel for CorrectiveNet {
    fn predict_raw(&self, z: &Tensor, t: f32) -> Tensor {
        let input = self.assemble(&[(z, t)]);
        unpack_image(&self.unet.forward_infer(&input), 0)
    }
}

#[derive(Debug, Clone)]
pub struct CorrectiveTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub lr_decay_every: usize,
    pub mean_mode: MeanMode,
    pub seed: u64,
    pub trace_every: usize,
}

impl Default for CorrectiveTrainConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            batch: 8,
            lr: 1e-4,
            lr_decay: 0.9,
            lr_decay_every: 10_000,
            mean_mode: MeanMode::Own,
            seed: 7,
            trace_every: 100,
        }
    }
}

/// Per-triplet normalized loss `|x_hat - stat_normalize(raw, x_hat)|^2 / numel`
/// for an arbitrary raw bias function; used for both the trained network and
/// baselines.
pub fn mean_lk<F: Fn(&Tensor, f32) -> Tensor>(
    raw_fn: F,
    trips: &TripletSet,
    mode: MeanMode,
) -> Result<f32> {
    if trips.is_empty() {
        return Err(Error::InvalidConfig("empty triplet set"));
    }
    let mut total = 0.0f64;
    for i in 0..trips.len() {
        let raw = raw_fn(&trips.zs[i], trips.ts[i]);
        let norm = stat_normalize(&raw, &trips.xhats[i], mode)?;
        total += trips.xhats[i].sub(&norm).mean_sq() as f64;
    }
    Ok((total / trips.len() as f64) as f32)
}

/// Train the bias network on triplets by minimizing the normalized-space
/// loss. Deterministic per config.
pub fn train_corrective(
    trips: &TripletSet,
    cfg: &CorrectiveTrainConfig,
    levels: usize,
    base_filters: usize,
) -> Result<(CorrectiveNet, Vec<TraceRow>)> {
    if trips.is_empty() {
        return Err(Error::InvalidConfig("empty triplet source"));
    }
    let d = trips.zs[0].dims().to_vec();
    let (c, h, w) = (d[0], d[1], d[2]);
    let numel = (c * h * w) as f32;
    let mut net = CorrectiveNet::new(c, levels, base_filters, cfg.seed);
    let mut adam = Adam::new();
    let mut rng = SeedStream::new(derive(cfg.seed, "corrective-train"));
    let mut trace = Vec::new();
    let mut acc_loss = 0.0f64;
    let mut acc_n = 0usize;

    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.below(trips.len())).collect();
        let entries: Vec<(&Tensor, f32)> =
            idx.iter().map(|&i| (&trips.zs[i], trips.ts[i])).collect();
        let input = net.assemble(&entries);
        let raw_batch = net.unet.forward_train(&input);
        let raws = unpack_batch(&raw_batch);

        let mut draws: Vec<Tensor> = Vec::with_capacity(cfg.batch);
        let mut loss = 0.0f64;
        for (bi, &i) in idx.iter().enumerate() {
            let xhat = &trips.xhats[i];
            let norm = stat_normalize(&raws[bi], xhat, cfg.mean_mode)?;
            let resid = norm.sub(xhat);
            loss += resid.mean_sq() as f64;
            let g = resid.scaled(2.0 / (numel * cfg.batch as f32));
            draws.push(stat_normalize_backward(&raws[bi], xhat, cfg.mean_mode, &g)?);
        }
        let loss = (loss / cfg.batch as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        acc_loss += loss as f64;
        acc_n += 1;
        let dy = pack_batch(&draws.iter().collect::<Vec<_>>());
        net.unet.backward(&dy, false);
        let lr = step_decay_lr(cfg.lr, cfg.lr_decay, cfg.lr_decay_every, step);
        adam.step(&mut net.unet.param_slots(), lr);

        if cfg.trace_every > 0 && (step + 1) % cfg.trace_every == 0 {
            trace.push(TraceRow {
                step: step + 1,
                loss: (acc_loss / acc_n as f64) as f32,
                bucket_losses: [f32::NAN; 3],
            });
            acc_loss = 0.0;
            acc_n = 0;
        }
    }
    Ok((net, trace))
}
