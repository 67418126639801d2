//! Training objectives: the conditional noise-prediction loss, the
//! median-deviation (QDM) fine-tuning loss, and their weighted sum.

use rand::Rng;
use rand_distr::StandardNormal;

use super::process::forward_perturb;
use crate::data::NormalizedWindow;
use crate::denoiser::{ConditionSet, DenoiserParams};
use crate::error::{Error, Result};
use crate::nn::init::substream_rng;
use crate::schedule::NoiseSchedule;

/// Deterministic per-sample seed mix so draws follow the sample, not its
/// position in the batch.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_noise(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// The (t, eps, x_t) triple used by the noise-prediction loss for a sample.
fn draw_sample(
    w: &NormalizedWindow,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut rng = substream_rng(mix_seed(seed, w.id), 0xE95);
    let t = rng.random_range(1..=sched.steps());
    let eps = draw_noise(&mut rng, w.target.len());
    let x_t = forward_perturb(&w.target, t, &eps, sched)?;
    Ok((t, eps, x_t))
}

/// Mean over the batch of ||eps - eps_theta(x_t, c, t)||^2 with t uniform in
/// {1..T} and eps standard normal, both drawn from a substream keyed by the
/// sample id. Parameter gradients are accumulated.
pub fn epsilon_loss(
    batch: &[NormalizedWindow],
    model: &mut DenoiserParams,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("epsilon_loss on an empty batch".into()));
    }
    let t_max = sched.steps();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for w in batch {
        let (t, eps, x_t) = draw_sample(w, sched, seed)?;
        let (eps_hat, cache) = model.predict_noise(&x_t, &w.condition, t, t_max)?;
        let mut grad = vec![0.0; eps.len()];
        let mut sample_loss = 0.0;
        for j in 0..eps.len() {
            let r = eps_hat[j] - eps[j];
            sample_loss += r * r;
            grad[j] = 2.0 * r * scale;
        }
        model.backward(&cache, &grad)?;
        total += sample_loss;
    }
    Ok(total * scale)
}

/// Loss value only; gradients are discarded.
pub fn epsilon_loss_value(
    batch: &[NormalizedWindow],
    model: &mut DenoiserParams,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    let loss = epsilon_loss(batch, model, sched, seed)?;
    model.zero_grads();
    Ok(loss)
}

/// Same objective evaluated with an arbitrary predictor; used to pin the
/// loss semantics against stubs independent of the trained network.
pub fn epsilon_loss_value_with<P>(
    batch: &[NormalizedWindow],
    mut predictor: P,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<f64>
where
    P: FnMut(&[f64], &ConditionSet, usize) -> Result<Vec<f64>>,
{
    if batch.is_empty() {
        return Err(Error::Domain("epsilon_loss on an empty batch".into()));
    }
    let mut total = 0.0;
    for w in batch {
        let (t, eps, x_t) = draw_sample(w, sched, seed)?;
        let eps_hat = predictor(&x_t, &w.condition, t)?;
        total += eps_hat
            .iter()
            .zip(&eps)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// 50%-quantile deviation: m0 and x0 are corrupted by the same noise at the
/// same step, and the loss is the squared distance between the two network
/// outputs. Gradients flow through the m-branch; the x-branch is a detached
/// target unless `detach_target` is false (the literal both-branches
/// reading).
#[allow(clippy::too_many_arguments)]
pub fn qdm_loss(
    x0: &[f64],
    m0: &[f64],
    cond: &ConditionSet,
    t: usize,
    eps: &[f64],
    model: &mut DenoiserParams,
    sched: &NoiseSchedule,
    detach_target: bool,
) -> Result<f64> {
    let x_t = forward_perturb(x0, t, eps, sched)?;
    let m_t = forward_perturb(m0, t, eps, sched)?;
    let t_max = sched.steps();
    let (out_x, cache_x) = model.predict_noise(&x_t, cond, t, t_max)?;
    let (out_m, cache_m) = model.predict_noise(&m_t, cond, t, t_max)?;
    let mut loss = 0.0;
    let mut grad_m = vec![0.0; out_m.len()];
    for j in 0..out_m.len() {
        let r = out_m[j] - out_x[j];
        loss += r * r;
        grad_m[j] = 2.0 * r;
    }
    model.backward(&cache_m, &grad_m)?;
    if !detach_target {
        let grad_x: Vec<f64> = grad_m.iter().map(|g| -g).collect();
        model.backward(&cache_x, &grad_x)?;
    }
    Ok(loss)
}

/// Per-batch refinement loss L_eps + lambda * L_QDM. Each sample draws one
/// (t, eps) pair from its substream, shared by both terms; the x-branch
/// forward serves the noise-prediction term and the detached QDM target.
/// When `observed_prefix` > 0 the first entries of m_t are replaced by the
/// corresponding entries of x_t before the m-branch forward.
#[allow(clippy::too_many_arguments)]
pub fn finetune_loss(
    batch: &[(NormalizedWindow, Vec<f64>)],
    model: &mut DenoiserParams,
    sched: &NoiseSchedule,
    lambda: f64,
    seed: u64,
    detach_target: bool,
    observed_prefix: usize,
) -> Result<FinetuneLoss> {
    if batch.is_empty() {
        return Err(Error::Domain("finetune_loss on an empty batch".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Config(format!("qdm weight must be non-negative, got {lambda}")));
    }
    let t_max = sched.steps();
    let scale = 1.0 / batch.len() as f64;
    let mut eps_total = 0.0;
    let mut qdm_total = 0.0;
    for (w, median) in batch {
        if median.len() != w.target.len() {
            return Err(Error::Data("median length does not match target".into()));
        }
        let mut rng = substream_rng(mix_seed(seed, w.id), 0xF1E);
        let t = rng.random_range(1..=t_max);
        let eps = draw_noise(&mut rng, w.target.len());
        let x_t = forward_perturb(&w.target, t, &eps, sched)?;
        let mut m_t = forward_perturb(median, t, &eps, sched)?;
        let pin = observed_prefix.min(m_t.len());
        m_t[..pin].copy_from_slice(&x_t[..pin]);

        let (out_x, cache_x) = model.predict_noise(&x_t, &w.condition, t, t_max)?;
        let (out_m, cache_m) = model.predict_noise(&m_t, &w.condition, t, t_max)?;

        let mut grad_x = vec![0.0; out_x.len()];
        let mut grad_m = vec![0.0; out_m.len()];
        for j in 0..out_x.len() {
            let r_eps = out_x[j] - eps[j];
            eps_total += r_eps * r_eps;
            grad_x[j] = 2.0 * r_eps * scale;
            let r_qdm = out_m[j] - out_x[j];
            qdm_total += r_qdm * r_qdm;
            grad_m[j] = 2.0 * r_qdm * scale * lambda;
            if !detach_target {
                grad_x[j] -= 2.0 * r_qdm * scale * lambda;
            }
        }
        model.backward(&cache_x, &grad_x)?;
        model.backward(&cache_m, &grad_m)?;
    }
    Ok(FinetuneLoss {
        epsilon: eps_total * scale,
        qdm: qdm_total * scale,
        total: (eps_total + lambda * qdm_total) * scale,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FinetuneLoss {
    pub epsilon: f64,
    pub qdm: f64,
    pub total: f64,
}
