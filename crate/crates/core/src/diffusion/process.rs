//! Forward perturbation and the step-wise reverse denoising operation.

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
pub fn forward_perturb(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if x0.len() != eps.len() {
        return Err(Error::Domain(format!(
            "profile and noise lengths differ: {} vs {}",
            x0.len(),
            eps.len()
        )));
    }
    let alpha_bar = sched.alpha_bar(t)?;
    let signal = alpha_bar.sqrt();
    let noise = (1.0 - alpha_bar).sqrt();
    Ok(x0.iter().zip(eps).map(|(x, e)| signal * x + noise * e).collect())
}

/// Exact inversion of `forward_perturb` given the same noise.
pub fn remove_noise(x_t: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    let alpha_bar = sched.alpha_bar(t)?;
    let signal = alpha_bar.sqrt();
    let noise = (1.0 - alpha_bar).sqrt();
    Ok(x_t.iter().zip(eps).map(|(x, e)| (x - noise * e) / signal).collect())
}

/// Recovers the injected noise from a perturbed profile and its clean source:
/// eps = (x_t - sqrt(alpha_bar) x0) / sqrt(1 - alpha_bar).
pub fn remove_noise_to_eps(
    x_t: &[f64],
    t: usize,
    x0: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    let alpha_bar = sched.alpha_bar(t)?;
    let signal = alpha_bar.sqrt();
    let noise = (1.0 - alpha_bar).sqrt();
    Ok(x_t.iter().zip(x0).map(|(x, c)| (x - signal * c) / noise).collect())
}

/// One reverse transition:
/// x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(1 - beta_t)
///           + sqrt(beta_tilde_t) z.
/// The caller passes z = 0 at t = 1 (beta_tilde_1 = 0 makes the stochastic
/// term vanish there anyway).
pub fn reverse_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    z: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if x_t.len() != eps_hat.len() || x_t.len() != z.len() {
        return Err(Error::Domain("reverse_step input lengths differ".into()));
    }
    let beta = sched.beta(t)?;
    let alpha_bar = sched.alpha_bar(t)?;
    let mean_scale = 1.0 / (1.0 - beta).sqrt();
    let eps_scale = beta / (1.0 - alpha_bar).sqrt();
    let noise_scale = sched.posterior_variance(t)?.sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((x, e), zz)| mean_scale * (x - eps_scale * e) + noise_scale * zz)
        .collect())
}
