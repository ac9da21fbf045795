//! Noise schedules and the forward/reverse diffusion arithmetic.
//!
//! Timesteps are 1-based: index `t` in `1..=T` refers to `beta[t - 1]`.
//! `alpha_bar(0)` is defined as 1 so the deterministic update can land on the
//! clean sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `sigma_t^2 = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)`
    #[default]
    Ancestral,
    /// Deterministic chain, `sigma_t = 0`.
    Zero,
}

/// Parameters that fully determine a [`Schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            sigma_mode: SigmaMode::Ancestral,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<Schedule> {
        make_schedule(self.steps, self.beta_start, self.beta_end, self.sigma_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    /// Training timestep each index corresponds to. Identity unless respaced.
    model_timesteps: Vec<usize>,
    sigma_mode: SigmaMode,
}

/// Linear beta schedule over `steps` timesteps.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64, sigma_mode: SigmaMode) -> Result<Schedule> {
    if steps < 1 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "beta bounds must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let beta: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    Ok(Schedule::from_betas(beta, (1..=steps).collect(), sigma_mode))
}

impl Schedule {
    fn from_betas(beta: Vec<f64>, model_timesteps: Vec<usize>, sigma_mode: SigmaMode) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let sigma = match sigma_mode {
            SigmaMode::Zero => vec![0.0; beta.len()],
            SigmaMode::Ancestral => (0..beta.len())
                .map(|i| {
                    let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                    (beta[i] * (1.0 - prev) / (1.0 - alpha_bar[i])).max(0.0).sqrt()
                })
                .collect(),
        };
        Self {
            beta,
            alpha,
            alpha_bar,
            sigma,
            model_timesteps,
            sigma_mode,
        }
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::Timestep {
                t,
                lo: 1,
                hi: self.len(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// The training timestep a network should be told for index `t`.
    pub fn model_timestep(&self, t: usize) -> usize {
        self.model_timesteps[t - 1]
    }

    /// Largest training timestep represented (the original `T`).
    pub fn model_horizon(&self) -> usize {
        *self.model_timesteps.last().unwrap_or(&0)
    }

    /// Keeps every `stride`-th timestep, always including the last one.
    ///
    /// The result is a valid schedule in its own right: its betas are chosen
    /// so that its `alpha_bar` equals the original `alpha_bar` at the kept
    /// timesteps.
    pub fn respaced(&self, stride: usize) -> Result<Schedule> {
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if stride == 1 {
            return Ok(self.clone());
        }
        let t_max = self.len();
        let kept = t_max.div_ceil(stride);
        let first = t_max - (kept - 1) * stride;
        let idx: Vec<usize> = (0..kept).map(|k| first + k * stride).collect();
        let mut prev = 1.0;
        let mut beta = Vec::with_capacity(kept);
        for &t in &idx {
            let ab = self.alpha_bar(t);
            beta.push(1.0 - ab / prev);
            prev = ab;
        }
        let model_timesteps = idx.iter().map(|&t| self.model_timestep(t)).collect();
        Ok(Schedule::from_betas(beta, model_timesteps, self.sigma_mode))
    }
}

/// A diffusion state `x_t` tagged with its timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyState {
    pub x: Grid,
    pub t: usize,
}

impl NoisyState {
    pub fn new(x: Grid, t: usize) -> Self {
        Self { x, t }
    }
}

/// `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise`.
pub fn forward_sample(x0: &Grid, t: usize, noise: &Grid, sched: &Schedule) -> Result<NoisyState> {
    sched.check_t(t)?;
    x0.check_same_shape(noise, "forward noise")?;
    let ab = sched.alpha_bar(t);
    Ok(NoisyState::new(x0.lin_comb(ab.sqrt(), noise, (1.0 - ab).sqrt())?, t))
}

/// Clean-sample estimate `(x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)`.
pub fn predict_clean(xt: &NoisyState, eps_hat: &Grid, sched: &Schedule) -> Result<Grid> {
    sched.check_t(xt.t)?;
    xt.x.check_same_shape(eps_hat, "noise estimate")?;
    let ab = sched.alpha_bar(xt.t);
    let inv = 1.0 / ab.sqrt();
    xt.x.lin_comb(inv, eps_hat, -(1.0 - ab).sqrt() * inv)
}

/// One ancestral step `t -> t - 1`. `z` is ignored when `sigma_t == 0`.
pub fn reverse_step(xt: &NoisyState, eps_hat: &Grid, z: &Grid, sched: &Schedule) -> Result<NoisyState> {
    sched.check_t(xt.t)?;
    xt.x.check_same_shape(eps_hat, "noise estimate")?;
    let t = xt.t;
    let a = sched.alpha(t);
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / a.sqrt();
    let mut out = xt.x.lin_comb(inv, eps_hat, -inv * (1.0 - a) / (1.0 - ab).sqrt())?;
    let sigma = sched.sigma(t);
    if sigma > 0.0 {
        xt.x.check_same_shape(z, "reverse noise")?;
        for (o, zv) in out.data_mut().iter_mut().zip(z.data()) {
            *o += sigma * zv;
        }
    }
    Ok(NoisyState::new(out, t - 1))
}

/// Deterministic (eta = 0) jump from `t` to `t_next < t`.
pub fn ddim_step(xt: &NoisyState, eps_hat: &Grid, t_next: usize, sched: &Schedule) -> Result<NoisyState> {
    if t_next >= xt.t {
        return Err(Error::Ordering { t: xt.t, next: t_next });
    }
    let x0 = predict_clean(xt, eps_hat, sched)?;
    let ab = sched.alpha_bar(t_next);
    Ok(NoisyState::new(
        x0.lin_comb(ab.sqrt(), eps_hat, (1.0 - ab).sqrt())?,
        t_next,
    ))
}
