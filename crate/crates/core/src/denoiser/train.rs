//! Noise-prediction training: minimize `E |eps - eps_theta(x_t, t | PE(uv))|^2`
//! with uniform timesteps and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::PatchDataset;
use super::encoding::encode_grid;
use super::net::{ArchDescriptor, NoiseNet};
use crate::diffusion::Schedule;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Grid;
use crate::maps::REFL_CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub execution: Execution,
}

fn default_clip() -> Option<f64> {
    Some(1.0)
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 2e-3,
            seed: 0,
            grad_clip: default_clip(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch loss of every step, in order, starting at `first_step`.
    pub losses: Vec<f64>,
    pub first_step: usize,
    pub final_loss: f64,
}

/// Mean of the trailing tenth of a loss curve (at least one, at most 100).
fn tail_mean(losses: &[f64]) -> f64 {
    let k = (losses.len() / 10).clamp(1, 100).min(losses.len());
    if k == 0 {
        return f64::NAN;
    }
    losses[losses.len() - k..].iter().sum::<f64>() / k as f64
}

/// Stateful trainer; owns the parameters and Adam moments.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: NoiseNet,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    opts: TrainOptions,
}

impl Trainer {
    pub fn new(net: NoiseNet, opts: TrainOptions) -> Self {
        let n = net.param_count();
        Self {
            net,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            opts,
        }
    }

    /// Continues from saved parameters and optimizer moments.
    pub fn resume(net: NoiseNet, m: Vec<f64>, v: Vec<f64>, step: usize, opts: TrainOptions) -> Result<Self> {
        if m.len() != net.param_count() || v.len() != net.param_count() {
            return Err(Error::Format("optimizer state does not match parameter count".into()));
        }
        Ok(Self { net, m, v, step, opts })
    }

    pub fn net(&self) -> &NoiseNet {
        &self.net
    }

    pub fn into_net(self) -> NoiseNet {
        self.net
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One optimizer step; returns the batch loss.
    pub fn step(&mut self, data: &PatchDataset, sched: &Schedule) -> Result<f64> {
        let arch = self.net.arch().clone();
        let batch = self.opts.batch_size.max(1);
        // Each step draws from its own stream so a resumed run sees the same
        // samples as an uninterrupted one.
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(self.step as u64 + 1);
        let horizon = sched.len();
        let samples: Vec<(usize, usize, Grid)> = (0..batch)
            .map(|_| {
                let idx = rng.random_range(0..data.len());
                let t = rng.random_range(1..=horizon);
                let p = data.patch_size;
                let noise = Grid::standard_normal(REFL_CHANNELS, p, p, &mut rng);
                (idx, t, noise)
            })
            .collect();

        let net = &self.net;
        let per_sample = exec::try_map_range(self.opts.execution, batch, |b| {
            let (idx, t, noise) = &samples[b];
            sample_grad(net, &arch, data, *idx, *t, noise, sched, batch)
        })?;
        let mut grad = vec![0.0; net.param_count()];
        let mut loss = 0.0;
        for (l, g) in per_sample {
            loss += l / batch as f64;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Training { step: self.step, loss });
        }
        if let Some(clip) = self.opts.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let k = clip / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
        }
        self.adam(&grad);
        self.step += 1;
        if self.net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Training {
                step: self.step - 1,
                loss: f64::NAN,
            });
        }
        Ok(loss)
    }

    fn adam(&mut self, grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let t = (self.step + 1) as i32;
        let c1 = 1.0 - B1.powi(t);
        let c2 = 1.0 - B2.powi(t);
        let lr = self.opts.learning_rate;
        for (((p, m), v), g) in self
            .net
            .params_mut()
            .iter_mut()
            .zip(&mut self.m)
            .zip(&mut self.v)
            .zip(grad)
        {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }

    /// Trains until `opts.steps` total steps have been taken.
    pub fn run(&mut self, data: &PatchDataset, sched: &Schedule) -> Result<TrainReport> {
        self.run_with(data, sched, |_, _| {})
    }

    /// As [`Trainer::run`], calling `progress(step, loss)` after every step.
    pub fn run_with(
        &mut self,
        data: &PatchDataset,
        sched: &Schedule,
        mut progress: impl FnMut(usize, f64),
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Config("training dataset is empty".into()));
        }
        let first_step = self.step;
        let mut losses = Vec::with_capacity(self.opts.steps.saturating_sub(self.step));
        while self.step < self.opts.steps {
            let l = self.step(data, sched)?;
            progress(self.step - 1, l);
            losses.push(l);
        }
        Ok(TrainReport {
            final_loss: tail_mean(&losses),
            losses,
            first_step,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn sample_grad(
    net: &NoiseNet,
    arch: &ArchDescriptor,
    data: &PatchDataset,
    idx: usize,
    t: usize,
    noise: &Grid,
    sched: &Schedule,
    batch: usize,
) -> Result<(f64, Vec<f64>)> {
    let rec = &data.records[idx];
    let x0 = rec.reflectance().to_diffusion();
    let ab = sched.alpha_bar(t);
    let xt = x0.lin_comb(ab.sqrt(), noise, (1.0 - ab).sqrt())?;
    let cond = match arch.pe_bands {
        Some(f) => Some(encode_grid(&rec.uv(), f)?.encoded),
        None => None,
    };
    let (eps, tape) = net.forward_tape(&xt, cond.as_ref(), sched.model_timestep(t))?;
    let n = eps.data().len() as f64;
    let diff = eps.lin_comb(1.0, noise, -1.0)?;
    let loss = diff.dot(&diff) / n;
    let dy = diff.scale(2.0 / (n * batch as f64));
    let mut grad = vec![0.0; net.param_count()];
    net.backward(&tape, &dy, Some(&mut grad));
    Ok((loss, grad))
}

/// Trains a freshly initialized network on `dataset`.
pub fn train_denoiser(
    dataset: &PatchDataset,
    arch: &ArchDescriptor,
    sched: &Schedule,
    opts: &TrainOptions,
) -> Result<(NoiseNet, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    if arch.data_channels != REFL_CHANNELS {
        return Err(Error::Config(format!(
            "training data has {REFL_CHANNELS} channels, architecture expects {}",
            arch.data_channels
        )));
    }
    let net = NoiseNet::new(arch.clone(), opts.seed)?;
    let mut trainer = Trainer::new(net, opts.clone());
    let report = trainer.run(dataset, sched)?;
    Ok((trainer.into_net(), report))
}
