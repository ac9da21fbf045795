//! Noise predictors `eps(x_t, t | y)`.

mod dataset;
mod encoding;
mod gmm;
mod net;
mod train;

pub use dataset::{crop_patch_dataset, PatchDataset, PatchRecord, DATASET_CHANNELS};
pub use encoding::{encoded_channels, positional_encode, Condition};
pub use gmm::{GmmComponent, GmmPrior};
pub use net::{timestep_features, ArchDescriptor, NoiseNet, Tape};
pub use train::{train_denoiser, TrainOptions, TrainReport, Trainer};

pub(crate) use encoding::encode_grid;

use crate::diffusion::{NoisyState, Schedule};
use crate::error::Result;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserModel {
    /// Exact noise prediction for a known mixture prior. Ignores conditions.
    AnalyticGmm(GmmPrior),
    Trained(NoiseNet),
}

impl DenoiserModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DenoiserModel::AnalyticGmm(_) => "analytic_gmm",
            DenoiserModel::Trained(_) => "trained",
        }
    }

    /// Positional-encoding bands expected in the condition, if any.
    pub fn pe_bands(&self) -> Option<usize> {
        match self {
            DenoiserModel::AnalyticGmm(_) => None,
            DenoiserModel::Trained(n) => n.arch().pe_bands,
        }
    }

    pub fn data_channels(&self) -> usize {
        match self {
            DenoiserModel::AnalyticGmm(g) => g.shape().0,
            DenoiserModel::Trained(n) => n.arch().data_channels,
        }
    }
}

fn cond_grid(cond: Option<&Condition>) -> Option<&Grid> {
    cond.map(|c| &c.encoded)
}

/// `eps_hat` for `xt`. Pure in all inputs.
pub fn denoise(model: &DenoiserModel, xt: &NoisyState, cond: Option<&Condition>, sched: &Schedule) -> Result<Grid> {
    sched.check_t(xt.t)?;
    match model {
        DenoiserModel::AnalyticGmm(g) => g.eps(&xt.x, sched.alpha_bar(xt.t)),
        DenoiserModel::Trained(net) => net.forward(&xt.x, cond_grid(cond), sched.model_timestep(xt.t)),
    }
}

/// `upstream^T (d eps_hat / d x_t)`.
pub fn denoise_vjp(
    model: &DenoiserModel,
    xt: &NoisyState,
    cond: Option<&Condition>,
    upstream: &Grid,
    sched: &Schedule,
) -> Result<Grid> {
    sched.check_t(xt.t)?;
    match model {
        DenoiserModel::AnalyticGmm(g) => g.eps_vjp(&xt.x, sched.alpha_bar(xt.t), upstream),
        DenoiserModel::Trained(net) => net.input_vjp(&xt.x, cond_grid(cond), sched.model_timestep(xt.t), upstream),
    }
}

/// Runs `denoise` and `denoise_vjp` sharing one forward pass when possible.
pub(crate) fn denoise_with_vjp(
    model: &DenoiserModel,
    xt: &NoisyState,
    cond: Option<&Condition>,
    sched: &Schedule,
    upstream: impl FnOnce(&Grid) -> Result<Option<Grid>>,
) -> Result<(Grid, Option<Grid>)> {
    sched.check_t(xt.t)?;
    match model {
        DenoiserModel::AnalyticGmm(g) => {
            let eps = g.eps(&xt.x, sched.alpha_bar(xt.t))?;
            let vjp = match upstream(&eps)? {
                Some(u) => Some(g.eps_vjp(&xt.x, sched.alpha_bar(xt.t), &u)?),
                None => None,
            };
            Ok((eps, vjp))
        }
        DenoiserModel::Trained(net) => {
            let (eps, tape) = net.forward_tape(&xt.x, cond_grid(cond), sched.model_timestep(xt.t))?;
            let vjp = match upstream(&eps)? {
                Some(u) => {
                    eps.check_same_shape(&u, "vjp upstream")?;
                    Some(net.backward(&tape, &u, None))
                }
                None => None,
            };
            Ok((eps, vjp))
        }
    }
}

impl From<GmmPrior> for DenoiserModel {
    fn from(g: GmmPrior) -> Self {
        DenoiserModel::AnalyticGmm(g)
    }
}

impl From<NoiseNet> for DenoiserModel {
    fn from(n: NoiseNet) -> Self {
        DenoiserModel::Trained(n)
    }
}
