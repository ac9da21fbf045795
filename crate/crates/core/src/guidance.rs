//! Patch-level diffusion posterior sampling.
//!
//! Every step splits `x_t` into overlapped windows, moves each window one
//! reverse step with a photometric correction evaluated at its clean estimate,
//! and averages the windows back into `x_{t-1}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{denoise_with_vjp, encode_grid, Condition, DenoiserModel};
use crate::diffusion::{ddim_step, predict_clean, reverse_step, NoisyState, Schedule};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Grid;
use crate::maps::{physical_per_diffusion, ReflectanceMap, UvCoordMap, REFL_CHANNELS};
use crate::render::{CompiledViews, Lighting, ViewObservation};
use crate::tiler::{blend, extract, split_overlapped, PatchWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ancestral,
    #[default]
    Ddim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VjpMode {
    /// Differentiate through the denoiser.
    #[default]
    Full,
    /// Keep only the direct `1 / sqrt(alpha_bar)` term of the clean estimate.
    IdentityApprox,
}

/// How a window's squared residuals are reduced before the step size
/// `zeta' / sqrt(loss)` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub zeta_prime: f64,
    pub sampler: SamplerKind,
    /// Keep every `stride`-th timestep of the model schedule.
    pub stride: usize,
    pub vjp_mode: VjpMode,
    pub reduction: LossReduction,
    pub p: usize,
    pub p_pad: usize,
    pub seed: u64,
    /// Views drawn per step; `None` uses all of them.
    pub views_per_step: Option<usize>,
    /// Clamp the clean estimate to `[-1, 1]` before the loss; clamped entries
    /// get no gradient.
    pub clip_estimate: bool,
    pub execution: Execution,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            zeta_prime: 1.0,
            sampler: SamplerKind::Ddim,
            stride: 1,
            vjp_mode: VjpMode::Full,
            reduction: LossReduction::Mean,
            p: 448,
            p_pad: 64,
            seed: 0,
            views_per_step: None,
            clip_estimate: true,
            execution: Execution::default(),
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        if !(self.zeta_prime >= 0.0 && self.zeta_prime.is_finite()) {
            return Err(Error::Config(format!(
                "zeta_prime must be a non-negative number, got {}",
                self.zeta_prime
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.views_per_step == Some(0) {
            return Err(Error::Config("views_per_step must be at least 1".into()));
        }
        if self.p == 0 || self.p > size.0.min(size.1) {
            return Err(Error::Dimension(format!(
                "tile size {} does not fit a {}x{} map",
                self.p, size.0, size.1
            )));
        }
        Ok(())
    }
}

/// `zeta' / sqrt(loss)`, zero when guidance is off or the loss vanishes.
pub fn step_size(zeta_prime: f64, loss: f64) -> Result<f64> {
    if loss < 0.0 || loss.is_nan() {
        return Err(Error::Domain(format!("loss must be non-negative, got {loss}")));
    }
    if zeta_prime == 0.0 || loss == 0.0 {
        return Ok(0.0);
    }
    Ok(zeta_prime / loss.sqrt())
}

/// Squared-residual objective on a clean patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    /// Sum of squared residuals.
    pub sum: f64,
    /// Number of residual terms entering `sum` (pixels for photometric losses).
    pub count: usize,
    /// Gradient of `sum` with respect to the clean patch in diffusion space.
    pub grad: Grid,
}

impl Observed {
    fn reduced(&self, r: LossReduction) -> (f64, f64) {
        match r {
            LossReduction::Sum => (self.sum, 1.0),
            LossReduction::Mean => {
                let n = self.count.max(1) as f64;
                (self.sum / n, 1.0 / n)
            }
        }
    }
}

/// Measurement model seen by the sampler, one instance per window.
pub trait PatchObjective: Sync {
    /// Loss at the clean estimate `x0` (diffusion space) for step `t`, or
    /// `None` when nothing in the window is observed.
    fn evaluate(&self, x0: &Grid, t: usize) -> Result<Option<Observed>>;
}

/// Photometric loss of one window against precompiled views.
#[derive(Debug, Clone)]
pub struct PhotometricObjective {
    compiled: CompiledViews,
    view_count: usize,
    subset: Option<(usize, u64)>,
}

impl PhotometricObjective {
    /// Compiles `views` (global correspondence) for `window`.
    pub fn new(views: &[ViewObservation], window: &PatchWindow, lighting: &Lighting) -> Result<Self> {
        Ok(Self {
            compiled: CompiledViews::for_window(views, window, lighting)?,
            view_count: views.len(),
            subset: None,
        })
    }

    /// Uses views already remapped to `window`.
    pub fn from_local(views: &[ViewObservation], window: &PatchWindow, lighting: &Lighting) -> Result<Self> {
        Ok(Self {
            compiled: CompiledViews::from_local(views, window, lighting)?,
            view_count: views.len(),
            subset: None,
        })
    }

    /// Draw `k` views per step from a stream keyed by `seed` and the step.
    pub fn with_view_subset(mut self, k: usize, seed: u64) -> Self {
        if k < self.view_count {
            self.subset = Some((k, seed));
        }
        self
    }

    pub fn compiled(&self) -> &CompiledViews {
        &self.compiled
    }
}

/// Views used at step `t`: a seeded partial shuffle, identical for all windows.
pub fn views_for_step(view_count: usize, k: usize, seed: u64, t: usize) -> Vec<bool> {
    use rand::seq::index::sample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5649_4557_0000_0000 | t as u64);
    let mut keep = vec![false; view_count];
    for i in sample(&mut rng, view_count, k.min(view_count)) {
        keep[i] = true;
    }
    keep
}

fn to_physical(x: &Grid) -> Grid {
    let mut out = x.clone();
    for ch in 0..REFL_CHANNELS.min(x.channels()) {
        let k = physical_per_diffusion(ch);
        for v in out.plane_mut(ch) {
            *v = k * *v + (1.0 - k);
        }
    }
    out
}

fn chain_to_diffusion(grad: &mut Grid) {
    for ch in 0..REFL_CHANNELS.min(grad.channels()) {
        let k = physical_per_diffusion(ch);
        for v in grad.plane_mut(ch) {
            *v *= k;
        }
    }
}

impl PatchObjective for PhotometricObjective {
    fn evaluate(&self, x0: &Grid, t: usize) -> Result<Option<Observed>> {
        if self.compiled.is_empty() {
            return Ok(None);
        }
        let keep = self.subset.map(|(k, seed)| views_for_step(self.view_count, k, seed, t));
        let phys = to_physical(x0);
        let (sum, count, mut grad) = self.compiled.loss_sum_grad_subset(&phys, keep.as_deref())?;
        if count == 0 {
            return Ok(None);
        }
        chain_to_diffusion(&mut grad);
        Ok(Some(Observed { sum, count, grad }))
    }
}

/// Result of one guided step on a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStep {
    pub x: NoisyState,
    /// Reduced loss at the clean estimate, when the window is observed and
    /// guidance is on.
    pub loss: Option<f64>,
    /// Number of residual terms behind `loss`.
    pub count: usize,
    /// Unreduced squared-residual sum behind `loss`.
    pub sum: f64,
}

/// One DPS step: unguided reverse step from `xt`, minus `zeta_t` times the
/// gradient of the loss at the clean estimate with respect to `xt`.
///
/// `z` is the ancestral noise; it is unused by the deterministic sampler.
pub fn dps_step(
    model: &DenoiserModel,
    xt: &NoisyState,
    cond: Option<&Condition>,
    objective: &dyn PatchObjective,
    sched: &Schedule,
    cfg: &GuidanceConfig,
    z: Option<&Grid>,
) -> Result<PatchStep> {
    let t = xt.t;
    let ab = sched.alpha_bar(t);
    let mut observed = None;
    let guided = cfg.zeta_prime > 0.0;
    let (eps, vjp) = denoise_with_vjp(model, xt, cond, sched, |eps| {
        if !guided {
            return Ok(None);
        }
        let mut x0 = predict_clean(xt, eps, sched)?;
        let clipped: Vec<bool> = if cfg.clip_estimate {
            x0.data_mut()
                .iter_mut()
                .map(|v| {
                    let c = v.clamp(-1.0, 1.0);
                    let hit = c != *v;
                    *v = c;
                    hit
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut obs = objective.evaluate(&x0, t)?;
        if let Some(o) = obs.as_mut() {
            for (g, &hit) in o.grad.data_mut().iter_mut().zip(&clipped) {
                if hit {
                    *g = 0.0;
                }
            }
        }
        let up = match (&obs, cfg.vjp_mode) {
            (Some(o), VjpMode::Full) => Some(o.grad.clone()),
            _ => None,
        };
        observed = obs;
        Ok(up)
    })?;
    let mut next = match cfg.sampler {
        SamplerKind::Ddim => ddim_step(xt, &eps, t - 1, sched)?,
        SamplerKind::Ancestral => {
            let zero;
            let z = match z {
                Some(z) => z,
                None => {
                    zero = Grid::zeros(xt.x.channels(), xt.x.height(), xt.x.width());
                    &zero
                }
            };
            reverse_step(xt, &eps, z, sched)?
        }
    };
    let Some(obs) = observed else {
        return Ok(PatchStep {
            x: next,
            loss: None,
            count: 0,
            sum: 0.0,
        });
    };
    let (loss, scale) = obs.reduced(cfg.reduction);
    let zeta = step_size(cfg.zeta_prime, loss)?;
    // d x0 / d xt = (I - sqrt(1 - ab) d eps / d xt) / sqrt(ab)
    let grad = match vjp {
        Some(v) => obs.grad.lin_comb(1.0, &v, -(1.0 - ab).sqrt())?,
        None => obs.grad.clone(),
    };
    let k = zeta * scale / ab.sqrt();
    if zeta > 0.0 {
        if !grad.all_finite() {
            let i = grad.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::Numerical {
                pixel: i % grad.plane_len(),
                msg: format!("non-finite guidance gradient at t={t}"),
            });
        }
        for (o, g) in next.x.data_mut().iter_mut().zip(grad.data()) {
            *o -= k * g;
        }
    }
    Ok(PatchStep {
        x: next,
        loss: Some(loss),
        count: obs.count,
        sum: obs.sum,
    })
}

/// One DPS step of a window whose views are already remapped to it.
#[allow(clippy::too_many_arguments)]
pub fn dps_patch_step(
    model: &DenoiserModel,
    xt_patch: &NoisyState,
    cond_patch: Option<&Condition>,
    window: &PatchWindow,
    views: &[ViewObservation],
    lighting: &Lighting,
    sched: &Schedule,
    cfg: &GuidanceConfig,
    z: Option<&Grid>,
) -> Result<PatchStep> {
    let obj = PhotometricObjective::from_local(views, window, lighting)?;
    dps_step(model, xt_patch, cond_patch, &obj, sched, cfg, z)
}

/// Diagnostics for one sampling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Timestep of the (respaced) schedule being left.
    pub t: usize,
    /// Timestep of the model's original schedule.
    pub model_t: usize,
    /// Squared residual per observed pixel at the clean estimates, pooled
    /// over guided windows; `None` when nothing was guided.
    pub mean_loss: Option<f64>,
    pub guided_windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    /// Final state in diffusion space.
    pub x0: Grid,
    pub trace: Vec<StepRecord>,
}

fn window_rng(seed: u64, t: usize, index: (usize, usize)) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((t as u64) << 40) | ((index.0 as u64) << 20) | index.1 as u64);
    rng
}

fn initial_state(seed: u64, shape: (usize, usize, usize)) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    Grid::standard_normal(shape.0, shape.1, shape.2, &mut rng)
}

/// Tiled DPS for any per-window objective. `objectives[k]` belongs to
/// `windows[k]`; `cond` is the full-map condition, if the model takes one.
#[allow(clippy::too_many_arguments)]
pub fn sample_tiled(
    model: &DenoiserModel,
    channels: usize,
    windows: &[PatchWindow],
    objectives: &[&dyn PatchObjective],
    cond: Option<&Condition>,
    sched: &Schedule,
    cfg: &GuidanceConfig,
    mut progress: impl FnMut(&StepRecord),
) -> Result<SampleOutput> {
    if windows.is_empty() || windows.len() != objectives.len() {
        return Err(Error::Config("one objective per window is required".into()));
    }
    let size = windows[0].full;
    let steps = sched.respaced(cfg.stride)?;
    let conds: Vec<Option<Condition>> = windows
        .iter()
        .map(|w| {
            cond.map(|c| c.crop(w.padded.row, w.padded.col, w.padded.height, w.padded.width))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let mut x = initial_state(cfg.seed, (channels, size.0, size.1));
    let mut trace = Vec::with_capacity(steps.len());
    for t in (1..=steps.len()).rev() {
        let results = exec::try_map_range(cfg.execution, windows.len(), |k| {
            let w = &windows[k];
            let patch = NoisyState::new(extract(&x, w)?, t);
            let z = match cfg.sampler {
                SamplerKind::Ancestral => {
                    let mut rng = window_rng(cfg.seed, t, w.index);
                    Some(Grid::standard_normal(
                        channels,
                        w.padded.height,
                        w.padded.width,
                        &mut rng,
                    ))
                }
                SamplerKind::Ddim => None,
            };
            dps_step(model, &patch, conds[k].as_ref(), objectives[k], &steps, cfg, z.as_ref())
        })?;
        let (mut sum, mut count, mut guided) = (0.0, 0usize, 0);
        for r in &results {
            if r.loss.is_some() {
                sum += r.sum;
                count += r.count;
                guided += 1;
            }
        }
        let patches: Vec<Grid> = results.into_iter().map(|r| r.x.x).collect();
        x = blend(&patches, windows, size)?;
        let rec = StepRecord {
            t,
            model_t: steps.model_timestep(t),
            mean_loss: (count > 0).then(|| sum / count as f64),
            guided_windows: guided,
        };
        log::debug!("step t={} loss={:?}", rec.t, rec.mean_loss);
        progress(&rec);
        trace.push(rec);
    }
    Ok(SampleOutput { x0: x, trace })
}

/// Checks that a model can be run on `size` with tile geometry `cfg`.
pub fn check_compatibility(model: &DenoiserModel, cfg: &GuidanceConfig, size: (usize, usize)) -> Result<()> {
    cfg.validate(size)?;
    if model.data_channels() != REFL_CHANNELS {
        return Err(Error::Compatibility(format!(
            "model predicts {} channels, reflectance maps have {REFL_CHANNELS}",
            model.data_channels()
        )));
    }
    Ok(())
}

/// A model trained on `p_train` crops must not see windows smaller than its
/// training patches, so `p_train <= p + 2 p_pad` is required.
pub fn check_patch_compatibility(p_train: usize, cfg: &GuidanceConfig) -> Result<()> {
    let p_plus = cfg.p + 2 * cfg.p_pad;
    if p_train > p_plus {
        return Err(Error::Compatibility(format!(
            "checkpoint patch size {p_train} exceeds the padded tile size {p_plus} (p={}, p_pad={})",
            cfg.p, cfg.p_pad
        )));
    }
    Ok(())
}

/// Full-resolution guided reconstruction from views with global correspondence.
pub fn sample_full_map(
    model: &DenoiserModel,
    views: &[ViewObservation],
    lighting: &Lighting,
    uv_map: &UvCoordMap,
    sched: &Schedule,
    cfg: &GuidanceConfig,
) -> Result<(ReflectanceMap, SampleOutput)> {
    sample_full_map_with(model, views, lighting, uv_map, sched, cfg, |_| {})
}

/// As [`sample_full_map`], reporting every step to `progress`.
pub fn sample_full_map_with(
    model: &DenoiserModel,
    views: &[ViewObservation],
    lighting: &Lighting,
    uv_map: &UvCoordMap,
    sched: &Schedule,
    cfg: &GuidanceConfig,
    progress: impl FnMut(&StepRecord),
) -> Result<(ReflectanceMap, SampleOutput)> {
    let size = (uv_map.height(), uv_map.width());
    check_compatibility(model, cfg, size)?;
    if views.is_empty() {
        return Err(Error::Config("at least one view is required".into()));
    }
    let windows = split_overlapped(size, cfg.p, cfg.p_pad)?;
    let objectives = exec::try_map_range(cfg.execution, windows.len(), |k| {
        let o = PhotometricObjective::new(views, &windows[k], lighting)?;
        Ok::<_, Error>(match cfg.views_per_step {
            Some(n) => o.with_view_subset(n, cfg.seed),
            None => o,
        })
    })?;
    let objs: Vec<&dyn PatchObjective> = objectives.iter().map(|o| o as &dyn PatchObjective).collect();
    let cond = match model.pe_bands() {
        Some(f) => Some(encode_grid(uv_map.grid(), f)?),
        None => None,
    };
    let out = sample_tiled(
        model,
        REFL_CHANNELS,
        &windows,
        &objs,
        cond.as_ref(),
        sched,
        cfg,
        progress,
    )?;
    Ok((ReflectanceMap::from_diffusion(&out.x0)?, out))
}

/// Unguided sample of one patch whose texels carry the coordinates `uv`.
pub fn sample_patch(
    model: &DenoiserModel,
    uv: &UvCoordMap,
    sched: &Schedule,
    cfg: &GuidanceConfig,
) -> Result<ReflectanceMap> {
    if model.data_channels() != REFL_CHANNELS {
        return Err(Error::Compatibility(format!(
            "model predicts {} channels, reflectance maps have {REFL_CHANNELS}",
            model.data_channels()
        )));
    }
    let window = PatchWindow::whole(uv.height(), uv.width());
    let cond = match model.pe_bands() {
        Some(f) => Some(encode_grid(uv.grid(), f)?),
        None => None,
    };
    let cfg = GuidanceConfig {
        zeta_prime: 0.0,
        ..cfg.clone()
    };
    let out = sample_tiled(
        model,
        REFL_CHANNELS,
        &[window],
        &[&Unobserved],
        cond.as_ref(),
        sched,
        &cfg,
        |_| {},
    )?;
    ReflectanceMap::from_diffusion(&out.x0)
}

/// Squared-error objective `|a x - y|^2` on every entry; a test double for
/// the renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObjective {
    pub gain: f64,
    pub target: Grid,
}

impl PatchObjective for LinearObjective {
    fn evaluate(&self, x0: &Grid, _t: usize) -> Result<Option<Observed>> {
        x0.check_same_shape(&self.target, "linear measurement")?;
        let r = x0.lin_comb(self.gain, &self.target, -1.0)?;
        Ok(Some(Observed {
            sum: r.dot(&r),
            count: r.data().len(),
            grad: r.scale(2.0 * self.gain),
        }))
    }
}

/// An objective for windows that see nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unobserved;

impl PatchObjective for Unobserved {
    fn evaluate(&self, _x0: &Grid, _t: usize) -> Result<Option<Observed>> {
        Ok(None)
    }
}
