//! Per-window pixel lists, built once per geometry and reused at every step.

use super::correspondence::window_taps;
use super::sampling::{bilinear_taps, Taps};
use super::sh::SH_COUNT;
use super::shading::{shade_texel, shade_texel_vjp, Lighting, PixelGeom};
use super::view::{checked_uv, ViewObservation};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::REFL_CHANNELS;
use crate::tiler::PatchWindow;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PixelSample {
    pub view: u32,
    pub pixel: u32,
    pub taps: Taps,
    pub geom: PixelGeom,
    pub target: [f64; 3],
}

/// The covered pixels of a set of views, resolved against one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledViews {
    height: usize,
    width: usize,
    sh: [[f64; 3]; SH_COUNT],
    samples: Vec<PixelSample>,
}

impl CompiledViews {
    /// Pixels of `views` (global correspondence) inside `window`'s support.
    pub fn for_window(views: &[ViewObservation], window: &PatchWindow, lighting: &Lighting) -> Result<Self> {
        lighting.validate()?;
        let mut samples = Vec::new();
        for (vi, view) in views.iter().enumerate() {
            for i in 0..view.pixel_count() {
                if !view.mask[i] {
                    continue;
                }
                let (u, v) = checked_uv(view, i)?;
                if let Some(taps) = window_taps(u, v, window) {
                    samples.push(sample(vi, i, view, taps, lighting, u, v)?);
                }
            }
        }
        Ok(Self {
            height: window.padded.height,
            width: window.padded.width,
            sh: lighting.sh,
            samples,
        })
    }

    /// Pixels of views already remapped to `window`'s patch.
    pub fn from_local(views: &[ViewObservation], window: &PatchWindow, lighting: &Lighting) -> Result<Self> {
        lighting.validate()?;
        let p = window.padded;
        let (h, w) = window.full;
        let mut samples = Vec::new();
        for (vi, view) in views.iter().enumerate() {
            for i in 0..view.pixel_count() {
                if !view.mask[i] {
                    continue;
                }
                let (ul, vl) = checked_uv(view, i)?;
                let taps = bilinear_taps(ul, vl, p.height, p.width);
                let u = (ul * p.width as f64 + p.col as f64) / w as f64;
                let v = (vl * p.height as f64 + p.row as f64) / h as f64;
                samples.push(sample(vi, i, view, taps, lighting, u, v)?);
            }
        }
        Ok(Self {
            height: p.height,
            width: p.width,
            sh: lighting.sh,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(view, pixel)` of every sample, in evaluation order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.samples.iter().map(|s| (s.view as usize, s.pixel as usize))
    }

    fn check_patch(&self, patch: &Grid) -> Result<()> {
        if patch.shape() != (REFL_CHANNELS, self.height, self.width) {
            return Err(Error::Dimension(format!(
                "patch {:?} does not match compiled window {}x{}",
                patch.shape(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    fn gather(&self, patch: &Grid, taps: &Taps) -> [f64; 7] {
        let mut t = [0.0; 7];
        let plane = self.height * self.width;
        let d = patch.data();
        for (r, c, w) in taps.iter() {
            let k = r * self.width + c;
            for (ch, v) in t.iter_mut().enumerate() {
                *v += w * d[ch * plane + k];
            }
        }
        t
    }

    /// Rendered color of each sample.
    pub fn render(&self, patch: &Grid) -> Result<Vec<[f64; 3]>> {
        self.check_patch(patch)?;
        self.samples
            .iter()
            .map(|s| {
                let t = self.gather(patch, &s.taps);
                shade_texel(&t, &s.geom, &self.sh).map_err(|e| at_pixel(e, s))
            })
            .collect()
    }

    /// Sum of squared residuals over all samples and channels.
    pub fn loss_sum(&self, patch: &Grid) -> Result<f64> {
        let colors = self.render(patch)?;
        Ok(colors
            .iter()
            .zip(&self.samples)
            .map(|(c, s)| (0..3).map(|k| (c[k] - s.target[k]).powi(2)).sum::<f64>())
            .sum())
    }

    /// Sum of squared residuals and its gradient with respect to the patch.
    pub fn loss_sum_grad(&self, patch: &Grid) -> Result<(f64, Grid)> {
        let (loss, _, grad) = self.loss_sum_grad_subset(patch, None)?;
        Ok((loss, grad))
    }

    /// As [`CompiledViews::loss_sum_grad`] restricted to views with
    /// `keep[view]` set; also returns the number of pixels used.
    pub fn loss_sum_grad_subset(&self, patch: &Grid, keep: Option<&[bool]>) -> Result<(f64, usize, Grid)> {
        self.check_patch(patch)?;
        let mut count = 0;
        let plane = self.height * self.width;
        let mut grad = Grid::zeros(REFL_CHANNELS, self.height, self.width);
        let mut loss = 0.0;
        for s in &self.samples {
            if keep.is_some_and(|k| !k[s.view as usize]) {
                continue;
            }
            count += 1;
            let t = self.gather(patch, &s.taps);
            let color = shade_texel(&t, &s.geom, &self.sh).map_err(|e| at_pixel(e, s))?;
            let r = [color[0] - s.target[0], color[1] - s.target[1], color[2] - s.target[2]];
            loss += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let (_, g) = shade_texel_vjp(&t, &s.geom, &self.sh, [2.0 * r[0], 2.0 * r[1], 2.0 * r[2]])
                .map_err(|e| at_pixel(e, s))?;
            let d = grad.data_mut();
            for (rr, cc, w) in s.taps.iter() {
                if w == 0.0 {
                    continue;
                }
                let k = rr * self.width + cc;
                for (ch, gv) in g.iter().enumerate() {
                    d[ch * plane + k] += w * gv;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical {
                pixel: 0,
                msg: "photometric loss is not finite".into(),
            });
        }
        Ok((loss, count, grad))
    }
}

fn sample(
    vi: usize,
    i: usize,
    view: &ViewObservation,
    taps: Taps,
    lighting: &Lighting,
    u: f64,
    v: f64,
) -> Result<PixelSample> {
    let geom = PixelGeom::new(
        view.pixel_position(i),
        view.camera,
        lighting.intensity,
        lighting.roughness_at(u, v),
    )
    .map_err(|e| Error::Correspondence {
        pixel: i,
        msg: format!("view {vi}: {e}"),
    })?;
    Ok(PixelSample {
        view: vi as u32,
        pixel: i as u32,
        taps,
        geom,
        target: view.pixel_color(i),
    })
}

fn at_pixel(e: Error, s: &PixelSample) -> Error {
    Error::Numerical {
        pixel: s.pixel as usize,
        msg: format!("view {}: {e}", s.view),
    }
}
