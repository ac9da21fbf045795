//! 8-bit PNG previews of reflectance maps, one image per channel group.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use patchdps::maps::{ReflectanceMap, NORMAL, SPECULAR};
use patchdps::metrics::unit_range;

use crate::failure::{CliResult, Failure};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `{prefix}_diffuse.png`, `{prefix}_specular.png` and
/// `{prefix}_normal.png` into `dir`; normals are shown as `(n + 1) / 2`.
pub fn save_previews(map: &ReflectanceMap, dir: &Path, prefix: &str) -> CliResult<()> {
    let g = unit_range(map);
    let (h, w) = (g.height() as u32, g.width() as u32);
    let rgb = |base: usize| {
        RgbImage::from_fn(w, h, |c, r| {
            let (r, c) = (r as usize, c as usize);
            Rgb([
                to_u8(g.get(base, r, c)),
                to_u8(g.get(base + 1, r, c)),
                to_u8(g.get(base + 2, r, c)),
            ])
        })
    };
    let spec = GrayImage::from_fn(w, h, |c, r| Luma([to_u8(g.get(SPECULAR, r as usize, c as usize))]));
    let save_err = |e: image::ImageError| Failure::runtime(format!("writing preview: {e}"));
    rgb(0)
        .save(dir.join(format!("{prefix}_diffuse.png")))
        .map_err(save_err)?;
    spec.save(dir.join(format!("{prefix}_specular.png")))
        .map_err(save_err)?;
    rgb(NORMAL.start)
        .save(dir.join(format!("{prefix}_normal.png")))
        .map_err(save_err)?;
    Ok(())
}
