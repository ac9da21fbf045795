use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// One captured image with per-pixel geometry and texture correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservation {
    /// Linear radiance, 3 channels.
    pub image: Grid,
    /// Co-located camera and flashlight position.
    pub camera: [f64; 3],
    /// Shading position per pixel, 3 channels.
    pub position: Grid,
    /// Texture coordinate per pixel, 2 channels; meaningful where `mask` is set.
    pub uv: Grid,
    pub mask: Vec<bool>,
}

/// Camera metadata kept next to the per-pixel maps on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewMeta {
    pub camera: [f64; 3],
    pub height: usize,
    pub width: usize,
}

impl ViewObservation {
    pub fn new(image: Grid, camera: [f64; 3], position: Grid, uv: Grid, mask: Vec<bool>) -> Result<Self> {
        let (h, w) = (image.height(), image.width());
        if image.channels() != 3 || position.channels() != 3 || uv.channels() != 2 {
            return Err(Error::Dimension(
                "view needs 3-channel image and position and 2-channel uv".into(),
            ));
        }
        if (position.height(), position.width()) != (h, w) || (uv.height(), uv.width()) != (h, w) || mask.len() != h * w
        {
            return Err(Error::Dimension("view attribute sizes differ".into()));
        }
        if camera.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("camera position is not finite".into()));
        }
        let v = Self {
            image,
            camera,
            position,
            uv,
            mask,
        };
        for i in 0..h * w {
            if v.mask[i] && v.pixel_position(i).iter().any(|x| !x.is_finite()) {
                return Err(Error::Geometry(format!("pixel {i}: shading position not finite")));
            }
        }
        Ok(v)
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.len()
    }

    pub fn covered_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn pixel_uv(&self, i: usize) -> (f64, f64) {
        let n = self.pixel_count();
        (self.uv.data()[i], self.uv.data()[n + i])
    }

    pub fn set_pixel_uv(&mut self, i: usize, uv: (f64, f64)) {
        let n = self.pixel_count();
        self.uv.data_mut()[i] = uv.0;
        self.uv.data_mut()[n + i] = uv.1;
    }

    pub fn pixel_position(&self, i: usize) -> [f64; 3] {
        let n = self.pixel_count();
        let d = self.position.data();
        [d[i], d[n + i], d[2 * n + i]]
    }

    pub fn pixel_color(&self, i: usize) -> [f64; 3] {
        let n = self.pixel_count();
        let d = self.image.data();
        [d[i], d[n + i], d[2 * n + i]]
    }

    pub fn meta(&self) -> ViewMeta {
        ViewMeta {
            camera: self.camera,
            height: self.height(),
            width: self.width(),
        }
    }

    /// Same geometry with a different image.
    pub fn with_image(&self, image: Grid) -> Result<Self> {
        self.image.check_same_shape(&image, "view image")?;
        Ok(Self { image, ..self.clone() })
    }
}

/// Validates a covered pixel's texture coordinate.
pub(crate) fn checked_uv(view: &ViewObservation, i: usize) -> Result<(f64, f64)> {
    let (u, v) = view.pixel_uv(i);
    if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
        return Err(Error::Correspondence {
            pixel: i,
            msg: format!("uv ({u}, {v}) outside [0, 1]"),
        });
    }
    Ok((u, v))
}
