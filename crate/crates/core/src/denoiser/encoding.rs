use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::{UvCoordMap, UV_CHANNELS};

/// UV condition and its positional encoding.
///
/// Encoded layout: raw `u, v`, then for each axis and each band `f` the pair
/// `sin(2^f pi a), cos(2^f pi a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub uv: Grid,
    pub encoded: Grid,
    pub bands: usize,
}

pub fn encoded_channels(bands: usize) -> usize {
    UV_CHANNELS + 4 * bands
}

pub fn positional_encode(uv: &UvCoordMap, bands: usize) -> Result<Condition> {
    encode_grid(uv.grid(), bands)
}

pub(crate) fn encode_grid(uv: &Grid, bands: usize) -> Result<Condition> {
    if uv.channels() != UV_CHANNELS {
        return Err(Error::Dimension(format!(
            "uv grid needs 2 channels, got {}",
            uv.channels()
        )));
    }
    if let Some(bad) = uv.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("uv value {bad} outside [0, 1]")));
    }
    let (h, w) = (uv.height(), uv.width());
    let n = h * w;
    let mut data = Vec::with_capacity(encoded_channels(bands) * n);
    data.extend_from_slice(uv.data());
    for axis in 0..UV_CHANNELS {
        let plane = uv.plane(axis);
        for f in 0..bands {
            let freq = (1u64 << f) as f64 * PI;
            data.extend(plane.iter().map(|a| (freq * a).sin()));
            data.extend(plane.iter().map(|a| (freq * a).cos()));
        }
    }
    Ok(Condition {
        uv: uv.clone(),
        encoded: Grid::from_vec(encoded_channels(bands), h, w, data)?,
        bands,
    })
}

impl Condition {
    /// Condition for a sub-window of this one.
    pub fn crop(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Condition> {
        Ok(Condition {
            uv: self.uv.crop(r0, c0, rows, cols)?,
            encoded: self.encoded.crop(r0, c0, rows, cols)?,
            bands: self.bands,
        })
    }
}
