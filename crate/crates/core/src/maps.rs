//! Reflectance and UV coordinate maps.
//!
//! Reflectance maps hold physical values: diffuse albedo (3), specular albedo
//! (1) and object-space normal (3). The diffusion prior works on a
//! normalized copy where albedos are mapped from `[0, 1]` to `[-1, 1]` and
//! normals are used unchanged.

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const REFL_CHANNELS: usize = 7;
pub const UV_CHANNELS: usize = 2;

pub const DIFFUSE: std::ops::Range<usize> = 0..3;
pub const SPECULAR: usize = 3;
pub const NORMAL: std::ops::Range<usize> = 4..7;

pub const CHANNEL_NAMES: [&str; REFL_CHANNELS] = [
    "diffuse_r",
    "diffuse_g",
    "diffuse_b",
    "specular",
    "normal_x",
    "normal_y",
    "normal_z",
];

pub const UV_NAMES: [&str; UV_CHANNELS] = ["u", "v"];

/// Derivative of a physical channel with respect to its diffusion-space value.
pub fn physical_per_diffusion(channel: usize) -> f64 {
    if channel < NORMAL.start {
        0.5
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceMap {
    grid: Grid,
}

impl ReflectanceMap {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != REFL_CHANNELS {
            return Err(Error::Dimension(format!(
                "reflectance map needs {REFL_CHANNELS} channels, got {}",
                grid.channels()
            )));
        }
        Ok(Self { grid })
    }

    /// Constant map, mostly useful in tests.
    pub fn constant(height: usize, width: usize, diffuse: [f64; 3], spec: f64, normal: [f64; 3]) -> Self {
        let n = normalize3(normal);
        let vals = [diffuse[0], diffuse[1], diffuse[2], spec, n[0], n[1], n[2]];
        Self {
            grid: Grid::from_fn(REFL_CHANNELS, height, width, |c, _, _| vals[c]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    /// Normalized copy in diffusion space.
    pub fn to_diffusion(&self) -> Grid {
        let mut out = self.grid.clone();
        let n = out.plane_len();
        for v in &mut out.data_mut()[..NORMAL.start * n] {
            *v = 2.0 * *v - 1.0;
        }
        out
    }

    /// Maps a diffusion-space grid back, clamping albedos to `[0, 1]` and
    /// renormalizing normals. Degenerate normals become `+z`.
    pub fn from_diffusion(x: &Grid) -> Result<Self> {
        if x.channels() != REFL_CHANNELS {
            return Err(Error::Dimension(format!(
                "diffusion state needs {REFL_CHANNELS} channels, got {}",
                x.channels()
            )));
        }
        let mut grid = x.clone();
        let n = grid.plane_len();
        for v in &mut grid.data_mut()[..NORMAL.start * n] {
            *v = ((*v + 1.0) * 0.5).clamp(0.0, 1.0);
        }
        let mut map = Self { grid };
        map.renormalize_normals();
        Ok(map)
    }

    pub fn renormalize_normals(&mut self) {
        let n = self.grid.plane_len();
        let data = self.grid.data_mut();
        for i in 0..n {
            let v = [data[4 * n + i], data[5 * n + i], data[6 * n + i]];
            let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let u = if len > 1e-12 && len.is_finite() {
                [v[0] / len, v[1] / len, v[2] / len]
            } else {
                [0.0, 0.0, 1.0]
            };
            data[4 * n + i] = u[0];
            data[5 * n + i] = u[1];
            data[6 * n + i] = u[2];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UvCoordMap {
    grid: Grid,
}

impl UvCoordMap {
    /// Texel `(r, c)` stores `((c + 0.5) / W, (r + 0.5) / H)`.
    pub fn texel_centers(height: usize, width: usize) -> Self {
        Self {
            grid: Grid::from_fn(UV_CHANNELS, height, width, |ch, r, c| {
                if ch == 0 {
                    (c as f64 + 0.5) / width as f64
                } else {
                    (r as f64 + 0.5) / height as f64
                }
            }),
        }
    }

    /// UV grid of a crop of a `full`-sized map starting at `origin`.
    pub fn for_crop(full: (usize, usize), origin: (usize, usize), size: (usize, usize)) -> Self {
        let (fh, fw) = full;
        Self {
            grid: Grid::from_fn(UV_CHANNELS, size.0, size.1, |ch, r, c| {
                if ch == 0 {
                    ((origin.1 + c) as f64 + 0.5) / fw as f64
                } else {
                    ((origin.0 + r) as f64 + 0.5) / fh as f64
                }
            }),
        }
    }

    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != UV_CHANNELS {
            return Err(Error::Dimension(format!(
                "uv map needs {UV_CHANNELS} channels, got {}",
                grid.channels()
            )));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }
}

pub(crate) fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}
