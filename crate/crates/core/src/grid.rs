//! Planar multi-channel grids.
//!
//! All maps, patches and images share the same storage: channel-major
//! (`C x H x W`) `f64` values. Files store `f32`; the conversion happens at
//! the IO boundary only.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "buffer of {} values cannot hold {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a grid by evaluating `f(channel, row, col)` for every element.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    data.push(f(c, r, col));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    /// Unit Gaussian grid drawn from `rng`.
    pub fn standard_normal<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..channels * height * width)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.height + r) * self.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[self.index(c, r, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: f64) {
        let i = self.index(c, r, col);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: shape {:?} does not match {:?}",
                other.shape(),
                self.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lin_comb(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        self.check_same_shape(other, "linear combination")?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Grid {
        self.map(|v| a * v)
    }

    pub fn dot(&self, other: &Grid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of one channel.
    pub fn channel_mean(&self, c: usize) -> f64 {
        let p = self.plane(c);
        p.iter().sum::<f64>() / p.len() as f64
    }

    /// Copies the `rows x cols` subgrid at `(r0, c0)`.
    pub fn crop(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Grid> {
        if r0 + rows > self.height || c0 + cols > self.width || rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "crop {rows}x{cols} at ({r0},{c0}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Grid::zeros(self.channels, rows, cols);
        for c in 0..self.channels {
            for r in 0..rows {
                let src = self.index(c, r0 + r, c0);
                let dst = out.index(c, r, 0);
                out.data[dst..dst + cols].copy_from_slice(&self.data[src..src + cols]);
            }
        }
        Ok(out)
    }

    /// Writes `patch` into this grid at `(r0, c0)`.
    pub fn paste(&mut self, patch: &Grid, r0: usize, c0: usize) -> Result<()> {
        if patch.channels != self.channels || r0 + patch.height > self.height || c0 + patch.width > self.width {
            return Err(Error::Dimension(format!(
                "paste {:?} at ({r0},{c0}) into {:?}",
                patch.shape(),
                self.shape()
            )));
        }
        for c in 0..self.channels {
            for r in 0..patch.height {
                let src = patch.index(c, r, 0);
                let dst = self.index(c, r0 + r, c0);
                self.data[dst..dst + patch.width].copy_from_slice(&patch.data[src..src + patch.width]);
            }
        }
        Ok(())
    }

    /// Stacks channels of `self` followed by `other`.
    pub fn concat_channels(&self, other: &Grid) -> Result<Grid> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Dimension(format!(
                "cannot concatenate {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Grid {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Channels `range` as a new grid.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Grid> {
        if range.end > self.channels || range.is_empty() {
            return Err(Error::Dimension(format!(
                "channel range {range:?} outside 0..{}",
                self.channels
            )));
        }
        let n = self.plane_len();
        Ok(Grid {
            channels: range.len(),
            height: self.height,
            width: self.width,
            data: self.data[range.start * n..range.end * n].to_vec(),
        })
    }

    fn with_data(&self, data: Vec<f64>) -> Grid {
        debug_assert_eq!(data.len(), self.data.len());
        Grid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}
