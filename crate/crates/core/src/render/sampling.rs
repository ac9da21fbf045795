//! Bilinear texture lookup with the half-texel convention and edge clamping.

use crate::grid::Grid;

/// Positions within this many texels of a texel center snap to it, so that
/// coordinates produced by `(k + 0.5) / n` sample exactly one texel.
const SNAP: f64 = 1e-9;

/// Four taps and their weights, as `(row, col)` texel indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub rows: [usize; 2],
    pub cols: [usize; 2],
    /// `[top-left, top-right, bottom-left, bottom-right]`.
    pub weights: [f64; 4],
}

impl Taps {
    /// `(row, col, weight)` for each of the four taps.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..4).map(move |k| (self.rows[k / 2], self.cols[k % 2], self.weights[k]))
    }
}

/// Continuous texel position `coord * n - 0.5`, split into clamped taps and
/// the fractional weight of the upper tap.
fn axis(coord: f64, n: usize) -> ([usize; 2], f64) {
    let mut p = coord * n as f64 - 0.5;
    let r = p.round();
    if (p - r).abs() < SNAP {
        p = r;
    }
    let f = p.floor();
    let frac = p - f;
    let last = n as f64 - 1.0;
    let i0 = f.clamp(0.0, last) as usize;
    let i1 = (f + 1.0).clamp(0.0, last) as usize;
    ([i0, i1], frac)
}

pub fn bilinear_taps(u: f64, v: f64, height: usize, width: usize) -> Taps {
    let (cols, fx) = axis(u, width);
    let (rows, fy) = axis(v, height);
    Taps {
        rows,
        cols,
        weights: [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx],
    }
}

/// All channels of `grid` sampled at `(u, v)`.
pub fn sample_bilinear(grid: &Grid, u: f64, v: f64) -> Vec<f64> {
    let taps = bilinear_taps(u, v, grid.height(), grid.width());
    (0..grid.channels())
        .map(|ch| taps.iter().map(|(r, c, w)| w * grid.get(ch, r, c)).sum())
        .collect()
}
