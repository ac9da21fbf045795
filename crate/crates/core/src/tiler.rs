//! Overlapped patch windows and the weighted-average blend.
//!
//! Core tiles of size `p` partition the map (the last row and column are
//! clamped shorter when `p` does not divide the size). Each core is grown by
//! `p_pad` texels per side and clamped to the map; the grown rectangle is the
//! window's occupancy mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn row_end(&self) -> usize {
        self.row + self.height
    }

    pub fn col_end(&self) -> usize {
        self.col + self.width
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row_end() && c >= self.col && c < self.col_end()
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchWindow {
    /// Grid position `(i, j)` of the tile.
    pub index: (usize, usize),
    pub core: Rect,
    /// Padded bounds; also the support of the occupancy mask.
    pub padded: Rect,
    /// `(H, W)` of the full map.
    pub full: (usize, usize),
}

impl PatchWindow {
    /// A single window spanning the whole map.
    pub fn whole(height: usize, width: usize) -> Self {
        let r = Rect {
            row: 0,
            col: 0,
            height,
            width,
        };
        Self {
            index: (0, 0),
            core: r,
            padded: r,
            full: (height, width),
        }
    }

    pub fn occupies(&self, r: usize, c: usize) -> bool {
        self.padded.contains(r, c)
    }

    /// Binary occupancy mask over the full map.
    pub fn mask(&self) -> Grid {
        Grid::from_fn(
            1,
            self.full.0,
            self.full.1,
            |_, r, c| {
                if self.occupies(r, c) {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn padded_size(&self) -> (usize, usize) {
        (self.padded.height, self.padded.width)
    }
}

pub fn split_overlapped(size: (usize, usize), p: usize, p_pad: usize) -> Result<Vec<PatchWindow>> {
    let (h, w) = size;
    if p == 0 || p > h.min(w) {
        return Err(Error::Dimension(format!(
            "tile size {p} must be in 1..={} for a {h}x{w} map",
            h.min(w)
        )));
    }
    let axis = |n: usize| -> Vec<(usize, usize, usize, usize)> {
        (0..n.div_ceil(p))
            .map(|i| {
                let start = i * p;
                let len = p.min(n - start);
                let lo = start.saturating_sub(p_pad);
                let hi = (start + len + p_pad).min(n);
                (start, len, lo, hi - lo)
            })
            .collect()
    };
    let rows = axis(h);
    let cols = axis(w);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for (i, &(r0, rh, pr0, prh)) in rows.iter().enumerate() {
        for (j, &(c0, cw, pc0, pcw)) in cols.iter().enumerate() {
            out.push(PatchWindow {
                index: (i, j),
                core: Rect {
                    row: r0,
                    col: c0,
                    height: rh,
                    width: cw,
                },
                padded: Rect {
                    row: pr0,
                    col: pc0,
                    height: prh,
                    width: pcw,
                },
                full: size,
            });
        }
    }
    Ok(out)
}

fn check_window(map: &Grid, window: &PatchWindow) -> Result<()> {
    let p = window.padded;
    if p.is_empty() || p.row_end() > map.height() || p.col_end() > map.width() {
        return Err(Error::Dimension(format!(
            "window {:?} outside {}x{} map",
            window.index,
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

/// Copy of the window's padded region, all channels.
pub fn extract(map: &Grid, window: &PatchWindow) -> Result<Grid> {
    check_window(map, window)?;
    let p = window.padded;
    map.crop(p.row, p.col, p.height, p.width)
}

/// Writes a padded-size patch back into `map`.
pub fn write_back(map: &mut Grid, patch: &Grid, window: &PatchWindow) -> Result<()> {
    check_window(map, window)?;
    if patch.height() != window.padded.height || patch.width() != window.padded.width {
        return Err(Error::Dimension(format!(
            "patch {}x{} does not fit window {:?}",
            patch.height(),
            patch.width(),
            window.index
        )));
    }
    map.paste(patch, window.padded.row, window.padded.col)
}

/// Per-texel average of all patches whose mask covers it.
///
/// Patches are accumulated in window-index order regardless of the order
/// they are passed in, so the result does not depend on that order.
pub fn blend(patches: &[Grid], windows: &[PatchWindow], size: (usize, usize)) -> Result<Grid> {
    if patches.len() != windows.len() || patches.is_empty() {
        return Err(Error::Dimension(format!(
            "{} patches for {} windows",
            patches.len(),
            windows.len()
        )));
    }
    let channels = patches[0].channels();
    let (h, w) = size;
    for (p, win) in patches.iter().zip(windows) {
        if p.channels() != channels || (p.height(), p.width()) != win.padded_size() {
            return Err(Error::Dimension(format!(
                "patch {:?} does not match window {:?}",
                p.shape(),
                win.index
            )));
        }
        if win.padded.row_end() > h || win.padded.col_end() > w {
            return Err(Error::Dimension(format!("window {:?} outside map", win.index)));
        }
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&k| windows[k].index);

    let mut count = vec![0u32; h * w];
    for &k in &order {
        let p = windows[k].padded;
        for r in p.row..p.row_end() {
            for c in &mut count[r * w + p.col..r * w + p.col_end()] {
                *c += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::Coverage { row: i / w, col: i % w });
    }
    let mut out = Grid::zeros(channels, h, w);
    for ch in 0..channels {
        let plane = out.plane_mut(ch);
        for &k in &order {
            let p = windows[k].padded;
            let src = patches[k].plane(ch);
            for r in 0..p.height {
                let dst = &mut plane[(p.row + r) * w + p.col..(p.row + r) * w + p.col_end()];
                for (d, s) in dst.iter_mut().zip(&src[r * p.width..(r + 1) * p.width]) {
                    *d += s;
                }
            }
        }
        for (v, &c) in plane.iter_mut().zip(&count) {
            *v /= c as f64;
        }
    }
    Ok(out)
}

/// Window layout as JSON, for debugging and fixtures.
pub fn layout_json(windows: &[PatchWindow]) -> String {
    serde_json::to_string_pretty(windows).expect("windows serialize")
}
