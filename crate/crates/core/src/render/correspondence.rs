//! Closed-form remapping of view correspondences into patch-local texture space.

use super::sampling::{bilinear_taps, Taps};
use super::view::{checked_uv, ViewObservation};
use crate::error::{Error, Result};
use crate::tiler::PatchWindow;

/// Sentinel written into the uv of pixels a window does not cover.
pub const UNCOVERED_UV: f64 = -1.0;

fn check_window(window: &PatchWindow, full: (usize, usize)) -> Result<()> {
    let p = window.padded;
    if p.is_empty() {
        return Err(Error::Dimension(format!("window {:?} is empty", window.index)));
    }
    if p.row_end() > full.0 || p.col_end() > full.1 {
        return Err(Error::Dimension(format!(
            "window {:?} exceeds the {}x{} map",
            window.index, full.0, full.1
        )));
    }
    Ok(())
}

/// Patch-local taps for a global `(u, v)`, or `None` when any tap with
/// nonzero weight falls outside the window's padded bounds.
pub(crate) fn window_taps(u: f64, v: f64, window: &PatchWindow) -> Option<Taps> {
    let (h, w) = window.full;
    let g = bilinear_taps(u, v, h, w);
    let p = window.padded;
    for (r, c, wt) in g.iter() {
        if wt != 0.0 && !p.contains(r, c) {
            return None;
        }
    }
    let local = |x: usize, lo: usize, len: usize| x.clamp(lo, lo + len - 1) - lo;
    Some(Taps {
        rows: g.rows.map(|r| local(r, p.row, p.height)),
        cols: g.cols.map(|c| local(c, p.col, p.width)),
        weights: g.weights,
    })
}

/// Remaps covered pixels' uv to the window's padded patch; pixels outside its
/// sampling support become uncovered.
pub fn transform_correspondence(
    view: &ViewObservation,
    window: &PatchWindow,
    full_size: (usize, usize),
) -> Result<ViewObservation> {
    check_window(window, full_size)?;
    let mut window = window.clone();
    window.full = full_size;
    let (h, w) = full_size;
    let p = window.padded;
    let mut out = view.clone();
    for i in 0..view.pixel_count() {
        if !view.mask[i] {
            continue;
        }
        let (u, v) = checked_uv(view, i)?;
        if window_taps(u, v, &window).is_some() {
            let ul = (u * w as f64 - p.col as f64) / p.width as f64;
            let vl = (v * h as f64 - p.row as f64) / p.height as f64;
            out.set_pixel_uv(i, (ul, vl));
        } else {
            out.mask[i] = false;
            out.set_pixel_uv(i, (UNCOVERED_UV, UNCOVERED_UV));
        }
    }
    Ok(out)
}

/// Inverse of [`transform_correspondence`] on covered pixels.
pub fn restore_correspondence(local: &ViewObservation, window: &PatchWindow) -> ViewObservation {
    let (h, w) = window.full;
    let p = window.padded;
    let mut out = local.clone();
    for i in 0..local.pixel_count() {
        if local.mask[i] {
            let (ul, vl) = local.pixel_uv(i);
            let u = (ul * p.width as f64 + p.col as f64) / w as f64;
            let v = (vl * p.height as f64 + p.row as f64) / h as f64;
            out.set_pixel_uv(i, (u, v));
        }
    }
    out
}
