//! Reconstruction quality: PSNR, SSIM and a seam score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::{ReflectanceMap, DIFFUSE, NORMAL, SPECULAR};

/// Value reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;

/// PSNR in dB for values on `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable filter over the valid region only.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..n).map(|i| k[i] * plane[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * tmp[(r + i) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over channels with an 11-tap Gaussian window (sigma 1.5) and
/// unit data range. Small images shrink the window to fit.
pub fn ssim(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    let radius = 5.min((h.min(w) - 1) / 2);
    let k = gaussian_kernel(radius, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let (x, y) = (a.plane(ch), b.plane(ch));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, _, _) = filter_valid(x, h, w, &k);
        let (my, _, _) = filter_valid(y, h, w, &k);
        let (sxx, _, _) = filter_valid(&xx, h, w, &k);
        let (syy, _, _) = filter_valid(&yy, h, w, &k);
        let (sxy, _, _) = filter_valid(&xy, h, w, &k);
        let mut s = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            s += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += s / mx.len() as f64;
    }
    Ok(total / a.channels() as f64)
}

/// Mean absolute difference across the borders between adjacent core tiles
/// of size `p`, over all channels.
pub fn seam_metric(x: &Grid, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::Dimension("tile size must be positive".into()));
    }
    let (h, w) = (x.height(), x.width());
    let mut sum = 0.0;
    let mut n = 0usize;
    for ch in 0..x.channels() {
        let pl = x.plane(ch);
        for b in (p..w).step_by(p) {
            for r in 0..h {
                sum += (pl[r * w + b - 1] - pl[r * w + b]).abs();
                n += 1;
            }
        }
        for b in (p..h).step_by(p) {
            for c in 0..w {
                sum += (pl[(b - 1) * w + c] - pl[b * w + c]).abs();
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub groups: Vec<GroupMetrics>,
    /// PSNR over all seven channels, normals mapped to `[0, 1]`.
    pub psnr_all: f64,
    pub seam: f64,
    pub seam_tile: usize,
}

/// Reflectance channels on `[0, 1]`: normals become `(n + 1) / 2`.
pub fn unit_range(m: &ReflectanceMap) -> Grid {
    let mut g = m.grid().clone();
    for ch in NORMAL {
        for v in g.plane_mut(ch) {
            *v = 0.5 * (*v + 1.0);
        }
    }
    g
}

/// Per-group PSNR and SSIM of `recon` against `truth`, plus the seam score
/// of `recon` at tile size `p`.
pub fn evaluate(recon: &ReflectanceMap, truth: &ReflectanceMap, p: usize) -> Result<MetricsReport> {
    let a = unit_range(recon);
    let b = unit_range(truth);
    a.check_same_shape(&b, "reconstruction")?;
    let groups = [
        ("diffuse", DIFFUSE),
        ("specular", SPECULAR..SPECULAR + 1),
        ("normal", NORMAL),
    ];
    let mut out = Vec::new();
    for (name, range) in groups {
        let ga = a.select_channels(range.clone())?;
        let gb = b.select_channels(range)?;
        out.push(GroupMetrics {
            group: name.into(),
            psnr: psnr(&ga, &gb)?,
            ssim: ssim(&ga, &gb)?,
        });
    }
    Ok(MetricsReport {
        groups: out,
        psnr_all: psnr(&a, &b)?,
        seam: seam_metric(&a, p)?,
        seam_tile: p,
    })
}

impl MetricsReport {
    /// Plain-text table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:>9} {:>7}\n", "group", "psnr_db", "ssim");
        for g in &self.groups {
            s += &format!("{:<10} {:>9.3} {:>7.4}\n", g.group, g.psnr, g.ssim);
        }
        s += &format!("{:<10} {:>9.3}\n", "all", self.psnr_all);
        s += &format!("seam(p={}) {:.6}\n", self.seam_tile, self.seam);
        s
    }
}
