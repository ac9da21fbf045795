//! Co-located flashlight plus SH ambient shading, with analytic derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sampling::sample_bilinear;
use super::sh::{sh_basis, sh_basis_grad, SH_COUNT};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEFAULT_ROUGHNESS: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lighting {
    /// Flashlight intensity `L`.
    pub intensity: f64,
    /// SH coefficients `K[j][rgb]`, `j` in the basis order of [`sh_basis`].
    pub sh: [[f64; 3]; SH_COUNT],
    /// Scalar roughness, used when no map is attached.
    #[serde(default = "default_roughness")]
    pub roughness: f64,
    /// Optional fixed roughness map over the texture, one channel.
    #[serde(skip)]
    pub roughness_map: Option<Arc<Grid>>,
}

fn default_roughness() -> f64 {
    DEFAULT_ROUGHNESS
}

impl Default for Lighting {
    fn default() -> Self {
        Self {
            intensity: 1.0,
            sh: [[0.0; 3]; SH_COUNT],
            roughness: DEFAULT_ROUGHNESS,
            roughness_map: None,
        }
    }
}

impl Lighting {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return Err(Error::Config(format!(
                "flash intensity must be positive, got {}",
                self.intensity
            )));
        }
        if !(self.roughness > 0.0 && self.roughness <= 1.0) {
            return Err(Error::Config(format!(
                "roughness must be in (0, 1], got {}",
                self.roughness
            )));
        }
        if self.sh.iter().flatten().any(|k| !k.is_finite()) {
            return Err(Error::Config("SH coefficients must be finite".into()));
        }
        if let Some(m) = &self.roughness_map {
            if m.channels() != 1 {
                return Err(Error::Dimension("roughness map must have one channel".into()));
            }
            if m.data().iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
                return Err(Error::Config("roughness map values must be in (0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Roughness at texture coordinate `(u, v)`.
    pub fn roughness_at(&self, u: f64, v: f64) -> f64 {
        match &self.roughness_map {
            Some(m) => sample_bilinear(m, u, v)[0],
            None => self.roughness,
        }
    }
}

pub(crate) fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// GGX normal distribution with `alpha = rho^2`.
pub fn ggx_d(cos_h: f64, rho: f64) -> f64 {
    let a2 = rho.powi(4);
    let den = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * den * den)
}

/// Smith masking term for GGX.
pub fn smith_g1(cos: f64, rho: f64) -> f64 {
    let a2 = rho.powi(4);
    2.0 * cos / (cos + (a2 + (1.0 - a2) * cos * cos).sqrt())
}

pub fn schlick(f0: f64, cos: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - cos).powi(5)
}

/// Lambert plus one GGX lobe with Schlick Fresnel (`F0 = s`). Directions
/// are unit vectors pointing away from the surface.
pub fn f_pbr(l: [f64; 3], v: [f64; 3], n: [f64; 3], c: [f64; 3], s: f64, rho: f64) -> [f64; 3] {
    let nl = dot(n, l);
    let nv = dot(n, v);
    let mut spec = 0.0;
    if nl > 0.0 && nv > 0.0 {
        let hs = [l[0] + v[0], l[1] + v[1], l[2] + v[2]];
        let hn = norm(hs);
        if hn > 0.0 {
            let h = [hs[0] / hn, hs[1] / hn, hs[2] / hn];
            let d = ggx_d(dot(n, h), rho);
            let g = smith_g1(nl, rho) * smith_g1(nv, rho);
            let f = schlick(s, dot(v, h).clamp(0.0, 1.0));
            spec = d * g * f / (4.0 * nl * nv);
        }
    }
    [c[0] / PI + spec, c[1] / PI + spec, c[2] / PI + spec]
}

fn ambient_arg(sh: &[[f64; 3]; SH_COUNT], n: [f64; 3]) -> [f64; 3] {
    let y = sh_basis(n);
    let mut a = [0.0; 3];
    for (j, k) in sh.iter().enumerate() {
        for ch in 0..3 {
            a[ch] += k[ch] * y[j];
        }
    }
    a
}

/// Outgoing radiance for one surface point, straight from the shading model.
pub fn shade(c: [f64; 3], s: f64, n: [f64; 3], x: [f64; 3], o: [f64; 3], lighting: &Lighting) -> Result<[f64; 3]> {
    let nn = norm(n);
    if !(nn > 0.0) {
        return Err(Error::Geometry("zero-length normal".into()));
    }
    let n = [n[0] / nn, n[1] / nn, n[2] / nn];
    let d = [o[0] - x[0], o[1] - x[1], o[2] - x[2]];
    let dist = norm(d);
    if !(dist > 0.0) {
        return Err(Error::Geometry("camera coincides with surface point".into()));
    }
    let v = [d[0] / dist, d[1] / dist, d[2] / dist];
    let cos = dot(n, v).max(0.0);
    let f = f_pbr(v, v, n, c, s, lighting.roughness);
    let a = ambient_arg(&lighting.sh, n);
    let k = lighting.intensity / (dist * dist);
    Ok([
        k * f[0] * cos + c[0] * softplus(a[0]),
        k * f[1] * cos + c[1] * softplus(a[1]),
        k * f[2] * cos + c[2] * softplus(a[2]),
    ])
}

/// Per-pixel geometry that does not depend on the reflectance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PixelGeom {
    pub v: [f64; 3],
    /// `L / |x - o|^2`.
    pub flash: f64,
    pub rho: f64,
}

impl PixelGeom {
    pub fn new(x: [f64; 3], o: [f64; 3], intensity: f64, rho: f64) -> Result<Self> {
        let d = [o[0] - x[0], o[1] - x[1], o[2] - x[2]];
        let d2 = dot(d, d);
        if !(d2 > 0.0) || !d2.is_finite() {
            return Err(Error::Geometry("camera coincides with surface point".into()));
        }
        let dist = d2.sqrt();
        Ok(Self {
            v: [d[0] / dist, d[1] / dist, d[2] / dist],
            flash: intensity / d2,
            rho,
        })
    }
}

/// Co-located specular term `mu * D / (mu + q)^2` and its derivative in `mu`.
fn colocated_spec(mu: f64, rho: f64) -> (f64, f64) {
    let a2 = rho.powi(4);
    let den = mu * mu * (a2 - 1.0) + 1.0;
    let d = a2 / (PI * den * den);
    let dd = -4.0 * mu * (a2 - 1.0) / den * d;
    let q = (a2 + (1.0 - a2) * mu * mu).sqrt();
    let dq = (1.0 - a2) * mu / q;
    let m = mu + q;
    let p = mu * d / (m * m);
    let dp = d / (m * m) + mu * dd / (m * m) - 2.0 * mu * d * (1.0 + dq) / (m * m * m);
    (p, dp)
}

fn unit_normal(t: &[f64; 7]) -> Result<([f64; 3], f64)> {
    let raw = [t[4], t[5], t[6]];
    let len = norm(raw);
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::Geometry("zero-length normal".into()));
    }
    Ok(([raw[0] / len, raw[1] / len, raw[2] / len], len))
}

/// Shades a sampled texel `(c, s, n_raw)`; the normal is normalized first.
pub(crate) fn shade_texel(t: &[f64; 7], g: &PixelGeom, sh: &[[f64; 3]; SH_COUNT]) -> Result<[f64; 3]> {
    let (n, _) = unit_normal(t)?;
    let mu = dot(n, g.v);
    let a = ambient_arg(sh, n);
    let mut out = [0.0; 3];
    let (p, _) = if mu > 0.0 {
        colocated_spec(mu, g.rho)
    } else {
        (0.0, 0.0)
    };
    for ch in 0..3 {
        let flash = if mu > 0.0 {
            g.flash * (t[ch] * mu / PI + t[3] * p)
        } else {
            0.0
        };
        out[ch] = flash + t[ch] * softplus(a[ch]);
    }
    Ok(out)
}

/// Radiance and `w^T d(radiance)/d(texel)` for a sampled texel.
pub(crate) fn shade_texel_vjp(
    t: &[f64; 7],
    g: &PixelGeom,
    sh: &[[f64; 3]; SH_COUNT],
    w: [f64; 3],
) -> Result<([f64; 3], [f64; 7])> {
    let (n, len) = unit_normal(t)?;
    let mu = dot(n, g.v);
    let a = ambient_arg(sh, n);
    let lit = mu > 0.0;
    let (p, dp) = if lit { colocated_spec(mu, g.rho) } else { (0.0, 0.0) };
    let mut out = [0.0; 3];
    let mut grad = [0.0; 7];
    // d/d(unit n), before projection.
    let mut gn = [0.0; 3];
    let mut gmu = 0.0;
    let mut ga = [0.0; 3];
    for ch in 0..3 {
        let sp = softplus(a[ch]);
        let c = t[ch];
        let flash = if lit { g.flash * (c * mu / PI + t[3] * p) } else { 0.0 };
        out[ch] = flash + c * sp;
        grad[ch] = w[ch] * (if lit { g.flash * mu / PI } else { 0.0 } + sp);
        if lit {
            grad[3] += w[ch] * g.flash * p;
            gmu += w[ch] * g.flash * (c / PI + t[3] * dp);
        }
        ga[ch] = w[ch] * c * sigmoid(a[ch]);
    }
    let yg = sh_basis_grad(n);
    for (j, k) in sh.iter().enumerate() {
        let s: f64 = (0..3).map(|ch| ga[ch] * k[ch]).sum();
        for ax in 0..3 {
            gn[ax] += s * yg[j][ax];
        }
    }
    for ax in 0..3 {
        gn[ax] += gmu * g.v[ax];
    }
    let proj = dot(gn, n);
    for ax in 0..3 {
        grad[4 + ax] = (gn[ax] - proj * n[ax]) / len;
    }
    if out.iter().chain(grad.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            pixel: 0,
            msg: "non-finite shading value".into(),
        });
    }
    Ok((out, grad))
}
