//! Procedural ground-truth reflectance and multi-view observations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Grid;
use crate::maps::{ReflectanceMap, UvCoordMap, REFL_CHANNELS};
use crate::render::{bilinear_taps, render_view, Lighting, ViewObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureStyle {
    /// Two materials split at `u = 0.5`, the left one bright.
    #[default]
    Zones,
    Blobs,
    GradientNoise,
}

impl std::str::FromStr for TextureStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zones" => Ok(Self::Zones),
            "blobs" => Ok(Self::Blobs),
            "gradient_noise" => Ok(Self::GradientNoise),
            _ => Err(Error::Config(format!("unknown texture style {s:?}"))),
        }
    }
}

/// Base diffuse colors of the two zones before per-seed jitter.
pub const ZONE_DIFFUSE: [[f64; 3]; 2] = [[0.78, 0.56, 0.45], [0.36, 0.22, 0.17]];
pub const ZONE_SPECULAR: [f64; 2] = [0.25, 0.55];

/// Zone of a texture coordinate: 0 for `u < 0.5`, else 1.
pub fn zone_of(u: f64) -> usize {
    usize::from(u >= 0.5)
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    fu: f64,
    fv: f64,
    phase: f64,
    amp: f64,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, max_freq: f64, amp: f64) -> Self {
        Self {
            fu: rng.random_range(-max_freq..=max_freq).round(),
            fv: rng.random_range(-max_freq..=max_freq).round(),
            phase: rng.random_range(0.0..2.0 * PI),
            amp: amp * rng.random_range(0.5..1.0),
        }
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        self.amp * (2.0 * PI * (self.fu * u + self.fv * v) + self.phase).sin()
    }

    /// Partial derivatives in `(u, v)`.
    fn grad(&self, u: f64, v: f64) -> (f64, f64) {
        let c = self.amp * 2.0 * PI * (2.0 * PI * (self.fu * u + self.fv * v) + self.phase).cos();
        (c * self.fu, c * self.fv)
    }
}

fn sum_waves(ws: &[Wave], u: f64, v: f64) -> f64 {
    ws.iter().map(|w| w.eval(u, v)).sum()
}

/// Deterministic synthetic reflectance map with texel-center UVs.
pub fn gen_ground_truth(seed: u64, size: (usize, usize), style: TextureStyle) -> Result<(ReflectanceMap, UvCoordMap)> {
    let (h, w) = size;
    if h < 16 || w < 16 {
        return Err(Error::Dimension(format!(
            "synthetic maps need at least 16x16, got {h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter: [[f64; 3]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-0.04..0.04)));
    let tex: Vec<Vec<Wave>> = (0..4)
        .map(|_| (0..5).map(|_| Wave::random(&mut rng, 6.0, 0.035)).collect())
        .collect();
    let height: Vec<Wave> = (0..6).map(|_| Wave::random(&mut rng, 5.0, 0.004)).collect();
    let blobs: Vec<([f64; 2], f64, [f64; 3], f64)> = (0..10)
        .map(|_| {
            (
                [rng.random::<f64>(), rng.random::<f64>()],
                rng.random_range(0.05..0.15),
                std::array::from_fn(|_| rng.random_range(0.15..0.85)),
                rng.random_range(0.2..0.7),
            )
        })
        .collect();
    let base_color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.65));
    let grad_dir = rng.random_range(0.0..2.0 * PI);

    let uv = UvCoordMap::texel_centers(h, w);
    let mut g = Grid::zeros(REFL_CHANNELS, h, w);
    for r in 0..h {
        for c in 0..w {
            let u = (c as f64 + 0.5) / w as f64;
            let v = (r as f64 + 0.5) / h as f64;
            let (diffuse, spec) = match style {
                TextureStyle::Zones => {
                    let z = zone_of(u);
                    let d: [f64; 3] = std::array::from_fn(|k| ZONE_DIFFUSE[z][k] + jitter[z][k]);
                    (d, ZONE_SPECULAR[z] + jitter[z][0])
                }
                TextureStyle::Blobs => {
                    let mut d = base_color;
                    let mut s = 0.35;
                    for (ctr, rad, col, sp) in &blobs {
                        let dd = ((u - ctr[0]).powi(2) + (v - ctr[1]).powi(2)) / (rad * rad);
                        let a = (-0.5 * dd).exp();
                        for k in 0..3 {
                            d[k] = d[k] * (1.0 - a) + col[k] * a;
                        }
                        s = s * (1.0 - a) + sp * a;
                    }
                    (d, s)
                }
                TextureStyle::GradientNoise => {
                    let t = 0.5 + 0.35 * ((u - 0.5) * grad_dir.cos() + (v - 0.5) * grad_dir.sin());
                    let d = [t * base_color[0] * 1.4, t * base_color[1] * 1.2, t * base_color[2]];
                    (d, 0.2 + 0.4 * t)
                }
            };
            for k in 0..3 {
                g.set(k, r, c, (diffuse[k] + sum_waves(&tex[k], u, v)).clamp(0.02, 0.98));
            }
            g.set(3, r, c, (spec + sum_waves(&tex[3], u, v)).clamp(0.02, 0.98));
            // Height field in texture units; slope scaled so normals tilt by
            // a few degrees to a few tens of degrees.
            let (mut du, mut dv) = (0.0, 0.0);
            for wv in &height {
                let (a, b) = wv.grad(u, v);
                du += a;
                dv += b;
            }
            // +v runs down the texture while +y runs up the surface.
            let n = unit([-du, dv, 1.0]).unwrap_or([0.0, 0.0, 1.0]);
            for k in 0..3 {
                g.set(4 + k, r, c, n[k]);
            }
        }
    }
    Ok((ReflectanceMap::new(g)?, uv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProxyGeometry {
    /// The plane `z = 0`.
    Plane,
    /// `z = curvature * (1/4 - x^2 - y^2)`, a gentle dome over the unit square.
    Parabolic { curvature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub geometry: ProxyGeometry,
    /// Camera distance from the surface center, in meters.
    pub distance: f64,
    /// Total horizontal span of the camera arc, in degrees.
    pub arc_degrees: f64,
    /// Alternating elevation offset of the cameras, in degrees.
    pub elevation_degrees: f64,
    /// Standard deviation of additive pixel noise.
    pub noise_sigma: f64,
    pub execution: Execution,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            image_height: 160,
            image_width: 160,
            geometry: ProxyGeometry::Plane,
            distance: 1.5,
            arc_degrees: 70.0,
            elevation_degrees: 12.0,
            noise_sigma: 0.0,
            execution: Execution::default(),
        }
    }
}

/// Side length of the textured surface, in meters; texture `(u, v)` sits at
/// `x = u - 1/2`, `y = 1/2 - v`.
pub const SURFACE_SIZE: f64 = 1.0;

fn surface_z(g: ProxyGeometry, x: f64, y: f64) -> f64 {
    match g {
        ProxyGeometry::Plane => 0.0,
        ProxyGeometry::Parabolic { curvature } => curvature * (0.25 - x * x - y * y),
    }
}

/// Nearest positive ray parameter hitting the surface.
fn intersect(g: ProxyGeometry, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
    match g {
        ProxyGeometry::Plane => {
            if d[2].abs() < 1e-12 {
                return None;
            }
            let s = -o[2] / d[2];
            (s > 0.0).then_some(s)
        }
        ProxyGeometry::Parabolic { curvature: k } => {
            // o_z + s d_z = k (1/4 - |o_xy + s d_xy|^2)
            let a = k * (d[0] * d[0] + d[1] * d[1]);
            let b = 2.0 * k * (o[0] * d[0] + o[1] * d[1]) + d[2];
            let c = o[2] - k * (0.25 - o[0] * o[0] - o[1] * o[1]);
            if a.abs() < 1e-15 {
                let s = -c / b;
                return (s > 0.0).then_some(s);
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let mut roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
            roots.sort_by(f64::total_cmp);
            roots.into_iter().find(|&s| s > 0.0)
        }
    }
}

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (len > 1e-12).then(|| [v[0] / len, v[1] / len, v[2] / len])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Camera positions on the arc, with a small seeded jitter.
pub fn camera_positions(n_views: usize, cfg: &ViewConfig, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n_views)
        .map(|i| {
            let f = if n_views == 1 {
                0.5
            } else {
                i as f64 / (n_views - 1) as f64
            };
            let az = (f - 0.5) * cfg.arc_degrees + rng.random_range(-1.0..1.0);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let el = sign * cfg.elevation_degrees + rng.random_range(-1.0..1.0);
            let (az, el) = (az.to_radians(), el.to_radians());
            let r = cfg.distance;
            [r * az.sin() * el.cos(), r * el.sin(), r * az.cos() * el.cos()]
        })
        .collect()
}

/// Per-pixel geometry of a pinhole camera at `o` aimed at the surface center.
pub fn view_geometry(o: [f64; 3], cfg: &ViewConfig) -> Result<ViewObservation> {
    let target = [0.0, 0.0, surface_z(cfg.geometry, 0.0, 0.0)];
    if o[2] <= target[2] + 1e-9 {
        return Err(Error::Geometry(format!("camera {o:?} is not above the surface")));
    }
    let (h, w) = (cfg.image_height, cfg.image_width);
    if h == 0 || w == 0 {
        return Err(Error::Dimension("image size must be positive".into()));
    }
    let fwd = unit([target[0] - o[0], target[1] - o[1], target[2] - o[2]]).expect("camera off target");
    let right = unit(cross(fwd, [0.0, 1.0, 0.0]))
        .ok_or_else(|| Error::Geometry("camera looks straight along the up axis".into()))?;
    let up = cross(right, fwd);
    let dist = (0..3).map(|k| (target[k] - o[k]).powi(2)).sum::<f64>().sqrt();
    let half = (0.5 * SURFACE_SIZE * 1.1 / dist).atan().tan();
    let aspect = w as f64 / h as f64;
    let n = h * w;
    let mut pos = Grid::zeros(3, h, w);
    let mut uv = Grid::filled(2, h, w, -1.0);
    let mut mask = vec![false; n];
    for i in 0..h {
        for j in 0..w {
            let x = ((j as f64 + 0.5) / w as f64 * 2.0 - 1.0) * half * aspect;
            let y = (1.0 - (i as f64 + 0.5) / h as f64 * 2.0) * half;
            let d = unit([
                fwd[0] + x * right[0] + y * up[0],
                fwd[1] + x * right[1] + y * up[1],
                fwd[2] + x * right[2] + y * up[2],
            ])
            .expect("ray direction");
            let Some(s) = intersect(cfg.geometry, o, d) else {
                continue;
            };
            let p = [o[0] + s * d[0], o[1] + s * d[1], o[2] + s * d[2]];
            let u = p[0] / SURFACE_SIZE + 0.5;
            let v = 0.5 - p[1] / SURFACE_SIZE;
            if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
                continue;
            }
            let k = i * w + j;
            mask[k] = true;
            for a in 0..3 {
                pos.data_mut()[a * n + k] = p[a];
            }
            uv.data_mut()[k] = u;
            uv.data_mut()[n + k] = v;
        }
    }
    ViewObservation::new(Grid::zeros(3, h, w), o, pos, uv, mask)
}

/// Renders `n_views` observations of `refl` from cameras on an arc.
pub fn gen_views(
    refl: &ReflectanceMap,
    uv_map: &UvCoordMap,
    lighting: &Lighting,
    n_views: usize,
    seed: u64,
    cfg: &ViewConfig,
) -> Result<Vec<ViewObservation>> {
    if n_views == 0 {
        return Err(Error::Config("at least one view is required".into()));
    }
    if (uv_map.height(), uv_map.width()) != (refl.height(), refl.width()) {
        return Err(Error::Dimension("uv map and reflectance sizes differ".into()));
    }
    lighting.validate()?;
    let cams = camera_positions(n_views, cfg, seed);
    exec::try_map_range(cfg.execution, n_views, |i| {
        let geo = view_geometry(cams[i], cfg)?;
        let mut img = render_view(refl, &geo, lighting)?;
        if cfg.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1000 + i as u64);
            for (k, v) in img.data_mut().iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                if geo.mask[k % geo.pixel_count()] {
                    *v += cfg.noise_sigma * z;
                }
            }
        }
        geo.with_image(img)
    })
}

/// Number of covered pixels whose bilinear footprint touches each texel.
pub fn texel_coverage(views: &[ViewObservation], size: (usize, usize)) -> Vec<u32> {
    let (h, w) = size;
    let mut count = vec![0u32; h * w];
    for view in views {
        for i in 0..view.pixel_count() {
            if view.mask[i] {
                let (u, v) = view.pixel_uv(i);
                for (r, c, wt) in bilinear_taps(u, v, h, w).iter() {
                    if wt > 0.0 {
                        count[r * w + c] += 1;
                    }
                }
            }
        }
    }
    count
}

/// Flashlight and ambient lighting used by the synthetic scenes.
pub fn scene_lighting() -> Lighting {
    let mut l = Lighting {
        intensity: 4.0,
        ..Lighting::default()
    };
    l.sh[0] = [-1.5, -1.6, -1.7];
    l.sh[2] = [0.6, 0.5, 0.4];
    l.sh[3] = [0.15, 0.1, 0.05];
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::photometric_loss;

    #[test]
    fn zones_differ_and_are_deterministic() {
        let (a, uv) = gen_ground_truth(3, (32, 32), TextureStyle::Zones).unwrap();
        let (b, _) = gen_ground_truth(3, (32, 32), TextureStyle::Zones).unwrap();
        assert_eq!(a, b);
        let mut sums = [[0.0; 3]; 2];
        let mut n = [0.0; 2];
        for r in 0..32 {
            for c in 0..32 {
                let z = zone_of(uv.grid().get(0, r, c));
                n[z] += 1.0;
                for k in 0..3 {
                    sums[z][k] += a.grid().get(k, r, c);
                }
            }
        }
        let diff: f64 = (0..3)
            .map(|k| (sums[0][k] / n[0] - sums[1][k] / n[1]).abs())
            .sum::<f64>()
            / 3.0;
        assert!(diff >= 0.2, "{diff}");
    }

    #[test]
    fn normals_are_unit_for_all_styles() {
        for style in [TextureStyle::Zones, TextureStyle::Blobs, TextureStyle::GradientNoise] {
            let (m, _) = gen_ground_truth(11, (20, 24), style).unwrap();
            for r in 0..20 {
                for c in 0..24 {
                    let n: f64 = (4..7).map(|k| m.grid().get(k, r, c).powi(2)).sum();
                    assert!((n.sqrt() - 1.0).abs() < 1e-6);
                }
            }
            assert!(m.grid().data().iter().all(|v| v.is_finite()));
        }
        assert!(gen_ground_truth(0, (15, 32), TextureStyle::Zones).is_err());
    }

    #[test]
    fn noiseless_views_are_self_consistent() {
        let (m, uv) = gen_ground_truth(1, (32, 32), TextureStyle::Blobs).unwrap();
        let l = scene_lighting();
        let cfg = ViewConfig {
            image_height: 40,
            image_width: 40,
            geometry: ProxyGeometry::Parabolic { curvature: 0.3 },
            ..ViewConfig::default()
        };
        let views = gen_views(&m, &uv, &l, 4, 2, &cfg).unwrap();
        assert_eq!(photometric_loss(&m, &views, &l).unwrap(), 0.0);
        let noisy = gen_views(
            &m,
            &uv,
            &l,
            4,
            2,
            &ViewConfig {
                noise_sigma: 0.01,
                ..cfg
            },
        )
        .unwrap();
        let loss = photometric_loss(&m, &noisy, &l).unwrap();
        assert!((loss / 3e-4 - 1.0).abs() < 0.2, "{loss}");
    }

    #[test]
    fn surface_points_lie_on_geometry() {
        let cfg = ViewConfig {
            image_height: 30,
            image_width: 30,
            geometry: ProxyGeometry::Parabolic { curvature: 0.4 },
            ..ViewConfig::default()
        };
        let v = view_geometry([0.3, 0.2, 1.4], &cfg).unwrap();
        assert!(v.covered_count() > 400);
        for i in 0..v.pixel_count() {
            if v.mask[i] {
                let p = v.pixel_position(i);
                assert!((p[2] - surface_z(cfg.geometry, p[0], p[1])).abs() < 1e-9);
                let (u, vv) = v.pixel_uv(i);
                assert!((u - 0.5 - p[0]).abs() < 1e-12 && (0.5 - vv - p[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn camera_in_plane_is_rejected() {
        assert!(matches!(
            view_geometry([1.5, 0.0, 0.0], &ViewConfig::default()),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn default_arc_covers_every_texel() {
        let (m, uv) = gen_ground_truth(0, (128, 128), TextureStyle::Zones).unwrap();
        let views = gen_views(&m, &uv, &scene_lighting(), 20, 0, &ViewConfig::default()).unwrap();
        let cov = texel_coverage(&views, (128, 128));
        assert!(cov.iter().all(|&c| c >= 1), "min coverage {:?}", cov.iter().min());
    }
}
