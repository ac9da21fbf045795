//! Differentiable co-located flashlight renderer.

mod compiled;
mod correspondence;
mod sampling;
mod sh;
mod shading;
mod view;

pub use compiled::CompiledViews;
pub use correspondence::{restore_correspondence, transform_correspondence, UNCOVERED_UV};
pub use sampling::{bilinear_taps, sample_bilinear, Taps};
pub use sh::{sh_basis, sh_basis_grad, SH_COUNT};
pub use shading::{f_pbr, ggx_d, schlick, shade, smith_g1, Lighting, DEFAULT_ROUGHNESS};
pub use view::{ViewMeta, ViewObservation};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::ReflectanceMap;
use crate::tiler::PatchWindow;

fn scatter_image(cv: &CompiledViews, colors: &[[f64; 3]], h: usize, w: usize) -> Grid {
    let mut img = Grid::zeros(3, h, w);
    let n = h * w;
    for ((_, px), c) in cv.pixels().zip(colors) {
        for k in 0..3 {
            img.data_mut()[k * n + px] = c[k];
        }
    }
    img
}

/// Renders one view of a full map; uncovered pixels are zero.
pub fn render_view(refl: &ReflectanceMap, view: &ViewObservation, lighting: &Lighting) -> Result<Grid> {
    let window = PatchWindow::whole(refl.height(), refl.width());
    let cv = CompiledViews::for_window(std::slice::from_ref(view), &window, lighting)?;
    let colors = cv.render(refl.grid())?;
    Ok(scatter_image(&cv, &colors, view.height(), view.width()))
}

/// Renders the pixels of `view` (global correspondence) that `window`'s
/// patch can reproduce on its own; returns the image and that pixel mask.
pub fn render_patch(
    patch: &Grid,
    window: &PatchWindow,
    view: &ViewObservation,
    lighting: &Lighting,
) -> Result<(Grid, Vec<bool>)> {
    let cv = CompiledViews::for_window(std::slice::from_ref(view), window, lighting)?;
    let colors = cv.render(patch)?;
    let mut mask = vec![false; view.pixel_count()];
    for (_, px) in cv.pixels() {
        mask[px] = true;
    }
    Ok((scatter_image(&cv, &colors, view.height(), view.width()), mask))
}

/// Mean over covered pixels of the squared RGB residual, summed over views.
pub fn photometric_loss(refl: &ReflectanceMap, views: &[ViewObservation], lighting: &Lighting) -> Result<f64> {
    let window = PatchWindow::whole(refl.height(), refl.width());
    let cv = CompiledViews::for_window(views, &window, lighting)?;
    if cv.is_empty() {
        return Err(Error::Degenerate("no covered pixels in any view".into()));
    }
    Ok(cv.loss_sum(refl.grid())? / cv.len() as f64)
}

/// Gradient of the window's mean photometric loss with respect to its patch
/// texels. `views` must already be remapped with [`transform_correspondence`].
/// A window without covered pixels gets a zero gradient.
pub fn photometric_grad(
    refl_patch: &Grid,
    window: &PatchWindow,
    views: &[ViewObservation],
    lighting: &Lighting,
) -> Result<Grid> {
    let cv = CompiledViews::from_local(views, window, lighting)?;
    let (_, grad) = cv.loss_sum_grad(refl_patch)?;
    Ok(if cv.is_empty() {
        grad
    } else {
        grad.scale(1.0 / cv.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiler::split_overlapped;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ReflectanceMap {
        let g = Grid::from_fn(7, h, w, |c, _, _| match c {
            0..=3 => 0.1 + 0.8 * rng.random::<f64>(),
            6 => 1.0,
            _ => 0.4 * (rng.random::<f64>() - 0.5),
        });
        let mut m = ReflectanceMap::new(g).unwrap();
        m.renormalize_normals();
        m
    }

    /// Pixels with random uv over the plane z = 0 under a camera above it.
    fn random_view(h: usize, w: usize, rng: &mut ChaCha8Rng, target: Option<&Grid>) -> ViewObservation {
        let n = h * w;
        let uv = Grid::from_fn(2, h, w, |_, _, _| rng.random::<f64>());
        let pos = Grid::from_fn(3, h, w, |c, r, k| {
            let i = r * w + k;
            if c == 2 {
                0.0
            } else {
                uv.data()[c * n + i] - 0.5
            }
        });
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.9).collect();
        let camera = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 1.5];
        let image = target
            .cloned()
            .unwrap_or_else(|| Grid::from_fn(3, h, w, |_, _, _| rng.random::<f64>()));
        ViewObservation::new(image, camera, pos, uv, mask).unwrap()
    }

    fn lighting() -> Lighting {
        let mut l = Lighting {
            intensity: 2.0,
            ..Lighting::default()
        };
        l.sh[0] = [0.4, 0.3, 0.2];
        l.sh[2] = [0.2, 0.1, 0.3];
        l.sh[6] = [-0.1, 0.05, 0.0];
        l
    }

    #[test]
    fn constant_map_matches_scalar_shade() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = [0.1, -0.2, 0.97];
        let m = ReflectanceMap::constant(8, 8, [0.3, 0.5, 0.7], 0.4, n);
        let view = random_view(10, 10, &mut rng, None);
        let l = lighting();
        let img = render_view(&m, &view, &l).unwrap();
        let nn = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n = n.map(|v| v / nn);
        for i in 0..100 {
            let want = if view.mask[i] {
                shade([0.3, 0.5, 0.7], 0.4, n, view.pixel_position(i), view.camera, &l).unwrap()
            } else {
                [0.0; 3]
            };
            for ch in 0..3 {
                assert!((img.data()[ch * 100 + i] - want[ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_rendered_views_have_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_map(12, 12, &mut rng);
        let l = lighting();
        let views: Vec<_> = (0..3)
            .map(|_| {
                let v = random_view(9, 9, &mut rng, None);
                let img = render_view(&m, &v, &l).unwrap();
                v.with_image(img).unwrap()
            })
            .collect();
        assert_eq!(photometric_loss(&m, &views, &l).unwrap(), 0.0);
    }

    #[test]
    fn single_pixel_residual() {
        let m = ReflectanceMap::constant(2, 2, [0.5; 3], 0.0, [0.0, 0.0, 1.0]);
        let l = Lighting::default();
        let uv = Grid::from_vec(2, 1, 1, vec![0.25, 0.25]).unwrap();
        let pos = Grid::zeros(3, 1, 1);
        let v0 = ViewObservation::new(Grid::zeros(3, 1, 1), [0.0, 0.0, 1.0], pos, uv, vec![true]).unwrap();
        let img = render_view(&m, &v0, &l).unwrap();
        let mut shifted = img.clone();
        shifted.data_mut()[1] += 0.5;
        let v = v0.with_image(shifted).unwrap();
        assert!((photometric_loss(&m, &[v], &l).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_correspondence_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_map(4, 4, &mut rng);
        let mut v = random_view(3, 3, &mut rng, None);
        v.mask = vec![false; 9];
        assert!(matches!(
            photometric_loss(&m, &[v.clone()], &lighting()),
            Err(Error::Degenerate(_))
        ));
        v.mask[4] = true;
        v.set_pixel_uv(4, (1.2, 0.5));
        assert!(matches!(
            render_view(&m, &v, &lighting()),
            Err(Error::Correspondence { pixel: 4, .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_map(6, 7, &mut rng);
        let l = lighting();
        let views: Vec<_> = (0..2).map(|_| random_view(8, 8, &mut rng, None)).collect();
        let whole = PatchWindow::whole(6, 7);
        let local: Vec<_> = views
            .iter()
            .map(|v| transform_correspondence(v, &whole, (6, 7)).unwrap())
            .collect();
        let grad = photometric_grad(m.grid(), &whole, &local, &l).unwrap();
        let f = |g: &Grid| photometric_loss(&ReflectanceMap::new(g.clone()).unwrap(), &views, &l).unwrap();
        let h = 1e-6;
        for k in 0..m.grid().data().len() {
            let mut p = m.grid().clone();
            p.data_mut()[k] += h;
            let mut q = m.grid().clone();
            q.data_mut()[k] -= h;
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            let an = grad.data()[k];
            assert!((fd - an).abs() <= 1e-6 + 1e-4 * fd.abs(), "k={k} fd={fd} an={an}");
        }
    }

    #[test]
    fn unreferenced_texels_get_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_map(8, 8, &mut rng);
        let mut v = random_view(4, 4, &mut rng, None);
        for i in 0..16 {
            // Left half of the texture only.
            let (u, vv) = v.pixel_uv(i);
            v.set_pixel_uv(i, (u * 0.4, vv));
        }
        let whole = PatchWindow::whole(8, 8);
        let local = transform_correspondence(&v, &whole, (8, 8)).unwrap();
        let g = photometric_grad(m.grid(), &whole, &[local], &lighting()).unwrap();
        for ch in 0..7 {
            for r in 0..8 {
                for c in 5..8 {
                    assert_eq!(g.get(ch, r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_map(5, 5, &mut rng);
        let l = lighting();
        let v = random_view(6, 6, &mut rng, None);
        let v = v.with_image(render_view(&m, &v, &l).unwrap()).unwrap();
        let whole = PatchWindow::whole(5, 5);
        let local = transform_correspondence(&v, &whole, (5, 5)).unwrap();
        let g = photometric_grad(m.grid(), &whole, &[local], &l).unwrap();
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn whole_window_transform_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_view(7, 7, &mut rng, None);
        let t = transform_correspondence(&v, &PatchWindow::whole(16, 16), (16, 16)).unwrap();
        assert_eq!(t.mask, v.mask);
        for i in 0..49 {
            if v.mask[i] {
                let (a, b) = (v.pixel_uv(i), t.pixel_uv(i));
                assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn local_sampling_matches_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w) = (40, 52);
        let map = Grid::from_fn(3, h, w, |_, _, _| rng.random::<f64>());
        let windows = split_overlapped((h, w), 12, 3).unwrap();
        let n = 10_000;
        let uv = Grid::from_fn(2, 1, n, |_, _, _| rng.random::<f64>());
        let view = ViewObservation::new(
            Grid::zeros(3, 1, n),
            [0.0, 0.0, 1.0],
            Grid::zeros(3, 1, n),
            uv,
            vec![true; n],
        )
        .unwrap();
        let mut seen = vec![false; n];
        for win in &windows {
            let patch = crate::tiler::extract(&map, win).unwrap();
            let t = transform_correspondence(&view, win, (h, w)).unwrap();
            let back = restore_correspondence(&t, win);
            for i in 0..n {
                if !t.mask[i] {
                    continue;
                }
                seen[i] = true;
                let (u, v) = view.pixel_uv(i);
                let (ul, vl) = t.pixel_uv(i);
                let a = sample_bilinear(&map, u, v);
                let b = sample_bilinear(&patch, ul, vl);
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-12, "{:?} {i}", win.index);
                }
                let (ub, vb) = back.pixel_uv(i);
                assert!((ub - u).abs() < 1e-14 && (vb - v).abs() < 1e-14);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn pad_margin_pixel_belongs_to_neighbour_only() {
        let windows = split_overlapped((16, 16), 8, 2).unwrap();
        // Texel column 12 sits in the right window's core, outside the left
        // window's padding (which ends at column 10).
        let u = 12.5 / 16.0;
        let v = 3.5 / 16.0;
        let uv = Grid::from_vec(2, 1, 1, vec![u, v]).unwrap();
        let view = ViewObservation::new(
            Grid::zeros(3, 1, 1),
            [0.0, 0.0, 1.0],
            Grid::zeros(3, 1, 1),
            uv,
            vec![true],
        )
        .unwrap();
        let left = windows.iter().find(|w| w.index == (0, 0)).unwrap();
        let right = windows.iter().find(|w| w.index == (0, 1)).unwrap();
        assert!(!transform_correspondence(&view, left, (16, 16)).unwrap().mask[0]);
        assert!(transform_correspondence(&view, right, (16, 16)).unwrap().mask[0]);
        // Column 9.5 lies in the left window's pad: covered by both.
        let mut v2 = view.clone();
        v2.set_pixel_uv(0, (9.5 / 16.0, v));
        assert!(transform_correspondence(&v2, left, (16, 16)).unwrap().mask[0]);
        assert!(transform_correspondence(&v2, right, (16, 16)).unwrap().mask[0]);
    }

    #[test]
    fn empty_window_rejected() {
        let mut w = PatchWindow::whole(4, 4);
        w.padded.width = 0;
        let view = ViewObservation::new(
            Grid::zeros(3, 1, 1),
            [0.0; 3],
            Grid::zeros(3, 1, 1),
            Grid::zeros(2, 1, 1),
            vec![false],
        )
        .unwrap();
        assert!(matches!(
            transform_correspondence(&view, &w, (4, 4)),
            Err(Error::Dimension(_))
        ));
    }
}
