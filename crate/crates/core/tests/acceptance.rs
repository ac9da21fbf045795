//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! `cargo test --test acceptance` runs everything. Trailing arguments select
//! criteria by number, e.g. `cargo test --test acceptance -- 6 9`. Setting
//! `PATCHDPS_FREEZE_GOLDEN=1` records the regression threshold of criterion 10
//! from the current run instead of checking it.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use patchdps::denoiser::{
    crop_patch_dataset, train_denoiser, ArchDescriptor, DenoiserModel, GmmComponent, GmmPrior, NoiseNet, TrainOptions,
};
use patchdps::diffusion::{forward_sample, predict_clean, Schedule, ScheduleConfig};
use patchdps::exec;
use patchdps::guidance::{
    sample_full_map, sample_patch, sample_tiled, GuidanceConfig, LinearObjective, LossReduction, PatchObjective,
};
use patchdps::maps::{ReflectanceMap, UvCoordMap, REFL_CHANNELS};
use patchdps::metrics::{evaluate, MetricsReport};
use patchdps::render::{
    photometric_grad, photometric_loss, render_patch, render_view, transform_correspondence, CompiledViews, Lighting,
    ViewObservation,
};
use patchdps::synth::{gen_ground_truth, gen_views, scene_lighting, zone_of, ProxyGeometry, TextureStyle, ViewConfig};
use patchdps::tiler::{blend, extract, split_overlapped, PatchWindow};
use patchdps::Grid;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn schedule() -> Schedule {
    ScheduleConfig::default().build().unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn max_abs(g: &Grid) -> f64 {
    g.data().iter().fold(0.0, |m, v| m.max(v.abs()))
}

// 1
fn diffusion_round_trip() -> Outcome {
    let sched = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
        let x0 = Grid::standard_normal(REFL_CHANNELS, h, w, &mut rng);
        let noise = Grid::standard_normal(REFL_CHANNELS, h, w, &mut rng);
        let t = rng.random_range(1..=sched.len());
        let xt = forward_sample(&x0, t, &noise, &sched).unwrap();
        let back = predict_clean(&xt, &noise, &sched).unwrap();
        worst = worst.max(back.max_abs_diff(&x0) / max_abs(&x0));
    }
    Outcome::check(
        worst <= 1e-10,
        format!("max relative error {worst:.2e} over 100 (x0, t)"),
    )
}

// 2
fn gmm_score_agreement() -> Outcome {
    let sched = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = (2, 3, 3);
    let comps = (0..3)
        .map(|_| GmmComponent {
            weight: rng.random_range(0.2..1.0),
            mean: Grid::standard_normal(shape.0, shape.1, shape.2, &mut rng).scale(0.7),
            variance: rng.random_range(0.05..1.0),
        })
        .collect();
    let gmm = GmmPrior::new(comps).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.random_range(1..=sched.len());
        let ab = sched.alpha_bar(t);
        let x = Grid::standard_normal(shape.0, shape.1, shape.2, &mut rng);
        let eps = gmm.eps(&x, ab).unwrap();
        let mut fd = Grid::zeros(shape.0, shape.1, shape.2);
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let score = (gmm.log_marginal(&xp, ab) - gmm.log_marginal(&xm, ab)) / (2.0 * h);
            fd.data_mut()[i] = -(1.0 - ab).sqrt() * score;
        }
        worst = worst.max(eps.max_abs_diff(&fd) / max_abs(&fd));
    }
    Outcome::check(worst <= 1e-6, format!("max relative error {worst:.2e} at 20 (x_t, t)"))
}

// 3
fn renderer_gradient() -> Outcome {
    let size = (32, 32);
    let (map, uv) = gen_ground_truth(7, size, TextureStyle::Blobs).unwrap();
    let light = scene_lighting();
    let cfg = ViewConfig {
        image_height: 48,
        image_width: 48,
        geometry: ProxyGeometry::Parabolic { curvature: 0.3 },
        ..ViewConfig::default()
    };
    let views = gen_views(&map, &uv, &light, 4, 3, &cfg).unwrap();
    let windows = split_overlapped(size, 16, 4).unwrap();
    let window = &windows[1];
    let local: Vec<ViewObservation> = views
        .iter()
        .map(|v| transform_correspondence(v, window, size).unwrap())
        .collect();
    // Perturb away from the truth so residuals are not zero.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut patch = extract(map.grid(), window).unwrap();
    for v in patch.data_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    let cv = CompiledViews::from_local(&local, window, &light).unwrap();
    let loss = |g: &Grid| cv.loss_sum(g).unwrap() / cv.len() as f64;
    let grad = photometric_grad(&patch, window, &local, &light).unwrap();

    let (ph, pw) = window.padded_size();
    let plane = ph * pw;
    let groups: [&[usize]; 3] = [&[0, 1, 2], &[3], &[4, 5, 6]];
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut tries = 0;
    while checked < 50 {
        tries += 1;
        assert!(tries < 10_000, "too few covered texels");
        let group = groups[checked % 3];
        let ch = group[rng.random_range(0..group.len())];
        let i = ch * plane + rng.random_range(0..plane);
        if grad.data()[i].abs() < 1e-9 {
            continue;
        }
        let mut xp = patch.clone();
        let mut xm = patch.clone();
        xp.data_mut()[i] += h;
        xm.data_mut()[i] -= h;
        let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
        worst = worst.max(rel_err(grad.data()[i], fd));
        checked += 1;
    }
    Outcome::check(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} on 50 texels across c, s, n"),
    )
}

// 4
fn patch_render_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let styles = [TextureStyle::Zones, TextureStyle::Blobs, TextureStyle::GradientNoise];
    let light = scene_lighting();
    let mut worst: f64 = 0.0;
    let mut missing = 0usize;
    let mut pixels = 0usize;
    for scene in 0..10 {
        let size = (rng.random_range(24..=64), rng.random_range(24..=64));
        let (map, uv) = gen_ground_truth(rng.random(), size, styles[scene % 3]).unwrap();
        let cfg = ViewConfig {
            image_height: 40,
            image_width: 40,
            geometry: if scene % 2 == 0 {
                ProxyGeometry::Plane
            } else {
                ProxyGeometry::Parabolic { curvature: 0.4 }
            },
            ..ViewConfig::default()
        };
        let views = gen_views(&map, &uv, &light, 3, rng.random(), &cfg).unwrap();
        let p = rng.random_range(8..=size.0.min(size.1));
        // Every pixel's 2x2 taps fit in some padded window once p_pad >= 1.
        let p_pad = rng.random_range(1..=8);
        let windows = split_overlapped(size, p, p_pad).unwrap();
        for view in &views {
            let full = render_view(&map, view, &light).unwrap();
            let mut assembled = Grid::zeros(3, view.height(), view.width());
            let mut seen = vec![false; view.pixel_count()];
            for w in &windows {
                let patch = extract(map.grid(), w).unwrap();
                let (img, mask) = render_patch(&patch, w, view, &light).unwrap();
                let n = view.pixel_count();
                for (i, &m) in mask.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    for c in 0..3 {
                        let v = img.data()[c * n + i];
                        if seen[i] {
                            // Overlapping windows must agree with each other.
                            worst = worst.max((assembled.data()[c * n + i] - v).abs());
                        }
                        assembled.data_mut()[c * n + i] = v;
                    }
                    seen[i] = true;
                }
            }
            for (&covered, &got) in view.mask.iter().zip(&seen) {
                if covered {
                    pixels += 1;
                    missing += usize::from(!got);
                }
            }
            worst = worst.max(assembled.max_abs_diff(&full));
        }
    }
    Outcome::check(
        worst <= 1e-6 && missing == 0,
        format!("max difference {worst:.2e}, {missing} of {pixels} covered pixels unassembled"),
    )
}

// 5
fn blend_partition_of_unity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = vec![((130, 130), 32, 8), ((130, 130), 32, 0), ((97, 61), 13, 5)];
    for _ in 0..20 {
        let size = (rng.random_range(8..=96), rng.random_range(8..=96));
        let p = rng.random_range(1..=size.0.min(size.1));
        cases.push((size, p, rng.random_range(0..=12)));
    }
    let mut worst: f64 = 0.0;
    for &(size, p, p_pad) in &cases {
        let x = Grid::standard_normal(REFL_CHANNELS, size.0, size.1, &mut rng);
        let windows = split_overlapped(size, p, p_pad).unwrap();
        let patches: Vec<Grid> = windows.iter().map(|w| extract(&x, w).unwrap()).collect();
        let once = blend(&patches, &windows, size).unwrap();
        let patches: Vec<Grid> = windows.iter().map(|w| extract(&once, w).unwrap()).collect();
        let twice = blend(&patches, &windows, size).unwrap();
        worst = worst.max(once.max_abs_diff(&x)).max(twice.max_abs_diff(&once));
    }
    Outcome::check(
        worst <= 1e-12,
        format!(
            "max deviation {worst:.2e} over {} tilings incl. 130x130 p=32",
            cases.len()
        ),
    )
}

// 6
fn conjugate_posterior() -> Outcome {
    // x ~ N(0, 1), y = a x + sigma n; the posterior mode is
    // (a y / sigma^2) / (a^2 / sigma^2 + 1).
    let (a, sigma, x_true) = (2.0, 0.1, 0.8);
    let gmm = GmmPrior::single(Grid::zeros(1, 1, 1), 1.0).unwrap();
    let model = DenoiserModel::AnalyticGmm(gmm);
    let sched = schedule();
    let window = PatchWindow::whole(1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let y = a * x_true + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let mode = (a * y / (sigma * sigma)) / (a * a / (sigma * sigma) + 1.0);
        let obj = LinearObjective {
            gain: a,
            target: Grid::filled(1, 1, 1, y),
        };
        let cfg = GuidanceConfig {
            zeta_prime: 0.005,
            stride: 1,
            seed,
            p: 1,
            p_pad: 0,
            // The toy variable is not confined to [-1, 1].
            clip_estimate: false,
            reduction: LossReduction::Sum,
            ..GuidanceConfig::default()
        };
        let objs: [&dyn PatchObjective; 1] = [&obj];
        let out = sample_tiled(
            &model,
            1,
            std::slice::from_ref(&window),
            &objs,
            None,
            &sched,
            &cfg,
            |_| {},
        )
        .unwrap();
        let e = rel_err(out.x0.data()[0], mode);
        total += e;
        worst = worst.max(e);
    }
    let mean = total / 100.0;
    Outcome::check(
        mean <= 0.05,
        format!("mean relative error {mean:.4} to the posterior mode over 100 seeds (worst {worst:.4})"),
    )
}

/// The fixed synthetic scene, prior and sampler settings behind criteria
/// 7, 8 and 10.
struct Golden {
    truth: ReflectanceMap,
    uv: UvCoordMap,
    views: Vec<ViewObservation>,
    light: Lighting,
    model: DenoiserModel,
    sched: Schedule,
    train_loss: f64,
    train_secs: f64,
}

const GOLDEN_STEPS: usize = 3000;
const GOLDEN_PATCH: usize = 16;
const GOLDEN_PATCHES: usize = 2000;

fn golden_guidance(zeta_prime: f64, p_pad: usize) -> GuidanceConfig {
    GuidanceConfig {
        zeta_prime,
        p: 32,
        p_pad,
        stride: 10,
        seed: 3,
        ..GuidanceConfig::default()
    }
}

fn golden_train_options() -> TrainOptions {
    TrainOptions {
        steps: GOLDEN_STEPS,
        ..TrainOptions::default()
    }
}

static GOLDEN: OnceLock<Golden> = OnceLock::new();

fn golden() -> &'static Golden {
    GOLDEN.get_or_init(|| {
        let styles = [TextureStyle::Zones, TextureStyle::Blobs, TextureStyle::GradientNoise];
        let maps: Vec<_> = (0..6u64)
            .map(|s| gen_ground_truth(100 + s, (128, 128), styles[s as usize % 3]).unwrap())
            .collect();
        let ds = crop_patch_dataset(&maps, GOLDEN_PATCHES, GOLDEN_PATCH, 7).unwrap();
        let sched = schedule();
        let t0 = Instant::now();
        let (net, rep) = train_denoiser(&ds, &ArchDescriptor::default(), &sched, &golden_train_options()).unwrap();
        let train_secs = t0.elapsed().as_secs_f64();
        let (truth, uv) = gen_ground_truth(1, (128, 128), TextureStyle::Zones).unwrap();
        let light = scene_lighting();
        let views = gen_views(&truth, &uv, &light, 20, 1, &ViewConfig::default()).unwrap();
        Golden {
            truth,
            uv,
            views,
            light,
            model: net.into(),
            sched,
            train_loss: rep.final_loss,
            train_secs,
        }
    })
}

impl Golden {
    fn model_params(&self) -> usize {
        match &self.model {
            DenoiserModel::Trained(n) => n.param_count(),
            DenoiserModel::AnalyticGmm(_) => 0,
        }
    }
}

struct GoldenRun {
    map: ReflectanceMap,
    report: MetricsReport,
    loss: f64,
    secs: f64,
}

fn golden_run(cfg: &GuidanceConfig) -> GoldenRun {
    let g = golden();
    let t0 = Instant::now();
    let (map, _) = sample_full_map(&g.model, &g.views, &g.light, &g.uv, &g.sched, cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    GoldenRun {
        report: evaluate(&map, &g.truth, cfg.p).unwrap(),
        loss: photometric_loss(&map, &g.views, &g.light).unwrap(),
        map,
        secs,
    }
}

const ZETAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

/// Golden runs at p_pad = 8 for each entry of `ZETAS`.
fn zeta_sweep() -> &'static [GoldenRun] {
    static S: OnceLock<Vec<GoldenRun>> = OnceLock::new();
    S.get_or_init(|| ZETAS.iter().map(|&z| golden_run(&golden_guidance(z, 8))).collect())
}

fn unpadded_run() -> &'static GoldenRun {
    static R: OnceLock<GoldenRun> = OnceLock::new();
    R.get_or_init(|| golden_run(&golden_guidance(1.0, 0)))
}

// 7
fn seam_inequality() -> Outcome {
    let padded = &zeta_sweep()[2];
    let bare = unpadded_run();
    let (s8, s0) = (padded.report.seam, bare.report.seam);
    Outcome::check(
        s8 < s0,
        format!(
            "seam p_pad=8 {s8:.5} vs p_pad=0 {s0:.5}, ratio {:.3} (zeta'=1, 100 DDIM steps)",
            s8 / s0
        ),
    )
}

// 8
fn zeta_monotonicity() -> Outcome {
    let losses: Vec<f64> = zeta_sweep().iter().map(|r| r.loss).collect();
    let ok = losses.windows(2).all(|w| w[1] <= w[0]);
    let secs: f64 = zeta_sweep().iter().map(|r| r.secs).sum();
    let shown: Vec<String> = ZETAS.iter().zip(&losses).map(|(z, l)| format!("{z}:{l:.5}")).collect();
    Outcome::check(
        ok,
        format!("final L_pho by zeta' {} ({secs:.0}s sampling)", shown.join(" ")),
    )
}

// 9
fn uv_ablation() -> Outcome {
    let size = (64, 64);
    let maps: Vec<_> = (0..6u64)
        .map(|s| gen_ground_truth(300 + s, size, TextureStyle::Zones).unwrap())
        .collect();
    // Zone mean diffuse color over all training maps.
    let mut truth = [[0.0; 3]; 2];
    let mut counts = [0usize; 2];
    for (m, uv) in &maps {
        for r in 0..size.0 {
            for c in 0..size.1 {
                let z = zone_of(uv.grid().get(0, r, c));
                for (k, t) in truth[z].iter_mut().enumerate() {
                    *t += m.grid().get(k, r, c);
                }
                counts[z] += 1;
            }
        }
    }
    for z in 0..2 {
        for t in &mut truth[z] {
            *t /= counts[z] as f64;
        }
    }
    let ds = crop_patch_dataset(&maps, 2000, 16, 9).unwrap();
    let sched = schedule();
    let opts = TrainOptions {
        steps: 2000,
        ..TrainOptions::default()
    };
    let arch_uv = ArchDescriptor::default();
    let arch_plain = ArchDescriptor {
        pe_bands: None,
        ..ArchDescriptor::default()
    };
    let cfg = GuidanceConfig {
        stride: 20,
        ..GuidanceConfig::default()
    };
    // Crops lying entirely inside one zone: columns 0..32 and 32..64.
    let origins = [
        [(0, 0), (16, 8), (32, 16), (48, 4)],
        [(0, 32), (16, 40), (32, 48), (48, 36)],
    ];
    let zone_error = |net: NoiseNet| -> f64 {
        let model: DenoiserModel = net.into();
        let mut err = 0.0;
        for (z, zone_origins) in origins.iter().enumerate() {
            let mut mean = [0.0; 3];
            let mut n = 0usize;
            for (k, &origin) in zone_origins.iter().enumerate() {
                for rep in 0..2u64 {
                    let uv = UvCoordMap::for_crop(size, origin, (16, 16));
                    let cfg = GuidanceConfig {
                        seed: 1000 * z as u64 + 10 * k as u64 + rep,
                        ..cfg.clone()
                    };
                    let s = sample_patch(&model, &uv, &sched, &cfg).unwrap();
                    for (ch, m) in mean.iter_mut().enumerate() {
                        *m += s.grid().plane(ch).iter().sum::<f64>();
                    }
                    n += 256;
                }
            }
            let d2: f64 = (0..3).map(|ch| (mean[ch] / n as f64 - truth[z][ch]).powi(2)).sum();
            err += d2.sqrt() / 2.0;
        }
        err
    };
    let (with_uv, _) = train_denoiser(&ds, &arch_uv, &sched, &opts).unwrap();
    let (without_uv, _) = train_denoiser(&ds, &arch_plain, &sched, &opts).unwrap();
    let e_uv = zone_error(with_uv);
    let e_plain = zone_error(without_uv);
    let ratio = e_plain / e_uv;
    Outcome::check(
        ratio >= 2.0,
        format!("zone mean color error conditioned {e_uv:.4}, unconditioned {e_plain:.4}, ratio {ratio:.2}"),
    )
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/psnr_threshold.json")
}

/// Everything that determines the golden reconstruction.
fn golden_manifest() -> Value {
    json!({
        "scene": {
            "generator": "gen_ground_truth", "seed": 1, "size": [128, 128], "style": TextureStyle::Zones,
            "views": 20, "view_seed": 1, "capture": ViewConfig::default(), "lighting": "scene_lighting",
        },
        "prior": {
            "arch": ArchDescriptor::default(),
            "schedule": ScheduleConfig::default(),
            "train": golden_train_options(),
            "dataset": {
                "maps": 6, "map_seeds": "100..106", "map_size": [128, 128],
                "styles": ["zones", "blobs", "gradient_noise"], "patches": GOLDEN_PATCHES,
                "patch_size": GOLDEN_PATCH, "crop_seed": 7,
            },
        },
        "guidance": golden_guidance(1.0, 8),
        "metric": "psnr_all over seven channels, normals mapped to [0, 1]",
    })
}

/// Margin below the first validated PSNR, to absorb libm differences
/// between platforms.
const FREEZE_MARGIN_DB: f64 = 0.1;

// 10
fn end_to_end_regression() -> Outcome {
    let first = &zeta_sweep()[2];
    let cfg = golden_guidance(1.0, 8);
    let one = exec::with_threads(1, || golden_run(&cfg));
    let two = exec::with_threads(2, || golden_run(&cfg));
    let identical = first.map.grid().data() == one.map.grid().data() && one.map.grid().data() == two.map.grid().data();
    let psnr = first.report.psnr_all;

    if std::env::var_os("PATCHDPS_FREEZE_GOLDEN").is_some() {
        let threshold = ((psnr - FREEZE_MARGIN_DB) * 100.0).floor() / 100.0;
        let g = golden();
        let record = json!({
            "threshold_psnr_db": threshold,
            "first_run_psnr_db": psnr,
            "margin_db": FREEZE_MARGIN_DB,
            "first_run": {
                "train_final_loss": g.train_loss,
                "photometric_loss": first.loss,
                "seam": first.report.seam,
                "groups": first.report.groups,
            },
            "manifest": golden_manifest(),
        });
        std::fs::write(golden_path(), serde_json::to_string_pretty(&record).unwrap() + "\n").unwrap();
        return Outcome::check(
            identical,
            format!("recorded threshold {threshold:.2} dB from PSNR {psnr:.4} dB"),
        );
    }

    let record: Value = match std::fs::read_to_string(golden_path()) {
        Ok(s) => serde_json::from_str(&s).unwrap(),
        Err(e) => {
            return Outcome::check(
                false,
                format!("no frozen threshold ({e}); set PATCHDPS_FREEZE_GOLDEN=1"),
            )
        }
    };
    if record["manifest"] != golden_manifest() {
        return Outcome::check(false, "golden manifest changed since the threshold was frozen");
    }
    let threshold = record["threshold_psnr_db"].as_f64().unwrap();
    Outcome::check(
        psnr > threshold && identical,
        format!(
            "PSNR {psnr:.4} dB vs threshold {threshold:.2} dB; bit-identical across runs and 1/2 threads: {identical}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "diffusion round trip",
            budget: Duration::from_secs(1),
            run: diffusion_round_trip,
        },
        Criterion {
            id: 2,
            name: "analytic score agreement",
            budget: Duration::from_secs(10),
            run: gmm_score_agreement,
        },
        Criterion {
            id: 3,
            name: "renderer gradient check",
            budget: Duration::from_secs(30),
            run: renderer_gradient,
        },
        Criterion {
            id: 4,
            name: "patch render equivalence",
            budget: Duration::from_secs(30),
            run: patch_render_equivalence,
        },
        Criterion {
            id: 5,
            name: "blend partition of unity",
            budget: Duration::from_secs(5),
            run: blend_partition_of_unity,
        },
        Criterion {
            id: 6,
            name: "conjugate gaussian posterior",
            budget: Duration::from_secs(60),
            run: conjugate_posterior,
        },
        Criterion {
            id: 7,
            name: "seam inequality",
            budget: Duration::from_secs(1800),
            run: seam_inequality,
        },
        Criterion {
            id: 8,
            name: "zeta' monotonicity",
            budget: Duration::from_secs(1800),
            run: zeta_monotonicity,
        },
        Criterion {
            id: 9,
            name: "uv condition ablation",
            budget: Duration::from_secs(3600),
            run: uv_ablation,
        },
        Criterion {
            id: 10,
            name: "end-to-end regression",
            budget: Duration::from_secs(1800),
            run: end_to_end_regression,
        },
    ];
    // Ignore harness flags such as --nocapture; numbers select criteria.
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::check(false, format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = outcome.pass && in_budget;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {}: {} | {} | {:.2}s of {}s{}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            outcome.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { " (over budget)" },
        );
    }
    if let Some(g) = GOLDEN.get() {
        println!(
            "golden prior: {} params, final training loss {:.4}, trained in {:.1}s",
            g.model_params(),
            g.train_loss,
            g.train_secs
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
