use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::json;

use patchdps::denoiser::{crop_patch_dataset, DenoiserModel, NoiseNet, TrainOptions, Trainer};
use patchdps::diffusion::{Schedule, ScheduleConfig};
use patchdps::grid::Grid;
use patchdps::guidance::{
    check_compatibility, check_patch_compatibility, sample_full_map_with, sample_patch, GuidanceConfig,
};
use patchdps::io::{
    decode_state, encode_state, load_checkpoint, load_dataset, load_map, load_views, save_checkpoint, save_dataset,
    save_map, save_views, CheckpointHeader, OptimizerState,
};
use patchdps::maps::{ReflectanceMap, UvCoordMap, CHANNEL_NAMES, REFL_CHANNELS, UV_NAMES};
use patchdps::metrics::evaluate;
use patchdps::render::photometric_loss;
use patchdps::synth::{gen_ground_truth, gen_views, scene_lighting, texel_coverage, TextureStyle};
use patchdps::tiler::split_overlapped;

use crate::config::{self, EvalConfig, GenDataConfig, ReconstructConfig, SamplePatchesConfig, TrainConfig};
use crate::failure::{CliResult, Context, Failure};
use crate::manifest::Manifest;
use crate::preview::save_previews;
use crate::GuidanceFlags;

pub const TRUTH_FILE: &str = "truth.mch";
pub const UV_FILE: &str = "uv.mch";
pub const VIEWS_DIR: &str = "views";
pub const DATASET_DIR: &str = "dataset";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "optimizer.state";
pub const LOSS_FILE: &str = "loss.tsv";
pub const RECON_FILE: &str = "reconstruction.mch";
pub const TRACE_FILE: &str = "trace.tsv";

fn create_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out.display())))
}

fn load_reflectance(path: &Path) -> CliResult<ReflectanceMap> {
    if !path.is_file() {
        return Err(Failure::validation(format!("{}: no such file", path.display())));
    }
    let (g, _) = load_map(path).at(path)?;
    ReflectanceMap::new(g).at(path)
}

/// Schedule recorded by `train`, or the default one for older checkpoints.
fn checkpoint_schedule(header: &CheckpointHeader) -> CliResult<Schedule> {
    let cfg = match header.extra.get("schedule") {
        Some(v) => serde_json::from_value::<ScheduleConfig>(v.clone())
            .map_err(|e| Failure::validation(format!("checkpoint schedule: {e}")))?,
        None => ScheduleConfig::default(),
    };
    Ok(cfg.build()?)
}

fn load_model(path: &Path) -> CliResult<(DenoiserModel, CheckpointHeader)> {
    if !path.is_file() {
        return Err(Failure::validation(format!(
            "checkpoint {}: no such file",
            path.display()
        )));
    }
    let (net, header) = load_checkpoint(path).at(path)?;
    Ok((net.into(), header))
}

pub fn gen_data(path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: GenDataConfig = config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let n = cfg.scene.size;
    let (truth, uv) = gen_ground_truth(cfg.seed, (n, n), cfg.scene.style)?;
    let lighting = scene_lighting();
    let views = gen_views(&truth, &uv, &lighting, cfg.scene.views, cfg.seed, &cfg.scene.capture)?;

    let map_size = cfg.dataset.map_size.unwrap_or(n);
    let styles = [TextureStyle::Zones, TextureStyle::Blobs, TextureStyle::GradientNoise];
    let train_seeds: Vec<u64> = (0..cfg.dataset.maps as u64).map(|i| cfg.seed + 100 + i).collect();
    let maps = train_seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| gen_ground_truth(s, (map_size, map_size), styles[i % styles.len()]))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = crop_patch_dataset(&maps, cfg.dataset.patches, cfg.dataset.patch_size, cfg.seed)?;

    create_out(out)?;
    save_map(&out.join(TRUTH_FILE), truth.grid(), &CHANNEL_NAMES)?;
    save_map(&out.join(UV_FILE), uv.grid(), &UV_NAMES)?;
    save_views(&out.join(VIEWS_DIR), &views, &lighting)?;
    save_dataset(&out.join(DATASET_DIR), &ds)?;
    save_previews(&truth, out, "truth")?;

    let cover = texel_coverage(&views, (n, n));
    let seen = cover.iter().filter(|&&k| k > 0).count() as f64 / cover.len() as f64;
    info!(
        "scene {n}x{n}, {} views, {} patches of {}",
        views.len(),
        ds.len(),
        ds.patch_size
    );
    let mut m = Manifest::new("gen-data", cfg.seed, &cfg);
    m.details = json!({
        "views": views.len(),
        "patches": ds.len(),
        "patch_size": ds.patch_size,
        "texel_coverage": seen,
        "training_map_seeds": train_seeds,
    });
    m.finish(out)?;
    Ok(())
}

/// Accepts either a `gen-data` output directory or the dataset directory.
fn dataset_dir(p: PathBuf) -> PathBuf {
    if p.join(DATASET_DIR).join("index.json").is_file() {
        p.join(DATASET_DIR)
    } else {
        p
    }
}

fn loss_table(first: usize, losses: &[f64], rows: usize) -> String {
    let mut s = format!("{:>8} {:>12}\n", "step", "loss");
    if losses.is_empty() {
        return s;
    }
    let every = losses.len().div_ceil(rows).max(1);
    for (k, l) in losses.iter().enumerate() {
        if k % every == 0 || k + 1 == losses.len() {
            s += &format!("{:>8} {:>12.6}\n", first + k, l);
        }
    }
    s
}

pub fn train(path: &Path, out: &Path, seed: Option<u64>, resume: Option<&Path>) -> CliResult<()> {
    let mut cfg: TrainConfig = config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = dataset_dir(config::resolve(path, &cfg.dataset));
    if !dir.join("index.json").is_file() {
        return Err(Failure::validation(format!("dataset not found at {}", dir.display())));
    }
    let arch = cfg.arch.descriptor();
    arch.validate()?;
    let sched = cfg.schedule.build()?;
    let ds = load_dataset(&dir).at(&dir)?;
    let opts = TrainOptions {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        grad_clip: (cfg.grad_clip > 0.0).then_some(cfg.grad_clip),
        ..TrainOptions::default()
    };
    let mut trainer = match resume {
        Some(prev) => {
            let (_, header) = load_checkpoint(&prev.join(CHECKPOINT_FILE)).at(prev)?;
            if header.arch != arch {
                return Err(Failure::validation(format!(
                    "{}: checkpoint architecture differs from the config",
                    prev.display()
                )));
            }
            let state_path = prev.join(STATE_FILE);
            let bytes = std::fs::read(&state_path).at(&state_path)?;
            let st = decode_state(&bytes).at(&state_path)?;
            let net = NoiseNet::from_params(arch.clone(), st.params)?;
            info!("resuming at step {}", st.step);
            Trainer::resume(net, st.m, st.v, st.step, opts)?
        }
        None => Trainer::new(NoiseNet::new(arch.clone(), cfg.seed)?, opts),
    };
    let total = cfg.steps;
    let every = (total / 20).max(1);
    let report = trainer.run_with(&ds, &sched, |step, loss| {
        if (step + 1) % every == 0 {
            info!("step {}/{total} loss {loss:.5}", step + 1);
        }
    })?;

    create_out(out)?;
    let header = CheckpointHeader {
        arch: arch.clone(),
        param_count: trainer.net().param_count(),
        patch_size: ds.patch_size,
        steps: trainer.step_count(),
        final_loss: report.final_loss,
        extra: json!({ "seed": cfg.seed, "schedule": cfg.schedule }),
    };
    save_checkpoint(&out.join(CHECKPOINT_FILE), trainer.net(), &header)?;
    let (m1, v1) = trainer.moments();
    let state = OptimizerState {
        step: trainer.step_count(),
        params: trainer.net().params().to_vec(),
        m: m1.to_vec(),
        v: v1.to_vec(),
    };
    std::fs::write(out.join(STATE_FILE), encode_state(&state)?)?;
    let mut tsv = String::from("step\tloss\n");
    for (k, l) in report.losses.iter().enumerate() {
        tsv += &format!("{}\t{l:.9e}\n", report.first_step + k);
    }
    std::fs::write(out.join(LOSS_FILE), tsv)?;
    print!("{}", loss_table(report.first_step, &report.losses, 10));
    println!("final loss {:.6}", report.final_loss);

    let mut m = Manifest::new("train", cfg.seed, &cfg);
    m.add_inputs(&[&dir])?;
    if let Some(prev) = resume {
        m.add_inputs(&[&prev.join(CHECKPOINT_FILE), &prev.join(STATE_FILE)])?;
    }
    m.details = json!({
        "param_count": header.param_count,
        "patch_size": ds.patch_size,
        "first_step": report.first_step,
        "steps": header.steps,
        "final_loss": report.final_loss,
        "resumed": resume.is_some(),
    });
    m.finish(out)?;
    Ok(())
}

fn apply_flags(g: &mut GuidanceConfig, f: &GuidanceFlags, seed: Option<u64>) {
    if let Some(v) = f.zeta_prime {
        g.zeta_prime = v;
    }
    if let Some(v) = f.p {
        g.p = v;
    }
    if let Some(v) = f.p_pad {
        g.p_pad = v;
    }
    if let Some(v) = f.stride {
        g.stride = v;
    }
    if let Some(v) = f.sampler {
        g.sampler = v.into();
    }
    if let Some(v) = f.vjp_mode {
        g.vjp_mode = v.into();
    }
    if let Some(s) = seed {
        g.seed = s;
    }
}

pub fn reconstruct(path: &Path, out: &Path, seed: Option<u64>, flags: &GuidanceFlags, dry_run: bool) -> CliResult<()> {
    let mut cfg: ReconstructConfig = config::load(path)?;
    apply_flags(&mut cfg.guidance, flags, seed);
    let g = cfg.guidance.clone();
    // Size-independent checks; the map fit is checked once the scene is known.
    g.validate((usize::MAX, usize::MAX))?;
    let p_plus = g.p + 2 * g.p_pad;
    let scene = config::resolve(path, &cfg.scene);
    let ckpt = config::resolve(path, &cfg.checkpoint);
    let (model, header) = load_model(&ckpt)?;
    check_patch_compatibility(header.patch_size, &g)?;
    let sched = checkpoint_schedule(&header)?;

    let uv_path = scene.join(UV_FILE);
    if !uv_path.is_file() {
        return Err(Failure::validation(format!(
            "scene {}: missing {UV_FILE}",
            scene.display()
        )));
    }
    let (uv, _) = load_map(&uv_path).at(&uv_path)?;
    let uv = UvCoordMap::new(uv).at(&uv_path)?;
    let size = (uv.height(), uv.width());
    let steps = sched.respaced(g.stride)?.len();
    let mut m = Manifest::new("reconstruct", g.seed, &cfg);
    m.add_inputs(&[&ckpt, &uv_path])?;
    if dry_run {
        if p_plus > size.0.min(size.1) {
            warn!("padded tile {p_plus} exceeds the {}x{} scene", size.0, size.1);
        }
        create_out(out)?;
        m.details = json!({ "dry_run": true, "p_plus": p_plus, "sampling_steps": steps });
        m.finish(out)?;
        println!("p_plus {p_plus}");
        return Ok(());
    }
    check_compatibility(&model, &g, size)?;
    let views_dir = scene.join(VIEWS_DIR);
    let (views, lighting) = load_views(&views_dir).at(&views_dir)?;
    m.add_inputs(&[&views_dir])?;
    let windows = split_overlapped(size, g.p, g.p_pad)?.len();
    info!("{} windows, {steps} steps, zeta' {}", windows, g.zeta_prime);
    let (recon, sample) = sample_full_map_with(&model, &views, &lighting, &uv, &sched, &g, |r| {
        if r.t % 10 == 0 {
            info!("t={} loss={:?}", r.t, r.mean_loss);
        }
    })?;
    let l_pho = photometric_loss(&recon, &views, &lighting)?;

    create_out(out)?;
    save_map(&out.join(RECON_FILE), recon.grid(), &CHANNEL_NAMES)?;
    save_previews(&recon, out, "reconstruction")?;
    let mut tsv = String::from("t\tmodel_t\tmean_loss\tguided_windows\n");
    for r in &sample.trace {
        let l = r.mean_loss.map_or("nan".to_string(), |v| format!("{v:.9e}"));
        tsv += &format!("{}\t{}\t{l}\t{}\n", r.t, r.model_t, r.guided_windows);
    }
    std::fs::write(out.join(TRACE_FILE), tsv)?;
    let truth = scene.join(TRUTH_FILE);
    let metrics = if truth.is_file() {
        let t = load_reflectance(&truth)?;
        Some(evaluate(&recon, &t, g.p)?)
    } else {
        None
    };
    if let Some(r) = &metrics {
        print!("{}", r.table());
    }
    println!("final photometric loss {l_pho:.6e}");
    m.details = json!({
        "p_plus": p_plus,
        "windows": windows,
        "sampling_steps": steps,
        "final_photometric_loss": l_pho,
        "metrics": metrics,
        "loss_trace": sample.trace,
    });
    m.finish(out)?;
    Ok(())
}

pub fn eval(path: &Path, out: &Path) -> CliResult<()> {
    let cfg: EvalConfig = config::load(path)?;
    let recon_path = config::resolve(path, &cfg.reconstruction);
    let truth_path = config::resolve(path, &cfg.truth);
    let recon = load_reflectance(&recon_path)?;
    let truth = load_reflectance(&truth_path)?;
    let report = evaluate(&recon, &truth, cfg.tile)?;
    let table = report.table();
    print!("{table}");
    create_out(out)?;
    std::fs::write(out.join("metrics.txt"), &table)?;
    let js = serde_json::to_string_pretty(&report).expect("metrics serialize");
    std::fs::write(out.join("metrics.json"), js + "\n")?;
    let mut m = Manifest::new("eval", 0, &cfg);
    m.add_inputs(&[&recon_path, &truth_path])?;
    m.details = serde_json::to_value(&report).unwrap_or_default();
    m.finish(out)?;
    Ok(())
}

/// Crop origins on an even raster over the map.
fn raster_origins(count: usize, patch: usize, map: usize) -> Vec<(usize, usize)> {
    let per_row = (count as f64).sqrt().ceil().max(1.0) as usize;
    let span = map - patch;
    let at = |k: usize| {
        if per_row > 1 {
            k * span / (per_row - 1)
        } else {
            span / 2
        }
    };
    (0..count).map(|i| (at(i / per_row), at(i % per_row))).collect()
}

pub fn sample_patches(path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: SamplePatchesConfig = config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.count == 0 || cfg.patch_size == 0 || cfg.patch_size > cfg.map_size {
        return Err(Failure::validation(format!(
            "need count >= 1 and 1 <= patch_size <= map_size, got {}, {}, {}",
            cfg.count, cfg.patch_size, cfg.map_size
        )));
    }
    let ckpt = config::resolve(path, &cfg.checkpoint);
    let (model, header) = load_model(&ckpt)?;
    let sched = checkpoint_schedule(&header)?;
    let p = cfg.patch_size;
    let origins = raster_origins(cfg.count, p, cfg.map_size);
    let per_row = (cfg.count as f64).sqrt().ceil() as usize;
    let rows = cfg.count.div_ceil(per_row);
    let mut stacked = Grid::zeros(REFL_CHANNELS, p * cfg.count, p);
    let mut sheet = ReflectanceMap::constant(rows * p, per_row * p, [0.0; 3], 0.0, [0.0, 0.0, 1.0]).into_grid();
    for (i, &origin) in origins.iter().enumerate() {
        let uv = UvCoordMap::for_crop((cfg.map_size, cfg.map_size), origin, (p, p));
        let g = GuidanceConfig {
            stride: cfg.stride,
            p,
            p_pad: 0,
            seed: cfg.seed.wrapping_add(i as u64),
            ..GuidanceConfig::default()
        };
        let patch = sample_patch(&model, &uv, &sched, &g)?;
        stacked.paste(patch.grid(), i * p, 0)?;
        sheet.paste(patch.grid(), (i / per_row) * p, (i % per_row) * p)?;
    }
    create_out(out)?;
    save_map(&out.join("patches.mch"), &stacked, &CHANNEL_NAMES)?;
    save_previews(&ReflectanceMap::new(sheet)?, out, "patches")?;
    let mut m = Manifest::new("sample-patches", cfg.seed, &cfg);
    m.add_inputs(&[&ckpt])?;
    m.details = json!({ "origins": origins });
    m.finish(out)?;
    Ok(())
}
