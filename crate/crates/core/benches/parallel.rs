//! Sequential vs rayon execution of the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use patchdps::denoiser::{crop_patch_dataset, ArchDescriptor, DenoiserModel, NoiseNet, TrainOptions, Trainer};
use patchdps::diffusion::{Schedule, ScheduleConfig};
use patchdps::exec::Execution;
use patchdps::guidance::{sample_full_map, GuidanceConfig};
use patchdps::synth::{gen_ground_truth, gen_views, scene_lighting, TextureStyle, ViewConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn schedule() -> Schedule {
    ScheduleConfig::default().build().unwrap()
}

fn guided_sampling(c: &mut Criterion) {
    let (truth, uv) = gen_ground_truth(1, (64, 64), TextureStyle::Zones).unwrap();
    let light = scene_lighting();
    let capture = ViewConfig {
        image_height: 64,
        image_width: 64,
        ..ViewConfig::default()
    };
    let views = gen_views(&truth, &uv, &light, 8, 1, &capture).unwrap();
    let model: DenoiserModel = NoiseNet::new(ArchDescriptor::default(), 0).unwrap().into();
    let sched = schedule();
    let mut group = c.benchmark_group("guided_sampling_64px_4_steps");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = GuidanceConfig {
            p: 16,
            p_pad: 4,
            stride: 250,
            execution,
            ..GuidanceConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(sample_full_map(&model, &views, &light, &uv, &sched, cfg).unwrap()))
        });
    }
    group.finish();
}

fn view_synthesis(c: &mut Criterion) {
    let (truth, uv) = gen_ground_truth(2, (128, 128), TextureStyle::Blobs).unwrap();
    let light = scene_lighting();
    let mut group = c.benchmark_group("gen_views_128px_4_views");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = ViewConfig {
            execution,
            ..ViewConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(gen_views(&truth, &uv, &light, 4, 1, cfg).unwrap()))
        });
    }
    group.finish();
}

fn training_steps(c: &mut Criterion) {
    let maps = vec![gen_ground_truth(3, (64, 64), TextureStyle::GradientNoise).unwrap()];
    let data = crop_patch_dataset(&maps, 256, 16, 0).unwrap();
    let sched = schedule();
    let mut group = c.benchmark_group("train_10_steps_batch_8");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = TrainOptions {
            steps: 10,
            execution,
            ..TrainOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| {
                let net = NoiseNet::new(ArchDescriptor::default(), 0).unwrap();
                let mut trainer = Trainer::new(net, opts.clone());
                black_box(trainer.run(&data, &sched).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, guided_sampling, view_synthesis, training_steps);
criterion_main!(benches);
