use criterion::{black_box, criterion_group, criterion_main, Criterion};
use image::{Rgb, RgbImage};
use layoutgen::config::RunConfig;
use layoutgen::dataset::{synth_samples, SynthConfig};
use layoutgen::elements::{BackgroundImage, ForegroundSet, TextClass, TextElement};
use layoutgen::geometry::{Layout, NormalizedBox};
use layoutgen::metrics::{evaluate, SurrogateLayoutEncoder};
use layoutgen::objectives::{misalignment_loss, overlap_loss};
use layoutgen::pipeline::prepare;
use layoutgen::renderer::{jitter_layout, render_design_lenient, RenderSpec};
use layoutgen::service::{design_candidates, InferenceModel};
use layoutgen::training::Trainer;

fn grid_layout(n: usize) -> Layout {
    Layout::new(
        (0..n)
            .map(|i| {
                let f = i as f64 / n as f64;
                NormalizedBox::new(0.1 + 0.8 * f, 0.3 + 0.4 * (f * 7.0).fract(), 0.08, 0.3)
            })
            .collect(),
    )
}

fn background() -> BackgroundImage {
    BackgroundImage::new(RgbImage::from_fn(512, 384, |x, y| Rgb([(x / 2 % 256) as u8, (y % 256) as u8, 96]))).unwrap()
}

fn texts() -> ForegroundSet {
    ForegroundSet::from_texts([
        TextElement::new("Autumn collection", TextClass::Header),
        TextElement::new("New arrivals every week", TextClass::Body),
        TextElement::new("Shop now", TextClass::Button),
        TextElement::new("Terms apply", TextClass::Disclaimer),
    ])
}

fn losses(c: &mut Criterion) {
    let l = grid_layout(10);
    c.bench_function("overlap_loss/10", |b| b.iter(|| overlap_loss(black_box(&l))));
    c.bench_function("misalignment_loss/10", |b| b.iter(|| misalignment_loss(black_box(&l))));
    let fake: Vec<Layout> = (0..64).map(|i| grid_layout(2 + i % 8)).collect();
    let real: Vec<Layout> = (0..64).map(|i| grid_layout(2 + (i + 3) % 8)).collect();
    let fx = SurrogateLayoutEncoder::default();
    c.bench_function("evaluate/64", |b| b.iter(|| evaluate(&fake, &real, &fx).unwrap()));
}

fn inference(c: &mut Criterion) {
    let model = InferenceModel::untrained(&RunConfig::default()).unwrap();
    let (bg, fg) = (background(), texts());
    let spec = RenderSpec::default();
    c.bench_function("generate/default/1", |b| b.iter(|| model.generate(&bg, &fg, 1, 0).unwrap()));
    c.bench_function("candidates/default/6", |b| {
        b.iter(|| design_candidates(&model, &bg, &fg, 6, 0, &spec).unwrap())
    });
    let layout = Layout::new(vec![
        NormalizedBox::new(0.2, 0.5, 0.12, 0.6),
        NormalizedBox::new(0.4, 0.5, 0.1, 0.7),
        NormalizedBox::new(0.6, 0.5, 0.08, 0.3),
        NormalizedBox::new(0.9, 0.5, 0.05, 0.6),
    ]);
    c.bench_function("jitter/4", |b| b.iter(|| jitter_layout(&layout, 0.2, 3).unwrap()));
    c.bench_function("render/512x384", |b| {
        b.iter(|| render_design_lenient(&bg, &fg, &layout, &spec).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let cfg = RunConfig::tiny();
    let data = prepare(&cfg, &synth_samples(32, 0, &SynthConfig::default()).unwrap()).unwrap();
    let mut t = Trainer::new(&cfg.train, &cfg.network, &cfg.embedder, &cfg.weights).unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    group.bench_function("tiny/gan", |b| b.iter(|| t.step(&data).unwrap()));
    group.finish();
}

criterion_group!(benches, losses, inference, training);
criterion_main!(benches);
