use candle_core::{DType, Device, Tensor};
use layoutgen::batch::{Batch, PreparedSample};
use layoutgen::checkpoint::Checkpoint;
use layoutgen::config::RunConfig;
use layoutgen::dataset::{synth_samples, SynthConfig};
use layoutgen::networks::{NetworkConfig, Networks};
use layoutgen::conditioning::EmbedderConfig;
use layoutgen::nn::Ctx;
use layoutgen::pipeline::prepare;
use layoutgen::training::{standard_normal, Precision, Trainer};
use layoutgen::{ForegroundSet, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(variant: Variant, precision: Precision) -> RunConfig {
    let mut cfg = RunConfig::tiny();
    cfg.train.variant = variant;
    cfg.train.precision = precision;
    cfg.train.batch_size = 4;
    cfg
}

fn data(cfg: &RunConfig, n: usize, seed: u64) -> Vec<PreparedSample> {
    let synth = SynthConfig {
        image_probability: 0.5,
        ..SynthConfig::default()
    };
    prepare(cfg, &synth_samples(n, seed, &synth).unwrap()).unwrap()
}

fn trainer(cfg: &RunConfig) -> Trainer {
    Trainer::new(&cfg.train, &cfg.network, &cfg.embedder, &cfg.weights).unwrap()
}

fn noise(shape: &[usize], seed: u64, dtype: DType) -> Tensor {
    standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), shape, dtype, &Device::Cpu).unwrap()
}

#[test]
fn default_model_stays_under_five_million_parameters() {
    let (_, params) = Networks::new(
        &NetworkConfig::default(),
        &EmbedderConfig::default(),
        0,
        DType::F32,
        &Device::Cpu,
    )
    .unwrap();
    let n = params.parameter_count();
    assert!(n < 5_000_000, "{n} parameters");
    assert!(params.generator.parameter_count() > 0 && params.discriminator.parameter_count() > 0);
}

#[test]
fn generator_output_shapes_and_range() {
    let cfg = tiny(Variant::Gan, Precision::F32);
    let t = trainer(&cfg);
    let d = data(&cfg, 3, 1);
    let refs: Vec<&PreparedSample> = d.iter().collect();
    let batch = t.collate(&refs).unwrap();
    let z = noise(&[3, batch.slots, cfg.embedder.noise_dim], 0, DType::F32);
    let out = t.nets.generator.forward(&batch, &z, &Ctx::eval()).unwrap();
    assert_eq!(out.boxes.dims(), &[3, batch.slots, 4]);
    assert_eq!(out.features.dims(), &[3, batch.slots, cfg.network.model_dim]);
    let v = out.boxes.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    let layouts = t.predict(&batch, &z).unwrap();
    for (l, p) in layouts.iter().zip(&d) {
        assert_eq!(l.len(), p.len());
    }
}

#[test]
fn generator_is_permutation_equivariant() {
    let cfg = tiny(Variant::Gan, Precision::F64);
    let t = trainer(&cfg);
    let samples = synth_samples(4, 9, &SynthConfig::default()).unwrap();
    let s = samples.iter().find(|s| s.foreground.len() >= 3).unwrap();
    let enc = cfg.text_encoder().unwrap();
    let n = s.foreground.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let permuted = ForegroundSet::new(perm.iter().map(|&i| s.foreground.elements[i].clone()).collect());
    let a = PreparedSample::from_inputs("a", &s.background, &s.foreground, None, &cfg.embedder, &cfg.network, enc.as_ref()).unwrap();
    let b = PreparedSample::from_inputs("b", &s.background, &permuted, None, &cfg.embedder, &cfg.network, enc.as_ref()).unwrap();
    let z = noise(&[1, n, cfg.embedder.noise_dim], 3, DType::F64);
    let z_perm = z
        .index_select(&Tensor::new(perm.iter().map(|&i| i as u32).collect::<Vec<_>>(), &Device::Cpu).unwrap(), 1)
        .unwrap();
    let la = &t.predict(&t.collate(&[&a]).unwrap(), &z).unwrap()[0];
    let lb = &t.predict(&t.collate(&[&b]).unwrap(), &z_perm).unwrap()[0];
    for (k, &i) in perm.iter().enumerate() {
        let (x, y) = (la.boxes()[i].to_array(), lb.boxes()[k].to_array());
        for c in 0..4 {
            assert!((x[c] - y[c]).abs() < 1e-12, "slot {i}: {x:?} vs {y:?}");
        }
    }
}

#[test]
fn padding_does_not_change_real_slots() {
    let cfg = tiny(Variant::Gan, Precision::F64);
    let t = trainer(&cfg);
    let d = data(&cfg, 12, 4);
    let short = d.iter().min_by_key(|p| p.len()).unwrap();
    let long = d.iter().max_by_key(|p| p.len()).unwrap();
    assert!(long.len() > short.len());
    let nd = cfg.embedder.noise_dim;
    let z_long = noise(&[1, long.len(), nd], 5, DType::F64);
    let z_short = noise(&[1, short.len(), nd], 6, DType::F64);
    let alone = t.predict(&t.collate(&[short]).unwrap(), &z_short).unwrap();

    let pad = Tensor::zeros((1, long.len() - short.len(), nd), DType::F64, &Device::Cpu).unwrap();
    let z_short_padded = Tensor::cat(&[&z_short, &pad], 1).unwrap();
    let z = Tensor::cat(&[&z_long, &z_short_padded], 0).unwrap();
    let together = t.predict(&t.collate(&[long, short]).unwrap(), &z).unwrap();
    for (a, b) in alone[0].boxes().iter().zip(together[1].boxes()) {
        let (a, b) = (a.to_array(), b.to_array());
        for c in 0..4 {
            assert!((a[c] - b[c]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn same_seed_same_trajectory() {
    for variant in [Variant::Gan, Variant::Vae, Variant::Vaegan] {
        let cfg = tiny(variant, Precision::F32);
        let d = data(&cfg, 10, 2);
        let mut a = trainer(&cfg);
        let mut b = trainer(&cfg);
        for _ in 0..3 {
            assert_eq!(a.step(&d).unwrap(), b.step(&d).unwrap());
        }
        assert_eq!(a.params.generator.fingerprint().unwrap(), b.params.generator.fingerprint().unwrap());
        assert_eq!(
            a.params.discriminator.fingerprint().unwrap(),
            b.params.discriminator.fingerprint().unwrap()
        );
    }
}

#[test]
fn different_seed_different_weights() {
    let cfg = tiny(Variant::Gan, Precision::F32);
    let mut other = cfg.clone();
    other.train.seed = 1;
    assert_ne!(
        trainer(&cfg).params.generator.fingerprint().unwrap(),
        trainer(&other).params.generator.fingerprint().unwrap()
    );
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    for variant in [Variant::Gan, Variant::Vaegan] {
        let cfg = tiny(variant, Precision::F32);
        let d = data(&cfg, 10, 3);
        let mut straight = trainer(&cfg);
        let mut straight_losses = Vec::new();
        for _ in 0..4 {
            straight_losses.push(straight.step(&d).unwrap());
        }

        let mut first = trainer(&cfg);
        for _ in 0..2 {
            first.step(&d).unwrap();
        }
        let bytes = Checkpoint::from_trainer(&mut first, &cfg.encoders).unwrap().to_bytes().unwrap();
        let mut resumed = Checkpoint::from_bytes(&bytes).unwrap().into_trainer().unwrap();
        let mut resumed_losses = Vec::new();
        for _ in 0..2 {
            resumed_losses.push(resumed.step(&d).unwrap());
        }
        assert_eq!(&straight_losses[2..], &resumed_losses[..]);
        assert_eq!(
            straight.params.generator.fingerprint().unwrap(),
            resumed.params.generator.fingerprint().unwrap()
        );
        assert_eq!(
            straight.params.discriminator.fingerprint().unwrap(),
            resumed.params.discriminator.fingerprint().unwrap()
        );
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let cfg = tiny(Variant::Gan, Precision::F32);
    let mut t = trainer(&cfg);
    let mut bytes = Checkpoint::from_trainer(&mut t, &cfg.encoders).unwrap().to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
}

#[test]
fn vae_leaves_discriminators_alone_and_gan_trains_them() {
    let cfg = tiny(Variant::Vae, Precision::F32);
    let d = data(&cfg, 10, 5);
    let mut t = trainer(&cfg);
    let (g0, d0) = (t.params.generator.fingerprint().unwrap(), t.params.discriminator.fingerprint().unwrap());
    let step = t.step(&d).unwrap();
    assert!(step.discriminator.is_none());
    assert_ne!(t.params.generator.fingerprint().unwrap(), g0);
    assert_eq!(t.params.discriminator.fingerprint().unwrap(), d0);

    let cfg = tiny(Variant::Gan, Precision::F32);
    let mut t = trainer(&cfg);
    let d0 = t.params.discriminator.fingerprint().unwrap();
    let step = t.step(&d).unwrap();
    assert!(step.discriminator.is_some());
    assert_ne!(t.params.discriminator.fingerprint().unwrap(), d0);
}

#[test]
fn every_network_receives_updates() {
    let cfg = tiny(Variant::Vaegan, Precision::F32);
    let d = data(&cfg, 10, 6);
    assert!(d.iter().any(|p| p.elements.iter().any(|e| matches!(e, layoutgen::batch::PreparedElement::Image { .. }))));
    let mut t = trainer(&cfg);
    let snapshot = |store: &layoutgen::nn::ParamStore| -> Vec<(String, Vec<f32>)> {
        store
            .vars()
            .iter()
            .map(|(k, v)| (k.clone(), v.flatten_all().unwrap().to_vec1::<f32>().unwrap()))
            .collect()
    };
    let before_g = snapshot(&t.params.generator);
    let before_d = snapshot(&t.params.discriminator);
    let mut batch_data = d.clone();
    batch_data.truncate(10);
    let refs: Vec<&PreparedSample> = batch_data.iter().collect();
    let batch: Batch = t.collate(&refs).unwrap();
    t.step_on(&batch).unwrap();
    let changed = |before: &[(String, Vec<f32>)], store: &layoutgen::nn::ParamStore| -> Vec<String> {
        let after = snapshot(store);
        before
            .iter()
            .zip(&after)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0.clone())
            .collect()
    };
    let g = changed(&before_g, &t.params.generator);
    let dc = changed(&before_d, &t.params.discriminator);
    let top = |names: &[String]| -> std::collections::BTreeSet<String> {
        names.iter().map(|n| n.split('.').next().unwrap().to_string()).collect()
    };
    let all_top = |b: &[(String, Vec<f32>)]| -> std::collections::BTreeSet<String> {
        b.iter().map(|(n, _)| n.split('.').next().unwrap().to_string()).collect()
    };
    assert_eq!(top(&g), all_top(&before_g), "generator side");
    assert_eq!(top(&dc), all_top(&before_d), "discriminator side");
}

#[test]
fn supervised_vae_fits_a_small_set() {
    let mut cfg = tiny(Variant::Vae, Precision::F32);
    cfg.train.learning_rate = 3e-3;
    cfg.train.batch_size = 8;
    let d = data(&cfg, 8, 7);
    let mut t = trainer(&cfg);
    let first = t.step(&d).unwrap();
    let mut last = first.clone();
    for _ in 0..60 {
        last = t.step(&d).unwrap();
    }
    let key = "vae_layout_l2";
    let (a, b) = (first.details[key], last.details[key]);
    assert!(b < 0.5 * a, "{key}: {a} -> {b}");
}
