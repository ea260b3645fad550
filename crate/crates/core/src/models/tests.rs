use super::*;
use crate::audio::Label;
use crate::features::{FeatureKind, FeatureRecord};

fn small(arch: Arch) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch).with_seed(3);
    cfg.cnn_channels = vec![4, 4, 8, 8, 8, 8];
    cfg.vit_layers = 2;
    cfg.vit_embed_dim = 16;
    cfg.vit_mlp_dim = 32;
    if let Some(q) = cfg.qv.as_mut() {
        q.filters = 4;
    }
    cfg
}

fn image(seed: u64) -> FeatureImage {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureImage::new(data, 32, 32, 1, FeatureKind::Mel).unwrap()
}

fn records(n: usize) -> Vec<FeatureRecord> {
    (0..n)
        .map(|i| FeatureRecord {
            label: if i % 2 == 0 {
                Label::Bonafide
            } else {
                Label::Spoof
            },
            image: image(i as u64),
        })
        .collect()
}

#[test]
fn logits_shape_every_arch() {
    for arch in Arch::ALL {
        let model = Model::build(small(arch)).unwrap();
        let imgs: Vec<FeatureImage> = (0..3).map(image).collect();
        let refs: Vec<&FeatureImage> = imgs.iter().collect();
        let x = Var::constant(images_to_tensor(&refs, (32, 32, 1)).unwrap());
        let z = model.forward(&x, false).unwrap();
        assert_eq!(z.shape(), vec![3, 2], "{arch}");
        assert_eq!(model.score(&refs).unwrap().len(), 3);
    }
}

#[test]
fn vit_token_count() {
    let cfg = small(Arch::Vit);
    assert_eq!(VitBody::num_tokens(&cfg) + 1, 17);
    let model = Model::build(cfg).unwrap();
    let Body::Vit(body) = &model.body else {
        unreachable!()
    };
    let x = Var::constant(Tensor::zeros(&[2, 1, 32, 32]));
    assert_eq!(body.tokens(&x).unwrap().shape(), vec![2, 17, 16]);

    let mut ch = small(Arch::QvVit);
    ch.token_mode = TokenMode::Channel;
    assert_eq!(VitBody::num_tokens(&ch), 4);
    let model = Model::build(ch).unwrap();
    let imgs = [image(0), image(1)];
    assert_eq!(model.score(&[&imgs[0], &imgs[1]]).unwrap().len(), 2);
}

#[test]
fn seeded_builds_match() {
    let a = Model::build(small(Arch::QvCnn)).unwrap();
    let b = Model::build(small(Arch::QvCnn)).unwrap();
    let c = Model::build(small(Arch::QvCnn).with_seed(4)).unwrap();
    let (pa, pb, pc) = (a.params(), b.params(), c.params());
    let mut names = std::collections::HashSet::new();
    for ((x, y), z) in pa.iter().zip(&pb).zip(&pc) {
        assert!(names.insert(x.name.clone()), "duplicate name {}", x.name);
        assert_eq!(x.name, y.name);
        assert_eq!(x.var.value().data(), y.var.value().data());
        if x.name.ends_with(".weight") {
            assert_ne!(x.var.value().data(), z.var.value().data());
        }
    }
}

#[test]
fn config_validation() {
    let mut cfg = small(Arch::Vit);
    cfg.vit_heads = 3;
    assert!(Model::build(cfg).is_err());
    let mut cfg = small(Arch::Vit);
    cfg.input_height = 30;
    assert!(Model::build(cfg).is_err());
    let mut cfg = small(Arch::Cnn);
    cfg.qv = Some(crate::qv::QVConfig::default());
    assert!(Model::build(cfg).is_err());
    let mut cfg = small(Arch::QvCnn);
    cfg.qv = None;
    assert!(Model::build(cfg).is_err());
    assert_eq!("qv_cnn".parse::<Arch>().unwrap(), Arch::QvCnn);
    assert_eq!("QV-ViT".parse::<Arch>().unwrap(), Arch::QvVit);
    assert!("resnet".parse::<Arch>().is_err());
}

#[test]
fn shape_mismatch_diagnostic() {
    let model = Model::build(small(Arch::Cnn)).unwrap();
    let wrong = FeatureImage::zeros(16, 16, 1, FeatureKind::Mel);
    let err = model.score(&[&wrong]).unwrap_err().to_string();
    assert!(err.contains("(16, 16, 1)"), "{err}");
}

#[test]
fn checkpoint_round_trip_bitwise() {
    for arch in Arch::ALL {
        let model = Model::build(small(arch)).unwrap();
        let recs = records(6);
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        train(&model, &recs, &tcfg, |_| {}).unwrap();
        let imgs: Vec<&FeatureImage> = recs.iter().map(|r| &r.image).collect();
        let before = model.score(&imgs).unwrap();
        let bytes = encode_checkpoint(&model);
        assert_eq!(&bytes[..4], b"QVCK");
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.config(), model.config());
        let after = loaded.score(&imgs).unwrap();
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "{arch}"
        );
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn zero_lr_keeps_parameters() {
    let model = Model::build(small(Arch::QvCnn)).unwrap();
    let before: Vec<Vec<f32>> = model
        .params()
        .iter()
        .map(|p| p.var.value().data().to_vec())
        .collect();
    let tcfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        lr: 0.0,
        ..TrainConfig::default()
    };
    train(&model, &records(8), &tcfg, |_| {}).unwrap();
    for (p, b) in model.params().iter().zip(&before) {
        assert_eq!(p.var.value().data(), &b[..], "{}", p.name);
    }
}

#[test]
fn single_class_refused() {
    let model = Model::build(small(Arch::Cnn)).unwrap();
    let mut recs = records(4);
    for r in &mut recs {
        r.label = Label::Spoof;
    }
    let err = train(&model, &recs, &TrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
    let bad = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(&model, &records(4), &bad, |_| {}),
        Err(Error::Config(_))
    ));
}

#[test]
fn batches_cover_everything_without_singletons() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let plan = batch_plan(33, 8, &mut rng);
    let sizes: Vec<usize> = plan.iter().map(Vec::len).collect();
    assert_eq!(sizes, [8, 8, 8, 9]);
    let mut all: Vec<usize> = plan.concat();
    all.sort();
    assert_eq!(all, (0..33).collect::<Vec<_>>());
    let sizes: Vec<usize> = batch_plan(30, 8, &mut rng).iter().map(Vec::len).collect();
    assert_eq!(sizes, [8, 8, 8, 6]);
}

#[test]
fn inverse_frequency_weights() {
    let labels = [Label::Spoof, Label::Spoof, Label::Spoof, Label::Bonafide];
    assert_eq!(class_weights(&labels), [4.0 / 6.0, 2.0]);
}

#[test]
fn history_is_deterministic() {
    let run = || {
        let model = Model::build(small(Arch::Cnn)).unwrap();
        let tcfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            seed: 9,
            ..TrainConfig::default()
        };
        train(&model, &records(10), &tcfg, |_| {})
            .unwrap()
            .iter()
            .map(|r| (r.loss.to_bits(), r.acc.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
