use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::duplicate_last_pose;
use crate::error::Error;
use crate::numerics::Tensor;
use crate::static_gc::GcKind;

fn small(kind: GcKind) -> ModelConfig {
    ModelConfig {
        joints: 4,
        observed: 3,
        future: 2,
        channels: 6,
        reduction: 2,
        blocks: 2,
        kind,
        skeleton: None,
        ..Default::default()
    }
}

fn input(cfg: &ModelConfig, seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[cfg.joints, cfg.observed, cfg.dims], |_| r.random_range(-1.0..1.0))
}

fn perturb(m: &mut Model, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let v = m.store.value(id).map(|x| x + r.random_range(-0.1..0.1));
        m.store.set_value(id, v).unwrap();
    }
}

#[test]
fn test_default_has_seven_units() {
    let m = Model::build(&ModelConfig::default()).unwrap();
    assert_eq!(m.units().count(), 7);
    assert_eq!(ModelConfig::default().unit_count(), 7);
}

#[test]
fn test_untrained_model_is_zero_velocity() {
    for kind in GcKind::ALL {
        let cfg = small(kind);
        let m = Model::build(&cfg).unwrap();
        let x = input(&cfg, 1);
        let y = m.predict(&x).unwrap();
        assert_eq!(y.shape(), &[4, 5, 3]);
        assert_eq!(y, duplicate_last_pose(&x, 2).unwrap(), "{kind}");
    }
}

#[test]
fn test_zeroed_decode_after_training_like_update() {
    let cfg = small(GcKind::Dstd);
    let mut m = Model::build(&cfg).unwrap();
    perturb(&mut m, 2);
    let x = input(&cfg, 3);
    assert_ne!(m.predict(&x).unwrap(), duplicate_last_pose(&x, 2).unwrap());
    m.zero_params("decode.");
    assert_eq!(m.predict(&x).unwrap(), duplicate_last_pose(&x, 2).unwrap());
}

#[test]
fn test_zeroed_blocks_are_identity() {
    let cfg = small(GcKind::Dstd);
    let mut m = Model::build(&cfg).unwrap();
    perturb(&mut m, 4);
    m.zero_params("block");
    let mut bare = Model::build(&ModelConfig { blocks: 0, ..cfg.clone() }).unwrap();
    for id in bare.store.ids().collect::<Vec<_>>() {
        let name = bare.store.get(id).name.clone();
        let src = m.store.find(&name).unwrap();
        bare.store.set_value(id, m.store.value(src).clone()).unwrap();
    }
    let x = input(&cfg, 5);
    assert_eq!(m.predict(&x).unwrap(), bare.predict(&x).unwrap());
}

#[test]
fn test_forward_is_deterministic() {
    let cfg = small(GcKind::Dstd);
    let (a, b) = (Model::build(&cfg).unwrap(), Model::build(&cfg).unwrap());
    let (mut a, mut b) = (a, b);
    perturb(&mut a, 6);
    perturb(&mut b, 6);
    let x = input(&cfg, 7);
    assert_eq!(a.predict(&x).unwrap().data(), b.predict(&x).unwrap().data());
}

#[test]
fn test_frame_count_mismatch() {
    let cfg = small(GcKind::Std);
    let m = Model::build(&cfg).unwrap();
    assert!(matches!(m.predict(&Tensor::zeros(&[4, 5, 3])), Err(Error::Shape { .. })));
}

#[test]
fn test_counts_match_closed_form() {
    for kind in GcKind::ALL {
        let cfg = small(kind);
        let m = Model::build(&cfg).unwrap();
        let c = count_params(&m);
        assert_eq!(c.all, expected_params(&cfg), "{kind}");
        assert_eq!(c.layers.iter().map(|l| l.1).sum::<usize>(), c.total);
    }
    for variant in Variant::ALL {
        for kind in [GcKind::Dstd, GcKind::Dtsd] {
            let cfg = ModelConfig { variant, ..small(kind) };
            let m = Model::build(&cfg).unwrap();
            assert_eq!(count_params(&m).all, expected_params(&cfg), "{kind} {variant:?}");
        }
    }
}

#[test]
fn test_comparison_counts_at_reference_size() {
    let count = |k| expected_params(&ModelConfig::comparison(k, 25, 35, 64));
    assert_eq!(count(GcKind::St), 5_409_759);
    assert_eq!(count(GcKind::Std), count(GcKind::Tsd));
    assert!(count(GcKind::Dstd) < count(GcKind::Sts));
}

#[test]
fn test_variant_a_freezes_alpha_at_zero() {
    let m = Model::build(&ModelConfig { variant: Variant::ConstrainedOnly, ..small(GcKind::Dstd) }).unwrap();
    let alphas = m.params_ending(".alpha");
    // two spatial branches and one temporal layer per unit
    assert_eq!(alphas.len(), 4 * 3);
    for (name, p) in alphas {
        assert!(!p.trainable, "{name}");
        assert_eq!(p.value.data(), &[0.0]);
    }
}

#[test]
fn test_variant_b_freezes_shared_matrices_at_zero() {
    let m = Model::build(&ModelConfig { variant: Variant::DynamicOnly, ..small(GcKind::Dstd) }).unwrap();
    for (name, p) in m.params_ending(".corr") {
        assert!(!p.trainable, "{name}");
        assert_eq!(p.value.max_abs(), 0.0);
    }
    assert!(m.params_ending(".alpha").iter().all(|(_, p)| p.trainable));
}

#[test]
fn test_variant_e_matches_std_layout() {
    let e = ModelConfig {
        variant: Variant::StaticGc,
        spatial_branches: 1,
        ..small(GcKind::Dstd)
    };
    let std = small(GcKind::Std);
    let (me, ms) = (Model::build(&e).unwrap(), Model::build(&std).unwrap());
    let shapes = |m: &Model| m.store.iter().map(|(_, p)| p.value.shape().to_vec()).collect::<Vec<_>>();
    assert_eq!(shapes(&me), shapes(&ms));
    assert!(me.units().all(|u| matches!(&u.unit, GcUnit::Staged { first, second }
        if first.len() == 1 && second.len() == 1
        && matches!(first[0], Stage::Static { shared: false, .. })
        && matches!(second[0], Stage::Static { shared: false, .. }))));
}

#[test]
fn test_variants_f_and_g_use_one_axis() {
    use crate::dynamic_gc::Axis;
    for (variant, axis) in [(Variant::DsOnly, Axis::Spatial), (Variant::DtOnly, Axis::Temporal)] {
        let m = Model::build(&ModelConfig { variant, ..small(GcKind::Dstd) }).unwrap();
        for u in m.units() {
            let mut n = 0;
            if let GcUnit::Staged { first, second } = &u.unit {
                for s in first.iter().chain(second) {
                    assert_eq!(s.axis(), axis);
                    n += 1;
                }
            }
            assert_eq!(n, 3);
        }
    }
}

#[test]
fn test_variant_rejected_for_static_kinds() {
    let cfg = ModelConfig { variant: Variant::ConstrainedOnly, ..small(GcKind::Std) };
    assert!(matches!(Model::build(&cfg), Err(Error::Config(_))));
}

#[test]
fn test_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig { variant: Variant::ReversedUpdate, ..small(GcKind::Dtsd) };
    let mut m = Model::build(&cfg).unwrap();
    perturb(&mut m, 8);
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&m, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.config, m.config);
    for ((_, a), (_, b)) in m.store.iter().zip(back.store.iter()) {
        assert_eq!((&a.name, &a.value, a.trainable), (&b.name, &b.value, b.trainable));
    }
    let x = input(&cfg, 9);
    assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());

    let bytes = checkpoint::to_bytes(&m);
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 3], "x").is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::from_bytes(&bad, "x"), Err(Error::Parse { .. })));
}

#[test]
fn test_config_set_and_kv() {
    let mut cfg = ModelConfig::default();
    for (k, v) in small(GcKind::Vstd).to_kv() {
        cfg.set(&k, &v).unwrap();
    }
    assert_eq!(cfg, small(GcKind::Vstd));
    assert!(matches!(cfg.set("bogus", "1"), Err(Error::Config(_))));
    assert!(matches!(cfg.set("joints", "x"), Err(Error::Config(_))));
}
