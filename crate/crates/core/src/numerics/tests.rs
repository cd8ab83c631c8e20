use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::uniform;
use super::*;
use crate::error::Error;
use crate::graphs::IndexConvention;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Tensor::from_fn(&[m, n], |ix| (0..k).map(|i| a.get(&[ix[0], i]) * b.get(&[i, ix[1]])).sum())
}

#[test]
fn test_linear_apply_trivial() {
    let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
    let y = linear_apply(&x, &LinearMap::identity(2)).unwrap();
    assert_eq!(y.data(), &[1.0, 2.0]);
    let sum = LinearMap::new(Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap(), None).unwrap();
    assert_eq!(linear_apply(&x, &sum).unwrap().data(), &[3.0]);
}

#[test]
fn test_linear_apply_matches_triple_loop() {
    let mut r = rng(11);
    let x = uniform(&mut r, &[3, 4], 1.0);
    let w = uniform(&mut r, &[4, 2], 1.0);
    let y = linear_apply(&x, &LinearMap::new(w.clone(), None).unwrap()).unwrap();
    assert!(y.max_abs_diff(&matmul_oracle(&x, &w)).unwrap() <= 1e-12);
}

#[test]
fn test_linear_apply_keeps_leading_extents() {
    let mut r = rng(12);
    let x = uniform(&mut r, &[2, 3, 4], 1.0);
    let map = LinearMap::glorot(&mut r, 4, 5, true);
    let y = linear_apply(&x, &map).unwrap();
    assert_eq!(y.shape(), &[2, 3, 5]);
}

#[test]
fn test_linear_apply_shape_error_names_both() {
    let x = Tensor::zeros(&[2, 3]);
    let err = linear_apply(&x, &LinearMap::identity(4)).unwrap_err();
    match err {
        Error::Shape { left, right, .. } => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![4, 4]);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn test_prelu_cases() {
    let x = Tensor::new(&[2], vec![3.0, -2.0]).unwrap();
    assert_eq!(prelu(&x, 0.25).data(), &[3.0, -0.5]);

    let mut tape = Tape::new();
    let xv = tape.input(Tensor::scalar(-2.0));
    let s = tape.variable(Tensor::scalar(0.25));
    let y = tape.prelu(xv, s).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(s).unwrap().data(), &[-2.0]);
}

#[test]
fn test_batch_matmul_cases() {
    let mut r = rng(13);
    let a = uniform(&mut r, &[2, 3, 2], 1.0);
    let eye = Tensor::from_fn(&[2, 2, 2], |ix| if ix[1] == ix[2] { 1.0 } else { 0.0 });
    assert_eq!(batch_matmul(&a, &eye).unwrap(), a);

    let two = Tensor::new(&[1, 1, 1], vec![2.0]).unwrap();
    let three = Tensor::new(&[1, 1, 1], vec![3.0]).unwrap();
    assert_eq!(batch_matmul(&two, &three).unwrap().data(), &[6.0]);

    let b = uniform(&mut r, &[2, 2, 4], 1.0);
    let y = batch_matmul(&a, &b).unwrap();
    for i in 0..2 {
        let ai = Tensor::new(&[3, 2], a.data()[i * 6..(i + 1) * 6].to_vec()).unwrap();
        let bi = Tensor::new(&[2, 4], b.data()[i * 8..(i + 1) * 8].to_vec()).unwrap();
        let yi = Tensor::new(&[3, 4], y.data()[i * 12..(i + 1) * 12].to_vec()).unwrap();
        assert!(yi.max_abs_diff(&matmul_oracle(&ai, &bi)).unwrap() <= 1e-12);
    }

    assert!(matches!(batch_matmul(&a, &uniform(&mut r, &[3, 2, 4], 1.0)), Err(Error::Shape { .. })));
    assert!(matches!(batch_matmul(&a, &uniform(&mut r, &[2, 3, 4], 1.0)), Err(Error::Shape { .. })));
}

#[test]
fn test_mlp_cases() {
    let mut r = rng(14);
    let x = uniform(&mut r, &[3, 4], 1.0);
    let l1 = LinearMap::glorot(&mut r, 4, 5, true);
    let one = Mlp::new(vec![l1.clone()], vec![]).unwrap();
    assert_eq!(mlp_apply(&x, &one).unwrap(), linear_apply(&x, &l1).unwrap());

    let zero = Mlp::new(vec![LinearMap::zeros(4, 5, true), LinearMap::zeros(5, 2, true)], vec![0.25]).unwrap();
    assert_eq!(mlp_apply(&x, &zero).unwrap().max_abs(), 0.0);

    let mut l1b = l1.clone();
    l1b.b = Some(uniform(&mut r, &[5], 1.0));
    let l2 = LinearMap::glorot(&mut r, 5, 2, true);
    let two = Mlp::new(vec![l1b.clone(), l2.clone()], vec![0.3]).unwrap();
    let manual = linear_apply(&prelu(&linear_apply(&x, &l1b).unwrap(), 0.3), &l2).unwrap();
    assert!(mlp_apply(&x, &two).unwrap().max_abs_diff(&manual).unwrap() <= 1e-12);

    assert!(Mlp::new(vec![l1.clone(), l1], vec![0.25]).is_err());
}

#[test]
fn test_grad_check_quadratic() {
    let err = grad_check(|tape, p| tape.scale(p[0], p[0]), &[Tensor::scalar(3.0)], gradcheck::DEFAULT_STEP).unwrap();
    assert!(err <= 1e-9, "{err}");

    let mut tape = Tape::new();
    let p = tape.variable(Tensor::scalar(3.0));
    let y = tape.scale(p, p).unwrap();
    assert_eq!(tape.backward(y).unwrap().get(p).unwrap().data(), &[6.0]);
}

#[test]
fn test_grad_check_linear_sum() {
    let mut r = rng(15);
    let x = uniform(&mut r, &[3, 4], 1.0);
    let w = uniform(&mut r, &[4, 2], 1.0);
    let b = uniform(&mut r, &[2], 1.0);
    let ones = Tensor::full(&[3, 2], 1.0);
    let err = grad_check(
        |tape, p| {
            let xv = tape.input(x.clone());
            let y = Linear { w: p[0], b: Some(p[1]) }.forward(tape, xv)?;
            tape.dot_const(y, ones.clone())
        },
        &[w, b],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn test_grad_check_rejects_non_finite() {
    let res = grad_check(|tape, p| Ok(tape.scale_const(p[0], f64::NAN)), &[Tensor::scalar(1.0)], 1e-5);
    assert!(matches!(res, Err(Error::Numeric(_))));
}

// Every tape operation differentiated against central differences.
#[test]
fn test_tape_ops_pass_grad_check() {
    let mut r = rng(16);
    let mut u = |shape: &[usize]| {
        uniform(&mut r, shape, 1.0).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
    };
    let probe = |shape: &[usize], seed: u64| uniform(&mut rng(seed), shape, 1.0);

    let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> crate::Result<Var>>)> = vec![
        ("bmm", vec![u(&[2, 3, 2]), u(&[2, 2, 4])], Box::new(move |t, p| {
            let y = t.bmm(p[0], p[1], false, false)?;
            t.dot_const(y, probe(&[2, 3, 4], 1))
        })),
        ("bmm_ta", vec![u(&[2, 2, 3]), u(&[2, 2, 4])], Box::new(move |t, p| {
            let y = t.bmm(p[0], p[1], true, false)?;
            t.dot_const(y, probe(&[2, 3, 4], 2))
        })),
        ("bmm_tb", vec![u(&[2, 3, 2]), u(&[2, 4, 2])], Box::new(move |t, p| {
            let y = t.bmm(p[0], p[1], false, true)?;
            t.dot_const(y, probe(&[2, 3, 4], 3))
        })),
        ("bmm_tatb", vec![u(&[2, 2, 3]), u(&[2, 4, 2])], Box::new(move |t, p| {
            let y = t.bmm(p[0], p[1], true, true)?;
            t.dot_const(y, probe(&[2, 3, 4], 4))
        })),
        ("permute_sub_add", vec![u(&[2, 3, 4]), u(&[3, 4, 2])], Box::new(move |t, p| {
            let a = t.permute(p[0], [1, 2, 0])?;
            let d = t.sub(a, p[1])?;
            let s = t.add(d, a)?;
            t.dot_const(s, probe(&[3, 4, 2], 5))
        })),
        ("scale_prelu", vec![u(&[3, 2]), u(&[1]), u(&[1])], Box::new(move |t, p| {
            let s = t.scale(p[0], p[1])?;
            let y = t.prelu(s, p[2])?;
            let y = t.scale_const(y, 1.5);
            t.dot_const(y, probe(&[3, 2], 6))
        })),
        ("expand_slice", vec![u(&[4, 3])], Box::new(move |t, p| {
            let s = t.slice_rows(p[0], 1, 2)?;
            let e = t.expand(s, 3)?;
            t.dot_const(e, probe(&[3, 2, 3], 7))
        })),
        ("pairs", vec![u(&[3, 2]), u(&[3, 2]), u(&[2])], Box::new(move |t, p| {
            let a = t.pair_sum(p[0], p[1])?;
            let b = t.add_bias(a, p[2])?;
            let c = t.pair_concat(p[0], p[1])?;
            let x = t.dot_const(b, probe(&[9, 2], 8))?;
            let y = t.dot_const(c, probe(&[9, 4], 9))?;
            t.add(x, y)
        })),
        ("matmul_rank3", vec![u(&[2, 3, 4]), u(&[4, 2])], Box::new(move |t, p| {
            let y = t.matmul(p[0], p[1])?;
            t.dot_const(y, probe(&[2, 3, 2], 10))
        })),
        ("affine", vec![u(&[2, 3, 4]), u(&[4, 2]), u(&[2])], Box::new(move |t, p| {
            let y = t.affine(p[0], p[1], Some(p[2]))?;
            t.dot_const(y, probe(&[2, 3, 2], 13))
        })),
        ("affine_t", vec![u(&[6, 4]), u(&[4, 2]), u(&[2])], Box::new(move |t, p| {
            let y = t.affine_t(p[0], p[1], Some(p[2]), &[2, 2, 3])?;
            t.dot_const(y, probe(&[2, 2, 3], 14))
        })),
        ("pair_sum_bias", vec![u(&[3, 2]), u(&[3, 2]), u(&[2])], Box::new(move |t, p| {
            let y = t.pair_sum_bias(p[0], p[1], Some(p[2]))?;
            t.dot_const(y, probe(&[9, 2], 15))
        })),
        ("blend", vec![u(&[2, 3]), u(&[4, 2, 3]), u(&[1])], Box::new(move |t, p| {
            let a = t.blend(p[0], p[1], p[2], false)?;
            let b = t.blend(p[0], p[1], p[2], true)?;
            let x = t.dot_const(a, probe(&[4, 2, 3], 16))?;
            let y = t.dot_const(b, probe(&[4, 2, 3], 17))?;
            t.add(x, y)
        })),
        ("mpjpe", vec![u(&[2, 3, 3])], Box::new(move |t, p| t.mpjpe(p[0], &probe(&[2, 3, 3], 11), 1..3))),
    ];
    for (name, params, f) in cases {
        let err = grad_check(|t, p| f(t, p), &params, 1e-5).unwrap();
        assert!(err < 1e-6, "{name}: {err}");
    }
    for conv in IndexConvention::ALL {
        let params = vec![u(&[3, 2, 2]), u(&[2, 3, 3])];
        let err = grad_check(
            |t, p| {
                let a = t.compose(p[0], p[1], conv)?;
                t.dot_const(a, probe(&[6, 6], 12))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "compose {conv:?}: {err}");
    }
}

// Fused ops against their unfused compositions.
#[test]
fn test_fused_ops_match_composition() {
    let mut r = rng(21);
    let x = uniform(&mut r, &[6, 4], 1.0);
    let w = uniform(&mut r, &[4, 2], 1.0);
    let b = uniform(&mut r, &[2], 1.0);
    let corr = uniform(&mut r, &[3, 3], 1.0);
    let m = uniform(&mut r, &[2, 3, 3], 1.0);
    let mut t = Tape::new();
    let (xv, wv, bv) = (t.input(x), t.input(w), t.input(b));
    let (cv, mv, av) = (t.input(corr), t.input(m), t.input(Tensor::scalar(0.3)));

    let fused = t.affine(xv, wv, Some(bv)).unwrap();
    let mm = t.matmul(xv, wv).unwrap();
    let plain = t.add_bias(mm, bv).unwrap();
    assert!(t.value(fused).max_abs_diff(t.value(plain)).unwrap() < 1e-14);

    let ft = t.affine_t(xv, wv, Some(bv), &[2, 2, 3]).unwrap();
    let r3 = t.reshape(plain, &[2, 3, 2]).unwrap();
    let pt = t.permute(r3, [2, 0, 1]).unwrap();
    assert!(t.value(ft).max_abs_diff(t.value(pt)).unwrap() < 1e-14);

    let u = t.slice_rows(xv, 0, 3).unwrap();
    let v = t.slice_rows(xv, 3, 3).unwrap();
    let (u, v) = (t.matmul(u, wv).unwrap(), t.matmul(v, wv).unwrap());
    let ps = t.pair_sum_bias(u, v, Some(bv)).unwrap();
    let s = t.pair_sum(u, v).unwrap();
    let pb = t.add_bias(s, bv).unwrap();
    assert!(t.value(ps).max_abs_diff(t.value(pb)).unwrap() < 1e-14);

    for reversed in [false, true] {
        let bl = t.blend(cv, mv, av, reversed).unwrap();
        let e = t.expand(cv, 2).unwrap();
        let (a, b) = if reversed { (mv, e) } else { (e, mv) };
        let sc = t.scale(b, av).unwrap();
        let sum = t.add(a, sc).unwrap();
        assert!(t.value(bl).max_abs_diff(t.value(sum)).unwrap() < 1e-14);
    }
    assert!(t.affine_t(xv, wv, None, &[3, 4]).is_err());
    assert!(t.blend(mv, cv, av, false).is_err());
}

#[test]
fn test_shared_param_binding_accumulates() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::scalar(2.0));
    let frozen = store.add_frozen("f", Tensor::scalar(5.0));
    let mut tape = Tape::new();
    let a = tape.param(&store, id);
    let b = tape.param(&store, id);
    assert_eq!(a, b);
    let fz = tape.param(&store, frozen);
    let y = tape.scale(a, b).unwrap();
    let y = tape.scale(y, fz).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(a).unwrap().data(), &[20.0]);
    assert!(g.get(fz).is_none());
    assert_eq!(store.trainable_count(), 1);
}

proptest! {
    #[test]
    fn prop_linear_is_additive_and_homogeneous(seed in 0u64..1000, c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x1 = uniform(&mut r, &[3, 4], 1.0);
        let x2 = uniform(&mut r, &[3, 4], 1.0);
        let map = LinearMap::new(uniform(&mut r, &[4, 3], 1.0), None).unwrap();
        let sum = linear_apply(&x1.add(&x2).unwrap(), &map).unwrap();
        let parts = linear_apply(&x1, &map).unwrap().add(&linear_apply(&x2, &map).unwrap()).unwrap();
        prop_assert!(sum.max_abs_diff(&parts).unwrap() <= 1e-12);
        let scaled = linear_apply(&x1.scale(c), &map).unwrap();
        let want = linear_apply(&x1, &map).unwrap().scale(c);
        prop_assert!(scaled.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn prop_bmm_identity_is_exact(vals in proptest::collection::vec(-1000i32..1000, 12)) {
        let a = Tensor::new(&[2, 3, 2], vals.iter().map(|&v| v as f64 / 8.0).collect()).unwrap();
        let right = Tensor::from_fn(&[2, 2, 2], |ix| if ix[1] == ix[2] { 1.0 } else { 0.0 });
        let left = Tensor::from_fn(&[2, 3, 3], |ix| if ix[1] == ix[2] { 1.0 } else { 0.0 });
        prop_assert_eq!(batch_matmul(&a, &right).unwrap(), a.clone());
        prop_assert_eq!(batch_matmul(&left, &a).unwrap(), a);
    }

    #[test]
    fn prop_ops_keep_finite(seed in 0u64..500) {
        let mut r = rng(seed);
        let x = uniform(&mut r, &[2, 3, 4], 10.0);
        let net = Mlp::glorot(&mut r, &[4, 6, 2], true);
        prop_assert!(mlp_apply(&x, &net).unwrap().is_finite());
    }
}
