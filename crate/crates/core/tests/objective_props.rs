mod common;

use common::{rng, uniform};
use mulagan::model::{FeatureNet, FeatureNetConfig};
use mulagan::objective::{adv_loss_d, adv_loss_g, l1_loss, perceptual_loss, total_g_loss};
use mulagan::{ErrorKind, LossWeights, Tape, Tensor};
use proptest::prelude::*;

const LN2: f64 = std::f64::consts::LN_2;

fn scalar(tape: &Tape<f64>, v: mulagan::Var) -> f64 {
    tape.value(v).item().unwrap()
}

fn d_loss(real: &Tensor<f64>, fake: &Tensor<f64>) -> f64 {
    let mut t = Tape::new();
    let (r, f) = (t.constant(real.clone()), t.constant(fake.clone()));
    let l = adv_loss_d(&mut t, r, f).unwrap();
    scalar(&t, l)
}

fn g_loss(fake: &Tensor<f64>) -> f64 {
    let mut t = Tape::new();
    let f = t.constant(fake.clone());
    let l = adv_loss_g(&mut t, f).unwrap();
    scalar(&t, l)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn adversarial_calibration() {
    let zeros = Tensor::<f64>::zeros(vec![2, 1, 3, 3]);
    assert!((d_loss(&zeros, &zeros) - 2.0 * LN2).abs() <= 1e-10);
    assert!((g_loss(&zeros) - LN2).abs() <= 1e-10);
    let big = Tensor::full(vec![2, 1, 3, 3], 60.0);
    let small = Tensor::full(vec![2, 1, 3, 3], -60.0);
    assert!(d_loss(&big, &small) < 1e-20);
    // Extreme logits stay finite.
    assert!(d_loss(&small, &big).is_finite() && g_loss(&Tensor::full(vec![4], -1e4)).is_finite());
}

#[test]
fn adversarial_matches_direct_evaluation() {
    let mut r = rng(1);
    let real = uniform(&mut r, &[2, 1, 4, 4], -4.0, 4.0);
    let fake = uniform(&mut r, &[2, 1, 4, 4], -4.0, 4.0);
    let n = real.numel() as f64;
    let want_d = real.data().iter().map(|&z| -sigmoid(z).ln()).sum::<f64>() / n
        + fake.data().iter().map(|&z| -(1.0 - sigmoid(z)).ln()).sum::<f64>() / n;
    let want_g = fake.data().iter().map(|&z| -sigmoid(z).ln()).sum::<f64>() / n;
    assert!((d_loss(&real, &fake) - want_d).abs() < 1e-8);
    assert!((g_loss(&fake) - want_g).abs() < 1e-8);
}

#[test]
fn generator_loss_falls_as_any_logit_rises() {
    let base = uniform(&mut rng(2), &[9], -3.0, 3.0);
    for i in 0..9 {
        let mut up = base.clone();
        up.data_mut()[i] += 0.25;
        assert!(g_loss(&up) < g_loss(&base));
    }
}

#[test]
fn l1_examples_and_brute_force() {
    let mut t = Tape::<f64>::new();
    let y = t.constant(Tensor::zeros(vec![2]));
    let yh = t.constant(Tensor::from_f64(vec![2], &[1.0, -1.0]).unwrap());
    let l = l1_loss(&mut t, y, yh).unwrap();
    assert_eq!(scalar(&t, l), 1.0);
    let same = l1_loss(&mut t, yh, yh).unwrap();
    assert_eq!(scalar(&t, same), 0.0);

    let mut r = rng(3);
    let a = uniform(&mut r, &[2, 3, 5, 5], -1.0, 1.0);
    let b = uniform(&mut r, &[2, 3, 5, 5], -1.0, 1.0);
    let want = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64;
    let (av, bv) = (t.constant(a), t.constant(b));
    let l = l1_loss(&mut t, av, bv).unwrap();
    assert!((scalar(&t, l) - want).abs() < 1e-8);
    let c = t.constant(Tensor::zeros(vec![3]));
    assert_eq!(l1_loss(&mut t, av, c).unwrap_err().kind(), ErrorKind::Shape);
}

fn toy_net() -> FeatureNet<f64> {
    FeatureNet::new(FeatureNetConfig {
        widths: vec![2, 3],
        strides: vec![1, 2],
        seed: 5,
    })
    .unwrap()
}

/// Direct 3×3 conv (padding 1) + ReLU on an N×C×H×W buffer.
fn naive_layer(
    x: &[f64],
    shape: [usize; 4],
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = shape;
    let co = w.shape()[0];
    let (oh, ow) = ((h + 2 - 3) / stride + 1, (wd + 2 - 3) / stride + 1);
    let mut out = vec![0.0; n * co * oh * ow];
    for bi in 0..n {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = b.data()[o];
                    for ci in 0..c {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let (yy, xx) = ((i * stride + ki) as isize - 1, (j * stride + kj) as isize - 1);
                                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < wd {
                                    s += w.data()[((o * c + ci) * 3 + ki) * 3 + kj]
                                        * x[((bi * c + ci) * h + yy as usize) * wd + xx as usize];
                                }
                            }
                        }
                    }
                    out[((bi * co + o) * oh + i) * ow + j] = s.max(0.0);
                }
            }
        }
    }
    (out, [n, co, oh, ow])
}

fn naive_features(net: &FeatureNet<f64>, x: &Tensor<f64>, tap: usize) -> Vec<f64> {
    let mut h = x.data().to_vec();
    let mut shape: [usize; 4] = x.shape().try_into().unwrap();
    for l in 0..=tap {
        let w = net.params.param(&format!("features.conv{}.weight", l + 1)).unwrap();
        let b = net.params.param(&format!("features.conv{}.bias", l + 1)).unwrap();
        (h, shape) = naive_layer(&h, shape, w, b, net.config.strides[l]);
    }
    h
}

fn perceptual(net: &FeatureNet<f64>, y: &Tensor<f64>, yh: &Tensor<f64>, taps: &[usize]) -> mulagan::Result<f64> {
    let mut t = Tape::new();
    let vars = net.bind(&mut t);
    let (a, b) = (t.constant(y.clone()), t.constant(yh.clone()));
    let l = perceptual_loss(&mut t, net, &vars, a, b, taps)?;
    Ok(scalar(&t, l))
}

#[test]
fn perceptual_matches_brute_force_on_toy_extractor() {
    let net = toy_net();
    let mut r = rng(6);
    let y = uniform(&mut r, &[2, 3, 6, 6], -1.0, 1.0);
    let yh = uniform(&mut r, &[2, 3, 6, 6], -1.0, 1.0);
    let mut want = 0.0;
    for tap in [0, 1] {
        let (fa, fb) = (naive_features(&net, &y, tap), naive_features(&net, &yh, tap));
        // 1/(C·H·W) per image, averaged over the batch of two.
        want += fa.iter().zip(&fb).map(|(a, b)| (a - b).abs()).sum::<f64>() / fa.len() as f64;
    }
    let got = perceptual(&net, &y, &yh, &[0, 1]).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert_eq!(perceptual(&net, &y, &y, &[0, 1]).unwrap(), 0.0);
    assert_eq!(perceptual(&net, &y, &yh, &[2]).unwrap_err().kind(), ErrorKind::Config);
}

#[test]
fn perceptual_gradient_reaches_only_the_estimate() {
    let net = toy_net();
    let mut r = rng(7);
    let mut t = Tape::new();
    let vars = net.bind(&mut t);
    let y = t.leaf(uniform(&mut r, &[1, 3, 6, 6], -1.0, 1.0).with_grad());
    let yh = t.leaf(uniform(&mut r, &[1, 3, 6, 6], -1.0, 1.0).with_grad());
    let l = perceptual_loss(&mut t, &net, &vars, y, yh, &[1]).unwrap();
    t.backward(l).unwrap();
    assert!(t.grad(y).is_none());
    assert!(t.grad(yh).unwrap().iter().any(|g| *g != 0.0));
    assert!(vars.collect_grads(&t).is_empty());
}

#[test]
fn total_loss_examples_and_linearity() {
    let eval = |a: f64, p: f64, l: f64, w: LossWeights| {
        let mut t = Tape::<f64>::new();
        let (av, pv, lv) = (
            t.constant(Tensor::scalar(a)),
            t.constant(Tensor::scalar(p)),
            t.constant(Tensor::scalar(l)),
        );
        let s = total_g_loss(&mut t, av, pv, lv, w).unwrap();
        scalar(&t, s)
    };
    let w = |l1, l2| LossWeights {
        lambda1: l1,
        lambda2: l2,
    };
    assert_eq!(eval(1.0, 2.0, 3.0, w(0.0, 0.0)), 1.0);
    assert_eq!(eval(1.0, 2.0, 3.0, w(1.0, 1.0)), 6.0);
    assert!((eval(0.5, 0.2, 0.01, w(10.0, 100.0)) - 3.5).abs() < 1e-12);
    // Unit probes on each term recover the coefficients (1, λ1, λ2) exactly.
    let (l1, l2) = (10.0, 100.0);
    let base = eval(0.0, 0.0, 0.0, w(l1, l2));
    assert_eq!(base, 0.0);
    assert_eq!(eval(1.0, 0.0, 0.0, w(l1, l2)), 1.0);
    assert_eq!(eval(0.0, 1.0, 0.0, w(l1, l2)), l1);
    assert_eq!(eval(0.0, 0.0, 1.0, w(l1, l2)), l2);
    assert_eq!(eval(2.0, 0.5, 0.25, w(l1, l2)), 2.0 + 0.5 * l1 + 0.25 * l2);
    let mut t = Tape::<f64>::new();
    let z = t.constant(Tensor::scalar(0.0));
    assert_eq!(
        total_g_loss(&mut t, z, z, z, w(-1.0, 0.0)).unwrap_err().kind(),
        ErrorKind::Config
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_nonnegative_and_vanish_only_on_equality(seed in any::<u64>(), scale in 0.01f64..10.0) {
        let mut r = rng(seed);
        let a = uniform(&mut r, &[1, 3, 4, 4], -scale, scale);
        let b = uniform(&mut r, &[1, 3, 4, 4], -scale, scale);
        prop_assert!(d_loss(&a, &b) > 0.0);
        prop_assert!(g_loss(&a) > 0.0);
        let net = toy_net();
        let p = perceptual(&net, &a, &b, &[1]).unwrap();
        prop_assert!(p >= 0.0);
        prop_assert_eq!(perceptual(&net, &a, &a, &[1]).unwrap(), 0.0);
        prop_assert_eq!(p, perceptual(&net, &b, &a, &[1]).unwrap());
        let mut t = Tape::new();
        let (av, bv) = (t.constant(a), t.constant(b));
        let l = l1_loss(&mut t, av, bv).unwrap();
        prop_assert!(scalar(&t, l) > 0.0);
    }
}
