use bmap_core::loss::{LossConfig, LossInput, LossKind};
use bmap_core::net::{SegNet, TENSOR_NAMES};
use bmap_core::penalty::build_penalty;
use bmap_core::{ClassVolume, LabelVolume, ScalarVolume, Shape3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    logits: ClassVolume,
    gt: LabelVolume,
    phi: ScalarVolume,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let s = Shape3::cube(4).unwrap();
    let k = 3;
    let logits = (0..s.len() * k)
        .map(|_| rng.random_range(-4.0..4.0))
        .collect();
    let mut labels: Vec<u8> = (0..s.len()).map(|_| rng.random_range(0..k as u8)).collect();
    labels[0] = 1;
    labels[1] = 0;
    let gt = LabelVolume::new(s, labels, k).unwrap();
    let phi = ScalarVolume::new(
        s,
        (0..s.len()).map(|_| rng.random_range(0.0..5.0)).collect(),
    )
    .unwrap();
    Case {
        logits: ClassVolume::new(s, k, logits).unwrap(),
        gt,
        phi,
    }
}

fn loss(cfg: &LossConfig, c: &Case, logits: &ClassVolume) -> f64 {
    cfg.evaluate(&LossInput::new(logits, &c.gt).with_penalty(&c.phi))
        .unwrap()
        .value
}

/// Largest absolute deviation from central differences over all logits,
/// relative to the largest numeric derivative.
fn fd_error(cfg: &LossConfig, c: &Case) -> f64 {
    let analytic = cfg
        .evaluate(&LossInput::new(&c.logits, &c.gt).with_penalty(&c.phi))
        .unwrap()
        .grad;
    let h = 1e-5;
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for j in 0..c.logits.data().len() {
        let mut plus = c.logits.clone();
        plus.data_mut()[j] += h;
        let mut minus = c.logits.clone();
        minus.data_mut()[j] -= h;
        let numeric = (loss(cfg, c, &plus) - loss(cfg, c, &minus)) / (2.0 * h);
        worst = worst.max((numeric - analytic.data()[j]).abs());
        scale = scale.max(numeric.abs());
    }
    worst / scale.max(1e-12)
}

#[test]
fn every_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1D);
    for trial in 0..100 {
        let c = random_case(&mut rng);
        for kind in LossKind::ALL {
            let err = fd_error(&LossConfig::with_kind(kind), &c);
            assert!(err <= 1e-6, "trial {trial} {kind}: {err:e}");
        }
    }
}

/// Plain-loop penalized cross entropy and its logit gradient.
fn reference_penalized(c: &Case, scale: f64) -> (f64, Vec<f64>) {
    let n = c.gt.shape().len();
    let k = c.gt.num_classes();
    let mut value = 0.0;
    let mut grad = vec![0.0; n * k];
    for i in 0..n {
        let z: Vec<f64> = (0..k).map(|ch| c.logits.at(ch, i)).collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = e.iter().sum();
        let t = c.gt.labels()[i] as usize;
        let w = 1.0 + scale * c.phi.data()[i];
        value -= w * (e[t] / total).ln();
        for ch in 0..k {
            let p = e[ch] / total;
            grad[ch * n + i] = w * (p - if ch == t { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (value / n as f64, grad)
}

#[test]
fn penalized_ce_matches_reference_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let mut c = random_case(&mut rng);
        // keep probabilities away from the logarithm floor
        c.logits.scale(0.5);
        for scale in [1.0, 0.25, 3.0] {
            let cfg = LossConfig {
                phi_scale: scale,
                ..LossConfig::with_kind(LossKind::PenalizedCe)
            };
            let out = cfg
                .evaluate(&LossInput::new(&c.logits, &c.gt).with_penalty(&c.phi))
                .unwrap();
            let (value, grad) = reference_penalized(&c, scale);
            assert!((out.value - value).abs() <= 1e-12 * value.abs().max(1.0));
            for (a, b) in out.grad.data().iter().zip(&grad) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn penalized_gradient_is_weighted_cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let c = random_case(&mut rng);
        let pce = LossConfig::with_kind(LossKind::PenalizedCe)
            .evaluate(&LossInput::new(&c.logits, &c.gt).with_penalty(&c.phi))
            .unwrap();
        let ce = LossConfig::with_kind(LossKind::CrossEntropy)
            .evaluate(&LossInput::new(&c.logits, &c.gt))
            .unwrap();
        let n = c.gt.shape().len();
        for (j, (a, b)) in pce.grad.data().iter().zip(ce.grad.data()).enumerate() {
            let w = 1.0 + c.phi.data()[j % n];
            assert!((a - w * b).abs() <= 1e-12);
        }
        let zero = ScalarVolume::zeros(*c.gt.shape());
        let plain = LossConfig::with_kind(LossKind::PenalizedCe)
            .evaluate(&LossInput::new(&c.logits, &c.gt).with_penalty(&zero))
            .unwrap();
        assert!((plain.value - ce.value).abs() <= 1e-12);
        for (a, b) in plain.grad.data().iter().zip(ce.grad.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn penalized_ce_is_affine_in_the_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let pce = LossConfig::with_kind(LossKind::PenalizedCe);
    for _ in 0..50 {
        let c = random_case(&mut rng);
        let ce = LossConfig::with_kind(LossKind::CrossEntropy)
            .evaluate(&LossInput::new(&c.logits, &c.gt))
            .unwrap()
            .value;
        let at = |phi: &ScalarVolume| {
            pce.evaluate(&LossInput::new(&c.logits, &c.gt).with_penalty(phi))
                .unwrap()
                .value
        };
        let s = *c.gt.shape();
        assert!((at(&ScalarVolume::zeros(s)) - ce).abs() <= 1e-12);
        // a constant penalty scales cross entropy
        assert!((at(&ScalarVolume::filled(s, 2.0)) - 3.0 * ce).abs() <= 1e-12 * ce.max(1.0));
        let doubled = ScalarVolume::new(s, c.phi.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let (l0, l1, l2) = (ce, at(&c.phi), at(&doubled));
        assert!((l2 - l1 - (l1 - l0)).abs() <= 1e-12 * l2.max(1.0));
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    let shape = Shape3::cube(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6E7);
    let image = ScalarVolume::new(
        shape,
        (0..shape.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let gt = LabelVolume::new(
        shape,
        (0..shape.len())
            .map(|i| {
                let (x, y, _) = shape.coord(i);
                ((x / 2 + y / 3) % 4) as u8
            })
            .collect(),
        4,
    )
    .unwrap();
    let phi = build_penalty(&gt).unwrap().phi;
    let net = SegNet::new(3, 4, 17);
    let h = 1e-6;
    for kind in LossKind::ALL {
        let cfg = LossConfig::with_kind(kind);
        let value = |n: &SegNet| {
            let (logits, _) = n.forward(&image);
            cfg.evaluate(&LossInput::new(&logits, &gt).with_penalty(&phi))
                .unwrap()
        };
        let (logits, tape) = net.forward(&image);
        let out = cfg
            .evaluate(&LossInput::new(&logits, &gt).with_penalty(&phi))
            .unwrap();
        let grads = net.backward(&tape, &out.grad).unwrap();
        for (t, name) in TENSOR_NAMES.iter().enumerate() {
            let len = net.tensors()[t].len();
            for probe in 0..10 {
                let j = (probe * 7919) % len;
                let mut plus = net.clone();
                plus.tensors_mut()[t][j] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[t][j] -= h;
                let numeric = (value(&plus).value - value(&minus).value) / (2.0 * h);
                let analytic = grads.blocks[t][j];
                let scale = numeric.abs().max(analytic.abs()).max(1e-4);
                assert!(
                    (numeric - analytic).abs() / scale <= 1e-5,
                    "{kind} {name}[{j}]: {numeric:e} vs {analytic:e}"
                );
            }
        }
    }
}
