//! Mini-batch training of [`SegNet`] with Adam and random in-plane rotations.
//!
//! Penalty maps depend only on ground truth. The unrotated map of each
//! sample is computed once up front; maps of rotated samples are rebuilt
//! from the rotated labels and cached per (sample, whole-degree angle).

use alloc::borrow::Cow;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::rotate_inplane;
use crate::error::{Error, Result};
use crate::grid::{LabelVolume, ScalarVolume};
use crate::loss::{LossConfig, LossInput};
use crate::metrics::{evaluate, MetricReport};
use crate::net::{GradientSet, SegNet, TENSOR_NAMES};
use crate::optim::{AdamConfig, AdamState};
use crate::penalty::{build_penalty, PenaltyMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Rotation angles are drawn uniformly from `±augment_max_degrees` and
    /// rounded to whole degrees.
    pub augment_max_degrees: f64,
    pub seed: u64,
    /// Evaluate on the validation set every this many iterations; 0 = never.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            iterations: 300,
            batch_size: 2,
            augment_max_degrees: 15.0,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.adam.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "iterations",
                value: 0.0,
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                value: 0.0,
            });
        }
        if !(0.0..=180.0).contains(&self.augment_max_degrees) {
            return Err(Error::InvalidParameter {
                name: "augment_max_degrees",
                value: self.augment_max_degrees,
            });
        }
        Ok(())
    }
}

/// One training or validation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ScalarVolume,
    pub gt: LabelVolume,
    pub penalty: Option<PenaltyMap>,
}

impl Sample {
    /// Builds the penalty map of `gt` alongside.
    pub fn new(image: ScalarVolume, gt: LabelVolume) -> Result<Self> {
        let penalty = Some(build_penalty(&gt)?);
        Ok(Self { image, gt, penalty })
    }

    pub fn without_penalty(image: ScalarVolume, gt: LabelVolume) -> Self {
        Self {
            image,
            gt,
            penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// 1-based iteration after which the evaluation ran.
    pub iteration: usize,
    /// One report per validation sample.
    pub reports: Vec<MetricReport>,
}

impl EvalPoint {
    pub fn mean_g_dsc(&self) -> f64 {
        mean(self.reports.iter().map(|r| r.mean_g_dsc))
    }

    pub fn mean_b_dsc(&self) -> f64 {
        mean(self.reports.iter().map(|r| r.mean_b_dsc))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainRecord {
    /// Batch-mean loss of every completed iteration.
    pub losses: Vec<f64>,
    pub evals: Vec<EvalPoint>,
    /// Wall-clock seconds spent in each iteration, as reported by the clock.
    pub seconds: Vec<f64>,
    /// Largest absolute parameter change of each Adam step.
    pub max_updates: Vec<f64>,
}

impl TrainRecord {
    /// Mean loss over the first `k` iterations.
    pub fn head_mean(&self, k: usize) -> f64 {
        mean(self.losses.iter().take(k).copied())
    }

    /// Mean loss over the last `k` iterations.
    pub fn tail_mean(&self, k: usize) -> f64 {
        let skip = self.losses.len().saturating_sub(k);
        mean(self.losses.iter().skip(skip).copied())
    }
}

/// Training stopped early; `record` covers every iteration that completed
/// with a finite loss and `net` holds the parameters after the last one.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub record: TrainRecord,
    pub net: SegNet,
}

/// Train `net` on `dataset`. `clock` returns seconds since an arbitrary
/// origin; pass `&mut || 0.0` when timing is not wanted.
pub fn train(
    mut net: SegNet,
    dataset: &[Sample],
    validation: &[Sample],
    cfg: &TrainConfig,
    clock: &mut dyn FnMut() -> f64,
) -> core::result::Result<(SegNet, TrainRecord), Box<TrainFailure>> {
    let mut record = TrainRecord::default();
    let fail = |error, record, net| Box::new(TrainFailure { error, record, net });
    if let Err(e) = cfg.validate() {
        return Err(fail(e, record, net));
    }
    if dataset.is_empty() {
        return Err(fail(Error::EmptyDataset, record, net));
    }
    if let Some(s) = dataset
        .iter()
        .find(|s| s.gt.num_classes() != net.num_classes())
    {
        let e = Error::ClassCountMismatch {
            left: net.num_classes(),
            right: s.gt.num_classes(),
        };
        return Err(fail(e, record, net));
    }

    let needs_penalty = cfg.loss.kind.needs_penalty();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lengths: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &lengths);
    let mut cache: BTreeMap<(usize, i64), ScalarVolume> = BTreeMap::new();
    let inv_batch = 1.0 / cfg.batch_size as f64;

    for iteration in 1..=cfg.iterations {
        let started = clock();
        let mut grads = GradientSet::zeros_like(&net);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..dataset.len());
            let angle = if cfg.augment_max_degrees > 0.0 {
                let m = cfg.augment_max_degrees;
                libm::round(rng.random_range(-m..=m)) as i64
            } else {
                0
            };
            let sample = &dataset[idx];
            let (image, gt) = if angle == 0 {
                (Cow::Borrowed(&sample.image), Cow::Borrowed(&sample.gt))
            } else {
                let (i, g) = rotate_inplane(&sample.image, &sample.gt, angle as f64);
                (Cow::Owned(i), Cow::Owned(g))
            };
            let phi = if !needs_penalty {
                None
            } else if let (0, Some(p)) = (angle, &sample.penalty) {
                Some(&p.phi)
            } else {
                Some(
                    &*cache
                        .entry((idx, angle))
                        .or_insert_with(|| penalty_field(&gt)),
                )
            };

            let (logits, tape) = net.forward(&image);
            let input = LossInput {
                logits: &logits,
                target: &gt,
                phi,
            };
            let outcome = match cfg.loss.evaluate(&input) {
                Ok(o) => o,
                Err(e) => return Err(fail(e, record, net)),
            };
            if !outcome.value.is_finite() || !logits.is_finite() {
                return Err(fail(Error::Diverged { iteration }, record, net));
            }
            let g = match net.backward(&tape, &outcome.grad) {
                Ok(g) => g,
                Err(e) => return Err(fail(e, record, net)),
            };
            grads.add_scaled(&g, inv_batch);
            batch_loss += outcome.value * inv_batch;
        }

        let step = {
            let mut params = net.tensors_mut();
            adam.step(&mut params, &grads.blocks, &TENSOR_NAMES)
        };
        match step {
            Ok(largest) => record.max_updates.push(largest),
            Err(e) => return Err(fail(e, record, net)),
        }
        record.losses.push(batch_loss);

        if cfg.eval_every > 0 && iteration % cfg.eval_every == 0 && !validation.is_empty() {
            let reports = validation
                .iter()
                .map(|s| evaluate(&net.predict(&s.image), &s.gt))
                .collect::<Result<Vec<_>>>();
            match reports {
                Ok(reports) => record.evals.push(EvalPoint { iteration, reports }),
                Err(e) => return Err(fail(e, record, net)),
            }
        }
        record.seconds.push(clock() - started);
    }
    Ok((net, record))
}

fn penalty_field(gt: &LabelVolume) -> ScalarVolume {
    match build_penalty(gt) {
        Ok(p) => p.phi,
        // rotated entirely out of the field: plain cross entropy weights
        Err(_) => ScalarVolume::zeros(*gt.shape()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape3;
    use crate::loss::LossKind;
    use crate::phantom::{generate, PhantomSpec};

    fn dataset(n: usize, side: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let (img, gt) =
                    generate(&PhantomSpec::new(Shape3::cube(side).unwrap(), i as u64)).unwrap();
                Sample::new(img, gt).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_lr_keeps_parameters_and_loss() {
        let data = dataset(1, 20);
        let cfg = TrainConfig {
            adam: AdamConfig {
                lr: 0.0,
                ..AdamConfig::default()
            },
            iterations: 4,
            augment_max_degrees: 0.0,
            ..TrainConfig::default()
        };
        let net = SegNet::new(4, 4, 1);
        let (trained, record) = train(net.clone(), &data, &[], &cfg, &mut || 0.0).unwrap();
        assert_eq!(trained, net);
        assert!(record.losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_given_seed() {
        let data = dataset(2, 20);
        let cfg = TrainConfig {
            iterations: 5,
            eval_every: 2,
            seed: 3,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let a = train(SegNet::new(4, 4, 1), &data, &data[..1], &cfg, &mut || 0.0).unwrap();
        let b = train(SegNet::new(4, 4, 1), &data, &data[..1], &cfg, &mut || 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.losses.len(), 5);
        assert_eq!(a.1.evals.len(), 2);
        assert_eq!(a.1.evals[1].iteration, 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = TrainConfig::default();
        let err = train(SegNet::new(4, 4, 1), &[], &[], &cfg, &mut || 0.0).unwrap_err();
        assert_eq!(err.error, Error::EmptyDataset);
        let data = dataset(1, 20);
        let err = train(SegNet::new(4, 3, 1), &data, &[], &cfg, &mut || 0.0).unwrap_err();
        assert!(matches!(err.error, Error::ClassCountMismatch { .. }));
        let bad = TrainConfig {
            augment_max_degrees: 200.0,
            ..cfg
        };
        assert!(train(SegNet::new(4, 4, 1), &data, &[], &bad, &mut || 0.0).is_err());
    }

    #[test]
    fn penalized_needs_penalty_only_when_unrotated() {
        let (img, gt) = generate(&PhantomSpec::new(Shape3::cube(20).unwrap(), 0)).unwrap();
        let data = [Sample::without_penalty(img, gt)];
        let cfg = TrainConfig {
            loss: LossConfig::with_kind(LossKind::PenalizedCe),
            iterations: 2,
            ..TrainConfig::default()
        };
        // no precomputed map: falls back to the cache
        assert!(train(SegNet::new(4, 4, 1), &data, &[], &cfg, &mut || 0.0).is_ok());
    }

    #[test]
    fn divergence_is_reported_with_record() {
        let data = dataset(1, 20);
        let mut net = SegNet::new(4, 4, 1);
        net.head.weight.iter_mut().for_each(|w| *w = f64::MAX);
        net.conv1.bias.iter_mut().for_each(|b| *b = 1.0);
        let cfg = TrainConfig {
            iterations: 3,
            loss: LossConfig::with_kind(LossKind::CrossEntropy),
            ..TrainConfig::default()
        };
        let err = train(net, &data, &[], &cfg, &mut || 0.0).unwrap_err();
        assert_eq!(err.error, Error::Diverged { iteration: 1 });
        assert!(err.record.losses.is_empty());
    }
}
