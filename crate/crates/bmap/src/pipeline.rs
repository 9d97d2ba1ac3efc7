//! Phantom datasets, training runs and the loss comparison.

use std::time::Instant;

use bmap_core::loss::LossKind;
use bmap_core::metrics::{evaluate_with, MetricReport};
use bmap_core::net::SegNet;
use bmap_core::phantom::{generate, NUM_CLASSES};
use bmap_core::postproc::postprocess_with;
use bmap_core::train::{train, Sample, TrainRecord};
use bmap_core::{LabelVolume, ScalarVolume};

use crate::config::RunConfig;
use crate::error::Result;
use crate::report::ComparisonRow;

/// Losses compared by [`compare_losses`], in report order.
pub const COMPARED: [LossKind; 4] = [
    LossKind::PenalizedCe,
    LossKind::SoftDice,
    LossKind::Focal,
    LossKind::ConfidencePenalty,
];

/// Iterations averaged at each end of the loss curve.
pub const CURVE_WINDOW: usize = 20;

pub struct Dataset {
    pub train: Vec<Sample>,
    pub held_out: Sample,
}

/// The held-out phantom uses the run seed itself (the volume `gen-phantom`
/// writes for that seed); training phantom `i` uses `seed + 1 + i`.
pub fn phantom_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let sample = |seed: u64| -> Result<Sample> {
        let (image, gt) = generate(&cfg.phantom.spec(seed)?)?;
        Ok(Sample::new(image, gt)?)
    };
    let train = (0..cfg.train_samples as u64)
        .map(|i| sample(cfg.seed.wrapping_add(1 + i)))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        train,
        held_out: sample(cfg.seed)?,
    })
}

/// Train a freshly initialised network with the loss `kind`. Validation
/// metrics, when `train.eval_every > 0`, are taken on the raw predictions
/// for `validation`.
pub fn train_network(
    cfg: &RunConfig,
    kind: LossKind,
    data: &[Sample],
    validation: &[Sample],
) -> Result<(SegNet, TrainRecord)> {
    let mut tc = cfg.train.clone();
    tc.loss = cfg.loss_for(kind);
    tc.seed = cfg.seed;
    let net = SegNet::new(cfg.hidden, NUM_CLASSES, cfg.seed);
    let origin = Instant::now();
    let mut clock = move || origin.elapsed().as_secs_f64();
    log::info!("training {kind} for {} iterations", tc.iterations);
    match train(net, data, validation, &tc, &mut clock) {
        Ok((net, record)) => {
            log::info!(
                "{kind}: {:.1}s, final loss {:.6}",
                record.seconds.iter().sum::<f64>(),
                record.losses.last().copied().unwrap_or(f64::NAN)
            );
            Ok((net, record))
        }
        Err(failure) => {
            log::error!(
                "{kind}: stopped after {} finite iterations",
                failure.record.losses.len()
            );
            Err(failure.error.into())
        }
    }
}

/// Predict, post-process and score one volume.
pub fn assess(
    net: &SegNet,
    image: &ScalarVolume,
    gt: &LabelVolume,
    cfg: &RunConfig,
) -> Result<(LabelVolume, MetricReport)> {
    let pred = postprocess_with(&net.predict(image), &cfg.postproc);
    let report = evaluate_with(&pred, gt, &cfg.tolerances)?;
    Ok((pred, report))
}

pub struct Comparison {
    pub row: ComparisonRow,
    pub net: SegNet,
    pub record: TrainRecord,
}

/// Train one network per compared loss on the same phantoms and seed and
/// score each on the held-out phantom after post-processing. The runs are
/// independent and execute on separate threads; results keep
/// [`COMPARED`] order.
pub fn compare_losses(cfg: &RunConfig) -> Result<Vec<Comparison>> {
    let data = phantom_dataset(cfg)?;
    let validation = std::slice::from_ref(&data.held_out);
    let results: Vec<Result<Comparison>> = std::thread::scope(|scope| {
        let handles: Vec<_> = COMPARED
            .iter()
            .map(|&kind| {
                let data = &data;
                scope.spawn(move || -> Result<Comparison> {
                    let (net, record) = train_network(cfg, kind, &data.train, validation)?;
                    let held = &data.held_out;
                    let (_, report) = assess(&net, &held.image, &held.gt, cfg)?;
                    let row = ComparisonRow {
                        kind,
                        report,
                        loss_first: record.head_mean(CURVE_WINDOW),
                        loss_last: record.tail_mean(CURVE_WINDOW),
                    };
                    Ok(Comparison { row, net, record })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}
