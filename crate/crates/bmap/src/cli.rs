use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use bmap_core::metrics::evaluate_with;
use bmap_core::net::SegNet;
use bmap_core::penalty::build_penalty;
use bmap_core::phantom::generate;
use bmap_core::postproc::postprocess_with;
use bmap_core::LabelVolume;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fsio;
use crate::pipeline::{compare_losses, phantom_dataset, train_network, CURVE_WINDOW};
use crate::report::{
    comparison_classes_csv, comparison_csv, metrics_csv, train_csv, ComparisonRow,
};
use crate::volume::{read_labels, read_scalar, write_labels, write_scalar, ElementType};

#[derive(Debug, Parser)]
#[command(
    name = "bmap",
    version,
    about = "Distance-map penalized segmentation on 3D label volumes"
)]
pub struct Cli {
    /// Run configuration (flat `section.key = value` file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `paths.output` or the current directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a phantom image and its ground truth (image.mhd, gt.mhd).
    GenPhantom,
    /// Penalty map of a ground-truth volume and its constituents.
    Distmap { gt: PathBuf },
    /// Train on generated phantoms; writes the checkpoint and train.csv.
    Train,
    /// Segment an image with a trained checkpoint (pred.mhd).
    Predict { checkpoint: PathBuf, image: PathBuf },
    /// Closing plus largest component per class (post.mhd).
    Postproc { labels: PathBuf },
    /// Score a prediction against ground truth (metrics.csv).
    Eval { pred: PathBuf, gt: PathBuf },
    /// Train and score every compared loss on the same data (compare.csv).
    CompareLosses,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Parse `args` (including the program name) and run; returns the process
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fsio::create_dir(&out)?;
    let ctx = Context { cfg, out };
    match cli.command {
        Command::GenPhantom => gen_phantom(&ctx),
        Command::Distmap { gt } => distmap(&ctx, &gt),
        Command::Train => train_cmd(&ctx),
        Command::Predict { checkpoint, image } => predict(&ctx, &checkpoint, &image),
        Command::Postproc { labels } => postproc(&ctx, &labels),
        Command::Eval { pred, gt } => eval(&ctx, &pred, &gt),
        Command::CompareLosses => compare(&ctx),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fsio::write_atomic(path, text.as_bytes())
}

fn gen_phantom(ctx: &Context) -> Result<()> {
    let (image, gt) = generate(&ctx.cfg.phantom.spec(ctx.cfg.seed)?)?;
    write_scalar(&ctx.path("image.mhd"), &image, ElementType::Double)?;
    write_labels(&ctx.path("gt.mhd"), &gt)?;
    let counts: Vec<String> = (1..4u8).map(|c| gt.count(c).to_string()).collect();
    println!(
        "phantom seed {}: class voxels {}",
        ctx.cfg.seed,
        counts.join(" ")
    );
    Ok(())
}

fn distmap(ctx: &Context, gt_path: &Path) -> Result<()> {
    let gt = read_labels(gt_path, None)?;
    let scale = ctx.cfg.train.loss.phi_scale;
    let mut map = build_penalty(&gt)?;
    if scale != 1.0 {
        let scaled = map.phi.data().iter().map(|v| v * scale).collect();
        map.phi = bmap_core::ScalarVolume::new(*map.phi.shape(), scaled)?;
    }
    write_scalar(&ctx.path("phi.mhd"), &map.phi, ElementType::Double)?;
    write_scalar(&ctx.path("outer.mhd"), &map.outer, ElementType::Double)?;
    for class in 1..gt.num_classes() {
        if let Some(inner) = map.inner_of(class) {
            write_scalar(
                &ctx.path(&format!("inner_{class}.mhd")),
                inner,
                ElementType::Double,
            )?;
        }
    }
    println!("phi range [{}, {}]", map.phi.min(), map.phi.max());
    Ok(())
}

fn checkpoint_path(ctx: &Context) -> PathBuf {
    ctx.cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| ctx.path("checkpoint.bin"))
}

fn train_cmd(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let data = phantom_dataset(cfg)?;
    let (net, record) = train_network(
        cfg,
        cfg.train.loss.kind,
        &data.train,
        std::slice::from_ref(&data.held_out),
    )?;
    fsio::write_atomic(&checkpoint_path(ctx), &net.to_checkpoint_bytes())?;
    write_text(&ctx.path("train.csv"), &train_csv(&record, &cfg.tolerances))?;
    write_text(&ctx.path("run.conf"), &cfg.render())?;
    println!(
        "{}: loss {:.6} -> {:.6} (means of first/last {CURVE_WINDOW})",
        cfg.train.loss.kind,
        record.head_mean(CURVE_WINDOW),
        record.tail_mean(CURVE_WINDOW)
    );
    Ok(())
}

fn load_net(path: &Path) -> Result<SegNet> {
    SegNet::from_checkpoint_bytes(&fsio::read(path)?)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn predict(ctx: &Context, checkpoint: &Path, image_path: &Path) -> Result<()> {
    let net = load_net(checkpoint)?;
    let image = read_scalar(image_path)?;
    let pred = net.predict(&image);
    write_labels(&ctx.path("pred.mhd"), &pred)?;
    Ok(())
}

fn postproc(ctx: &Context, labels: &Path) -> Result<()> {
    let pred = read_labels(labels, None)?;
    write_labels(
        &ctx.path("post.mhd"),
        &postprocess_with(&pred, &ctx.cfg.postproc),
    )?;
    Ok(())
}

/// Both volumes are read with the larger inferred class count so a
/// prediction missing the top class still compares.
fn read_pair(pred: &Path, gt: &Path) -> Result<(LabelVolume, LabelVolume)> {
    let p = read_labels(pred, None)?;
    let g = read_labels(gt, None)?;
    let k = p.num_classes().max(g.num_classes());
    Ok((read_labels(pred, Some(k))?, read_labels(gt, Some(k))?))
}

fn eval(ctx: &Context, pred: &Path, gt: &Path) -> Result<()> {
    let (p, g) = read_pair(pred, gt)?;
    let report = evaluate_with(&p, &g, &ctx.cfg.tolerances)?;
    let csv = metrics_csv(&report);
    write_text(&ctx.path("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn compare(ctx: &Context) -> Result<()> {
    let results = compare_losses(&ctx.cfg)?;
    for c in &results {
        let dir = ctx.path(c.row.kind.name());
        fsio::create_dir(&dir)?;
        fsio::write_atomic(&dir.join("checkpoint.bin"), &c.net.to_checkpoint_bytes())?;
        write_text(
            &dir.join("train.csv"),
            &train_csv(&c.record, &ctx.cfg.tolerances),
        )?;
    }
    let rows: Vec<ComparisonRow> = results.into_iter().map(|c| c.row).collect();
    let csv = comparison_csv(&rows, CURVE_WINDOW);
    write_text(&ctx.path("compare.csv"), &csv)?;
    write_text(
        &ctx.path("compare_classes.csv"),
        &comparison_classes_csv(&rows),
    )?;
    write_text(&ctx.path("run.conf"), &ctx.cfg.render())?;
    print!("{csv}");
    if let Some(best) = rows
        .iter()
        .max_by(|a, b| a.report.mean_b_dsc.total_cmp(&b.report.mean_b_dsc))
    {
        println!("highest B-DSC: {}", best.kind);
    }
    Ok(())
}
