//! Flat `section.key = value` run configuration. Blank lines and `#`
//! comments are ignored; list values are whitespace separated. Every key
//! has a default, so an empty file is a complete configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bmap_core::loss::{LossConfig, LossKind};
use bmap_core::metrics::DEFAULT_TOLERANCES;
use bmap_core::net::DEFAULT_HIDDEN;
use bmap_core::optim::AdamConfig;
use bmap_core::phantom::PhantomSpec;
use bmap_core::postproc::{Connectivity, PostprocConfig, StructuringElement};
use bmap_core::train::TrainConfig;
use bmap_core::Shape3;

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub size: [usize; 3],
    pub ratio_femur_tibia: f64,
    pub ratio_femur_patella: f64,
    pub noise_sigma: f64,
    pub intensities: [f64; 4],
}

impl PhantomConfig {
    pub fn spec(&self, seed: u64) -> Result<PhantomSpec> {
        let [nx, ny, nz] = self.size;
        let mut spec = PhantomSpec::new(Shape3::new(nx, ny, nz)?, seed);
        spec.ratio_femur_tibia = self.ratio_femur_tibia;
        spec.ratio_femur_patella = self.ratio_femur_patella;
        spec.noise_sigma = self.noise_sigma;
        spec.intensities = self.intensities;
        spec.validate()?;
        Ok(spec)
    }
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let spec = PhantomSpec::new(Shape3::cube(32).expect("non-empty"), 0);
        Self {
            size: [32; 3],
            ratio_femur_tibia: spec.ratio_femur_tibia,
            ratio_femur_patella: spec.ratio_femur_patella,
            noise_sigma: spec.noise_sigma,
            intensities: spec.intensities,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub train: TrainConfig,
    pub hidden: usize,
    /// Number of generated training phantoms.
    pub train_samples: usize,
    pub checkpoint: Option<PathBuf>,
    pub postproc: PostprocConfig,
    pub tolerances: Vec<u32>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phantom: PhantomConfig::default(),
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN,
            train_samples: 4,
            checkpoint: None,
            postproc: PostprocConfig::default(),
            tolerances: DEFAULT_TOLERANCES.to_vec(),
            input: None,
            output: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "phantom.size",
    "phantom.ratio_femur_tibia",
    "phantom.ratio_femur_patella",
    "phantom.noise_sigma",
    "phantom.intensities",
    "penalty.phi_scale",
    "loss.kind",
    "loss.gamma",
    "loss.beta",
    "loss.epsilon",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.iterations",
    "train.batch_size",
    "train.augment_max_degrees",
    "train.eval_every",
    "train.hidden",
    "train.samples",
    "train.checkpoint",
    "postproc.connectivity",
    "postproc.element",
    "eval.tolerances",
    "paths.input",
    "paths.output",
];

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr, const N: usize>(key: &str, value: &str) -> Result<[T; N]> {
    let items: Vec<T> = value
        .split_whitespace()
        .map(|v| scalar(key, v))
        .collect::<Result<_>>()?;
    let got = items.len();
    items
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {N} values, found {got}")))
}

fn connectivity(key: &str, value: &str) -> Result<Connectivity> {
    Connectivity::from_count(scalar(key, value)?)
        .ok_or_else(|| Error::Config(format!("{key}: expected 6 or 26, found {value}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key}",
                    n + 1
                )));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsio::read(path)?;
        let text =
            String::from_utf8(bytes).map_err(|_| Error::format(path, "config is not UTF-8"))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "seed" => self.seed = scalar(key, value)?,
            "phantom.size" => {
                self.phantom.size = match value.split_whitespace().count() {
                    1 => [scalar(key, value)?; 3],
                    _ => list(key, value)?,
                }
            }
            "phantom.ratio_femur_tibia" => self.phantom.ratio_femur_tibia = scalar(key, value)?,
            "phantom.ratio_femur_patella" => self.phantom.ratio_femur_patella = scalar(key, value)?,
            "phantom.noise_sigma" => self.phantom.noise_sigma = scalar(key, value)?,
            "phantom.intensities" => self.phantom.intensities = list(key, value)?,
            "penalty.phi_scale" => t.loss.phi_scale = scalar(key, value)?,
            "loss.kind" => {
                t.loss.kind = LossKind::from_name(value)
                    .ok_or_else(|| Error::Config(format!("{key}: unknown loss {value:?}")))?
            }
            "loss.gamma" => t.loss.gamma = scalar(key, value)?,
            "loss.beta" => t.loss.beta = scalar(key, value)?,
            "loss.epsilon" => t.loss.epsilon = scalar(key, value)?,
            "train.lr" => t.adam.lr = scalar(key, value)?,
            "train.beta1" => t.adam.beta1 = scalar(key, value)?,
            "train.beta2" => t.adam.beta2 = scalar(key, value)?,
            "train.eps" => t.adam.eps = scalar(key, value)?,
            "train.iterations" => t.iterations = scalar(key, value)?,
            "train.batch_size" => t.batch_size = scalar(key, value)?,
            "train.augment_max_degrees" => t.augment_max_degrees = scalar(key, value)?,
            "train.eval_every" => t.eval_every = scalar(key, value)?,
            "train.hidden" => self.hidden = scalar(key, value)?,
            "train.samples" => self.train_samples = scalar(key, value)?,
            "train.checkpoint" => self.checkpoint = Some(value.into()),
            "postproc.connectivity" => self.postproc.connectivity = connectivity(key, value)?,
            "postproc.element" => {
                self.postproc.element = StructuringElement {
                    kind: connectivity(key, value)?,
                }
            }
            "eval.tolerances" => {
                self.tolerances = value
                    .split_whitespace()
                    .map(|v| scalar(key, v))
                    .collect::<Result<_>>()?
            }
            "paths.input" => self.input = Some(value.into()),
            "paths.output" => self.output = Some(value.into()),
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.phantom
            .spec(self.seed)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.hidden == 0 {
            return Err(Error::Config("train.hidden must be at least 1".into()));
        }
        if self.train_samples == 0 {
            return Err(Error::Config("train.samples must be at least 1".into()));
        }
        Ok(())
    }

    /// The loss configuration for `kind`, keeping every other loss setting.
    pub fn loss_for(&self, kind: LossKind) -> LossConfig {
        LossConfig {
            kind,
            ..self.train.loss
        }
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let t = &self.train;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = t.adam;
        let join = |v: &[String]| v.join(" ");
        let lines: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            (
                "phantom.size",
                join(&self.phantom.size.map(|v| v.to_string())),
            ),
            (
                "phantom.ratio_femur_tibia",
                self.phantom.ratio_femur_tibia.to_string(),
            ),
            (
                "phantom.ratio_femur_patella",
                self.phantom.ratio_femur_patella.to_string(),
            ),
            ("phantom.noise_sigma", self.phantom.noise_sigma.to_string()),
            (
                "phantom.intensities",
                join(&self.phantom.intensities.map(|v| v.to_string())),
            ),
            ("penalty.phi_scale", t.loss.phi_scale.to_string()),
            ("loss.kind", t.loss.kind.name().to_string()),
            ("loss.gamma", t.loss.gamma.to_string()),
            ("loss.beta", t.loss.beta.to_string()),
            ("loss.epsilon", t.loss.epsilon.to_string()),
            ("train.lr", lr.to_string()),
            ("train.beta1", beta1.to_string()),
            ("train.beta2", beta2.to_string()),
            ("train.eps", eps.to_string()),
            ("train.iterations", t.iterations.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            (
                "train.augment_max_degrees",
                t.augment_max_degrees.to_string(),
            ),
            ("train.eval_every", t.eval_every.to_string()),
            ("train.hidden", self.hidden.to_string()),
            ("train.samples", self.train_samples.to_string()),
            (
                "postproc.connectivity",
                self.postproc.connectivity.count().to_string(),
            ),
            (
                "postproc.element",
                self.postproc.element.kind.count().to_string(),
            ),
            (
                "eval.tolerances",
                join(
                    &self
                        .tolerances
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>(),
                ),
            ),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, v) in [
            ("train.checkpoint", &self.checkpoint),
            ("paths.input", &self.input),
            ("paths.output", &self.output),
        ] {
            if let Some(p) = v {
                let _ = writeln!(s, "{k} = {}", p.display());
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("# nothing here\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.adam.lr, 1e-4);
        assert_eq!(cfg.train.batch_size, 2);
        assert_eq!(cfg.train.augment_max_degrees, 15.0);
        assert_eq!(cfg.train.loss.gamma, 2.0);
        assert_eq!(cfg.train.loss.beta, 0.1);
        assert_eq!(cfg.train.loss.phi_scale, 1.0);
        assert_eq!(cfg.hidden, 8);
        assert_eq!(cfg.tolerances, vec![1, 2, 3, 4]);
        assert_eq!(cfg.postproc.connectivity, Connectivity::TwentySix);
    }

    #[test]
    fn dotted_keys_and_comments() {
        let cfg = RunConfig::parse(
            "seed = 42\ntrain.lr = 1e-2   # faster\nloss.kind = focal\nphantom.size = 24 28 32\neval.tolerances = 0 2\npostproc.connectivity = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.train.adam.lr, 1e-2);
        assert_eq!(cfg.train.loss.kind, LossKind::Focal);
        assert_eq!(cfg.phantom.size, [24, 28, 32]);
        assert_eq!(cfg.tolerances, vec![0, 2]);
        assert_eq!(cfg.postproc.connectivity, Connectivity::Six);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg =
            RunConfig::parse("seed = 7\ntrain.lr = 0.003\nphantom.intensities = 0 0.9 0.6 0.3")
                .unwrap();
        cfg.checkpoint = Some("model.bin".into());
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
        for key in KEYS {
            assert!(cfg.render().contains(key) || ["paths.input", "paths.output"].contains(key));
        }
    }

    #[test]
    fn errors_are_config_errors() {
        for text in [
            "nonsense",
            "train.lr = fast",
            "bogus.key = 1",
            "seed = 1\nseed = 2",
            "loss.kind = hinge",
            "phantom.intensities = 0 1",
            "train.batch_size = 0",
            "postproc.connectivity = 18",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }
}
