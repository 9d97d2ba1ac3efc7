//! Segmentation losses with exact gradients with respect to the logits.
//!
//! Every loss takes pre-softmax logits and returns the scalar value together
//! with `d value / d logit` for every voxel and class. Voxel means use the
//! pairwise sum from [`crate::grid::pairwise_sum`], so values are
//! reproducible bit-for-bit for a given shape.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, ClassVolume, LabelVolume, ScalarVolume};

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    PenalizedCe,
    CrossEntropy,
    SoftDice,
    Focal,
    ConfidencePenalty,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::PenalizedCe,
        LossKind::CrossEntropy,
        LossKind::SoftDice,
        LossKind::Focal,
        LossKind::ConfidencePenalty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PenalizedCe => "penalized_ce",
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::SoftDice => "soft_dice",
            LossKind::Focal => "focal",
            LossKind::ConfidencePenalty => "confidence_penalty",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn needs_penalty(self) -> bool {
        self == LossKind::PenalizedCe
    }
}

impl core::fmt::Display for LossKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Focal modulation exponent.
    pub gamma: f64,
    /// Weight of the entropy bonus in the confidence penalty.
    pub beta: f64,
    /// Probability floor applied before logarithms, and Dice denominator guard.
    pub epsilon: f64,
    /// Multiplier applied to the penalty map before `1 + phi`.
    pub phi_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::PenalizedCe,
            gamma: 2.0,
            beta: 0.1,
            epsilon: DEFAULT_EPSILON,
            phi_scale: 1.0,
        }
    }
}

impl LossConfig {
    pub fn with_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 4] = [
            ("gamma", self.gamma, self.gamma >= 0.0),
            ("beta", self.beta, self.beta >= 0.0),
            (
                "epsilon",
                self.epsilon,
                self.epsilon > 0.0 && self.epsilon < 1.0,
            ),
            ("phi_scale", self.phi_scale, self.phi_scale > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, input: &LossInput<'_>) -> Result<LossOutcome> {
        self.validate()?;
        input.validate()?;
        match self.kind {
            LossKind::PenalizedCe => {
                let phi = input.phi.ok_or(Error::MissingPenalty)?;
                let weights: Vec<f64> = phi
                    .data()
                    .iter()
                    .map(|&p| 1.0 + self.phi_scale * p)
                    .collect();
                Ok(weighted_ce(input, Some(&weights), self.epsilon))
            }
            LossKind::CrossEntropy => Ok(weighted_ce(input, None, self.epsilon)),
            LossKind::SoftDice => Ok(soft_dice_impl(input, self.epsilon)),
            LossKind::Focal => Ok(focal_impl(input, self.gamma, self.epsilon)),
            LossKind::ConfidencePenalty => {
                Ok(confidence_penalty_impl(input, self.beta, self.epsilon))
            }
        }
    }
}

/// Logits, target labels and (for the penalized loss) the combined penalty
/// field, usually [`crate::penalty::PenaltyMap::phi`].
#[derive(Debug, Clone, Copy)]
pub struct LossInput<'a> {
    pub logits: &'a ClassVolume,
    pub target: &'a LabelVolume,
    pub phi: Option<&'a ScalarVolume>,
}

impl<'a> LossInput<'a> {
    pub fn new(logits: &'a ClassVolume, target: &'a LabelVolume) -> Self {
        Self {
            logits,
            target,
            phi: None,
        }
    }

    pub fn with_penalty(mut self, phi: &'a ScalarVolume) -> Self {
        self.phi = Some(phi);
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.logits.shape().same_lattice(self.target.shape()) {
            return Err(Error::ShapeMismatch);
        }
        if self.logits.num_classes() != self.target.num_classes() {
            return Err(Error::ClassCountMismatch {
                left: self.logits.num_classes(),
                right: self.target.num_classes(),
            });
        }
        if let Some(phi) = self.phi {
            if !phi.shape().same_lattice(self.target.shape()) {
                return Err(Error::ShapeMismatch);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutcome {
    pub value: f64,
    /// `d value / d logit`, same layout as the logits.
    pub grad: ClassVolume,
    /// Classes whose soft Dice was defined as 1 because they are absent from
    /// both the prediction and the target. Empty for other losses.
    pub vacuous_classes: Vec<usize>,
}

/// Per-voxel softmax over channels, with the channel maximum subtracted
/// before exponentiation.
pub fn softmax(logits: &ClassVolume) -> ClassVolume {
    let n = logits.shape().len();
    let k = logits.num_classes();
    let mut out = ClassVolume::zeros(*logits.shape(), k);
    let src = logits.data();
    let dst = out.data_mut();
    let mut exps = vec![0.0; k];
    for i in 0..n {
        let max = (0..k)
            .map(|c| src[c * n + i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (c, e) in exps.iter_mut().enumerate() {
            *e = libm::exp(src[c * n + i] - max);
            total += *e;
        }
        for (c, e) in exps.iter().enumerate() {
            dst[c * n + i] = e / total;
        }
    }
    out
}

/// Distance-map penalized cross entropy:
/// `mean_i (1 + phi_i) * -log p_i[target_i]`.
pub fn penalized_ce(input: &LossInput<'_>) -> Result<LossOutcome> {
    LossConfig::with_kind(LossKind::PenalizedCe).evaluate(input)
}

pub fn cross_entropy(input: &LossInput<'_>) -> Result<LossOutcome> {
    LossConfig::with_kind(LossKind::CrossEntropy).evaluate(input)
}

/// `1 - mean` over foreground classes of the soft Dice coefficient
/// `2 sum(p g) / (sum(p^2) + sum(g^2))`.
pub fn soft_dice(input: &LossInput<'_>) -> Result<LossOutcome> {
    LossConfig::with_kind(LossKind::SoftDice).evaluate(input)
}

pub fn focal(input: &LossInput<'_>, gamma: f64) -> Result<LossOutcome> {
    LossConfig {
        gamma,
        ..LossConfig::with_kind(LossKind::Focal)
    }
    .evaluate(input)
}

/// Cross entropy minus `beta` times the mean prediction entropy.
pub fn confidence_penalty(input: &LossInput<'_>, beta: f64) -> Result<LossOutcome> {
    LossConfig {
        beta,
        ..LossConfig::with_kind(LossKind::ConfidencePenalty)
    }
    .evaluate(input)
}

fn weighted_ce(input: &LossInput<'_>, weights: Option<&[f64]>, eps: f64) -> LossOutcome {
    let probs = softmax(input.logits);
    let n = probs.shape().len();
    let k = probs.num_classes();
    let inv_n = 1.0 / n as f64;
    let target = input.target.labels();
    let mut terms = vec![0.0; n];
    let mut grad = probs.clone();
    let g = grad.data_mut();
    for i in 0..n {
        let t = target[i] as usize;
        let p = probs.at(t, i);
        let w = weights.map_or(1.0, |w| w[i]);
        terms[i] = w * -libm::log(p.max(eps));
        if p < eps {
            // clamped: the term is constant in the logits
            for c in 0..k {
                g[c * n + i] = 0.0;
            }
            continue;
        }
        for c in 0..k {
            let y = (c == t) as u8 as f64;
            g[c * n + i] = w * (g[c * n + i] - y) * inv_n;
        }
    }
    LossOutcome {
        value: pairwise_sum(&terms) * inv_n,
        grad,
        vacuous_classes: Vec::new(),
    }
}

fn soft_dice_impl(input: &LossInput<'_>, eps: f64) -> LossOutcome {
    let probs = softmax(input.logits);
    let n = probs.shape().len();
    let k = probs.num_classes();
    let target = input.target.labels();
    let predicted = probs.argmax();
    let fg_classes = (k - 1) as f64;

    // d loss / d p, then pushed through the softmax
    let mut dp = ClassVolume::zeros(*probs.shape(), k);
    let mut dice_sum = 0.0;
    let mut vacuous = Vec::new();
    let mut scratch = vec![0.0; n];
    for c in 1..k {
        let p = probs.channel(c);
        let in_gt = target.iter().filter(|&&l| l as usize == c).count();
        if in_gt == 0 && !predicted.labels().iter().any(|&l| l as usize == c) {
            vacuous.push(c);
            dice_sum += 1.0;
            continue;
        }
        for (s, (&pi, &l)) in scratch.iter_mut().zip(p.iter().zip(target)) {
            *s = if l as usize == c { pi } else { 0.0 };
        }
        let overlap = pairwise_sum(&scratch);
        for (s, &pi) in scratch.iter_mut().zip(p) {
            *s = pi * pi;
        }
        let denom = pairwise_sum(&scratch) + in_gt as f64 + eps;
        dice_sum += 2.0 * overlap / denom;
        let scale = -1.0 / fg_classes;
        let d = dp.channel_mut(c);
        for i in 0..n {
            let g = (target[i] as usize == c) as u8 as f64;
            let dd = 2.0 * g / denom - 4.0 * overlap * p[i] / (denom * denom);
            d[i] = scale * dd;
        }
    }
    LossOutcome {
        value: 1.0 - dice_sum / fg_classes,
        grad: softmax_backward(&probs, &dp),
        vacuous_classes: vacuous,
    }
}

/// Chain rule through the softmax: `dz_k = p_k (dp_k - sum_j p_j dp_j)`.
fn softmax_backward(probs: &ClassVolume, dp: &ClassVolume) -> ClassVolume {
    let n = probs.shape().len();
    let k = probs.num_classes();
    let mut out = ClassVolume::zeros(*probs.shape(), k);
    let p = probs.data();
    let d = dp.data();
    let o = out.data_mut();
    for i in 0..n {
        let mut dot = 0.0;
        for c in 0..k {
            dot += p[c * n + i] * d[c * n + i];
        }
        for c in 0..k {
            o[c * n + i] = p[c * n + i] * (d[c * n + i] - dot);
        }
    }
    out
}

fn focal_impl(input: &LossInput<'_>, gamma: f64, eps: f64) -> LossOutcome {
    let probs = softmax(input.logits);
    let n = probs.shape().len();
    let k = probs.num_classes();
    let inv_n = 1.0 / n as f64;
    let target = input.target.labels();
    let mut terms = vec![0.0; n];
    let mut grad = ClassVolume::zeros(*probs.shape(), k);
    let g = grad.data_mut();
    for i in 0..n {
        let t = target[i] as usize;
        let pt = probs.at(t, i);
        let clamped = pt < eps;
        let p = pt.max(eps);
        let q = 1.0 - p;
        let log_p = libm::log(p);
        terms[i] = -libm::pow(q, gamma) * log_p;
        if clamped {
            continue;
        }
        // p_t * d term / d p_t; the first part vanishes as p_t -> 1
        let modulating = if gamma == 0.0 || q == 0.0 {
            0.0
        } else {
            gamma * libm::pow(q, gamma - 1.0) * p * log_p
        };
        let outer = modulating - libm::pow(q, gamma);
        for c in 0..k {
            let delta = (c == t) as u8 as f64;
            g[c * n + i] = outer * (delta - probs.at(c, i)) * inv_n;
        }
    }
    LossOutcome {
        value: pairwise_sum(&terms) * inv_n,
        grad,
        vacuous_classes: Vec::new(),
    }
}

fn confidence_penalty_impl(input: &LossInput<'_>, beta: f64, eps: f64) -> LossOutcome {
    let ce = weighted_ce(input, None, eps);
    let probs = softmax(input.logits);
    let n = probs.shape().len();
    let k = probs.num_classes();
    let inv_n = 1.0 / n as f64;
    let mut entropies = vec![0.0; n];
    let mut grad = ce.grad;
    let g = grad.data_mut();
    for i in 0..n {
        let mut h = 0.0;
        for c in 0..k {
            let p = probs.at(c, i);
            if p > 0.0 {
                h -= p * libm::log(p);
            }
        }
        entropies[i] = h;
        // d(-beta H)/dz_c = beta p_c (log p_c + H)
        for c in 0..k {
            let p = probs.at(c, i);
            if p > 0.0 {
                g[c * n + i] += beta * p * (libm::log(p) + h) * inv_n;
            }
        }
    }
    LossOutcome {
        value: ce.value - beta * pairwise_sum(&entropies) * inv_n,
        grad,
        vacuous_classes: Vec::new(),
    }
}
