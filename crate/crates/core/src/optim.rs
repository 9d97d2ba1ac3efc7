//! Adam with bias-corrected moment estimates.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("lr", self.lr, self.lr >= 0.0),
            ("beta1", self.beta1, (0.0..1.0).contains(&self.beta1)),
            ("beta2", self.beta2, (0.0..1.0).contains(&self.beta2)),
            ("eps", self.eps, self.eps > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for tensors of the given lengths.
    pub fn new(config: AdamConfig, lengths: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            first: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second: lengths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update of every tensor in `params` from the matching gradient
    /// block. Nothing is modified when a gradient is non-finite or shapes
    /// disagree. Returns the largest absolute parameter change.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        names: &[&str],
    ) -> Result<f64> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::ShapeMismatch);
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.first[k].len() {
                return Err(Error::ShapeMismatch);
            }
            if g.iter().any(|v| !v.is_finite()) {
                let name = names
                    .get(k)
                    .map_or_else(|| alloc::format!("#{k}"), |n| n.to_string());
                return Err(Error::NonFiniteGradient(name));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        let mut largest: f64 = 0.0;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let update = lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + eps);
                p[i] -= update;
                largest = largest.max(update.abs());
            }
        }
        Ok(largest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(state: &mut AdamState, p: &mut [f64], g: f64) -> f64 {
        let before = p[0];
        state.step(&mut [p], &[vec![g]], &["w"]).unwrap();
        p[0] - before
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = [1.0, -2.0, 0.5];
        s.step(&mut [&mut p], &[vec![0.0; 3]], &["w"]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(cfg, &[1]);
        let mut p = [0.0];
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let g = 0.37;
        let delta = one(&mut s, &mut p, g);
        let expected = -cfg.lr * g / (g + cfg.eps);
        assert!((delta - expected).abs() < 1e-18);
        assert!((delta + cfg.lr).abs() < 1e-10);
    }

    #[test]
    fn constant_gradient_converges_to_lr() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(cfg, &[1]);
        let mut p = [0.0];
        let mut delta = 0.0;
        for _ in 0..1000 {
            delta = one(&mut s, &mut p, -2.5);
        }
        assert!((delta - cfg.lr).abs() <= 0.01 * cfg.lr);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut s = AdamState::new(AdamConfig::default(), &[1, 1]);
        let (mut a, mut b) = ([0.0], [0.0]);
        let err = s
            .step(
                &mut [&mut a, &mut b],
                &[vec![1.0], vec![f64::NAN]],
                &["a", "b"],
            )
            .unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("b".into()));
        assert_eq!(s.t, 0);
        assert_eq!(a, [0.0]);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(cfg, &[1]);
        let mut p = [0.25];
        for g in [1.0, -3.0, 0.5] {
            one(&mut s, &mut p, g);
        }
        assert_eq!(p, [0.25]);
    }
}
