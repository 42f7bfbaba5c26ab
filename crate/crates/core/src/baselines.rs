//! Reference optimizers used as comparison points: SGD, Adam/AdamW and Lion.

use serde::{Deserialize, Serialize};

use crate::arcgd::sign;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
}

impl Default for SgdConfig {
    /// `lr = 0.005`, five times the usual default.
    fn default() -> Self {
        Self { lr: 0.005 }
    }
}

impl SgdConfig {
    pub fn check(&self) -> Result<()> {
        // lr = 0 is allowed: it is the "no progress" control.
        if self.lr >= 0.0 && self.lr.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "SGD lr must be >= 0, got {}",
                self.lr
            )))
        }
    }
}

/// Adam hyperparameters. A non-zero `weight_decay` turns it into AdamW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay; 0 for plain Adam.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    /// Adam with its learning rate matched to ArcGD's default effective
    /// learning rate (0.0109).
    pub fn matched_to_arcgd() -> Self {
        Self {
            lr: 0.0109,
            ..Self::default()
        }
    }

    /// AdamW with `weight_decay = 0.01`.
    pub fn adamw() -> Self {
        Self {
            weight_decay: 0.01,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "Adam lr must be >= 0, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "Adam {name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "Adam epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LionConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl Default for LionConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.01,
        }
    }
}

impl LionConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "Lion lr must be >= 0, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "Lion {name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// `x <- x - lr g`, in place.
pub fn sgd_step(x: &mut [f64], g: &[f64], cfg: &SgdConfig) -> Result<()> {
    check_len(x.len(), g.len())?;
    for (xi, &gi) in x.iter_mut().zip(g) {
        *xi -= cfg.lr * gi;
    }
    Ok(())
}

/// Bias-corrected Adam, with decoupled weight decay applied to `x` before the
/// adaptive step when `weight_decay > 0`.
pub fn adam_step(state: &mut AdamState, x: &mut [f64], g: &[f64], cfg: &AdamConfig) -> Result<()> {
    check_len(x.len(), g.len())?;
    check_len(x.len(), state.m.len())?;
    check_len(x.len(), state.v.len())?;

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.lr * cfg.weight_decay;

    for (((xi, &gi), mi), vi) in x.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        if decay != 0.0 {
            *xi -= decay * *xi;
        }
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *xi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Lion: step along `sign(beta1 m + (1 - beta1) g)` with decoupled decay, then
/// move the momentum with `beta2`.
pub fn lion_step(m: &mut [f64], x: &mut [f64], g: &[f64], cfg: &LionConfig) -> Result<()> {
    check_len(x.len(), g.len())?;
    check_len(x.len(), m.len())?;
    for ((xi, &gi), mi) in x.iter_mut().zip(g).zip(m.iter_mut()) {
        let interp = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        *xi -= cfg.lr * (sign(interp) + cfg.weight_decay * *xi);
        *mi = cfg.beta2 * *mi + (1.0 - cfg.beta2) * gi;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let cfg = SgdConfig::default();
        let mut x = vec![1.0, -2.0];
        sgd_step(&mut x, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(x, vec![1.0, -2.0]);

        let mut x = vec![1.0];
        sgd_step(&mut x, &[1.0], &cfg).unwrap();
        assert_eq!(x, vec![0.995]);

        let (mut a, mut b) = (vec![0.3], vec![0.3]);
        sgd_step(&mut a, &[0.7], &cfg).unwrap();
        sgd_step(&mut b, &[1.4], &cfg).unwrap();
        assert!(((b[0] - 0.3) - 2.0 * (a[0] - 0.3)).abs() < 1e-16);

        assert!(matches!(
            sgd_step(&mut [0.0], &[1.0, 2.0], &cfg),
            Err(Error::Shape { .. })
        ));
    }

    /// Scripted first Adam step: m_hat = g, v_hat = g^2.
    fn first_adam_delta(g: f64, cfg: &AdamConfig) -> f64 {
        let m = (1.0 - cfg.beta1) * g;
        let v = (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1);
        let v_hat = v / (1.0 - cfg.beta2);
        -cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon)
    }

    #[test]
    fn adam_first_step() {
        let cfg = AdamConfig::default();
        let g = [2.5, -1e-3, 40.0];
        let mut x = vec![0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut st, &mut x, &g, &cfg).unwrap();
        for i in 0..3 {
            let expected = first_adam_delta(g[i], &cfg);
            assert!((x[i] - expected).abs() < 1e-15, "{} vs {}", x[i], expected);
            assert!(x[i].abs() <= cfg.lr * (1.0 + 1e-6));
            assert!((x[i] + cfg.lr * g[i].signum()).abs() < 1e-7);
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_x() {
        let mut x = vec![1.0, 2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut st, &mut x, &[0.0, 0.0], &AdamConfig::default()).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn adamw_decay_only() {
        let cfg = AdamConfig::adamw();
        let mut x = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut st, &mut x, &[0.0], &cfg).unwrap();
        assert!((x[0] - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn lion_examples() {
        let cfg = LionConfig {
            weight_decay: 0.0,
            ..LionConfig::default()
        };
        let mut m = vec![0.0];
        let mut x = vec![0.5];
        lion_step(&mut m, &mut x, &[0.0], &cfg).unwrap();
        assert_eq!(x, vec![0.5]);

        let mut m = vec![0.0];
        let mut x = vec![0.0];
        lion_step(&mut m, &mut x, &[5.0], &cfg).unwrap();
        assert_eq!(x, vec![-0.001]);
        assert!((m[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn lion_step_magnitude_bound() {
        let cfg = LionConfig::default();
        let mut m = vec![0.3, -0.2, 0.0];
        let mut x = vec![2.0, -1.0, 0.5];
        let before = x.clone();
        lion_step(&mut m, &mut x, &[1.0, 4.0, 0.0], &cfg).unwrap();
        for i in 0..3 {
            let bound = cfg.lr * (1.0 + cfg.weight_decay * before[i].abs());
            assert!((x[i] - before[i]).abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn config_checks() {
        assert!(AdamConfig::default().check().is_ok());
        assert!(AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        }
        .check()
        .is_err());
        assert!(AdamConfig {
            epsilon: 0.0,
            ..AdamConfig::default()
        }
        .check()
        .is_err());
        assert!(LionConfig {
            lr: -1.0,
            ..LionConfig::default()
        }
        .check()
        .is_err());
        assert!(SgdConfig { lr: f64::NAN }.check().is_err());
        assert!(SgdConfig { lr: 0.0 }.check().is_ok());
    }
}
