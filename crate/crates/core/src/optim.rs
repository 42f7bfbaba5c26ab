//! Stateful optimizers over flat parameter slices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arcgd::{apply_arcgd, ArcGdConfig};
use crate::baselines::{
    adam_step, lion_step, sgd_step, AdamConfig, AdamState, LionConfig, SgdConfig,
};
use crate::error::{check_len, Error, Result};

/// An optimizer that owns its own memory and updates parameters in place.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    ArcGd,
    Adam,
    AdamW,
    Lion,
    Sgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::ArcGd,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::Lion,
        OptimizerKind::Sgd,
    ];
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arcgd" => Ok(Self::ArcGd),
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::AdamW),
            "lion" => Ok(Self::Lion),
            "sgd" => Ok(Self::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ArcGd => "arcgd",
            Self::Adam => "adam",
            Self::AdamW => "adamw",
            Self::Lion => "lion",
            Self::Sgd => "sgd",
        })
    }
}

/// A fully configured optimizer, ready to be instantiated for a given
/// parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "optimizer", rename_all = "lowercase")]
pub enum OptimizerSpec {
    ArcGd(ArcGdConfig),
    /// Adam, or AdamW when `weight_decay > 0`.
    Adam(AdamConfig),
    Lion(LionConfig),
    Sgd(SgdConfig),
}

impl OptimizerSpec {
    /// The comparison defaults used for classifier training.
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::ArcGd => Self::ArcGd(ArcGdConfig::default()),
            OptimizerKind::Adam => Self::Adam(AdamConfig::default()),
            OptimizerKind::AdamW => Self::Adam(AdamConfig::adamw()),
            OptimizerKind::Lion => Self::Lion(LionConfig::default()),
            OptimizerKind::Sgd => Self::Sgd(SgdConfig::default()),
        }
    }

    /// Label used in reports ("ArcGD", "ADAM", "AdamW", "Lion", "SGD").
    pub fn name(&self) -> &'static str {
        match self {
            Self::ArcGd(_) => "ArcGD",
            Self::Adam(c) if c.weight_decay > 0.0 => "AdamW",
            Self::Adam(_) => "ADAM",
            Self::Lion(_) => "Lion",
            Self::Sgd(_) => "SGD",
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            Self::ArcGd(c) => c.check(),
            Self::Adam(c) => c.check(),
            Self::Lion(c) => c.check(),
            Self::Sgd(c) => c.check(),
        }
    }

    /// Per-coordinate step bound, where one exists independently of `x`.
    pub fn step_bound(&self) -> Option<f64> {
        match self {
            Self::ArcGd(c) => Some(c.step_bound()),
            _ => None,
        }
    }

    pub fn build(&self, n_params: usize) -> Result<Box<dyn Optimizer>> {
        Ok(match *self {
            Self::ArcGd(cfg) => {
                cfg.validate()?;
                Box::new(ArcGd::new(cfg, n_params))
            }
            Self::Adam(cfg) => {
                cfg.check()?;
                Box::new(Adam {
                    cfg,
                    state: AdamState::new(n_params),
                    name: self.name(),
                })
            }
            Self::Lion(cfg) => {
                cfg.check()?;
                Box::new(Lion {
                    cfg,
                    m: vec![0.0; n_params],
                })
            }
            Self::Sgd(cfg) => {
                cfg.check()?;
                Box::new(Sgd { cfg })
            }
        })
    }
}

/// ArcGD over an externally owned parameter buffer.
#[derive(Debug, Clone)]
pub struct ArcGd {
    cfg: ArcGdConfig,
    m: Vec<f64>,
    initialized: bool,
    steps: u64,
}

impl ArcGd {
    pub fn new(cfg: ArcGdConfig, n_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n_params],
            initialized: false,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

impl Optimizer for ArcGd {
    fn name(&self) -> &'static str {
        "ArcGD"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        apply_arcgd(
            params,
            &mut self.m,
            &mut self.initialized,
            grad,
            &self.cfg,
            None,
        )?;
        self.steps += 1;
        Ok(())
    }
}

struct Adam {
    cfg: AdamConfig,
    state: AdamState,
    name: &'static str,
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        self.name
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        adam_step(&mut self.state, params, grad, &self.cfg)
    }
}

struct Lion {
    cfg: LionConfig,
    m: Vec<f64>,
}

impl Optimizer for Lion {
    fn name(&self) -> &'static str {
        "Lion"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        lion_step(&mut self.m, params, grad, &self.cfg)
    }
}

struct Sgd {
    cfg: SgdConfig,
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "SGD"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len(params.len(), grad.len())?;
        sgd_step(params, grad, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arcgd::{arcgd_step, OptimizerState};

    #[test]
    fn names_and_parsing() {
        for kind in OptimizerKind::ALL {
            let parsed: OptimizerKind = kind.to_string().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
        let names: Vec<_> = OptimizerKind::ALL
            .iter()
            .map(|k| OptimizerSpec::defaults_for(*k).name())
            .collect();
        assert_eq!(names, ["ArcGD", "ADAM", "AdamW", "Lion", "SGD"]);
    }

    #[test]
    fn wrapper_matches_state_step() {
        let cfg = ArcGdConfig::default();
        let mut opt = OptimizerSpec::ArcGd(cfg).build(3).unwrap();
        let mut params = vec![0.1, -0.4, 2.0];
        let mut state = OptimizerState::new(params.clone());
        for g in [[1.0, -3.0, 0.01], [0.5, 0.0, -7.0], [-2.0, 1e-4, 1.0]] {
            opt.step(&mut params, &g).unwrap();
            arcgd_step(&mut state, &g, &cfg).unwrap();
        }
        assert_eq!(params, state.x);
    }

    #[test]
    fn build_rejects_invalid() {
        let bad = OptimizerSpec::Adam(AdamConfig {
            beta1: 1.5,
            ..AdamConfig::default()
        });
        assert!(bad.build(2).is_err());
        let bad = OptimizerSpec::ArcGd(ArcGdConfig {
            a: -1.0,
            ..ArcGdConfig::default()
        });
        assert!(bad.build(2).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        for kind in OptimizerKind::ALL {
            let spec = OptimizerSpec::defaults_for(kind);
            let text = serde_json::to_string(&spec).unwrap();
            let back: OptimizerSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
    }
}
