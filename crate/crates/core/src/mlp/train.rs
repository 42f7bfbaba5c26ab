use ndarray::{s, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arcgd::ArcGdConfig;
use crate::error::{Error, Result};
use crate::mlp::data::{Dataset, SplitDataset};
use crate::mlp::network::{
    accuracy, backward, cross_entropy, forward, he_normal_init, MlpArchitecture, MlpParams,
};
use crate::optim::OptimizerSpec;
use crate::rng::{derived_rng, StreamPurpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPolicy {
    pub batch_size: usize,
    pub max_iterations: u64,
    /// Iterations at which test accuracy is always recorded.
    pub eval_checkpoints: Vec<u64>,
    pub early_stop_patience: u64,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    /// Metrics (and the early-stopping monitor) are refreshed this often.
    pub eval_every: u64,
    /// Training accuracy is scored on at most this many leading train rows.
    pub train_eval_rows: usize,
}

impl Default for TrainPolicy {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_iterations: 20_000,
            eval_checkpoints: vec![5_000, 20_000],
            early_stop_patience: 500,
            early_stop_min_delta: 1e-4,
            seed: crate::DEFAULT_SEED,
            eval_every: 100,
            train_eval_rows: 5_000,
        }
    }
}

impl TrainPolicy {
    /// Same protocol capped at `max_iterations`, with checkpoints clipped to fit.
    pub fn with_max_iterations(mut self, max_iterations: u64) -> Self {
        self.max_iterations = max_iterations;
        self.eval_checkpoints.retain(|&c| c <= max_iterations);
        if !self.eval_checkpoints.contains(&max_iterations) {
            self.eval_checkpoints.push(max_iterations);
        }
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0
            || self.max_iterations == 0
            || self.eval_every == 0
            || self.train_eval_rows == 0
        {
            return Err(Error::invalid(
                "batch size, max iterations, eval interval and train eval rows must be positive",
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("early-stop patience must be positive"));
        }
        if !(self.early_stop_min_delta >= 0.0 && self.early_stop_min_delta.is_finite()) {
            return Err(Error::invalid(format!(
                "early-stop min delta must be >= 0, got {}",
                self.early_stop_min_delta
            )));
        }
        if let Some(&c) = self
            .eval_checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.max_iterations)
        {
            return Err(Error::invalid(format!(
                "checkpoint {c} outside 1..={}",
                self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    /// Mean minibatch loss since the previous point (full train-eval loss at 0).
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointAccuracy {
    pub iteration: u64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub arch: String,
    pub optimizer: String,
    /// The split watched by early stopping.
    pub monitor: String,
    pub points: Vec<CurvePoint>,
    /// Test accuracy at each policy checkpoint. Checkpoints past an early stop
    /// carry the accuracy of the frozen final parameters.
    pub checkpoints: Vec<CheckpointAccuracy>,
    pub stopped_early: bool,
    pub final_iteration: u64,
    /// Largest single-step change of any parameter.
    pub max_abs_update: f64,
}

impl TrainingCurve {
    pub fn final_point(&self) -> &CurvePoint {
        self.points
            .last()
            .expect("curves always hold the initial point")
    }

    /// Running maximum of the recorded test accuracy.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.points
            .iter()
            .map(|p| {
                best = best.max(p.test_acc);
                best
            })
            .collect()
    }

    pub fn checkpoint(&self, iteration: u64) -> Option<f64> {
        self.checkpoints
            .iter()
            .find(|c| c.iteration == iteration)
            .map(|c| c.test_acc)
    }
}

fn train_eval_slice(train: &Dataset, rows: usize) -> (ndarray::ArrayView2<'_, f64>, &[usize]) {
    let n = rows.min(train.len());
    (train.features.slice(s![..n, ..]), &train.labels[..n])
}

/// Minibatch training with per-epoch shuffling and early stopping on test
/// accuracy. Deterministic for a fixed policy seed.
pub fn train(
    arch: &MlpArchitecture,
    spec: &OptimizerSpec,
    policy: &TrainPolicy,
    data: &SplitDataset,
) -> Result<TrainingCurve> {
    policy.check()?;
    if data.n_features() != arch.input_dim {
        return Err(Error::Shape {
            expected: arch.input_dim,
            found: data.n_features(),
        });
    }
    if data.n_classes() > arch.output_dim {
        return Err(Error::invalid(format!(
            "{} classes do not fit {} outputs",
            data.n_classes(),
            arch.output_dim
        )));
    }
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Domain(
            "train and test splits must be non-empty".into(),
        ));
    }

    let mut params = he_normal_init(arch, policy.seed);
    let mut opt = spec.build(params.len())?;
    let mut rng = derived_rng(policy.seed, 0, StreamPurpose::Shuffle);
    let train_set = &data.train;
    let n = train_set.len();
    let batch = policy.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let (eval_x, eval_y) = train_eval_slice(train_set, policy.train_eval_rows);
    let score = |p: &MlpParams| -> Result<(f64, f64)> {
        Ok((
            accuracy(p, eval_x, eval_y)?,
            accuracy(p, data.test.view(), &data.test.labels)?,
        ))
    };

    let initial_loss = cross_entropy(forward(&params, eval_x)?.probabilities.view(), eval_y)?;
    let (train_acc, test_acc) = score(&params)?;
    let mut points = vec![CurvePoint {
        iteration: 0,
        train_loss: initial_loss,
        train_acc,
        test_acc,
    }];
    let mut checkpoints = Vec::new();
    let mut monitor_best = test_acc;
    let mut last_improvement = 0u64;
    let mut stopped_early = false;
    let mut window_loss = 0.0;
    let mut window_len = 0u32;
    let mut max_abs_update: f64 = 0.0;
    let mut before = params.data.clone();
    let mut iteration = 0;

    while iteration < policy.max_iterations {
        iteration += 1;
        if cursor + batch > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + batch];
        cursor += batch;
        let x = train_set.features.select(Axis(0), rows);
        let y: Vec<usize> = rows.iter().map(|&i| train_set.labels[i]).collect();

        let cache = forward(&params, x.view())?;
        window_loss += cross_entropy(cache.probabilities.view(), &y)?;
        window_len += 1;
        let grads = backward(&params, &cache, &y)?;
        before.copy_from_slice(&params.data);
        opt.step(&mut params.data, &grads.data)?;
        for (new, old) in params.data.iter().zip(&before) {
            max_abs_update = max_abs_update.max((new - old).abs());
        }

        let is_checkpoint = policy.eval_checkpoints.contains(&iteration);
        if iteration % policy.eval_every == 0 || is_checkpoint || iteration == policy.max_iterations
        {
            let (train_acc, test_acc) = score(&params)?;
            points.push(CurvePoint {
                iteration,
                train_loss: window_loss / window_len as f64,
                train_acc,
                test_acc,
            });
            window_loss = 0.0;
            window_len = 0;
            if is_checkpoint {
                checkpoints.push(CheckpointAccuracy {
                    iteration,
                    test_acc,
                });
            }
            if test_acc > monitor_best + policy.early_stop_min_delta {
                monitor_best = test_acc;
                last_improvement = iteration;
            } else if iteration - last_improvement >= policy.early_stop_patience {
                stopped_early = iteration < policy.max_iterations;
                break;
            }
        }
    }

    let final_acc = points.last().map(|p| p.test_acc).unwrap_or(test_acc);
    let mut pending: Vec<u64> = policy
        .eval_checkpoints
        .iter()
        .copied()
        .filter(|c| !checkpoints.iter().any(|r| r.iteration == *c))
        .collect();
    pending.sort_unstable();
    checkpoints.extend(pending.into_iter().map(|iteration| CheckpointAccuracy {
        iteration,
        test_acc: final_acc,
    }));
    checkpoints.sort_by_key(|c| c.iteration);

    log::debug!(
        "{} on {}: stopped at {iteration} (early: {stopped_early}), test acc {final_acc:.4}",
        spec.name(),
        arch.name
    );
    Ok(TrainingCurve {
        arch: arch.name.clone(),
        optimizer: spec.name().to_string(),
        monitor: "test_accuracy".into(),
        points,
        checkpoints,
        stopped_early,
        final_iteration: iteration,
        max_abs_update,
    })
}

/// Trains one network per optimizer, in parallel.
pub fn train_many(
    arch: &MlpArchitecture,
    specs: &[OptimizerSpec],
    policy: &TrainPolicy,
    data: &SplitDataset,
) -> Result<Vec<TrainingCurve>> {
    specs
        .par_iter()
        .map(|s| train(arch, s, policy, data))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arch: String,
    pub checkpoint: u64,
    pub test_acc_a: f64,
    pub test_acc_b: f64,
    /// `test_acc_b - test_acc_a`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub eta_low_a: f64,
    pub eta_low_b: f64,
    pub rows: Vec<AblationRow>,
    /// `(curve_a, curve_b)` per architecture, in input order.
    pub curves: Vec<(TrainingCurve, TrainingCurve)>,
}

/// Trains every architecture twice with `base` ArcGD settings, differing only
/// in `eta_low`, and tabulates test accuracy at each checkpoint.
pub fn eta_low_ablation(
    archs: &[MlpArchitecture],
    data: &SplitDataset,
    policy: &TrainPolicy,
    base: ArcGdConfig,
    eta_lows: (f64, f64),
) -> Result<AblationTable> {
    let jobs: Vec<(usize, f64)> = (0..archs.len())
        .flat_map(|i| [(i, eta_lows.0), (i, eta_lows.1)])
        .collect();
    let curves: Vec<TrainingCurve> = jobs
        .par_iter()
        .map(|&(i, eta_low)| {
            let spec = OptimizerSpec::ArcGd(ArcGdConfig { eta_low, ..base });
            train(&archs[i], &spec, policy, data)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (arch, pair) in archs.iter().zip(curves.chunks_exact(2)) {
        let (a, b) = (&pair[0], &pair[1]);
        for cp in &a.checkpoints {
            let acc_b = b.checkpoint(cp.iteration).unwrap_or(f64::NAN);
            rows.push(AblationRow {
                arch: arch.name.clone(),
                checkpoint: cp.iteration,
                test_acc_a: cp.test_acc,
                test_acc_b: acc_b,
                delta: acc_b - cp.test_acc,
            });
        }
        pairs.push((a.clone(), b.clone()));
    }
    Ok(AblationTable {
        eta_low_a: eta_lows.0,
        eta_low_b: eta_lows.1,
        rows,
        curves: pairs,
    })
}
