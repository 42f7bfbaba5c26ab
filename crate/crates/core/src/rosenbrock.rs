//! Stochastic Rosenbrock benchmark.
//!
//! Each run starts from a point drawn uniformly from `[-3, 3]^n`, evaluates a
//! noisy gradient, takes one optimizer step, then observes a noisy objective
//! value. The observed loss is smoothed with an EMA and the run stops once the
//! smoothed loss has not improved by more than `min_improvement` for more than
//! `patience` consecutive iterations. A run that stops above `loss_threshold`
//! is a failure (it never reached the valley floor). The gradient norm takes
//! no part in stopping.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arcgd::ArcGdConfig;
use crate::baselines::AdamConfig;
use crate::error::{check_len, Error, Result};
use crate::optim::OptimizerSpec;
use crate::rng::{derived_rng, StreamPurpose};

pub const DEFAULT_SIGMA_F: f64 = 1e-3;
pub const DEFAULT_SIGMA_G: f64 = 1e-4;
pub const INIT_LOW: f64 = -3.0;
pub const INIT_HIGH: f64 = 3.0;

fn check_dim(n: usize) -> Result<()> {
    if n >= 2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Rosenbrock needs n >= 2, got {n}")))
    }
}

/// `sum_{i<n} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`.
pub fn rosenbrock_value(x: &[f64]) -> Result<f64> {
    check_dim(x.len())?;
    Ok(value_unchecked(x))
}

fn value_unchecked(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| {
            let t = w[1] - w[0] * w[0];
            let s = 1.0 - w[0];
            100.0 * t * t + s * s
        })
        .sum()
}

pub fn rosenbrock_gradient(x: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len())?;
    let mut g = vec![0.0; x.len()];
    gradient_into(x, &mut g);
    Ok(g)
}

/// Analytic gradient. Interior coordinates receive both the term in which
/// they are `x_{i+1}` and the one in which they are `x_i`.
fn gradient_into(x: &[f64], g: &mut [f64]) {
    let n = x.len();
    let last = n - 1;
    g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
    for i in 1..last {
        let xi = x[i];
        g[i] = 200.0 * (xi - x[i - 1] * x[i - 1])
            - 400.0 * xi * (x[i + 1] - xi * xi)
            - 2.0 * (1.0 - xi);
    }
    g[last] = 200.0 * (x[last] - x[last - 1] * x[last - 1]);
}

/// Euclidean distance to the all-ones minimizer.
pub fn distance_to_minimum(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rosenbrock objective with additive Gaussian noise on every evaluation.
#[derive(Debug, Clone)]
pub struct RosenbrockProblem {
    n: usize,
    sigma_f: f64,
    sigma_g: f64,
    rng: ChaCha8Rng,
}

impl RosenbrockProblem {
    pub fn new(n: usize, sigma_f: f64, sigma_g: f64, rng: ChaCha8Rng) -> Result<Self> {
        check_dim(n)?;
        if !(sigma_f >= 0.0 && sigma_g >= 0.0 && sigma_f.is_finite() && sigma_g.is_finite()) {
            return Err(Error::invalid(format!(
                "noise levels must be finite and >= 0, got {sigma_f}, {sigma_g}"
            )));
        }
        Ok(Self {
            n,
            sigma_f,
            sigma_g,
            rng,
        })
    }

    /// Default noise (1e-3 on the objective, 1e-4 per gradient component) on
    /// the stream owned by `(master_seed, run)`.
    pub fn stochastic(n: usize, master_seed: u64, run: u64) -> Result<Self> {
        Self::new(
            n,
            DEFAULT_SIGMA_F,
            DEFAULT_SIGMA_G,
            derived_rng(master_seed, run, StreamPurpose::ObjectiveNoise),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    /// One objective observation: `f(x) + N(0, sigma_f^2)`.
    pub fn noisy_value(&mut self, x: &[f64]) -> Result<f64> {
        check_len(self.n, x.len())?;
        let f = value_unchecked(x);
        Ok(if self.sigma_f > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            f + self.sigma_f * z
        } else {
            f
        })
    }

    pub fn noisy_gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n];
        self.noisy_gradient_into(x, &mut g)?;
        Ok(g)
    }

    /// Gradient plus i.i.d. `N(0, sigma_g^2)` per component, written to `out`.
    pub fn noisy_gradient_into(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        check_len(self.n, out.len())?;
        gradient_into(x, out);
        if self.sigma_g > 0.0 {
            for gi in out.iter_mut() {
                let z: f64 = self.rng.sample(StandardNormal);
                *gi += self.sigma_g * z;
            }
        }
        Ok(())
    }
}

/// Uniform draw from `[-3, 3]^n` on the stream owned by `(master_seed, run)`.
pub fn sample_initial_point(n: usize, master_seed: u64, run: u64) -> Result<Vec<f64>> {
    check_dim(n)?;
    let mut rng = derived_rng(master_seed, run, StreamPurpose::InitialPoint);
    Ok((0..n)
        .map(|_| rng.random_range(INIT_LOW..=INIT_HIGH))
        .collect())
}

/// Stopping rule for a Rosenbrock run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    /// Weight of the previous smoothed value in the EMA.
    pub ema_prev_weight: f64,
    pub min_improvement: f64,
    pub patience: u64,
    pub loss_threshold: f64,
    pub max_iterations: u64,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            ema_prev_weight: 0.9,
            min_improvement: 1e-5,
            patience: 1000,
            loss_threshold: 0.1,
            max_iterations: 1_000_000,
        }
    }
}

impl ConvergencePolicy {
    pub fn check(&self) -> Result<()> {
        if !(self.ema_prev_weight > 0.0 && self.ema_prev_weight < 1.0) {
            return Err(Error::invalid(format!(
                "EMA weight must lie in (0, 1), got {}",
                self.ema_prev_weight
            )));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::invalid("min_improvement must be >= 0"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if self.max_iterations <= self.patience {
            return Err(Error::invalid(format!(
                "max_iterations ({}) must exceed patience ({})",
                self.max_iterations, self.patience
            )));
        }
        if !self.loss_threshold.is_finite() {
            return Err(Error::invalid("loss_threshold must be finite"));
        }
        Ok(())
    }
}

/// `0.9 prev + 0.1 current`.
pub fn ema_smooth(prev: f64, current: f64) -> f64 {
    ema_smooth_with(0.9, prev, current)
}

/// EMA with an explicit weight on the previous value. Written as
/// `prev + (1 - w)(current - prev)` and clamped so the result never leaves
/// `[min(prev, current), max(prev, current)]`.
pub fn ema_smooth_with(prev_weight: f64, prev: f64, current: f64) -> f64 {
    let v = prev + (1.0 - prev_weight) * (current - prev);
    v.clamp(prev.min(current), prev.max(current))
}

/// State of a run as reported by [`convergence_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunStatus {
    Continue,
    /// Plateaued below the loss threshold.
    ConvergedTrue,
    /// Plateaued above the loss threshold.
    FailedHighLoss,
    FailedMaxIter,
    /// The trajectory produced a non-finite loss or gradient.
    Diverged,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        self != RunStatus::Continue
    }
}

/// Best smoothed loss seen so far and how long it has stood.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTracker {
    pub best: f64,
    pub stagnant: u64,
    pub smoothed: Option<f64>,
}

impl Default for ConvergenceTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvergenceTracker {
    pub fn new() -> Self {
        Self {
            best: f64::INFINITY,
            stagnant: 0,
            smoothed: None,
        }
    }

    /// Feeds one raw loss into the EMA (seeded with the first observation) and
    /// returns the smoothed value.
    pub fn smooth(&mut self, loss: f64, policy: &ConvergencePolicy) -> f64 {
        let s = match self.smoothed {
            None => loss,
            Some(prev) => ema_smooth_with(policy.ema_prev_weight, prev, loss),
        };
        self.smoothed = Some(s);
        s
    }
}

/// Advances the stagnation counter with a new smoothed loss and reports
/// whether the run should stop. `iteration` is 1-based.
pub fn convergence_check(
    tracker: &mut ConvergenceTracker,
    smoothed_loss: f64,
    iteration: u64,
    policy: &ConvergencePolicy,
) -> RunStatus {
    if smoothed_loss > tracker.best - policy.min_improvement {
        tracker.stagnant += 1;
    } else {
        tracker.stagnant = 0;
        tracker.best = smoothed_loss;
    }
    if tracker.stagnant > policy.patience {
        if smoothed_loss <= policy.loss_threshold {
            RunStatus::ConvergedTrue
        } else {
            RunStatus::FailedHighLoss
        }
    } else if iteration >= policy.max_iterations {
        RunStatus::FailedMaxIter
    } else {
        RunStatus::Continue
    }
}

/// Outcome of one run; one row of the per-run tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// 1-based run number.
    pub run: u64,
    pub optimizer: String,
    pub converged: bool,
    pub status: RunStatus,
    pub iterations: u64,
    /// Last noisy objective observation.
    pub final_loss: f64,
    pub final_smoothed_loss: f64,
    /// Noise-free gradient norm at the final point.
    pub final_grad_norm: f64,
    pub distance_to_minimum: f64,
    pub wall_time_s: f64,
}

/// One trace sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub loss: f64,
    pub smoothed_loss: f64,
    /// Norm of the (noisy) gradient used at this iteration.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub trace: Vec<TracePoint>,
}

/// Everything about a run that is independent of the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunContext {
    pub dim: usize,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub master_seed: u64,
}

impl RunContext {
    pub fn new(dim: usize, master_seed: u64) -> Self {
        Self {
            dim,
            sigma_f: DEFAULT_SIGMA_F,
            sigma_g: DEFAULT_SIGMA_G,
            master_seed,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.sigma_f = 0.0;
        self.sigma_g = 0.0;
        self
    }
}

/// Runs one optimizer from the run's initial point until the stopping rule
/// fires. `trace_every = Some(k)` records every k-th iteration.
pub fn run_single(
    ctx: &RunContext,
    spec: &OptimizerSpec,
    policy: &ConvergencePolicy,
    run: u64,
    trace_every: Option<u64>,
) -> Result<RunOutcome> {
    policy.check()?;
    if trace_every == Some(0) {
        return Err(Error::invalid("trace interval must be >= 1"));
    }
    let n = ctx.dim;
    let mut x = sample_initial_point(n, ctx.master_seed, run)?;
    let mut problem = RosenbrockProblem::new(
        n,
        ctx.sigma_f,
        ctx.sigma_g,
        derived_rng(ctx.master_seed, run, StreamPurpose::ObjectiveNoise),
    )?;
    let mut optimizer = spec.build(n)?;
    let mut grad = vec![0.0; n];
    let mut prev_x = x.clone();
    let mut tracker = ConvergenceTracker::new();
    let mut trace = Vec::new();

    let mut last_loss = value_unchecked(&x);
    let mut status = RunStatus::Continue;
    let mut iteration = 0u64;

    let start = Instant::now();
    while !status.is_terminal() {
        iteration += 1;
        problem.noisy_gradient_into(&x, &mut grad)?;
        if grad.iter().any(|g| !g.is_finite()) {
            status = RunStatus::Diverged;
            break;
        }
        prev_x.copy_from_slice(&x);
        optimizer.step(&mut x, &grad)?;
        let loss = problem.noisy_value(&x)?;
        if !loss.is_finite() || x.iter().any(|v| !v.is_finite()) {
            x.copy_from_slice(&prev_x);
            status = RunStatus::Diverged;
            break;
        }
        last_loss = loss;
        let smoothed = tracker.smooth(loss, policy);
        status = convergence_check(&mut tracker, smoothed, iteration, policy);
        if let Some(k) = trace_every {
            if iteration % k == 0 || status.is_terminal() {
                trace.push(TracePoint {
                    iteration,
                    loss,
                    smoothed_loss: smoothed,
                    grad_norm: l2_norm(&grad),
                });
            }
        }
    }
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut clean = vec![0.0; n];
    gradient_into(&x, &mut clean);
    let record = RunRecord {
        run,
        optimizer: spec.name().to_string(),
        converged: status == RunStatus::ConvergedTrue,
        status,
        iterations: iteration,
        final_loss: last_loss,
        final_smoothed_loss: tracker.smoothed.unwrap_or(last_loss),
        final_grad_norm: l2_norm(&clean),
        distance_to_minimum: distance_to_minimum(&x),
        wall_time_s,
    };
    Ok(RunOutcome { record, trace })
}

/// Aggregate over the runs of one optimizer on one test set. Averages cover
/// converged runs only and are `None` when no run converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub test_set: String,
    pub optimizer: String,
    pub total_runs: u64,
    pub converged_runs: u64,
    pub convergence_rate_pct: f64,
    pub avg_iterations: Option<f64>,
    pub avg_time: Option<f64>,
    pub avg_distance: Option<f64>,
    pub avg_final_loss: Option<f64>,
    pub avg_final_gradnorm: Option<f64>,
}

pub fn summarize_runs(test_set: &str, records: &[RunRecord]) -> Result<RunSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("cannot summarize an empty record list"))?;
    if let Some(other) = records.iter().find(|r| r.optimizer != first.optimizer) {
        return Err(Error::invalid(format!(
            "records mix optimizers '{}' and '{}'",
            first.optimizer, other.optimizer
        )));
    }
    let converged: Vec<&RunRecord> = records.iter().filter(|r| r.converged).collect();
    let total = records.len() as u64;
    let k = converged.len() as u64;
    let avg = |f: fn(&RunRecord) -> f64| -> Option<f64> {
        (k > 0).then(|| converged.iter().map(|r| f(r)).sum::<f64>() / k as f64)
    };
    Ok(RunSummary {
        test_set: test_set.to_string(),
        optimizer: first.optimizer.clone(),
        total_runs: total,
        converged_runs: k,
        convergence_rate_pct: 100.0 * k as f64 / total as f64,
        avg_iterations: avg(|r| r.iterations as f64),
        avg_time: avg(|r| r.wall_time_s),
        avg_distance: avg(|r| r.distance_to_minimum),
        avg_final_loss: avg(|r| r.final_loss),
        avg_final_gradnorm: avg(|r| r.final_grad_norm),
    })
}

/// The two comparison matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixConfig {
    /// Adam at lr 0.0109 (ArcGD's default effective learning rate) against
    /// ArcGD defaults.
    A,
    /// Adam defaults against ArcGD with `a = 9e-4, b = 1e-4, c = 1e-5`.
    B,
}

impl MatrixConfig {
    pub const DEFAULT_DIMS: [usize; 4] = [2, 10, 100, 1000];
    pub const DEFAULT_RUNS: u64 = 10;
    pub const HUGE_DIM: usize = 50_000;
    pub const HUGE_RUNS: u64 = 3;

    pub fn optimizers(self) -> [OptimizerSpec; 2] {
        match self {
            MatrixConfig::A => [
                OptimizerSpec::Adam(AdamConfig::matched_to_arcgd()),
                OptimizerSpec::ArcGd(ArcGdConfig::default()),
            ],
            MatrixConfig::B => [
                OptimizerSpec::Adam(AdamConfig::default()),
                OptimizerSpec::ArcGd(ArcGdConfig::small_step()),
            ],
        }
    }

    pub fn test_set_name(self, dim: usize) -> String {
        format!("{self}{dim}")
    }
}

impl fmt::Display for MatrixConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixConfig::A => "A",
            MatrixConfig::B => "B",
        })
    }
}

impl FromStr for MatrixConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(MatrixConfig::A),
            "B" | "b" => Ok(MatrixConfig::B),
            other => Err(Error::invalid(format!(
                "unknown configuration '{other}' (expected A or B)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSetResult {
    pub name: String,
    pub dim: usize,
    /// Sorted by run, then optimizer name.
    pub records: Vec<RunRecord>,
    pub traces: Vec<(u64, String, Vec<TracePoint>)>,
    /// One per optimizer, in optimizer-name order.
    pub summaries: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    pub config: MatrixConfig,
    pub master_seed: u64,
    pub policy: ConvergencePolicy,
    pub sets: Vec<TestSetResult>,
}

impl MatrixReport {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.sets.iter().flat_map(|s| s.summaries.clone()).collect()
    }

    pub fn summary(&self, dim: usize, optimizer: &str) -> Option<&RunSummary> {
        self.sets
            .iter()
            .find(|s| s.dim == dim)?
            .summaries
            .iter()
            .find(|s| s.optimizer == optimizer)
    }
}

/// Options for [`run_matrix`] beyond the configuration itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOptions {
    pub dims: Vec<usize>,
    pub runs_per_dim: u64,
    pub master_seed: u64,
    pub policy: ConvergencePolicy,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub trace_every: Option<u64>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self {
            dims: MatrixConfig::DEFAULT_DIMS.to_vec(),
            runs_per_dim: MatrixConfig::DEFAULT_RUNS,
            master_seed: crate::DEFAULT_SEED,
            policy: ConvergencePolicy::default(),
            sigma_f: DEFAULT_SIGMA_F,
            sigma_g: DEFAULT_SIGMA_G,
            trace_every: None,
        }
    }
}

/// Runs both optimizers of `config` on every dimension in `opts.dims`,
/// `opts.runs_per_dim` times each. Runs execute in parallel; results are
/// independent of scheduling.
pub fn run_matrix(config: MatrixConfig, opts: &MatrixOptions) -> Result<MatrixReport> {
    if opts.runs_per_dim == 0 {
        return Err(Error::invalid("runs per dimension must be >= 1"));
    }
    if opts.dims.is_empty() {
        return Err(Error::invalid("at least one dimension is required"));
    }
    for &d in &opts.dims {
        check_dim(d)?;
    }
    opts.policy.check()?;
    let specs = config.optimizers();

    let mut jobs: Vec<(usize, u64, OptimizerSpec)> = Vec::new();
    for &d in &opts.dims {
        for run in 1..=opts.runs_per_dim {
            jobs.extend(specs.iter().map(|s| (d, run, *s)));
        }
    }

    let outcomes: Vec<Result<(usize, RunOutcome)>> = jobs
        .par_iter()
        .map(|&(dim, run, spec)| {
            let ctx = RunContext {
                dim,
                sigma_f: opts.sigma_f,
                sigma_g: opts.sigma_g,
                master_seed: opts.master_seed,
            };
            run_single(&ctx, &spec, &opts.policy, run, opts.trace_every).map(|o| (dim, o))
        })
        .collect();

    let mut by_dim: Vec<(usize, Vec<RunOutcome>)> =
        opts.dims.iter().map(|&d| (d, Vec::new())).collect();
    for outcome in outcomes {
        let (dim, o) = outcome?;
        if let Some(slot) = by_dim.iter_mut().find(|(d, _)| *d == dim) {
            slot.1.push(o);
        }
    }

    let mut sets = Vec::with_capacity(by_dim.len());
    for (dim, mut outs) in by_dim {
        outs.sort_by(|a, b| {
            (a.record.run, &a.record.optimizer).cmp(&(b.record.run, &b.record.optimizer))
        });
        let name = config.test_set_name(dim);
        let mut names: Vec<String> = outs.iter().map(|o| o.record.optimizer.clone()).collect();
        names.sort();
        names.dedup();
        let records: Vec<RunRecord> = outs.iter().map(|o| o.record.clone()).collect();
        let summaries = names
            .iter()
            .map(|opt| {
                let rs: Vec<RunRecord> = records
                    .iter()
                    .filter(|r| &r.optimizer == opt)
                    .cloned()
                    .collect();
                summarize_runs(&name, &rs)
            })
            .collect::<Result<Vec<_>>>()?;
        let traces = outs
            .into_iter()
            .filter(|_| opts.trace_every.is_some())
            .map(|o| (o.record.run, o.record.optimizer, o.trace))
            .collect();
        sets.push(TestSetResult {
            name,
            dim,
            records,
            traces,
            summaries,
        });
    }

    Ok(MatrixReport {
        config,
        master_seed: opts.master_seed,
        policy: opts.policy,
        sets,
    })
}
