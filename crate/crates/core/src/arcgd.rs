//! The ArcGD update rule.
//!
//! Every gradient component `g` is first squashed through
//! `T = g / sqrt(1 + g^2)`, which maps the real line onto `(-1, 1)`. The
//! parameter update is then a sum of three contributions, each carrying the
//! sign of `T`:
//!
//! ```text
//! dx = -( a * T  +  b * T * (1 - |T|)  +  c_eff * sign(T) * (1 - |T|) )
//!         ceiling    transition            floor
//! ```
//!
//! The ceiling term dominates for steep gradients (`|dx| -> a`), the transition
//! term peaks at `|T| = 0.5`, and the floor term keeps a step of roughly `c`
//! alive as the gradient vanishes. `c_eff` is either the constant `c`, the
//! adaptive `min(c, eta_low * |T| / (1 - |T|))`, or one of the alternative
//! floors selected by [`FloorMode`]. With momentum enabled, `T` is computed
//! from an exponential moving average of the gradients instead of the raw
//! gradient.
//!
//! The module also carries the reference rules the ArcGD construction is
//! compared against: the strict arc-length step, the global-norm step and the
//! sign-of-momentum (Lion-style) limit.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Largest double strictly below one. `g / sqrt(1 + g^2)` rounds to exactly
/// `1.0` once `|g|` exceeds roughly `1e8`, so the transform is clamped here to
/// stay inside the open interval.
pub const T_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Lower bound applied to `1 - |T|` before dividing by it.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

pub const DEFAULT_A: f64 = 0.01;
pub const DEFAULT_B: f64 = 0.001;
pub const DEFAULT_C: f64 = 0.0001;
pub const DEFAULT_ETA_LOW: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.9;
pub const DEFAULT_ALT_EPSILON: f64 = 1e-8;

/// `eta_low` values that are accepted without a warning.
pub const RECOMMENDED_ETA_LOW: [f64; 3] = [0.1, 0.01, 0.001];
/// Overshoot-control thresholds that are accepted without a warning.
pub const RECOMMENDED_OVERSHOOT_TAU: [f64; 2] = [0.1, 0.01];

/// How the floor coefficient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FloorMode {
    /// Constant `c`, or `min(c, eta_low |T| / (1 - |T|))` when `adaptive_c` is set.
    Standard,
    /// `max(c_low, min(c_high, eta_low |T| / (1 - |T|)))`.
    Bounded { c_low: f64, c_high: f64 },
    /// Floor term `c (1 - |T|) T / (|T| + epsilon)`.
    Alternative { epsilon: f64 },
}

/// Hyperparameters of one ArcGD instance.
///
/// [`Default`] gives the noisy-landscape variant with adaptive floor and
/// momentum (`a = 0.01`, `b = 0.001`, `c = 1e-4`, `eta_low = 0.01`,
/// `beta = 0.9`), which is what both benchmark suites use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcGdConfig {
    /// Ceiling constant.
    pub a: f64,
    /// Transition constant.
    pub b: f64,
    /// Floor constant.
    pub c: f64,
    /// Budget bounding the adaptive floor coefficient.
    pub eta_low: f64,
    /// Gradient EMA coefficient.
    pub beta: f64,
    pub adaptive_c: bool,
    pub use_momentum: bool,
    pub floor_mode: FloorMode,
    /// When set, coordinates with `|T| < tau` use a halved floor constant and
    /// a half-length step.
    pub overshoot_tau: Option<f64>,
}

impl Default for ArcGdConfig {
    fn default() -> Self {
        Self {
            a: DEFAULT_A,
            b: DEFAULT_B,
            c: DEFAULT_C,
            eta_low: DEFAULT_ETA_LOW,
            beta: DEFAULT_BETA,
            adaptive_c: true,
            use_momentum: true,
            floor_mode: FloorMode::Standard,
            overshoot_tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigWarning {
    /// `a + b + c` is not small compared with one.
    LargeStepBudget(f64),
    UnusualEtaLow(f64),
    UnusualOvershootTau(f64),
}

impl std::fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigWarning::LargeStepBudget(s) => {
                write!(f, "a + b + c = {s} is not much smaller than 1")
            }
            ConfigWarning::UnusualEtaLow(v) => {
                write!(f, "eta_low = {v} is not one of 0.1, 0.01, 0.001")
            }
            ConfigWarning::UnusualOvershootTau(v) => {
                write!(f, "overshoot threshold {v} is not one of 0.1, 0.01")
            }
        }
    }
}

impl ArcGdConfig {
    /// Plain variant: constant floor, raw gradients.
    pub fn plain() -> Self {
        Self {
            adaptive_c: false,
            use_momentum: false,
            ..Self::default()
        }
    }

    /// The small-step setting (`a = 9e-4`, `b = 1e-4`, `c = 1e-5`) whose
    /// effective learning rate, 0.00099, sits next to Adam's default 0.001.
    pub fn small_step() -> Self {
        Self {
            a: 0.0009,
            b: 0.0001,
            c: 0.00001,
            ..Self::default()
        }
    }

    /// `b = 0`, `a = c = gamma`, constant floor: reduces to `-gamma sign(T)`.
    pub fn lion_limit(gamma: f64, use_momentum: bool) -> Self {
        Self {
            a: gamma,
            b: 0.0,
            c: gamma,
            adaptive_c: false,
            use_momentum,
            ..Self::default()
        }
    }

    /// Net coefficient of `T` once the update is expanded: `a + b - c`.
    pub fn effective_learning_rate(&self) -> f64 {
        self.a + self.b - self.c
    }

    /// Largest floor constant any coordinate can use.
    pub fn floor_cap(&self) -> f64 {
        match self.floor_mode {
            FloorMode::Bounded { c_high, .. } => c_high,
            _ => self.c,
        }
    }

    /// Upper bound on `|dx_i|` for a single step.
    pub fn step_bound(&self) -> f64 {
        self.a + self.b + self.floor_cap()
    }

    /// Hard constraints. Violations are errors.
    pub fn check(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.eta_low, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("ArcGD hyperparameters must be finite"));
        }
        if self.a <= 0.0 {
            return Err(Error::invalid(format!("a must be > 0, got {}", self.a)));
        }
        if self.b < 0.0 {
            return Err(Error::invalid(format!("b must be >= 0, got {}", self.b)));
        }
        if self.c < 0.0 {
            return Err(Error::invalid(format!("c must be >= 0, got {}", self.c)));
        }
        let budget = self.a + self.b + self.c;
        if budget >= 1.0 {
            return Err(Error::invalid(format!(
                "a + b + c must be < 1, got {budget}"
            )));
        }
        if self.eta_low <= 0.0 {
            return Err(Error::invalid(format!(
                "eta_low must be > 0, got {}",
                self.eta_low
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        match self.floor_mode {
            FloorMode::Standard => {}
            FloorMode::Bounded { c_low, c_high } => {
                if !(c_low > 0.0 && c_low <= c_high && c_high.is_finite()) {
                    return Err(Error::invalid(format!(
                        "bounded floor needs 0 < c_low <= c_high, got c_low = {c_low}, c_high = {c_high}"
                    )));
                }
                if self.a + self.b + c_high >= 1.0 {
                    return Err(Error::invalid("a + b + c_high must be < 1"));
                }
            }
            FloorMode::Alternative { epsilon } => {
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(Error::invalid(format!(
                        "alternative floor epsilon must be > 0, got {epsilon}"
                    )));
                }
            }
        }
        if let Some(tau) = self.overshoot_tau {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::invalid(format!(
                    "overshoot threshold must lie in (0, 1), got {tau}"
                )));
            }
        }
        Ok(())
    }

    /// Soft guidance: settings that are legal but outside the usual range.
    pub fn warnings(&self) -> Vec<ConfigWarning> {
        let mut out = Vec::new();
        let budget = self.a + self.b + self.floor_cap();
        if budget >= 0.1 {
            out.push(ConfigWarning::LargeStepBudget(budget));
        }
        if !RECOMMENDED_ETA_LOW.contains(&self.eta_low) {
            out.push(ConfigWarning::UnusualEtaLow(self.eta_low));
        }
        if let Some(tau) = self.overshoot_tau {
            if !RECOMMENDED_OVERSHOOT_TAU.contains(&tau) {
                out.push(ConfigWarning::UnusualOvershootTau(tau));
            }
        }
        out
    }

    /// [`check`](Self::check), then log every warning.
    pub fn validate(&self) -> Result<()> {
        self.check()?;
        for w in self.warnings() {
            warn!("ArcGD config: {w}");
        }
        Ok(())
    }
}

/// Parameters plus optimizer memory for one ArcGD trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    /// Gradient EMA. Only meaningful when momentum is in use.
    pub m: Vec<f64>,
    pub t: u64,
    pub momentum_initialized: bool,
}

impl OptimizerState {
    pub fn new(x: Vec<f64>) -> Self {
        let m = vec![0.0; x.len()];
        Self {
            x,
            m,
            t: 0,
            momentum_initialized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// The three additive contributions behind one step, per coordinate.
///
/// `(high_term + middle_term) + floor_term == -delta` holds bitwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateBreakdown {
    pub high_term: Vec<f64>,
    pub middle_term: Vec<f64>,
    pub floor_term: Vec<f64>,
    /// The applied update.
    pub delta: Vec<f64>,
}

impl UpdateBreakdown {
    fn with_len(n: usize) -> Self {
        Self {
            high_term: vec![0.0; n],
            middle_term: vec![0.0; n],
            floor_term: vec![0.0; n],
            delta: vec![0.0; n],
        }
    }
}

/// Sign with `sign(0) = sign(-0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn transform(g: f64) -> f64 {
    (g / g.hypot(1.0)).clamp(-T_MAX, T_MAX)
}

/// `T = g / sqrt(1 + g^2)`, clamped to stay strictly inside `(-1, 1)`.
pub fn transform_gradient(g: f64) -> Result<f64> {
    if !g.is_finite() {
        return Err(Error::Domain(format!("gradient {g} is not finite")));
    }
    Ok(transform(g))
}

fn check_open_unit(t: f64) -> Result<()> {
    if t.is_finite() && t.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("|T| must be < 1, got {t}")))
    }
}

/// Shape of the transition term, `T (1 - |T|)`. Peaks at `|T| = 0.5` with
/// value `0.25`.
pub fn middle_weight(t: f64) -> Result<f64> {
    check_open_unit(t)?;
    Ok(t * (1.0 - t.abs()))
}

#[inline]
fn adaptive_ratio(abs_t: f64, eta_low: f64) -> f64 {
    eta_low * abs_t / (1.0 - abs_t).max(DENOMINATOR_GUARD)
}

#[inline]
fn adaptive_floor(t: f64, c: f64, eta_low: f64) -> f64 {
    c.min(adaptive_ratio(t.abs(), eta_low))
}

#[inline]
fn bounded_floor(t: f64, c_low: f64, c_high: f64, eta_low: f64) -> f64 {
    c_low.max(c_high.min(adaptive_ratio(t.abs(), eta_low)))
}

#[inline]
fn alternative_floor(t: f64, c: f64, epsilon: f64) -> f64 {
    let abs_t = t.abs();
    c * (1.0 - abs_t) / (abs_t + epsilon) * t
}

/// `min(c, eta_low |T| / (1 - |T|))`, with the denominator guarded by
/// [`DENOMINATOR_GUARD`].
pub fn adaptive_floor_coefficient(t: f64, c: f64, eta_low: f64) -> Result<f64> {
    check_open_unit(t)?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("c must be >= 0, got {c}")));
    }
    if !(eta_low > 0.0) {
        return Err(Error::Domain(format!("eta_low must be > 0, got {eta_low}")));
    }
    Ok(adaptive_floor(t, c, eta_low))
}

/// `max(c_low, min(c_high, eta_low |T| / (1 - |T|)))`.
pub fn bounded_floor_coefficient(t: f64, c_low: f64, c_high: f64, eta_low: f64) -> Result<f64> {
    check_open_unit(t)?;
    if !(c_low > 0.0 && c_low <= c_high) {
        return Err(Error::Domain(format!(
            "bounded floor needs 0 < c_low <= c_high, got {c_low}, {c_high}"
        )));
    }
    if !(eta_low > 0.0) {
        return Err(Error::Domain(format!("eta_low must be > 0, got {eta_low}")));
    }
    Ok(bounded_floor(t, c_low, c_high, eta_low))
}

/// The whole floor term `c (1 - |T|) T / (|T| + epsilon)`; finite at `T = 0`.
pub fn alternative_floor_term(t: f64, c: f64, epsilon: f64) -> Result<f64> {
    check_open_unit(t)?;
    Ok(alternative_floor(t, c, epsilon))
}

/// `beta m + (1 - beta) g`, or a copy of `g` if the average has not been
/// seeded yet.
pub fn momentum_update(m: &[f64], g: &[f64], beta: f64, initialized: bool) -> Result<Vec<f64>> {
    check_len(m.len(), g.len())?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    let mut out = m.to_vec();
    filter_in_place(&mut out, g, beta, initialized);
    Ok(out)
}

fn filter_in_place(m: &mut [f64], g: &[f64], beta: f64, initialized: bool) {
    if initialized {
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = beta * *mi + (1.0 - beta) * gi;
        }
    } else {
        m.copy_from_slice(g);
    }
}

/// Per-coordinate terms `(high, middle, floor)` for a given `T`.
#[inline]
fn coordinate_terms(t: f64, cfg: &ArcGdConfig, damped: bool) -> (f64, f64, f64) {
    let gap = 1.0 - t.abs();
    let high = cfg.a * t;
    let middle = cfg.b * (t * gap);
    let halve = |v: f64| if damped { 0.5 * v } else { v };
    let floor = match cfg.floor_mode {
        FloorMode::Standard => {
            let c = halve(cfg.c);
            let coeff = if cfg.adaptive_c {
                adaptive_floor(t, c, cfg.eta_low)
            } else {
                c
            };
            coeff * sign(t) * gap
        }
        FloorMode::Bounded { c_low, c_high } => {
            bounded_floor(t, halve(c_low), halve(c_high), cfg.eta_low) * sign(t) * gap
        }
        FloorMode::Alternative { epsilon } => alternative_floor(t, halve(cfg.c), epsilon),
    };
    (high, middle, floor)
}

/// Update for a single coordinate whose transformed gradient is `t`, without
/// overshoot smoothing.
pub fn update_for_transform(t: f64, cfg: &ArcGdConfig) -> f64 {
    let (h, m, f) = coordinate_terms(t, cfg, false);
    -((h + m) + f)
}

/// Core ArcGD step over borrowed buffers. `m`/`initialized` are only touched
/// when momentum is on.
pub(crate) fn apply_arcgd(
    x: &mut [f64],
    m: &mut [f64],
    initialized: &mut bool,
    g: &[f64],
    cfg: &ArcGdConfig,
    mut breakdown: Option<&mut UpdateBreakdown>,
) -> Result<()> {
    check_len(x.len(), g.len())?;
    check_len(x.len(), m.len())?;
    check_finite(g, "gradient")?;
    cfg.check()?;

    let signal: &[f64] = if cfg.use_momentum {
        filter_in_place(m, g, cfg.beta, *initialized);
        *initialized = true;
        m
    } else {
        g
    };

    for (i, (xi, &s)) in x.iter_mut().zip(signal).enumerate() {
        let t = transform(s);
        let damped = cfg.overshoot_tau.is_some_and(|tau| t.abs() < tau);
        let (mut h, mut mid, mut f) = coordinate_terms(t, cfg, damped);
        if damped {
            // x_new <- (x_new + x_old) / 2, i.e. half the step.
            h *= 0.5;
            mid *= 0.5;
            f *= 0.5;
        }
        let delta = -((h + mid) + f);
        *xi += delta;
        if let Some(b) = breakdown.as_deref_mut() {
            b.high_term[i] = h;
            b.middle_term[i] = mid;
            b.floor_term[i] = f;
            b.delta[i] = delta;
        }
    }
    Ok(())
}

/// Advance `state` by one ArcGD step using gradient `g`.
pub fn arcgd_step(state: &mut OptimizerState, g: &[f64], cfg: &ArcGdConfig) -> Result<()> {
    let OptimizerState {
        x,
        m,
        momentum_initialized,
        ..
    } = state;
    apply_arcgd(x, m, momentum_initialized, g, cfg, None)?;
    state.t += 1;
    Ok(())
}

/// [`arcgd_step`], also returning the per-term breakdown of the update.
pub fn arcgd_step_with_breakdown(
    state: &mut OptimizerState,
    g: &[f64],
    cfg: &ArcGdConfig,
) -> Result<UpdateBreakdown> {
    let mut breakdown = UpdateBreakdown::with_len(state.len());
    let OptimizerState {
        x,
        m,
        momentum_initialized,
        ..
    } = state;
    apply_arcgd(x, m, momentum_initialized, g, cfg, Some(&mut breakdown))?;
    state.t += 1;
    Ok(breakdown)
}

/// Sign-of-momentum limit: `dx = -gamma sign(T(m))` with `m` the gradient EMA.
pub fn lion_limit_step(state: &mut OptimizerState, g: &[f64], gamma: f64, beta: f64) -> Result<()> {
    check_len(state.len(), g.len())?;
    check_finite(g, "gradient")?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    filter_in_place(&mut state.m, g, beta, state.momentum_initialized);
    state.momentum_initialized = true;
    for (xi, &mi) in state.x.iter_mut().zip(&state.m) {
        *xi -= gamma * sign(transform(mi));
    }
    state.t += 1;
    Ok(())
}

/// Uniform scaling by the global norm: `dx = -alpha g / sqrt(1 + |g|^2)`.
pub fn global_norm_step(state: &mut OptimizerState, g: &[f64], alpha: f64) -> Result<()> {
    check_len(state.len(), g.len())?;
    check_finite(g, "gradient")?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    // hypot accumulation keeps huge gradients from overflowing the norm.
    let denom = g.iter().fold(0.0f64, |acc, v| acc.hypot(*v)).hypot(1.0);
    for (xi, &gi) in state.x.iter_mut().zip(g) {
        *xi -= alpha * gi / denom;
    }
    state.t += 1;
    Ok(())
}

/// Strict arc-length step, elementwise: `dx = -alpha sign(g) / sqrt(1 + g^2)`.
/// Moves by about `alpha` on flat ground and almost nothing on steep slopes.
pub fn arc_length_descent_step(state: &mut OptimizerState, g: &[f64], alpha: f64) -> Result<()> {
    check_len(state.len(), g.len())?;
    check_finite(g, "gradient")?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    for (xi, &gi) in state.x.iter_mut().zip(g) {
        *xi -= alpha * sign(gi) / gi.hypot(1.0);
    }
    state.t += 1;
    Ok(())
}

/// One sample of the update curve as a function of the raw gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub gradient: f64,
    pub transformed: f64,
    pub high_term: f64,
    pub middle_term: f64,
    pub floor_term: f64,
    pub update: f64,
}

/// Samples the single-coordinate update curve at each gradient in `gradients`.
pub fn phase_curve(gradients: &[f64], cfg: &ArcGdConfig) -> Result<Vec<PhasePoint>> {
    cfg.check()?;
    check_finite(gradients, "gradient")?;
    Ok(gradients
        .iter()
        .map(|&g| {
            let t = transform(g);
            let (h, m, f) = coordinate_terms(t, cfg, false);
            PhasePoint {
                gradient: g,
                transformed: t,
                high_term: h,
                middle_term: m,
                floor_term: f,
                update: -((h + m) + f),
            }
        })
        .collect())
}
