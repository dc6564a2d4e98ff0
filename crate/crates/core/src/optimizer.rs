//! Moving-average gradient estimator and the generic Adam-style step.
//!
//! One step of the family reads
//!
//! ```text
//! v_{t+1} = (1 − β_t) v_t + β_t O(x_t)
//! u_{t+1} = h_t(O(x_0), …, O(x_t))
//! x_{t+1} = x_t − η_t v_{t+1} / (√u_{t+1} + G_0)
//! ```
//!
//! with all vector operations elementwise. The history map h_t is the
//! [`SecondMomentUpdate`] trait; [`SecondMomentRule`] implements the six
//! standard instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{all_finite, check_dim, norm, RealVector};

/// z ← (1 − β) z + β·sample.
pub fn sema_update(z: &[f64], beta: f64, sample: &[f64]) -> Result<RealVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::usage(format!(
            "moving average weight must be in [0,1], got {beta}"
        )));
    }
    check_dim("moving average sample", z.len(), sample.len())?;
    let mut out = z.to_vec();
    sema_in_place(&mut out, beta, sample);
    Ok(out)
}

fn sema_in_place(z: &mut [f64], beta: f64, sample: &[f64]) {
    for (z, s) in z.iter_mut().zip(sample) {
        *z = (1.0 - beta) * *z + beta * s;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// Stochastic heavy ball: u ≡ 1, G_0 = 0.
    Shb,
    /// Exponential moving average of squared draws.
    Adam,
    /// Running maximum of the Adam average.
    Amsgrad,
    /// Running mean of squared draws.
    Adafom,
    /// u = ‖v_{t+1}‖, broadcast to every coordinate.
    #[serde(rename = "adamplus")]
    AdamPlus,
    /// Adam average projected into [1/clip_hi², 1/clip_lo²], G_0 = 0.
    Adabound,
}

impl RuleKind {
    pub const ALL: [RuleKind; 6] = [
        RuleKind::Shb,
        RuleKind::Adam,
        RuleKind::Amsgrad,
        RuleKind::Adafom,
        RuleKind::AdamPlus,
        RuleKind::Adabound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Shb => "shb",
            RuleKind::Adam => "adam",
            RuleKind::Amsgrad => "amsgrad",
            RuleKind::Adafom => "adafom",
            RuleKind::AdamPlus => "adamplus",
            RuleKind::Adabound => "adabound",
        }
    }

    fn uses_aux(self) -> bool {
        matches!(self, RuleKind::Amsgrad | RuleKind::Adabound)
    }
}

pub const DEFAULT_BETA2: f64 = 0.01;

/// A second-moment rule with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondMomentRule {
    #[serde(rename = "name")]
    pub kind: RuleKind,
    /// Averaging weight β′ for Adam, AMSGrad and Adabound.
    pub beta2: f64,
    /// Offset G_0 in the denominator.
    pub g0: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

#[derive(Deserialize)]
struct RuleConfig {
    name: RuleKind,
    #[serde(default)]
    beta2: Option<f64>,
    #[serde(default)]
    g0: Option<f64>,
    #[serde(default)]
    clip_lo: Option<f64>,
    #[serde(default)]
    clip_hi: Option<f64>,
}

impl<'de> Deserialize<'de> for SecondMomentRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = RuleConfig::deserialize(d)?;
        let mut rule = SecondMomentRule::default_for(c.name);
        if let Some(b) = c.beta2 {
            rule.beta2 = b;
        }
        if let Some(g) = c.g0 {
            rule.g0 = g;
        }
        if let Some(l) = c.clip_lo {
            rule.clip_lo = l;
        }
        if let Some(h) = c.clip_hi {
            rule.clip_hi = h;
        }
        rule.validate().map_err(serde::de::Error::custom)?;
        Ok(rule)
    }
}

impl SecondMomentRule {
    /// Defaults: β′ = 0.01, G_0 = 1 for the rules whose upper scaling bound is
    /// 1/G_0 and 0 for SHB and Adabound, clip range [0.5, 2].
    pub fn default_for(kind: RuleKind) -> Self {
        let g0 = match kind {
            RuleKind::Shb | RuleKind::Adabound => 0.0,
            _ => 1.0,
        };
        Self {
            kind,
            beta2: DEFAULT_BETA2,
            g0,
            clip_lo: 0.5,
            clip_hi: 2.0,
        }
    }

    pub fn new(kind: RuleKind, beta2: f64, g0: f64, clip_lo: f64, clip_hi: f64) -> Result<Self> {
        let rule = Self {
            kind,
            beta2,
            g0,
            clip_lo,
            clip_hi,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn shb() -> Self {
        Self::default_for(RuleKind::Shb)
    }

    pub fn adam(beta2: f64, g0: f64) -> Result<Self> {
        Self::new(RuleKind::Adam, beta2, g0, 0.5, 2.0)
    }

    pub fn adabound(beta2: f64, clip_lo: f64, clip_hi: f64) -> Result<Self> {
        Self::new(RuleKind::Adabound, beta2, 0.0, clip_lo, clip_hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta2 > 0.0 && self.beta2 <= 1.0) {
            return Err(Error::config(format!(
                "beta2 must be in (0,1], got {}",
                self.beta2
            )));
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return Err(Error::config(format!("g0 must be >= 0, got {}", self.g0)));
        }
        match self.kind {
            RuleKind::Shb if self.g0 != 0.0 => Err(Error::config("shb requires g0 = 0")),
            RuleKind::Adabound if self.g0 != 0.0 => Err(Error::config("adabound requires g0 = 0")),
            RuleKind::Adabound
                if !(self.clip_lo > 0.0
                    && self.clip_lo <= self.clip_hi
                    && self.clip_hi.is_finite()) =>
            {
                Err(Error::config(format!(
                    "adabound requires 0 < clip_lo <= clip_hi, got [{}, {}]",
                    self.clip_lo, self.clip_hi
                )))
            }
            _ => Ok(()),
        }
    }

    /// Projection range of Adabound's u.
    pub fn clip_range(&self) -> (f64, f64) {
        (
            1.0 / (self.clip_hi * self.clip_hi),
            1.0 / (self.clip_lo * self.clip_lo),
        )
    }
}

/// The history map h_t producing u_{t+1}.
///
/// Implementations see the first moment after it has been updated to v_{t+1}.
pub trait SecondMomentUpdate {
    fn g0(&self) -> f64;

    /// Whether the rule keeps an auxiliary vector u′ next to u.
    fn uses_aux(&self) -> bool {
        false
    }

    /// Initial u_0 for a fresh state.
    fn initial_u(&self, dim: usize) -> RealVector {
        vec![0.0; dim]
    }

    /// Advance `moments.u` (and `moments.u_aux`) from step `t` to `t + 1`.
    fn update(&self, moments: Moments<'_>, sample: &[f64], t: u64);
}

/// Mutable view of the second-moment buffers during one step.
pub struct Moments<'a> {
    pub v: &'a [f64],
    pub u: &'a mut [f64],
    pub u_aux: Option<&'a mut [f64]>,
}

impl SecondMomentUpdate for SecondMomentRule {
    fn g0(&self) -> f64 {
        self.g0
    }

    fn uses_aux(&self) -> bool {
        self.kind.uses_aux()
    }

    fn initial_u(&self, dim: usize) -> RealVector {
        match self.kind {
            RuleKind::Shb => vec![1.0; dim],
            _ => vec![0.0; dim],
        }
    }

    fn update(&self, m: Moments<'_>, sample: &[f64], t: u64) {
        let b2 = self.beta2;
        match self.kind {
            RuleKind::Shb => m.u.fill(1.0),
            RuleKind::Adam => {
                for (u, s) in m.u.iter_mut().zip(sample) {
                    *u = (1.0 - b2) * *u + b2 * s * s;
                }
            }
            RuleKind::Amsgrad => {
                let aux = m.u_aux.expect("amsgrad keeps u'");
                for ((u, a), s) in m.u.iter_mut().zip(aux.iter_mut()).zip(sample) {
                    *a = (1.0 - b2) * *a + b2 * s * s;
                    *u = u.max(*a);
                }
            }
            RuleKind::Adafom => {
                let k = (t + 1) as f64;
                for (u, s) in m.u.iter_mut().zip(sample) {
                    *u += (s * s - *u) / k;
                }
            }
            RuleKind::AdamPlus => m.u.fill(norm(m.v)),
            RuleKind::Adabound => {
                let (lo, hi) = self.clip_range();
                let aux = m.u_aux.expect("adabound keeps u'");
                for ((u, a), s) in m.u.iter_mut().zip(aux.iter_mut()).zip(sample) {
                    *a = (1.0 - b2) * *a + b2 * s * s;
                    *u = a.clamp(lo, hi);
                }
            }
        }
    }
}

/// How the first moment is initialised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// v_0 = 0.
    #[default]
    Zero,
    /// v_0 = one oracle draw at x_0.
    Oracle,
}

/// Iterate, moments and counter of one run. Serializes to the snapshot JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub t: u64,
    pub x: RealVector,
    pub v: RealVector,
    pub u: RealVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_aux: Option<RealVector>,
    pub last_sample: RealVector,
}

impl OptimizerState {
    /// Fresh state at `x0` with v_0 = 0 and the rule's u_0.
    pub fn new<R: SecondMomentUpdate + ?Sized>(rule: &R, x0: &[f64]) -> Self {
        let d = x0.len();
        Self {
            t: 0,
            x: x0.to_vec(),
            v: vec![0.0; d],
            u: rule.initial_u(d),
            u_aux: rule.uses_aux().then(|| vec![0.0; d]),
            last_sample: vec![0.0; d],
        }
    }

    pub fn with_first_moment(mut self, v0: RealVector) -> Result<Self> {
        check_dim("initial first moment", self.x.len(), v0.len())?;
        self.v = v0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Per-step by-products of [`adam_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Smallest coordinate of s_t = 1/(√u_{t+1} + G_0).
    pub s_min: f64,
    pub s_max: f64,
}

/// Elementwise scaling factor s = 1/(√u + G_0).
pub fn scaling_factors(u: &[f64], g0: f64) -> RealVector {
    u.iter().map(|u| 1.0 / (u.sqrt() + g0)).collect()
}

/// The rule's u_{t+1} and u′_{t+1} given `state` (whose `v` is already v_{t+1}).
pub fn second_moment_update<R: SecondMomentUpdate + ?Sized>(
    rule: &R,
    state: &OptimizerState,
    sample: &[f64],
    t: u64,
) -> Result<(RealVector, Option<RealVector>)> {
    check_dim("second moment sample", state.dim(), sample.len())?;
    let mut u = state.u.clone();
    let mut aux = state.u_aux.clone();
    rule.update(
        Moments {
            v: &state.v,
            u: &mut u,
            u_aux: aux.as_deref_mut(),
        },
        sample,
        t,
    );
    Ok((u, aux))
}

/// One Adam-style step in place: first moment, second moment, then iterate.
pub fn adam_step<R: SecondMomentUpdate + ?Sized>(
    rule: &R,
    state: &mut OptimizerState,
    beta: f64,
    eta: f64,
    sample: &[f64],
) -> Result<StepInfo> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::usage(format!("beta_t must be in (0,1], got {beta}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::usage(format!("eta_t must be positive, got {eta}")));
    }
    check_dim("step sample", state.dim(), sample.len())?;
    if rule.uses_aux() && state.u_aux.is_none() {
        state.u_aux = Some(vec![0.0; state.dim()]);
    }

    let t = state.t;
    sema_in_place(&mut state.v, beta, sample);
    rule.update(
        Moments {
            v: &state.v,
            u: &mut state.u,
            u_aux: state.u_aux.as_deref_mut(),
        },
        sample,
        t,
    );

    let g0 = rule.g0();
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    for ((x, v), u) in state.x.iter_mut().zip(&state.v).zip(&state.u) {
        let denom = u.sqrt() + g0;
        let s = 1.0 / denom;
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        *x -= eta * v / denom;
    }
    state.last_sample.copy_from_slice(sample);
    state.t += 1;

    if !(all_finite(&state.x) && all_finite(&state.v) && s_min.is_finite() && s_max.is_finite()) {
        return Err(Error::Numeric {
            iteration: t,
            what: "optimizer state".into(),
        });
    }
    Ok(StepInfo { s_min, s_max })
}

/// Guaranteed range [c_l, c_u] of every scaling-factor coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingBounds {
    pub c_l: f64,
    pub c_u: f64,
}

impl ScalingBounds {
    pub fn new(c_l: f64, c_u: f64) -> Result<Self> {
        if !(c_l > 0.0 && c_l <= c_u && c_u.is_finite()) {
            return Err(Error::config(format!(
                "need 0 < c_l <= c_u, got ({c_l}, {c_u})"
            )));
        }
        Ok(Self { c_l, c_u })
    }

    /// Whether [lo, hi] sits inside the bounds up to a relative slack `rel`.
    pub fn contains(&self, lo: f64, hi: f64, rel: f64) -> bool {
        lo >= self.c_l * (1.0 - rel) && hi <= self.c_u * (1.0 + rel)
    }
}

/// Tightest guaranteed scaling bounds of `rule` given the oracle's draw bounds.
///
/// Adam, AMSGrad and AdaFom need ‖O‖∞ ≤ `g_inf`; Adam⁺ needs ‖O‖ ≤ `g_two`.
/// All four need G_0 > 0 for the upper bound 1/G_0.
pub fn scaling_bounds(
    rule: &SecondMomentRule,
    g_inf: Option<f64>,
    g_two: Option<f64>,
) -> Result<ScalingBounds> {
    let needs_g0 = || {
        if rule.g0 > 0.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "{} needs g0 > 0 for an upper scaling bound",
                rule.kind.name()
            )))
        }
    };
    match rule.kind {
        RuleKind::Shb => ScalingBounds::new(1.0, 1.0),
        RuleKind::Adabound => ScalingBounds::new(rule.clip_lo, rule.clip_hi),
        RuleKind::Adam | RuleKind::Amsgrad | RuleKind::Adafom => {
            let g = g_inf.ok_or_else(|| {
                Error::config(format!(
                    "{} needs an oracle bound on ‖O‖∞",
                    rule.kind.name()
                ))
            })?;
            needs_g0()?;
            ScalingBounds::new(1.0 / (g + rule.g0), 1.0 / rule.g0)
        }
        RuleKind::AdamPlus => {
            let g = g_two.ok_or_else(|| Error::config("adamplus needs an oracle bound on ‖O‖"))?;
            needs_g0()?;
            ScalingBounds::new(1.0 / (g.sqrt() + rule.g0), 1.0 / rule.g0)
        }
    }
}

/// Two consecutive iterates of the single-sequence heavy-ball recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoFormState {
    pub x: RealVector,
    pub x_prev: RealVector,
}

impl TwoFormState {
    /// Start with x_{−1} = x_0, which matches v_0 = 0 in the moment form.
    pub fn new(x0: &[f64]) -> Self {
        Self {
            x: x0.to_vec(),
            x_prev: x0.to_vec(),
        }
    }
}

/// x_{t+1} = x_t − η′·sample + β′(x_t − x_{t−1}).
///
/// With η′ = ηβ and β′ = 1 − β this reproduces the SHB moment form.
pub fn shb_two_form_step(
    state: &mut TwoFormState,
    beta_prime: f64,
    eta_prime: f64,
    sample: &[f64],
) -> Result<()> {
    if !(0.0..1.0).contains(&beta_prime) {
        return Err(Error::usage(format!(
            "beta' must be in [0,1), got {beta_prime}"
        )));
    }
    if eta_prime.is_nan() || eta_prime <= 0.0 {
        return Err(Error::usage(format!(
            "eta' must be positive, got {eta_prime}"
        )));
    }
    check_dim("two-form sample", state.x.len(), sample.len())?;
    for ((x, xp), s) in state.x.iter_mut().zip(state.x_prev.iter_mut()).zip(sample) {
        let next = *x - eta_prime * s + beta_prime * (*x - *xp);
        *xp = *x;
        *x = next;
    }
    Ok(())
}
