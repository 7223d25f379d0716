//! Goal functionals evaluated on empirical outcome samples.
//!
//! Law-level goals (Yaari, CPT) use the exact Choquet integral of the
//! empirical measure, written with order statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHECK_POINTS: usize = 1001;

/// Probability distortion `w : [0,1] → [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distortion {
    Identity,
    /// `p^gamma`.
    Power { gamma: f64 },
    /// `p^γ / (p^γ + (1-p)^γ)^{1/γ}`.
    TverskyKahneman { gamma: f64 },
}

impl Distortion {
    pub fn eval(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Distortion::Identity => p,
            Distortion::Power { gamma } => {
                if p == 0.0 {
                    0.0
                } else {
                    p.powf(gamma)
                }
            }
            Distortion::TverskyKahneman { gamma } => {
                if p == 0.0 || p == 1.0 {
                    return p;
                }
                let a = p.powf(gamma);
                a / (a + (1.0 - p).powf(gamma)).powf(1.0 / gamma)
            }
        }
    }

    /// Checks `w(0) = 0`, `w(1) = 1` and monotonicity on a uniform grid.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distortion::Identity => {}
            Distortion::Power { gamma } | Distortion::TverskyKahneman { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::invalid(format!("distortion exponent must be positive, got {gamma}")));
                }
            }
        }
        if self.eval(0.0) != 0.0 || self.eval(1.0) != 1.0 {
            return Err(Error::invalid("distortion must satisfy w(0) = 0 and w(1) = 1"));
        }
        let mut prev = 0.0;
        for i in 1..CHECK_POINTS {
            let v = self.eval(i as f64 / (CHECK_POINTS - 1) as f64);
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) || v < prev - 1e-15 {
                return Err(Error::invalid(format!(
                    "distortion is not a non-decreasing map into [0,1] near p = {}",
                    i as f64 / (CHECK_POINTS - 1) as f64
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Scalar utility curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    Identity,
    Linear { slope: f64 },
    /// `y^exponent` on `y ≥ 0`, `-∞` below zero.
    Power { exponent: f64 },
    /// `min(slope * y, cap)`.
    Capped { slope: f64, cap: f64 },
    /// `cap * (1 - exp(-y / scale))`.
    Saturating { cap: f64, scale: f64 },
    /// `1{y ≥ level}`.
    Indicator { level: f64 },
}

impl Utility {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Utility::Identity => y,
            Utility::Linear { slope } => slope * y,
            Utility::Power { exponent } => {
                if y < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    y.powf(exponent)
                }
            }
            Utility::Capped { slope, cap } => (slope * y).min(cap),
            Utility::Saturating { cap, scale } => cap * (1.0 - (-y / scale).exp()),
            Utility::Indicator { level } => {
                if y >= level {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_bounded_above(&self) -> bool {
        matches!(
            self,
            Utility::Capped { .. } | Utility::Saturating { .. } | Utility::Indicator { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let good = match *self {
            Utility::Identity => true,
            Utility::Linear { slope } => positive(slope),
            Utility::Power { exponent } => positive(exponent),
            Utility::Capped { slope, cap } => positive(slope) && positive(cap),
            Utility::Saturating { cap, scale } => positive(cap) && positive(scale),
            Utility::Indicator { level } => ok(level),
        };
        if good {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid utility parameters: {self:?}")))
        }
    }

    /// Requirements on a CPT leg: vanishes at zero and non-decreasing on
    /// `[0, ∞)` (checked on a geometric grid).
    fn validate_leg(&self) -> Result<()> {
        self.validate()?;
        if self.eval(0.0) != 0.0 {
            return Err(Error::invalid("CPT utility must vanish at zero"));
        }
        let mut prev = 0.0;
        for i in 0..200 {
            let y = 1e-6 * 1.1f64.powi(i);
            let v = self.eval(y);
            if v < prev {
                return Err(Error::invalid("CPT utility must be non-decreasing"));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Cumulative prospect theory preferences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptSpec {
    pub w_plus: Distortion,
    pub w_minus: Distortion,
    pub u_plus: Utility,
    pub u_minus: Utility,
    /// Loss-leg values above this are treated as divergent.
    #[serde(default = "default_loss_cap")]
    pub loss_cap: f64,
}

fn default_loss_cap() -> f64 {
    1e12
}

impl CptSpec {
    pub fn new(w_plus: Distortion, w_minus: Distortion, u_plus: Utility, u_minus: Utility) -> Result<Self> {
        let spec = CptSpec {
            w_plus,
            w_minus,
            u_plus,
            u_minus,
            loss_cap: default_loss_cap(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.w_plus.validate()?;
        self.w_minus.validate()?;
        self.u_plus.validate_leg()?;
        self.u_minus.validate_leg()?;
        if !self.u_plus.is_bounded_above() {
            return Err(Error::invalid("gain utility must be bounded"));
        }
        if !(self.loss_cap > 0.0) {
            return Err(Error::invalid("loss cap must be positive"));
        }
        Ok(())
    }
}

/// Goal value with the loss-leg divergence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalValue {
    pub value: f64,
    pub diverged: bool,
}

impl GoalValue {
    pub fn finite(value: f64) -> Self {
        GoalValue { value, diverged: false }
    }
}

fn check_sample(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("empty outcome sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("outcome sample contains NaN"));
    }
    Ok(())
}

/// Choquet integral `∫_0^∞ w(P(X > x)) dx` of the empirical law.
///
/// With order statistics `x_(1) ≤ … ≤ x_(n)` this is
/// `Σ_i x_(i) [w((n-i+1)/n) - w((n-i)/n)]`.
pub fn choquet(values: &[f64], w: &Distortion) -> Result<f64> {
    check_sample(values)?;
    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
        return Err(Error::invalid(format!("Choquet integral needs nonnegative values, got {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(choquet_sorted(&sorted, w))
}

pub(crate) fn choquet_sorted(sorted: &[f64], w: &Distortion) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let mut upper = 1.0;
    let mut acc = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        // i is zero-based: weight w((n-i)/n) - w((n-i-1)/n).
        let lower = w.eval((n - i - 1) as f64 / nf);
        if x != 0.0 {
            acc += x * (upper - lower);
        }
        upper = lower;
    }
    acc
}

/// `I_+(u_+((X - W)^+)) - I_-(u_-((X - W)^-))` on pathwise-aligned samples.
pub fn cpt_value(outcomes: &[f64], benchmark: &[f64], spec: &CptSpec) -> Result<GoalValue> {
    check_sample(outcomes)?;
    if benchmark.len() != outcomes.len() {
        return Err(Error::DimensionMismatch {
            expected: outcomes.len(),
            got: benchmark.len(),
        });
    }
    let mut gains = Vec::with_capacity(outcomes.len());
    let mut losses = Vec::with_capacity(outcomes.len());
    for (&x, &b) in outcomes.iter().zip(benchmark) {
        let diff = x - b;
        if diff.is_nan() {
            return Err(Error::invalid("outcome minus benchmark is undefined"));
        }
        gains.push(spec.u_plus.eval(diff.max(0.0)));
        losses.push(spec.u_minus.eval((-diff).max(0.0)));
    }
    let loss = if losses.iter().any(|v| v.is_infinite()) {
        f64::INFINITY
    } else {
        choquet(&losses, &spec.w_minus)?
    };
    if !(loss <= spec.loss_cap) {
        return Ok(GoalValue {
            value: f64::NEG_INFINITY,
            diverged: true,
        });
    }
    let gain = choquet(&gains, &spec.w_plus)?;
    Ok(GoalValue::finite(gain - loss))
}

/// Distorted expectation of nonnegative outcomes.
pub fn yaari_value(values: &[f64], w: &Distortion) -> Result<f64> {
    choquet(values, w)
}

/// Sample mean of `U(outcome)`.
pub fn expected_utility(values: &[f64], u: &Utility) -> Result<f64> {
    check_sample(values)?;
    Ok(values.iter().map(|&v| u.eval(v)).sum::<f64>() / values.len() as f64)
}

/// A goal functional on a scalar outcome law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Goal {
    Expectation {
        #[serde(default = "identity")]
        utility: Utility,
    },
    /// Reward: probability that the outcome reaches `level`. Cost: minus the
    /// probability that the cost exceeds `level`.
    GoalReaching { level: f64 },
    Yaari { distortion: Distortion },
    Cpt(CptSpec),
}

fn identity() -> Utility {
    Utility::Identity
}

impl Goal {
    pub fn validate(&self) -> Result<()> {
        match self {
            Goal::Expectation { utility } => utility.validate(),
            Goal::GoalReaching { level } => {
                if level.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("goal level must be finite"))
                }
            }
            Goal::Yaari { distortion } => distortion.validate(),
            Goal::Cpt(spec) => spec.validate(),
        }
    }

    /// Value to be maximized when outcomes are rewards (e.g. liquidation
    /// values). `benchmark` is only used by CPT.
    pub fn reward_value(&self, outcomes: &[f64], benchmark: &[f64]) -> Result<GoalValue> {
        match self {
            Goal::Expectation { utility } => expected_utility(outcomes, utility).map(GoalValue::finite),
            Goal::GoalReaching { level } => {
                expected_utility(outcomes, &Utility::Indicator { level: *level }).map(GoalValue::finite)
            }
            Goal::Yaari { distortion } => yaari_value(outcomes, distortion).map(GoalValue::finite),
            Goal::Cpt(spec) => cpt_value(outcomes, benchmark, spec),
        }
    }
}
