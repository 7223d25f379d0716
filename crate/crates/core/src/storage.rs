//! Budgeted storage control under continuous demand.
//!
//! Storage is `Z = X + A₊ L⁺ - A₋ L⁻` for a demand path `X` and increasing
//! controls `L±` whose total terminal mass is capped by a budget. The cost of
//! a control is running cost plus proportional trade cost plus terminal cost.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{cpt_value, expected_utility, Goal, GoalValue};
use crate::paths::{format_f64, FVPath, TimeGrid};
use crate::rng::{self, gaussian_nodes, Purpose};

/// Continuous demand with independent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandModel {
    /// `X_t = x0 + drift t + sigma W_t`.
    BrownianDrift {
        x0: Vec<f64>,
        drift: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// `dX = rate (mean - X) dt + sigma dW`, sampled exactly at the nodes.
    OrnsteinUhlenbeck {
        x0: Vec<f64>,
        rate: f64,
        mean: Vec<f64>,
        sigma: Vec<f64>,
    },
}

impl DemandModel {
    pub fn dim(&self) -> usize {
        match self {
            DemandModel::BrownianDrift { x0, .. } | DemandModel::OrnsteinUhlenbeck { x0, .. } => x0.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if k == 0 {
            return Err(Error::invalid("x0: demand needs at least one component"));
        }
        let check = |name: &str, v: &[f64], nonneg: bool| -> Result<()> {
            if v.len() != k {
                return Err(Error::invalid(format!("{name}: expected {k} entries, got {}", v.len())));
            }
            for (i, &x) in v.iter().enumerate() {
                if !x.is_finite() || (nonneg && x < 0.0) {
                    return Err(Error::invalid(format!("{name}[{i}]: invalid value {x}")));
                }
            }
            Ok(())
        };
        match self {
            DemandModel::BrownianDrift { x0, drift, sigma } => {
                check("x0", x0, false)?;
                check("drift", drift, false)?;
                check("sigma", sigma, true)
            }
            DemandModel::OrnsteinUhlenbeck { x0, rate, mean, sigma } => {
                check("x0", x0, false)?;
                check("mean", mean, false)?;
                check("sigma", sigma, true)?;
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::invalid("rate: must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Path `index` of the sample keyed by `seed`, exact at the nodes.
    pub fn simulate(&self, grid: &TimeGrid, seed: u64, index: u64) -> StatePath {
        let k = self.dim();
        let times: Vec<f64> = grid.nodes().collect();
        let mut g = rng::stream(seed, Purpose::Demand, index);
        let values = match self {
            DemandModel::BrownianDrift { x0, drift, sigma } => {
                let w = gaussian_nodes(&mut g, &times, k);
                let mut v = Vec::with_capacity(w.len());
                for (n, &t) in times.iter().enumerate() {
                    for i in 0..k {
                        v.push(x0[i] + drift[i] * t + sigma[i] * w[n * k + i]);
                    }
                }
                v
            }
            DemandModel::OrnsteinUhlenbeck { x0, rate, mean, sigma } => {
                // Time change: X_t = m + (x0 - m) e^{-θt} + σ e^{-θt} W(τ(t)).
                let clock: Vec<f64> = times
                    .iter()
                    .map(|&t| ((2.0 * rate * t).exp() - 1.0) / (2.0 * rate))
                    .collect();
                let w = gaussian_nodes(&mut g, &clock, k);
                let mut v = Vec::with_capacity(w.len());
                for (n, &t) in times.iter().enumerate() {
                    let decay = (-rate * t).exp();
                    for i in 0..k {
                        v.push(mean[i] + (x0[i] - mean[i]) * decay + sigma[i] * decay * w[n * k + i]);
                    }
                }
                v
            }
        };
        StatePath {
            grid: *grid,
            dim: k,
            values,
        }
    }
}

/// Continuous path sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl StatePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != dim * grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: dim * grid.n_nodes(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state values must be finite"));
        }
        Ok(StatePath { grid, dim, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid.n_steps())
    }
}

/// Writes `path_id,t,X1,...,Xk`.
pub fn write_state_csv<W: Write>(paths: &[StatePath], out: W) -> Result<()> {
    let k = paths.first().map_or(0, |p| p.dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=k).map(|i| format!("X{i}")));
    w.write_record(&header)?;
    for (id, p) in paths.iter().enumerate() {
        for n in 0..p.grid.n_nodes() {
            let mut rec = vec![id.to_string(), format_f64(p.grid.node(n))];
            rec.extend(p.at(n).iter().map(|&v| format_f64(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_state_csv<R: Read>(input: R) -> Result<Vec<StatePath>> {
    crate::paths::read_id_rows(input, "X")?
        .into_iter()
        .map(|(grid, dim, values)| StatePath::new(grid, dim, values))
        .collect()
}

/// Increasing controls `L⁺, L⁻` under a total-variation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    plus: FVPath,
    minus: FVPath,
    budget: f64,
}

/// Slack allowed on monotonicity and on the budget.
pub const BUDGET_TOL: f64 = 1e-12;

impl ControlPair {
    pub fn new(plus: FVPath, minus: FVPath, budget: f64) -> Result<Self> {
        if plus.grid() != minus.grid() {
            return Err(Error::GridMismatch);
        }
        if plus.dim() != minus.dim() {
            return Err(Error::DimensionMismatch { expected: plus.dim(), got: minus.dim() });
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::invalid("budget must be positive"));
        }
        for (name, path) in [("plus", &plus), ("minus", &minus)] {
            if path.increments().flatten().any(|v| v < -BUDGET_TOL) {
                return Err(Error::invalid(format!("control {name} must be increasing")));
            }
        }
        let pair = ControlPair { plus, minus, budget };
        let used = pair.used_budget();
        if used > budget + BUDGET_TOL {
            return Err(Error::invalid(format!("control uses {used} of budget {budget}")));
        }
        Ok(pair)
    }

    /// No action.
    pub fn idle(grid: TimeGrid, dim: usize, budget: f64) -> Result<Self> {
        Self::new(FVPath::zeros(grid, dim), FVPath::zeros(grid, dim), budget)
    }

    pub fn plus(&self) -> &FVPath {
        &self.plus
    }

    pub fn minus(&self) -> &FVPath {
        &self.minus
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// `Σ_j (L⁺ʲ_T + L⁻ʲ_T)`.
    pub fn used_budget(&self) -> f64 {
        self.plus.terminal().iter().chain(self.minus.terminal()).sum()
    }

    /// Total variation of the pair, equal to the used budget.
    pub fn variation(&self) -> f64 {
        crate::paths::total_variation(&self.plus) + crate::paths::total_variation(&self.minus)
    }
}

/// Running cost `g(t, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunningCost {
    Zero,
    Constant { value: f64 },
    /// `min(weight |z - center|², cap)`.
    QuadraticCapped {
        weight: f64,
        cap: f64,
        #[serde(default)]
        center: f64,
    },
}

/// Proportional trade cost `h(t) = level + slope t`, applied to every
/// control component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TradeCost {
    Linear {
        level: f64,
        #[serde(default)]
        slope: f64,
    },
}

/// Terminal cost `G(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalCost {
    Zero,
    /// `height / (1 + exp(-sharpness (|z| - threshold)))`.
    SoftThreshold { height: f64, threshold: f64, sharpness: f64 },
    QuadraticCapped { weight: f64, cap: f64 },
}

fn sq_norm(z: &[f64], center: f64) -> f64 {
    z.iter().map(|v| (v - center) * (v - center)).sum()
}

impl RunningCost {
    pub fn eval(&self, _t: f64, z: &[f64]) -> f64 {
        match *self {
            RunningCost::Zero => 0.0,
            RunningCost::Constant { value } => value,
            RunningCost::QuadraticCapped { weight, cap, center } => (weight * sq_norm(z, center)).min(cap),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            RunningCost::Zero => 0.0,
            RunningCost::Constant { value } => value,
            RunningCost::QuadraticCapped { cap, .. } => cap,
        }
    }
}

impl TradeCost {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TradeCost::Linear { level, slope } => level + slope * t,
        }
    }

    pub fn max_on(&self, horizon: f64) -> f64 {
        self.eval(0.0).max(self.eval(horizon))
    }

    pub fn min_on(&self, horizon: f64) -> f64 {
        self.eval(0.0).min(self.eval(horizon))
    }
}

impl TerminalCost {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            TerminalCost::Zero => 0.0,
            TerminalCost::SoftThreshold { height, threshold, sharpness } => {
                height / (1.0 + (-sharpness * (sq_norm(z, 0.0).sqrt() - threshold)).exp())
            }
            TerminalCost::QuadraticCapped { weight, cap } => (weight * sq_norm(z, 0.0)).min(cap),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            TerminalCost::Zero => 0.0,
            TerminalCost::SoftThreshold { height, .. } => height,
            TerminalCost::QuadraticCapped { cap, .. } => cap,
        }
    }
}

/// Conversion matrices and cost shapes of the storage model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageCostSpec {
    /// `k × d` matrix applied to `L⁺`.
    pub a_plus: Vec<Vec<f64>>,
    /// `k × d` matrix applied to `L⁻`.
    pub a_minus: Vec<Vec<f64>>,
    pub running: RunningCost,
    pub trade_plus: TradeCost,
    pub trade_minus: TradeCost,
    pub terminal: TerminalCost,
}

impl StorageCostSpec {
    /// One commodity, one control of each sign, unit conversion.
    pub fn scalar(running: RunningCost, trade: TradeCost, terminal: TerminalCost) -> Self {
        StorageCostSpec {
            a_plus: vec![vec![1.0]],
            a_minus: vec![vec![1.0]],
            running,
            trade_plus: trade,
            trade_minus: trade,
            terminal,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a_plus.len()
    }

    pub fn control_dim(&self) -> usize {
        self.a_plus.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let k = self.state_dim();
        let d = self.control_dim();
        if k == 0 || d == 0 {
            return Err(Error::invalid("a_plus: matrix must be nonempty"));
        }
        for (name, a) in [("a_plus", &self.a_plus), ("a_minus", &self.a_minus)] {
            if a.len() != k {
                return Err(Error::invalid(format!("{name}: expected {k} rows, got {}", a.len())));
            }
            for (i, row) in a.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::invalid(format!("{name}[{i}]: expected {d} entries, got {}", row.len())));
                }
                if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("{name}[{i}][{j}]: must be finite")));
                }
            }
        }
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name}: must be finite and nonnegative, got {v}")))
            }
        };
        match self.running {
            RunningCost::Zero => {}
            RunningCost::Constant { value } => nonneg("running.value", value)?,
            RunningCost::QuadraticCapped { weight, cap, center } => {
                nonneg("running.weight", weight)?;
                nonneg("running.cap", cap)?;
                if !center.is_finite() {
                    return Err(Error::invalid("running.center: must be finite"));
                }
            }
        }
        for (name, h) in [("trade_plus", &self.trade_plus), ("trade_minus", &self.trade_minus)] {
            let TradeCost::Linear { level, slope } = *h;
            if !(level.is_finite() && slope.is_finite()) {
                return Err(Error::invalid(format!("{name}: parameters must be finite")));
            }
            if h.min_on(horizon) < 0.0 {
                return Err(Error::invalid(format!("{name}: trade cost must be nonnegative on [0, T]")));
            }
        }
        match self.terminal {
            TerminalCost::Zero => {}
            TerminalCost::SoftThreshold { height, threshold, sharpness } => {
                nonneg("terminal.height", height)?;
                if !threshold.is_finite() || !(sharpness.is_finite() && sharpness > 0.0) {
                    return Err(Error::invalid("terminal: threshold finite and sharpness positive required"));
                }
            }
            TerminalCost::QuadraticCapped { weight, cap } => {
                nonneg("terminal.weight", weight)?;
                nonneg("terminal.cap", cap)?;
            }
        }
        Ok(())
    }

    /// `sup g · T + max h · budget + sup G`, an upper bound on any cost.
    pub fn cost_bound(&self, horizon: f64, budget: f64) -> f64 {
        let h = self.trade_plus.max_on(horizon).max(self.trade_minus.max_on(horizon));
        self.running.sup() * horizon + h * budget + self.terminal.sup()
    }

    /// Control contribution `A₊ u⁺ - A₋ u⁻` added to `out`.
    fn add_control(&self, plus: &[f64], minus: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += crate::linalg::dot(&self.a_plus[i], plus) - crate::linalg::dot(&self.a_minus[i], minus);
        }
    }
}

fn check_storage_dims(demand: &StatePath, l: &ControlPair, spec: &StorageCostSpec) -> Result<()> {
    if demand.grid() != l.plus().grid() {
        return Err(Error::GridMismatch);
    }
    if demand.dim() != spec.state_dim() {
        return Err(Error::DimensionMismatch { expected: spec.state_dim(), got: demand.dim() });
    }
    if l.plus().dim() != spec.control_dim() {
        return Err(Error::DimensionMismatch { expected: spec.control_dim(), got: l.plus().dim() });
    }
    Ok(())
}

/// `Z_t = X_t + A₊ L⁺_t - A₋ L⁻_t` at every node.
pub fn storage_path(demand: &StatePath, l: &ControlPair, spec: &StorageCostSpec) -> Result<StatePath> {
    check_storage_dims(demand, l, spec)?;
    let mut values = demand.values.clone();
    let k = demand.dim;
    for n in 0..demand.grid.n_nodes() {
        spec.add_control(l.plus().value(n), l.minus().value(n), &mut values[n * k..(n + 1) * k]);
    }
    Ok(StatePath {
        grid: demand.grid,
        dim: k,
        values,
    })
}

/// Cost `∫ g(s, Z_s) ds + ∫ h₊ dL⁺ + ∫ h₋ dL⁻ + G(Z_T)`.
///
/// On `[t_n, t_{n+1})` the control contribution is frozen at its node value
/// and the demand is linear, so the running term is the trapezoid
/// `dt/2 [g(t_n, X_n + C_n) + g(t_{n+1}, X_{n+1} + C_n)]`. Trade terms are
/// exact Stieltjes sums including the atoms at zero.
pub fn cost(demand: &StatePath, l: &ControlPair, spec: &StorageCostSpec) -> Result<f64> {
    check_storage_dims(demand, l, spec)?;
    let grid = demand.grid;
    let k = demand.dim;
    let dt = grid.dt();
    let mut control = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut running = 0.0;
    let mut trade = 0.0;
    for n in 0..grid.n_nodes() {
        let t = grid.node(n);
        let dp = l.plus().increment(n);
        let dm = l.minus().increment(n);
        trade += spec.trade_plus.eval(t) * dp.iter().sum::<f64>() + spec.trade_minus.eval(t) * dm.iter().sum::<f64>();
        control.iter_mut().for_each(|c| *c = 0.0);
        spec.add_control(l.plus().value(n), l.minus().value(n), &mut control);
        if n < grid.n_steps() {
            for (zi, (x, c)) in z.iter_mut().zip(demand.at(n).iter().zip(&control)) {
                *zi = x + c;
            }
            let left = spec.running.eval(t, &z);
            for (zi, (x, c)) in z.iter_mut().zip(demand.at(n + 1).iter().zip(&control)) {
                *zi = x + c;
            }
            let right = spec.running.eval(grid.node(n + 1), &z);
            running += 0.5 * dt * (left + right);
        }
    }
    for (zi, (x, c)) in z.iter_mut().zip(demand.terminal().iter().zip(&control)) {
        *zi = x + c;
    }
    Ok(running + trade + spec.terminal.eval(&z))
}

/// Reference level `ζ` for behavioral storage goals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StorageBenchmark {
    Constant { value: f64 },
    /// A fraction of the cost of doing nothing on the same demand path.
    UncontrolledCost { fraction: f64 },
}

impl StorageBenchmark {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            StorageBenchmark::Constant { value } => value,
            StorageBenchmark::UncontrolledCost { fraction } => fraction,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("benchmark must be finite and nonnegative"))
        }
    }

    pub fn eval(&self, demand: &StatePath, spec: &StorageCostSpec, budget: f64) -> Result<f64> {
        match *self {
            StorageBenchmark::Constant { value } => Ok(value),
            StorageBenchmark::UncontrolledCost { fraction } => {
                let idle = ControlPair::idle(*demand.grid(), spec.control_dim(), budget)?;
                Ok(fraction * cost(demand, &idle, spec)?)
            }
        }
    }
}

/// Goal value of a cost law, in the maximization convention.
///
/// Expectation gives `-mean U(W)`, goal reaching `-P(W > b)`, CPT
/// `I₊(u₊((ζ - W)⁺)) - I₋(u₋((ζ - W)⁻))`.
pub fn storage_goal(costs: &[f64], benchmark: &[f64], goal: &Goal) -> Result<GoalValue> {
    match goal {
        Goal::Expectation { utility } => Ok(GoalValue::finite(-expected_utility(costs, utility)?)),
        Goal::GoalReaching { level } => {
            if costs.is_empty() {
                return Err(Error::invalid("empty outcome sample"));
            }
            let exceed = costs.iter().filter(|&&w| w > *level).count();
            Ok(GoalValue::finite(-(exceed as f64) / costs.len() as f64))
        }
        Goal::Yaari { .. } => Err(Error::Unsupported("distorted expectations of costs".into())),
        Goal::Cpt(spec) => cpt_value(benchmark, costs, spec),
    }
}
