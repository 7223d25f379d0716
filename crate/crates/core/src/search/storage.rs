use std::hash::{DefaultHasher, Hasher};

use super::{ControlProblem, Direction, Emission, MenuItem, Outcome, PolicyKind, Strategy};
use crate::error::{Error, Result};
use crate::goals::{Goal, GoalValue};
use crate::paths::{FVPath, TimeGrid};
use crate::storage::{cost, storage_goal, ControlPair, DemandModel, StatePath, StorageBenchmark, StorageCostSpec};

/// Budgeted storage control, scored on the realized cost.
///
/// Band and rebalance rules act on storage component `i` through control
/// component `i` only, so they need as many controls as commodities and a
/// positive diagonal in both matrices.
#[derive(Debug, Clone)]
pub struct StorageProblem {
    demand: DemandModel,
    spec: StorageCostSpec,
    budget: f64,
    grid: TimeGrid,
    goal: Goal,
    benchmark: StorageBenchmark,
}

impl StorageProblem {
    pub fn new(
        demand: DemandModel,
        spec: StorageCostSpec,
        budget: f64,
        grid: TimeGrid,
        goal: Goal,
        benchmark: StorageBenchmark,
    ) -> Result<Self> {
        demand.validate()?;
        spec.validate(grid.horizon())?;
        goal.validate()?;
        benchmark.validate()?;
        if demand.dim() != spec.state_dim() {
            return Err(Error::DimensionMismatch { expected: spec.state_dim(), got: demand.dim() });
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::invalid("budget: must be positive"));
        }
        if let Goal::Yaari { .. } = goal {
            return Err(Error::Unsupported("distorted expectations of costs".into()));
        }
        Ok(StorageProblem {
            demand,
            spec,
            budget,
            grid,
            goal,
            benchmark,
        })
    }

    pub fn spec(&self) -> &StorageCostSpec {
        &self.spec
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn demand(&self) -> &DemandModel {
        &self.demand
    }

    fn diagonal_ok(&self) -> Result<()> {
        let k = self.spec.state_dim();
        if self.spec.control_dim() != k {
            return Err(Error::Unsupported("band rules need one control per commodity".into()));
        }
        for i in 0..k {
            if !(self.spec.a_plus[i][i] > 0.0 && self.spec.a_minus[i][i] > 0.0) {
                return Err(Error::Unsupported(format!("band rules need a positive diagonal at {i}")));
            }
        }
        Ok(())
    }

    fn check_params(&self, kind: &PolicyKind, params: &[f64]) -> Result<()> {
        let need = self.param_dim(kind)?;
        if params.len() != need {
            return Err(Error::invalid(format!("{} needs {need} parameters, got {}", kind.name(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(())
    }

    /// Requested `(plus, minus)` for component `i` at storage level `z`.
    fn band_request(&self, kind: &PolicyKind, params: &[f64], i: usize, z: f64) -> (f64, f64) {
        let (lo, hi, target_lo, target_hi) = match kind {
            PolicyKind::Band => {
                let p = &params[3 * i..3 * i + 3];
                let lo = p[0].min(p[1]);
                let hi = p[0].max(p[1]);
                let target = p[2].clamp(lo, hi);
                (lo, hi, target, target)
            }
            PolicyKind::Rebalance => {
                let p = &params[2 * i..2 * i + 2];
                let w = p[1].abs();
                (p[0] - w, p[0] + w, p[0] - w, p[0] + w)
            }
            PolicyKind::Menu { .. } => return (0.0, 0.0),
        };
        if z < lo {
            ((target_lo - z) / self.spec.a_plus[i][i], 0.0)
        } else if z > hi {
            (0.0, (z - target_hi) / self.spec.a_minus[i][i])
        } else {
            (0.0, 0.0)
        }
    }

    fn emit_with<F>(&self, demand: &StatePath, mut request: F) -> Result<Emission<ControlPair>>
    where
        F: FnMut(usize, &[f64], &[f64], &mut [f64], &mut [f64]),
    {
        let k = self.spec.state_dim();
        let d = self.spec.control_dim();
        let n = self.grid.n_nodes();
        let mut lp = vec![0.0; d];
        let mut lm = vec![0.0; d];
        let mut plus = Vec::with_capacity(n * d);
        let mut minus = Vec::with_capacity(n * d);
        let mut used = 0.0;
        let mut z = vec![0.0; k];
        let mut up = vec![0.0; d];
        let mut um = vec![0.0; d];
        for node in 0..n {
            let x = demand.at(node);
            for i in 0..k {
                z[i] = x[i]
                    + crate::linalg::dot(&self.spec.a_plus[i], &lp)
                    - crate::linalg::dot(&self.spec.a_minus[i], &lm);
            }
            up.iter_mut().chain(um.iter_mut()).for_each(|u| *u = 0.0);
            request(node, x, &z, &mut up, &mut um);
            up.iter_mut().chain(um.iter_mut()).for_each(|u| *u = u.max(0.0));
            let total: f64 = up.iter().chain(&um).sum();
            let left = (self.budget - used).max(0.0);
            let scale = if total > left { left / total } else { 1.0 };
            for j in 0..d {
                lp[j] += scale * up[j];
                lm[j] += scale * um[j];
            }
            used = lp.iter().chain(&lm).sum();
            plus.extend_from_slice(&lp);
            minus.extend_from_slice(&lm);
        }
        let control = ControlPair::new(
            FVPath::from_flat(self.grid, d, plus)?,
            FVPath::from_flat(self.grid, d, minus)?,
            self.budget,
        )?;
        Ok(Emission { control, flagged: false })
    }

    fn emit_rule(&self, kind: &PolicyKind, params: &[f64], demand: &StatePath) -> Result<Emission<ControlPair>> {
        self.check_params(kind, params)?;
        let k = self.spec.state_dim();
        let stop = params[params.len() - 1].clamp(0.0, 1.0) * self.grid.horizon();
        let grid = self.grid;
        self.emit_with(demand, |node, _x, z, up, um| {
            if grid.node(node) > stop + 1e-12 {
                return;
            }
            for i in 0..k {
                let (p, m) = self.band_request(kind, params, i, z[i]);
                up[i] = p;
                um[i] = m;
            }
        })
    }

    fn emit_item(&self, item: &MenuItem, demand: &StatePath) -> Result<Emission<ControlPair>> {
        self.check_item(item)?;
        let last = self.grid.n_steps();
        match *item {
            MenuItem::Idle => Ok(Emission {
                control: ControlPair::idle(self.grid, self.spec.control_dim(), self.budget)?,
                flagged: false,
            }),
            MenuItem::JumpAtStart { component, amount, direction } => self.emit_with(demand, |node, _, _, up, um| {
                if node == 0 {
                    match direction {
                        Direction::Plus => up[component] = amount,
                        Direction::Minus => um[component] = amount,
                    }
                }
            }),
            MenuItem::TerminalTrigger {
                component,
                threshold,
                amount,
                direction,
                above,
            } => self.emit_with(demand, |node, x, _, up, um| {
                if node == last && (x[component] > threshold) == above {
                    match direction {
                        Direction::Plus => up[component] = amount,
                        Direction::Minus => um[component] = amount,
                    }
                }
            }),
            MenuItem::Band { ref params } => self.emit_rule(&PolicyKind::Band, params, demand),
            MenuItem::Rebalance { ref params } => self.emit_rule(&PolicyKind::Rebalance, params, demand),
            MenuItem::Liquidate => unreachable!("check_item rejects liquidation"),
        }
    }
}

impl ControlProblem for StorageProblem {
    type Noise = StatePath;
    type Control = ControlPair;

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn with_grid(&self, grid: TimeGrid) -> Self {
        StorageProblem { grid, ..self.clone() }
    }

    fn param_dim(&self, kind: &PolicyKind) -> Result<usize> {
        let k = self.spec.state_dim();
        match kind {
            PolicyKind::Band => self.diagonal_ok().map(|_| 3 * k + 1),
            PolicyKind::Rebalance => self.diagonal_ok().map(|_| 2 * k + 1),
            PolicyKind::Menu { .. } => Ok(1),
        }
    }

    fn check_item(&self, item: &MenuItem) -> Result<()> {
        let d = self.spec.control_dim();
        let k = self.spec.state_dim();
        match item {
            MenuItem::Idle => Ok(()),
            MenuItem::Liquidate => Err(Error::Unsupported("liquidation in a storage problem".into())),
            MenuItem::JumpAtStart { component, amount, .. } | MenuItem::TerminalTrigger { component, amount, .. } => {
                if *component >= d.min(k) {
                    return Err(Error::invalid(format!("component {component} out of range")));
                }
                if !(amount.is_finite() && *amount >= 0.0) {
                    return Err(Error::invalid("amount: must be finite and nonnegative"));
                }
                if let MenuItem::TerminalTrigger { threshold, .. } = item {
                    if !threshold.is_finite() {
                        return Err(Error::invalid("threshold: must be finite"));
                    }
                }
                Ok(())
            }
            MenuItem::Band { params } => self.check_params(&PolicyKind::Band, params),
            MenuItem::Rebalance { params } => self.check_params(&PolicyKind::Rebalance, params),
        }
    }

    fn sample_noise(&self, seed: u64, index: u64) -> StatePath {
        self.demand.simulate(&self.grid, seed, index)
    }

    fn fingerprint(&self, noise: &StatePath, hasher: &mut DefaultHasher) {
        for n in 0..noise.grid().n_nodes() {
            for v in noise.at(n) {
                hasher.write_u64(v.to_bits());
            }
        }
    }

    fn benchmark(&self, demand: &StatePath) -> Result<f64> {
        self.benchmark.eval(demand, &self.spec, self.budget)
    }

    fn emit(&self, strategy: Strategy<'_>, demand: &StatePath) -> Result<Emission<ControlPair>> {
        if demand.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        match strategy {
            Strategy::Param(kind, params) => self.emit_rule(kind, params, demand),
            Strategy::Item(item) => self.emit_item(item, demand),
        }
    }

    fn outcome(&self, control: &ControlPair, demand: &StatePath) -> Result<Outcome> {
        Ok(Outcome {
            value: cost(demand, control, &self.spec)?,
            variation: control.used_budget(),
        })
    }

    fn goal_value(&self, outcomes: &[f64], benchmarks: &[f64]) -> Result<GoalValue> {
        storage_goal(outcomes, benchmarks, &self.goal)
    }

    fn variation_bound(&self) -> Option<f64> {
        Some(self.budget)
    }
}
