use std::hash::{DefaultHasher, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ControlProblem, Emission, MenuItem, Outcome, PolicyKind, Strategy};
use crate::cones::{Cone, TransactionCostSpec};
use crate::error::{Error, Result};
use crate::goals::{Goal, GoalValue};
use crate::market::{evolve, feasible_step, make_cps, simulate_price_path, trade_to_fraction, PricePath, PriceModel};
use crate::paths::{total_variation, FVPath, TimeGrid};

/// Reference outcome for CPT goals on liquidation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketBenchmark {
    Constant { value: f64 },
    /// Liquidation value of holding the endowment to the horizon.
    BuyAndHold,
}

/// Trading under proportional costs, scored on the terminal liquidation value.
#[derive(Debug, Clone)]
pub struct MarketProblem {
    fees: TransactionCostSpec,
    cone: Arc<Cone>,
    model: PriceModel,
    endowment: Vec<f64>,
    grid: TimeGrid,
    goal: Goal,
    benchmark: MarketBenchmark,
    variation_bound: Option<f64>,
}

impl MarketProblem {
    pub fn new(
        fees: TransactionCostSpec,
        model: PriceModel,
        endowment: Vec<f64>,
        grid: TimeGrid,
        goal: Goal,
        benchmark: MarketBenchmark,
    ) -> Result<Self> {
        fees.validate()?;
        model.validate()?;
        goal.validate()?;
        let d = fees.dim();
        if model.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: model.dim() });
        }
        if endowment.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: endowment.len() });
        }
        if let MarketBenchmark::Constant { value } = benchmark {
            if !value.is_finite() {
                return Err(Error::invalid("benchmark.value: must be finite"));
            }
        }
        let cone = Arc::new(fees.cone()?);
        if !cone.contains(&endowment, crate::cones::DEFAULT_TOL)? {
            return Err(Error::invalid("endowment: must lie in the solvency cone"));
        }
        let variation_bound = match make_cps(&model, &cone) {
            Ok(cps) => Some(cone.purchase(&endowment)? / cps.epsilon),
            Err(Error::Unsupported(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MarketProblem {
            fees,
            cone,
            model,
            endowment,
            grid,
            goal,
            benchmark,
            variation_bound,
        })
    }

    pub fn cone(&self) -> &Arc<Cone> {
        &self.cone
    }

    pub fn endowment(&self) -> &[f64] {
        &self.endowment
    }

    pub fn model(&self) -> &PriceModel {
        &self.model
    }

    fn risky(&self) -> usize {
        self.fees.dim() - 1
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

    /// Wealth fractions `[lo, hi]` and the trade target for asset `i`, or
    /// `None` when the asset is left alone.
    fn band_rule(kind: &PolicyKind, params: &[f64], i: usize, fraction: f64) -> Option<f64> {
        match kind {
            PolicyKind::Band => {
                let p = &params[3 * (i - 1)..3 * i];
                let lo = p[0].min(p[1]).clamp(0.0, 1.0);
                let hi = p[0].max(p[1]).clamp(0.0, 1.0);
                let target = p[2].clamp(lo, hi);
                (fraction < lo || fraction > hi).then_some(target)
            }
            PolicyKind::Rebalance => {
                let p = &params[2 * (i - 1)..2 * i];
                let target = p[0].clamp(0.0, 1.0);
                let w = p[1].abs();
                let lo = (target - w).max(0.0);
                let hi = (target + w).min(1.0);
                if fraction < lo {
                    Some(lo)
                } else if fraction > hi {
                    Some(hi)
                } else {
                    None
                }
            }
            PolicyKind::Menu { .. } => None,
        }
    }

    /// Runs a fraction rule forward; falls back to liquidation (and flags)
    /// if the position ever leaves the cone.
    fn emit_rule(&self, kind: &PolicyKind, params: &[f64], prices: &PricePath) -> Result<Emission<FVPath>> {
        let d = self.fees.dim();
        let n = self.grid.n_nodes();
        let mut v_hat = self.endowment.clone();
        let mut values = Vec::with_capacity(n * d);
        let mut b = vec![0.0; d];
        let mut flagged = false;
        let mut v = vec![0.0; d];
        for k in 0..n {
            let s = prices.at(k);
            for i in 0..d {
                v[i] = v_hat[i] * s[i];
            }
            let mut delta = vec![0.0; d];
            if flagged {
                // Already liquidated.
            } else {
                let mut cur = v.clone();
                for i in 1..d {
                    let wealth: f64 = cur.iter().sum();
                    if wealth <= 0.0 {
                        break;
                    }
                    if let Some(target) = Self::band_rule(kind, params, i, cur[i] / wealth) {
                        let step = trade_to_fraction(&cur, i, target, &self.fees);
                        for j in 0..d {
                            delta[j] += step[j];
                            cur[j] += step[j];
                        }
                    }
                }
                match feasible_step(&self.cone, &v, &delta) {
                    Some(alpha) => delta.iter_mut().for_each(|x| *x *= alpha),
                    None => {
                        flagged = true;
                        let cash = self.cone.liquidation(&v)?;
                        delta = v.iter().map(|x| -x).collect();
                        delta[0] += cash;
                    }
                }
            }
            for i in 0..d {
                v_hat[i] += delta[i] / s[i];
                b[i] += delta[i];
            }
            values.extend_from_slice(&b);
        }
        Ok(Emission {
            control: FVPath::from_flat(self.grid, d, values)?,
            flagged,
        })
    }
}

impl ControlProblem for MarketProblem {
    type Noise = PricePath;
    type Control = FVPath;

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn with_grid(&self, grid: TimeGrid) -> Self {
        MarketProblem { grid, ..self.clone() }
    }

    fn param_dim(&self, kind: &PolicyKind) -> Result<usize> {
        Ok(match kind {
            PolicyKind::Band => 3 * self.risky(),
            PolicyKind::Rebalance => 2 * self.risky(),
            PolicyKind::Menu { .. } => 1,
        })
    }

    fn check_item(&self, item: &MenuItem) -> Result<()> {
        match item {
            MenuItem::Idle | MenuItem::Liquidate => Ok(()),
            MenuItem::Band { params } => self.check_params(&PolicyKind::Band, params),
            MenuItem::Rebalance { params } => self.check_params(&PolicyKind::Rebalance, params),
            MenuItem::JumpAtStart { .. } | MenuItem::TerminalTrigger { .. } => {
                Err(Error::Unsupported("storage menu item in a market problem".into()))
            }
        }
    }

    fn sample_noise(&self, seed: u64, index: u64) -> PricePath {
        simulate_price_path(&self.model, &self.grid, seed, index).expect("price model validated at construction")
    }

    fn fingerprint(&self, noise: &PricePath, hasher: &mut DefaultHasher) {
        for k in 0..noise.grid().n_nodes() {
            for v in noise.at(k) {
                hasher.write_u64(v.to_bits());
            }
        }
    }

    fn benchmark(&self, prices: &PricePath) -> Result<f64> {
        match self.benchmark {
            MarketBenchmark::Constant { value } => Ok(value),
            MarketBenchmark::BuyAndHold => {
                let v: Vec<f64> = self.endowment.iter().zip(prices.terminal()).map(|(x, s)| x * s).collect();
                self.cone.liquidation_value(&v)
            }
        }
    }

    fn emit(&self, strategy: Strategy<'_>, prices: &PricePath) -> Result<Emission<FVPath>> {
        if prices.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        match strategy {
            Strategy::Param(kind, params) => {
                self.check_params(kind, params)?;
                self.emit_rule(kind, params, prices)
            }
            Strategy::Item(MenuItem::Band { params }) => self.emit_rule(&PolicyKind::Band, params, prices),
            Strategy::Item(MenuItem::Rebalance { params }) => self.emit_rule(&PolicyKind::Rebalance, params, prices),
            Strategy::Item(MenuItem::Idle) => Ok(Emission {
                control: FVPath::zeros(self.grid, self.fees.dim()),
                flagged: false,
            }),
            Strategy::Item(MenuItem::Liquidate) => Ok(Emission {
                control: crate::market::liquidation_strategy(&self.endowment, &self.cone, prices)?,
                flagged: false,
            }),
            Strategy::Item(item) => {
                self.check_item(item)?;
                unreachable!("check_item rejects the remaining items")
            }
        }
    }

    fn outcome(&self, b: &FVPath, prices: &PricePath) -> Result<Outcome> {
        let port = evolve(&self.endowment, b, prices)?;
        let mut value = self.cone.liquidation_value(port.terminal_value())?;
        if value < 0.0 && value > -1e-9 {
            value = 0.0;
        }
        Ok(Outcome {
            value,
            variation: total_variation(b),
        })
    }

    fn goal_value(&self, outcomes: &[f64], benchmarks: &[f64]) -> Result<GoalValue> {
        self.goal.reward_value(outcomes, benchmarks)
    }

    fn variation_bound(&self) -> Option<f64> {
        self.variation_bound
    }
}
