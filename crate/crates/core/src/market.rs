//! Conic market with proportional transaction costs.
//!
//! Positions are tracked in physical units `V̂` and valued in money as
//! `V = S ⊙ V̂`. Strategies are K-decreasing paths of monetary trades.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cones::{Cone, TransactionCostSpec, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::goals::Utility;
use crate::linalg::{cholesky_psd, dot};
use crate::paths::{format_f64, is_k_monotone, FVPath, Monotonicity, TimeGrid};
use crate::rng::{self, gaussian_nodes, Purpose};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceKind {
    MartingaleGbm,
    DriftedGbm,
}

/// Geometric Brownian prices with a constant numeraire in the first slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceModel {
    pub kind: PriceKind,
    /// Volatility per square-root time unit; `sigma[0]` must be zero.
    pub sigma: Vec<f64>,
    /// Drift per time unit; empty means zero.
    #[serde(default)]
    pub mu: Vec<f64>,
    /// Correlation of the driving Brownian motions; identity when absent.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
}

impl PriceModel {
    pub fn martingale(sigma: Vec<f64>) -> Result<Self> {
        let m = PriceModel {
            kind: PriceKind::MartingaleGbm,
            sigma,
            mu: Vec::new(),
            correlation: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn drifted(sigma: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let m = PriceModel {
            kind: PriceKind::DriftedGbm,
            sigma,
            mu,
            correlation: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    fn drift(&self, i: usize) -> f64 {
        self.mu.get(i).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.factor().map(|_| ())
    }

    /// Validates the model and returns the lower Cholesky factor of the
    /// correlation matrix.
    fn factor(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("sigma: at least one asset is required"));
        }
        for (i, &s) in self.sigma.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(format!("sigma[{i}]: must be finite and nonnegative")));
            }
        }
        if !self.mu.is_empty() && self.mu.len() != d {
            return Err(Error::invalid(format!("mu: expected {d} entries, got {}", self.mu.len())));
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::invalid(format!("mu[{i}]: must be finite")));
            }
            if self.kind == PriceKind::MartingaleGbm && m != 0.0 {
                return Err(Error::invalid(format!("mu[{i}]: martingale prices have zero drift")));
            }
        }
        if self.sigma[0] != 0.0 || self.drift(0) != 0.0 {
            return Err(Error::invalid("sigma[0]: the numeraire price is constant"));
        }
        let corr = match &self.correlation {
            None => {
                return Ok((0..d)
                    .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect())
            }
            Some(c) => c,
        };
        if corr.len() != d || corr.iter().any(|r| r.len() != d) {
            return Err(Error::invalid(format!("correlation: expected a {d}x{d} matrix")));
        }
        for i in 0..d {
            if corr[i][i] != 1.0 {
                return Err(Error::invalid(format!("correlation[{i}][{i}]: diagonal must be 1")));
            }
            for j in 0..d {
                let v = corr[i][j];
                if !(v.is_finite() && (-1.0..=1.0).contains(&v)) || v != corr[j][i] {
                    return Err(Error::invalid(format!(
                        "correlation[{i}][{j}]: must be symmetric with entries in [-1, 1]"
                    )));
                }
            }
        }
        cholesky_psd(corr, 1e-12)
            .ok_or_else(|| Error::invalid("correlation: matrix is not positive semi-definite"))
    }
}

/// One simulated price trajectory, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl PricePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: dim * grid.n_nodes(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("prices must be finite and positive"));
        }
        Ok(PricePath { grid, dim, values })
    }

    /// Deterministic unit prices.
    pub fn constant(grid: TimeGrid, dim: usize) -> Self {
        PricePath {
            grid,
            dim,
            values: vec![1.0; dim * grid.n_nodes()],
        }
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

/// Simulates path `index` of the sample keyed by `seed`. Log prices are
/// exact at the nodes; dyadically nested grids share node values.
pub fn simulate_price_path(model: &PriceModel, grid: &TimeGrid, seed: u64, index: u64) -> Result<PricePath> {
    let l = model.factor()?;
    Ok(simulate_with_factor(model, &l, grid, seed, index))
}

fn simulate_with_factor(model: &PriceModel, l: &[Vec<f64>], grid: &TimeGrid, seed: u64, index: u64) -> PricePath {
    let d = model.dim();
    let clock: Vec<f64> = grid.nodes().collect();
    let w = gaussian_nodes(&mut rng::stream(seed, Purpose::Prices, index), &clock, d);
    let mut values = Vec::with_capacity(w.len());
    let mut corr_w = vec![0.0; d];
    for (k, &t) in clock.iter().enumerate() {
        let wk = &w[k * d..(k + 1) * d];
        for i in 0..d {
            corr_w[i] = (0..=i).map(|j| l[i][j] * wk[j]).sum();
        }
        for i in 0..d {
            let s = model.sigma[i];
            values.push(if s == 0.0 && model.drift(i) == 0.0 {
                1.0
            } else {
                ((model.drift(i) - 0.5 * s * s) * t + s * corr_w[i]).exp()
            });
        }
    }
    PricePath {
        grid: *grid,
        dim: d,
        values,
    }
}

pub fn simulate_prices(model: &PriceModel, grid: &TimeGrid, seed: u64, n_paths: usize) -> Result<Vec<PricePath>> {
    let l = model.factor()?;
    Ok((0..n_paths as u64)
        .map(|i| simulate_with_factor(model, &l, grid, seed, i))
        .collect())
}

/// Writes `path_id,t,S1,...,Sd`.
pub fn write_price_csv<W: Write>(paths: &[PricePath], out: W) -> Result<()> {
    let d = paths.first().map_or(0, |p| p.dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("S{i}")));
    w.write_record(&header)?;
    for (id, p) in paths.iter().enumerate() {
        for k in 0..p.grid.n_nodes() {
            let mut rec = vec![id.to_string(), format_f64(p.grid.node(k))];
            rec.extend(p.at(k).iter().map(|&v| format_f64(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_price_csv`].
pub fn read_price_csv<R: Read>(input: R) -> Result<Vec<PricePath>> {
    let rows = crate::paths::read_id_rows(input, "S")?;
    rows.into_iter()
        .map(|(grid, dim, values)| PricePath::new(grid, dim, values))
        .collect()
}

/// K-decreasing trade path together with its cone.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketStrategy {
    path: FVPath,
    cone: Arc<Cone>,
}

impl MarketStrategy {
    pub fn new(path: FVPath, cone: Arc<Cone>) -> Result<Self> {
        if !is_k_monotone(&path, &cone, Monotonicity::Decreasing, DEFAULT_TOL)? {
            return Err(Error::invalid("strategy increments must lie in -K"));
        }
        Ok(MarketStrategy { path, cone })
    }

    pub fn path(&self) -> &FVPath {
        &self.path
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    pub fn into_path(self) -> FVPath {
        self.path
    }
}

/// Positions in physical units and their monetary values.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPath {
    grid: TimeGrid,
    dim: usize,
    v_hat: Vec<f64>,
    v: Vec<f64>,
}

impl PortfolioPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn v_hat(&self, k: usize) -> &[f64] {
        &self.v_hat[k * self.dim..(k + 1) * self.dim]
    }

    pub fn v(&self, k: usize) -> &[f64] {
        &self.v[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal_value(&self) -> &[f64] {
        self.v(self.grid.n_steps())
    }
}

fn check_alignment(x: &[f64], b: &FVPath, prices: &PricePath) -> Result<()> {
    if b.grid() != prices.grid() {
        return Err(Error::GridMismatch);
    }
    if x.len() != b.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: x.len() });
    }
    if prices.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: prices.dim() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial endowment must be finite"));
    }
    Ok(())
}

/// `V̂_t = x + Σ_{s ≤ t} ΔB_s / S_s`, atom at zero included.
pub fn evolve(x: &[f64], b: &FVPath, prices: &PricePath) -> Result<PortfolioPath> {
    check_alignment(x, b, prices)?;
    let d = x.len();
    let n = b.n_nodes();
    let mut v_hat = Vec::with_capacity(n * d);
    let mut v = Vec::with_capacity(n * d);
    let mut pos = x.to_vec();
    for k in 0..n {
        let s = prices.at(k);
        for (i, db) in b.increment(k).into_iter().enumerate() {
            pos[i] += db / s[i];
        }
        v_hat.extend_from_slice(&pos);
        v.extend(pos.iter().zip(s).map(|(p, s)| p * s));
    }
    Ok(PortfolioPath {
        grid: *b.grid(),
        dim: d,
        v_hat,
        v,
    })
}

/// `V_t ∈ K` at every node (LP membership).
pub fn is_admissible(x: &[f64], b: &FVPath, prices: &PricePath, cone: &Cone, tol: f64) -> Result<bool> {
    let port = evolve(x, b, prices)?;
    for k in 0..b.n_nodes() {
        if !cone.contains(port.v(k), tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Immediate liquidation at time zero: afterwards `V̂ ≡ ℓ(x) e_1`.
pub fn liquidation_strategy(x: &[f64], cone: &Cone, prices: &PricePath) -> Result<FVPath> {
    let s0 = prices.at(0);
    let value: Vec<f64> = x.iter().zip(s0).map(|(a, s)| a * s).collect();
    let cash = cone.liquidation(&value)?;
    let mut jump: Vec<f64> = value.iter().map(|v| -v).collect();
    jump[0] += cash;
    let mut incs = vec![vec![0.0; x.len()]; prices.grid().n_nodes()];
    incs[0] = jump;
    FVPath::from_increments(*prices.grid(), &incs)
}

/// Unit hat functions centred at each node: on a grid path `∫ f_l dB`
/// reduces to the jump at node `l`.
pub fn hat_functions(grid: &TimeGrid) -> Vec<Vec<f64>> {
    (0..grid.n_nodes())
        .map(|l| (0..grid.n_nodes()).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Finite truncation of the embedding constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    /// `a_k · ∫ f_l dB` for `a_k = -y_k ∈ -K*`, test-function-major.
    pub trades: Vec<f64>,
    /// `y_k · V_{t_j}` for `y_k ∈ K*`, node-major.
    pub values: Vec<f64>,
}

impl ConstraintResiduals {
    pub fn min(&self) -> f64 {
        self.trades
            .iter()
            .chain(&self.values)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.min() >= -tol
    }
}

/// Residuals with every node as a test function and the unit dual
/// generators of `cone` as dual points.
pub fn constraint_residuals(x: &[f64], b: &FVPath, prices: &PricePath, cone: &Cone) -> Result<ConstraintResiduals> {
    let duals = cone
        .dual_generators()
        .ok_or_else(|| Error::Unsupported("constraint residuals need the dual cone".into()))?;
    constraint_residuals_with(x, b, prices, &hat_functions(b.grid()), duals)
}

/// Residuals for explicit test functions (sampled at the nodes, nonnegative)
/// and dual points `y_k ∈ K*`.
pub fn constraint_residuals_with(
    x: &[f64],
    b: &FVPath,
    prices: &PricePath,
    test_functions: &[Vec<f64>],
    dual_points: &[Vec<f64>],
) -> Result<ConstraintResiduals> {
    let port = evolve(x, b, prices)?;
    let mut trades = Vec::with_capacity(test_functions.len() * dual_points.len());
    for f in test_functions {
        if f.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("test functions must be nonnegative"));
        }
        let integral = crate::paths::stieltjes_integral(f, b)?;
        trades.extend(dual_points.iter().map(|y| -dot(y, &integral)));
    }
    let mut values = Vec::with_capacity(b.n_nodes() * dual_points.len());
    for k in 0..b.n_nodes() {
        values.extend(dual_points.iter().map(|y| dot(y, port.v(k))));
    }
    Ok(ConstraintResiduals { trades, values })
}

/// Explicit ε-consistent price system `Z = S` for martingale prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsCps {
    /// Margin of the unit vector in the dual cone.
    pub epsilon: f64,
    pub model: PriceModel,
}

impl EpsCps {
    /// The deflator `Z` along a price path; here the prices themselves.
    pub fn z<'a>(&self, prices: &'a PricePath) -> &'a [f64] {
        &prices.values
    }

    /// `dQ/dP = Z_T^1`, identically one.
    pub fn q_density(&self, prices: &PricePath) -> f64 {
        prices.terminal()[0]
    }

    /// Smallest margin of `Z_t / S_t` in `K*` over the nodes of `prices`.
    pub fn ratio_margin(&self, cone: &Cone, prices: &PricePath) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for k in 0..prices.grid.n_nodes() {
            let s = prices.at(k);
            let ratio: Vec<f64> = self.z(prices)[k * prices.dim..(k + 1) * prices.dim]
                .iter()
                .zip(s)
                .map(|(z, s)| z / s)
                .collect();
            worst = worst.min(cone.dual_margin(&ratio)?);
        }
        Ok(worst)
    }
}

pub fn make_cps(model: &PriceModel, cone: &Cone) -> Result<EpsCps> {
    model.validate()?;
    if model.kind != PriceKind::MartingaleGbm {
        return Err(Error::Unsupported(
            "consistent price systems are only constructed for martingale prices".into(),
        ));
    }
    if model.dim() != cone.dim() {
        return Err(Error::DimensionMismatch { expected: cone.dim(), got: model.dim() });
    }
    let epsilon = cone.dual_margin(&vec![1.0; cone.dim()])?;
    if !(epsilon > 0.0) {
        return Err(Error::Hypothesis("the unit vector is not interior to the dual cone".into()));
    }
    Ok(EpsCps {
        epsilon,
        model: model.clone(),
    })
}

/// Monte Carlo check of `E_Q Var_T B ≤ ℘(x)/ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    /// Upper confidence limit below the bound.
    pub pass: bool,
    /// Lower confidence limit above the bound.
    pub violation: bool,
}

const VARIATION_CI_LEVEL: f64 = 0.99;
const VARIATION_RESAMPLES: usize = 200;

/// `variations[i]` is `Var_T B` on path `i`; with `Q = P` the estimate is the
/// sample mean.
pub fn variation_bound_check(x: &[f64], variations: &[f64], cps: &EpsCps, cone: &Cone, seed: u64) -> Result<VariationReport> {
    if variations.is_empty() {
        return Err(Error::invalid("no variation samples"));
    }
    let bound = cone.purchase(x)? / cps.epsilon;
    let estimate = stats::mean(variations);
    let (ci_low, ci_high) = stats::bootstrap_ci(variations.len(), VARIATION_RESAMPLES, VARIATION_CI_LEVEL, seed, |idx| {
        idx.iter().map(|&i| variations[i]).sum::<f64>() / idx.len() as f64
    });
    Ok(VariationReport {
        estimate,
        ci_low,
        ci_high,
        bound,
        pass: ci_high <= bound,
        violation: ci_low > bound,
    })
}

/// Estimates of `E_Q[M_t · V̂_t]`, starting from the pre-trade value `x · M_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    /// Entry 0 is time `0-`, entry `k + 1` is node `k`.
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Largest `Ê_{k+1} - Ê_k - 3 sqrt(SE_k^2 + SE_{k+1}^2)`; nonpositive on pass.
    pub worst_excess: f64,
    pub pass: bool,
    /// Mean of the pathwise drop from `0-` to `T`.
    pub total_drop: f64,
    /// The drop is positive by more than three paired standard errors.
    pub drop_detected: bool,
}

/// `controls[i]` must be the strategy realized on `prices[i]`.
pub fn supermartingale_check(x: &[f64], controls: &[FVPath], prices: &[PricePath], cps: &EpsCps) -> Result<SupermartingaleReport> {
    if controls.len() != prices.len() || controls.len() < 2 {
        return Err(Error::invalid("need at least two aligned control/price pairs"));
    }
    let n_nodes = prices[0].grid.n_nodes();
    let mut series = vec![Vec::with_capacity(controls.len()); n_nodes + 1];
    for (b, p) in controls.iter().zip(prices) {
        let port = evolve(x, b, p)?;
        let z = cps.z(p);
        let d = p.dim;
        series[0].push(dot(x, &z[..d]));
        for k in 0..n_nodes {
            series[k + 1].push(dot(&z[k * d..(k + 1) * d], port.v_hat(k)));
        }
    }
    let means: Vec<f64> = series.iter().map(|s| stats::mean(s)).collect();
    let std_errors: Vec<f64> = series.iter().map(|s| stats::std_error(s)).collect();
    let worst_excess = (0..n_nodes)
        .map(|k| {
            let tol = 3.0 * (std_errors[k].powi(2) + std_errors[k + 1].powi(2)).sqrt() + 1e-12;
            means[k + 1] - means[k] - tol
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let drops: Vec<f64> = series[0].iter().zip(&series[n_nodes]).map(|(a, b)| a - b).collect();
    let total_drop = stats::mean(&drops);
    Ok(SupermartingaleReport {
        means,
        std_errors,
        worst_excess,
        pass: worst_excess <= 0.0,
        total_drop,
        drop_detected: total_drop > 3.0 * stats::std_error(&drops) && total_drop > 0.0,
    })
}

/// Sufficient uniform-integrability conditions for utilities of liquidation
/// value: (i) `U(x) ≤ C (1 + ℓ(x)^γ)` on `K`, (ii) `E (Z_T^1)^{1-q} < ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiReport {
    /// Largest `U(x) - C (1 + ℓ(x)^γ)` over the sampled cone points.
    pub growth_excess: f64,
    pub growth_pass: bool,
    pub moment: f64,
    pub moment_pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn ui_condition_check(
    utility: &Utility,
    cone: &Cone,
    cps: &EpsCps,
    prices: &[PricePath],
    gamma: f64,
    c: f64,
    q: f64,
    n_points: usize,
    seed: u64,
) -> Result<UiReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma must lie in (0, 1)"));
    }
    if !(q > 1.0 / (1.0 - gamma)) {
        return Err(Error::Hypothesis(format!("q = {q} must exceed 1/(1-gamma) = {}", 1.0 / (1.0 - gamma))));
    }
    let mut g = rng::stream(seed, Purpose::Sampling, 0);
    let gens = cone.generators();
    let mut growth_excess = f64::NEG_INFINITY;
    for _ in 0..n_points {
        let scale = 10f64.powf(g.random_range(-3.0..3.0));
        let mut point = vec![0.0; cone.dim()];
        for gen in gens {
            let w: f64 = g.random();
            for (p, v) in point.iter_mut().zip(gen) {
                *p += scale * w * v;
            }
        }
        let l = cone.liquidation_value(&point)?.max(0.0);
        growth_excess = growth_excess.max(utility.eval(l) - c * (1.0 + l.powf(gamma)));
    }
    let moment = if prices.is_empty() {
        1.0
    } else {
        prices.iter().map(|p| cps.q_density(p).powf(1.0 - q)).sum::<f64>() / prices.len() as f64
    };
    Ok(UiReport {
        growth_excess,
        growth_pass: growth_excess <= 1e-12,
        moment,
        moment_pass: moment.is_finite(),
    })
}

/// Monetary trade moving asset `asset`'s share of total wealth to `target`
/// through the numeraire. The result lies in `-K`.
pub fn trade_to_fraction(v: &[f64], asset: usize, target: f64, fees: &TransactionCostSpec) -> Vec<f64> {
    let wealth: f64 = v.iter().sum();
    let mut delta = vec![0.0; v.len()];
    let gap = target * wealth - v[asset];
    if gap > 0.0 {
        let fee = fees.lambda[0][asset];
        let a = gap / (1.0 + target * fee);
        delta[0] = -(1.0 + fee) * a;
        delta[asset] = a;
    } else if gap < 0.0 {
        let keep = 1.0 / (1.0 + fees.lambda[asset][0]);
        let a = -gap / (1.0 - target * (1.0 - keep));
        delta[0] = a * keep;
        delta[asset] = -a;
    }
    delta
}

/// Largest `α ∈ [0, 1]` with `v + α δ ∈ K`, using the dual generators.
/// `None` when `v` itself is outside the cone.
pub fn feasible_step(cone: &Cone, v: &[f64], delta: &[f64]) -> Option<f64> {
    let duals = cone.dual_generators()?;
    let mut alpha: f64 = 1.0;
    for y in duals {
        let level = dot(y, v);
        if level < -1e-12 {
            return None;
        }
        let slope = dot(y, delta);
        if slope < 0.0 {
            alpha = alpha.min(level.max(0.0) / -slope);
        }
    }
    Some(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 8).unwrap()
    }

    fn cone(fee: f64) -> Cone {
        TransactionCostSpec::uniform(2, fee).unwrap().cone().unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(PriceModel::martingale(vec![0.0, 0.2]).is_ok());
        assert!(PriceModel::martingale(vec![0.1, 0.2]).is_err());
        assert!(PriceModel::drifted(vec![0.0, 0.2], vec![0.0, 0.1]).is_ok());
        let mut m = PriceModel::martingale(vec![0.0, 0.2, 0.3]).unwrap();
        m.correlation = Some(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.99],
            vec![0.0, 0.99, 1.0],
        ]);
        assert!(m.validate().is_ok());
        m.correlation = Some(vec![
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ]);
        assert!(m.validate().unwrap_err().to_string().contains("positive semi-definite"));
    }

    #[test]
    fn zero_volatility_is_constant() {
        let m = PriceModel::martingale(vec![0.0, 0.0]).unwrap();
        for p in simulate_prices(&m, &grid(), 1, 5).unwrap() {
            assert!(p.values.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = PriceModel::martingale(vec![0.0, 0.3]).unwrap();
        let a = simulate_prices(&m, &grid(), 9, 3).unwrap();
        let b = simulate_prices(&m, &grid(), 9, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn evolve_examples() {
        let g = grid();
        let prices = PricePath::constant(g, 2);
        let x = [0.5, 2.0];
        let port = evolve(&x, &FVPath::zeros(g, 2), &prices).unwrap();
        assert!((0..g.n_nodes()).all(|k| port.v_hat(k) == x));

        let mut incs = vec![vec![0.0; 2]; g.n_nodes()];
        incs[0] = vec![-1.1, 1.0];
        let buy = FVPath::from_increments(g, &incs).unwrap();
        let port = evolve(&x, &buy, &prices).unwrap();
        assert_eq!(port.v_hat(0), &[0.5 - 1.1, 3.0]);

        let k = cone(0.1);
        let liq = liquidation_strategy(&[1.0, 1.0], &k, &prices).unwrap();
        let port = evolve(&[1.0, 1.0], &liq, &prices).unwrap();
        let l = k.liquidation(&[1.0, 1.0]).unwrap();
        for j in 0..g.n_nodes() {
            assert!((port.v_hat(j)[0] - l).abs() < 1e-12 && port.v_hat(j)[1].abs() < 1e-12);
        }
        assert!(is_admissible(&[1.0, 1.0], &liq, &prices, &k, DEFAULT_TOL).unwrap());
        assert!(is_k_monotone(&liq, &k, Monotonicity::Decreasing, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn credit_purchase_is_inadmissible() {
        let g = grid();
        let prices = PricePath::constant(g, 2);
        let k = cone(0.1);
        let mut incs = vec![vec![0.0; 2]; g.n_nodes()];
        incs[0] = vec![-1.0, 1.0 / 1.1 - 1e-3];
        let b = FVPath::from_increments(g, &incs).unwrap();
        assert!(!is_admissible(&[0.0, 0.0], &b, &prices, &k, DEFAULT_TOL).unwrap());
        let r = constraint_residuals(&[0.0, 0.0], &b, &prices, &k).unwrap();
        assert!(r.values.iter().any(|&v| v < 0.0));
        assert!(r.trades.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn increasing_jump_violates_trade_residuals() {
        let g = grid();
        let prices = PricePath::constant(g, 2);
        let k = cone(0.1);
        let mut incs = vec![vec![0.0; 2]; g.n_nodes()];
        incs[3] = vec![0.0, 1.0];
        let b = FVPath::from_increments(g, &incs).unwrap();
        let r = constraint_residuals(&[1.0, 1.0], &b, &prices, &k).unwrap();
        assert!(r.trades.iter().any(|&v| v < 0.0));
        let zero = constraint_residuals(&[1.0, 1.0], &FVPath::zeros(g, 2), &prices, &k).unwrap();
        assert!(zero.satisfied(0.0));
    }

    #[test]
    fn cps_examples() {
        let k = cone(0.1);
        let m = PriceModel::martingale(vec![0.0, 0.2]).unwrap();
        let cps = make_cps(&m, &k).unwrap();
        assert!((cps.epsilon - 0.1 / (2f64.sqrt() * 2.21f64.sqrt())).abs() < 1e-15);
        let drifted = PriceModel::drifted(vec![0.0, 0.2], vec![0.0, 0.1]).unwrap();
        assert!(matches!(make_cps(&drifted, &k), Err(Error::Unsupported(_))));
        let flat = PriceModel::martingale(vec![0.0, 0.0]).unwrap();
        let cps_flat = make_cps(&flat, &k).unwrap();
        let p = simulate_price_path(&flat, &grid(), 0, 0).unwrap();
        assert!(cps_flat.ratio_margin(&k, &p).unwrap() >= cps_flat.epsilon - 1e-15);
        assert!(make_cps(&m, &cone(0.001)).unwrap().epsilon < cps.epsilon);
    }

    #[test]
    fn liquidation_variation_is_within_bound() {
        let k = cone(0.1);
        let m = PriceModel::martingale(vec![0.0, 0.2]).unwrap();
        let cps = make_cps(&m, &k).unwrap();
        let g = grid();
        let liq = liquidation_strategy(&[1.0, 1.0], &k, &PricePath::constant(g, 2)).unwrap();
        let var = crate::paths::total_variation(&liq);
        let l = k.liquidation(&[1.0, 1.0]).unwrap();
        assert!((var - ((l - 1.0).abs() + 1.0)).abs() < 1e-12);
        let report = variation_bound_check(&[1.0, 1.0], &[var; 10], &cps, &k, 0).unwrap();
        assert!(report.pass && !report.violation);
        let zero = variation_bound_check(&[1.0, 1.0], &[0.0; 10], &cps, &k, 0).unwrap();
        assert_eq!(zero.estimate, 0.0);
    }

    #[test]
    fn supermartingale_of_liquidation_drops_once() {
        let k = cone(0.1);
        let m = PriceModel::martingale(vec![0.0, 0.2]).unwrap();
        let cps = make_cps(&m, &k).unwrap();
        let prices = simulate_prices(&m, &grid(), 4, 200).unwrap();
        let x = [1.0, 1.0];
        let controls: Vec<FVPath> = prices
            .iter()
            .map(|p| liquidation_strategy(&x, &k, p).unwrap())
            .collect();
        let r = supermartingale_check(&x, &controls, &prices, &cps).unwrap();
        let l = k.liquidation(&x).unwrap();
        assert!((r.means[0] - 2.0).abs() < 1e-12);
        assert!(r.means[1..].iter().all(|&v| (v - l).abs() < 1e-12));
        assert!(r.pass && r.drop_detected);
    }

    #[test]
    fn ui_conditions() {
        let k = cone(0.1);
        let m = PriceModel::martingale(vec![0.0, 0.2]).unwrap();
        let cps = make_cps(&m, &k).unwrap();
        let bounded = Utility::Capped { slope: 1.0, cap: 2.0 };
        let r = ui_condition_check(&bounded, &k, &cps, &[], 0.5, 2.0, 3.0, 500, 1).unwrap();
        assert!(r.growth_pass && r.moment_pass && r.moment == 1.0);
        let sqrt = Utility::Power { exponent: 0.5 };
        assert!(ui_condition_check(&sqrt, &k, &cps, &[], 0.5, 1.0, 3.0, 500, 1).unwrap().growth_pass);
        let linear = Utility::Identity;
        assert!(!ui_condition_check(&linear, &k, &cps, &[], 0.5, 1.0, 3.0, 500, 1).unwrap().growth_pass);
        assert!(matches!(
            ui_condition_check(&sqrt, &k, &cps, &[], 0.5, 1.0, 2.0, 10, 1),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn fraction_trades_land_exactly() {
        let fees = TransactionCostSpec::uniform(2, 0.1).unwrap();
        let k = fees.cone().unwrap();
        for (v, target) in [([1.0, 0.2], 0.5), ([0.1, 3.0], 0.4), ([2.0, 0.0], 1.0)] {
            let d = trade_to_fraction(&v, 1, target, &fees);
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            assert!(k.contains(&neg, DEFAULT_TOL).unwrap());
            let after = [v[0] + d[0], v[1] + d[1]];
            assert!((after[1] / (after[0] + after[1]) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_step_clips_at_boundary() {
        let k = cone(0.1);
        let alpha = feasible_step(&k, &[1.0, 0.0], &[-6.6, 6.0]).unwrap();
        let after = [1.0 - 6.6 * alpha, 6.0 * alpha];
        assert!(k.dual_margin(&[1.0, 1.0]).unwrap() > 0.0);
        assert!(k.contains(&after, DEFAULT_TOL).unwrap());
        assert!(alpha < 1.0);
        assert!(feasible_step(&k, &[-1.0, 0.0], &[0.0, 0.0]).is_none());
    }

    #[test]
    fn price_csv_round_trip() {
        let m = PriceModel::martingale(vec![0.0, 0.25]).unwrap();
        let paths = simulate_prices(&m, &grid(), 5, 3).unwrap();
        let mut buf = Vec::new();
        write_price_csv(&paths, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("path_id,t,S1,S2\n"));
        assert_eq!(read_price_csv(buf.as_slice()).unwrap(), paths);
    }
}
