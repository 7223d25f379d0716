//! Policy families, randomized mixtures and derivative-free search.
//!
//! A [`ControlProblem`] turns a parameter vector and one noise path into an
//! admissible control and scores it. All candidates of one study share the
//! same [`Scenarios`] (common random numbers), so comparisons are paired and
//! reports are reproducible from the master seed alone.

mod market;
mod storage;

pub use market::{MarketBenchmark, MarketProblem};
pub use storage::StorageProblem;

use std::hash::{DefaultHasher, Hasher};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::GoalValue;
use crate::paths::TimeGrid;
use crate::rng::{self, Purpose};
use crate::stats;

/// Bootstrap resamples for every reported interval.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Confidence level of reported intervals.
pub const CI_LEVEL: f64 = 0.95;

/// Direction of a storage control component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Plus,
    Minus,
}

/// One pure strategy of a finite menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MenuItem {
    /// Never trade.
    Idle,
    /// Market only: liquidate everything at time zero.
    Liquidate,
    /// Storage only: a single jump of `amount` at time zero.
    JumpAtStart {
        component: usize,
        amount: f64,
        direction: Direction,
    },
    /// Storage only: at the horizon, jump by `amount` when demand component
    /// `component` is above (or, with `above = false`, at most) `threshold`.
    TerminalTrigger {
        component: usize,
        threshold: f64,
        amount: f64,
        direction: Direction,
        #[serde(default = "yes")]
        above: bool,
    },
    Band { params: Vec<f64> },
    Rebalance { params: Vec<f64> },
}

fn yes() -> bool {
    true
}

/// Shape of the parameterized strategies.
///
/// Market parameters are per risky asset: band `(lower, upper, target)`
/// fractions of wealth, rebalance `(target, half_width)`. Storage parameters
/// are per commodity with the same layouts plus one trailing entry: the
/// fraction of the horizon after which trading stops. A menu has a single
/// parameter, the item index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    Band,
    Rebalance,
    Menu { items: Vec<MenuItem> },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Band => "band",
            PolicyKind::Rebalance => "rebalance",
            PolicyKind::Menu { .. } => "menu",
        }
    }
}

/// A policy kind with its parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFamily {
    pub kind: PolicyKind,
    /// Per-parameter `[lo, hi]`; ignored for menus.
    #[serde(default)]
    pub bounds: Vec<[f64; 2]>,
}

impl PolicyFamily {
    pub fn menu(items: Vec<MenuItem>) -> Self {
        PolicyFamily {
            kind: PolicyKind::Menu { items },
            bounds: Vec::new(),
        }
    }

    pub fn validate<P: ControlProblem>(&self, problem: &P) -> Result<()> {
        let dim = problem.param_dim(&self.kind)?;
        if let PolicyKind::Menu { items } = &self.kind {
            if items.is_empty() {
                return Err(Error::invalid("menu must contain at least one item"));
            }
            for (i, item) in items.iter().enumerate() {
                problem
                    .check_item(item)
                    .map_err(|e| Error::invalid(format!("items[{i}]: {e}")))?;
            }
            return Ok(());
        }
        if self.bounds.len() != dim {
            return Err(Error::invalid(format!(
                "bounds: {} family needs {dim} parameters, got {}",
                self.kind.name(),
                self.bounds.len()
            )));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("bounds[{i}]: need finite lo <= hi")));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, [lo, hi]) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Resolves the strategy used for one component: menu items by index,
    /// otherwise the family kind with the parameters.
    fn resolve<'a>(&'a self, params: &'a [f64]) -> Result<Strategy<'a>> {
        match &self.kind {
            PolicyKind::Menu { items } => {
                let idx = params.first().copied().unwrap_or(0.0);
                let i = idx.round();
                if !(i >= 0.0 && (i as usize) < items.len()) {
                    return Err(Error::invalid(format!("menu index {idx} out of range")));
                }
                Ok(Strategy::Item(&items[i as usize]))
            }
            kind => Ok(Strategy::Param(kind, params)),
        }
    }
}

/// A concrete pure strategy.
#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    Param(&'a PolicyKind, &'a [f64]),
    Item(&'a MenuItem),
}

/// Output of a policy on one noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission<C> {
    pub control: C,
    /// Projection could not keep the control admissible and fell back.
    pub flagged: bool,
}

/// Per-path score of an emitted control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Reward (market liquidation value) or cost (storage).
    pub value: f64,
    pub variation: f64,
}

/// A model together with its goal, as seen by the search.
pub trait ControlProblem: Clone + Sync {
    type Noise: Send + Sync;
    type Control;

    fn grid(&self) -> &TimeGrid;

    /// The same problem on another grid.
    fn with_grid(&self, grid: TimeGrid) -> Self;

    fn param_dim(&self, kind: &PolicyKind) -> Result<usize>;

    fn check_item(&self, item: &MenuItem) -> Result<()>;

    /// Noise path `index`; dyadically nested grids share node values.
    fn sample_noise(&self, seed: u64, index: u64) -> Self::Noise;

    fn fingerprint(&self, noise: &Self::Noise, hasher: &mut DefaultHasher);

    /// Reference value of the goal on this path (zero when unused).
    fn benchmark(&self, noise: &Self::Noise) -> Result<f64>;

    /// Forward pass: the action at node `k` only reads noise up to node `k`.
    fn emit(&self, strategy: Strategy<'_>, noise: &Self::Noise) -> Result<Emission<Self::Control>>;

    fn outcome(&self, control: &Self::Control, noise: &Self::Noise) -> Result<Outcome>;

    /// Goal functional on the pooled law, larger is better.
    fn goal_value(&self, outcomes: &[f64], benchmarks: &[f64]) -> Result<GoalValue>;

    /// A-priori bound on expected variation, when the model provides one.
    fn variation_bound(&self) -> Option<f64> {
        None
    }
}

/// Mixture of pure strategies selected by an independent uniform draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    pub components: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl RandomizedPolicy {
    pub fn new(components: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::invalid("need one weight per component and at least one component"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(RandomizedPolicy { components, weights })
    }

    pub fn pure(params: Vec<f64>) -> Self {
        RandomizedPolicy {
            components: vec![params],
            weights: vec![1.0],
        }
    }

    /// Component chosen by `xi ∈ [0, 1)` through the inverse distribution
    /// function; zero-weight components are never chosen.
    pub fn select(&self, xi: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = i;
                if xi < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Shared noise paths, randomizer draws and benchmarks.
pub struct Scenarios<N> {
    pub seed: u64,
    pub noise: Vec<N>,
    pub xi: Vec<f64>,
    pub benchmarks: Vec<f64>,
    /// Hash of every noise path, for checking common random numbers.
    pub path_hashes: Vec<u64>,
}

impl<N: Send + Sync> Scenarios<N> {
    pub fn new<P: ControlProblem<Noise = N>>(problem: &P, seed: u64, n_paths: usize) -> Result<Self> {
        if n_paths < 2 {
            return Err(Error::invalid("need at least two sample paths"));
        }
        let noise: Vec<N> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| problem.sample_noise(seed, i))
            .collect();
        let xi = (0..n_paths as u64)
            .map(|i| rng::stream(seed, Purpose::Randomizer, i).random::<f64>())
            .collect();
        let benchmarks = noise
            .par_iter()
            .map(|n| problem.benchmark(n))
            .collect::<Result<Vec<f64>>>()?;
        let path_hashes = noise
            .iter()
            .map(|n| {
                let mut h = DefaultHasher::new();
                problem.fingerprint(n, &mut h);
                h.finish()
            })
            .collect();
        Ok(Scenarios {
            seed,
            noise,
            xi,
            benchmarks,
            path_hashes,
        })
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.path_hashes {
            h.write_u64(*v);
        }
        h.finish()
    }
}

/// Goal value of one candidate with its pooled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub diverged: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    pub outcomes: Vec<f64>,
    pub variations: Vec<f64>,
    pub flagged: usize,
}

fn simulate_policy<P: ControlProblem>(
    problem: &P,
    family: &PolicyFamily,
    policy: &RandomizedPolicy,
    scenarios: &Scenarios<P::Noise>,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let strategies = policy
        .components
        .iter()
        .map(|c| family.resolve(c))
        .collect::<Result<Vec<_>>>()?;
    let per_path = (0..scenarios.len())
        .into_par_iter()
        .map(|i| {
            let s = strategies[policy.select(scenarios.xi[i])];
            let noise = &scenarios.noise[i];
            let em = problem.emit(s, noise)?;
            let out = problem.outcome(&em.control, noise)?;
            Ok((out.value, out.variation, em.flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = per_path.iter().filter(|p| p.2).count();
    let (outcomes, variations) = per_path.into_iter().map(|(o, v, _)| (o, v)).unzip();
    Ok((outcomes, variations, flagged))
}

fn bootstrap_goal<P: ControlProblem>(problem: &P, outcomes: &[f64], benchmarks: &[f64], seed: u64) -> (f64, f64) {
    let mut o = vec![0.0; outcomes.len()];
    let mut b = vec![0.0; outcomes.len()];
    stats::bootstrap_ci(outcomes.len(), BOOTSTRAP_RESAMPLES, CI_LEVEL, seed, |idx| {
        for (j, &i) in idx.iter().enumerate() {
            o[j] = outcomes[i];
            b[j] = benchmarks[i];
        }
        problem
            .goal_value(&o, &b)
            .map(|g| g.value)
            .unwrap_or(f64::NEG_INFINITY)
    })
}

/// Goal value of `policy` on `scenarios` with a bootstrap interval.
pub fn evaluate<P: ControlProblem>(
    problem: &P,
    family: &PolicyFamily,
    policy: &RandomizedPolicy,
    scenarios: &Scenarios<P::Noise>,
) -> Result<Evaluation> {
    let mut ev = evaluate_point(problem, family, policy, scenarios)?;
    if !ev.diverged {
        let (lo, hi) = bootstrap_goal(problem, &ev.outcomes, &scenarios.benchmarks, scenarios.seed);
        ev.ci_low = lo;
        ev.ci_high = hi;
    }
    Ok(ev)
}

/// Like [`evaluate`] without the bootstrap.
fn evaluate_point<P: ControlProblem>(
    problem: &P,
    family: &PolicyFamily,
    policy: &RandomizedPolicy,
    scenarios: &Scenarios<P::Noise>,
) -> Result<Evaluation> {
    let (outcomes, variations, flagged) = simulate_policy(problem, family, policy, scenarios)?;
    let g = problem.goal_value(&outcomes, &scenarios.benchmarks)?;
    let value = if g.diverged { f64::NEG_INFINITY } else { g.value };
    Ok(Evaluation {
        value,
        diverged: g.diverged,
        ci_low: value,
        ci_high: value,
        outcomes,
        variations,
        flagged,
    })
}

/// Sizes of a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub n_paths: usize,
    /// Maximum number of candidate evaluations.
    pub budget: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub family: String,
    pub n_steps: usize,
    pub n_paths: usize,
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub evaluations: usize,
    /// Best value after each evaluation.
    pub trace: Vec<f64>,
    pub variation_mean: f64,
    pub variation_max: f64,
    pub variation_histogram: Histogram,
    pub variation_bound: Option<f64>,
    /// Fraction of paths whose variation exceeds the bound.
    pub mass_above_bound: Option<f64>,
    pub diverged_candidates: usize,
    pub flagged_paths: usize,
    pub scenario_hash: String,
}

struct Tracker<'a, P: ControlProblem> {
    problem: &'a P,
    family: &'a PolicyFamily,
    scenarios: &'a Scenarios<P::Noise>,
    budget: usize,
    evaluations: usize,
    best: Option<(Vec<f64>, f64)>,
    trace: Vec<f64>,
    diverged: usize,
}

impl<P: ControlProblem> Tracker<'_, P> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    /// Scores `x` and replaces the incumbent on strict improvement.
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let ev = evaluate_point(self.problem, self.family, &RandomizedPolicy::pure(x.to_vec()), self.scenarios)?;
        self.evaluations += 1;
        if ev.diverged {
            self.diverged += 1;
        }
        let better = match &self.best {
            None => ev.value > f64::NEG_INFINITY,
            Some((_, v)) => ev.value > *v,
        };
        if better {
            self.best = Some((x.to_vec(), ev.value));
        }
        self.trace
            .push(self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1));
        Ok(ev.value)
    }

    fn incumbent(&self) -> Option<Vec<f64>> {
        self.best.as_ref().map(|b| b.0.clone())
    }
}

/// Maximizes the goal over the family.
///
/// Menus are evaluated exhaustively (ties keep the smallest index). Boxes
/// are searched by the center, then an odd lattice in lexicographic order,
/// then coordinate refinement, then a Nelder–Mead polish with a seeded
/// initial simplex. The incumbent changes only on strict improvement.
pub fn optimize<P: ControlProblem>(problem: &P, family: &PolicyFamily, settings: &SearchSettings) -> Result<SearchReport> {
    family.validate(problem)?;
    let scenarios = Scenarios::new(problem, settings.master_seed, settings.n_paths)?;
    optimize_on(problem, family, settings, &scenarios)
}

pub fn optimize_on<P: ControlProblem>(
    problem: &P,
    family: &PolicyFamily,
    settings: &SearchSettings,
    scenarios: &Scenarios<P::Noise>,
) -> Result<SearchReport> {
    family.validate(problem)?;
    let mut t = Tracker {
        problem,
        family,
        scenarios,
        budget: settings.budget.max(1),
        evaluations: 0,
        best: None,
        trace: Vec::new(),
        diverged: 0,
    };
    match &family.kind {
        PolicyKind::Menu { items } => {
            for i in 0..items.len() {
                t.eval(&[i as f64])?;
            }
        }
        _ => box_search(&mut t)?,
    }
    let (best_params, _) = t
        .best
        .clone()
        .ok_or_else(|| Error::Search("every candidate diverged or was infeasible".into()))?;
    let ev = evaluate(problem, family, &RandomizedPolicy::pure(best_params.clone()), scenarios)?;
    let bound = problem.variation_bound();
    let mass_above_bound = bound.map(|b| {
        ev.variations.iter().filter(|&&v| v > b).count() as f64 / ev.variations.len() as f64
    });
    Ok(SearchReport {
        family: family.kind.name().to_string(),
        n_steps: problem.grid().n_steps(),
        n_paths: scenarios.len(),
        best_params,
        best_value: ev.value,
        ci_low: ev.ci_low,
        ci_high: ev.ci_high,
        evaluations: t.evaluations,
        trace: t.trace,
        variation_mean: stats::mean(&ev.variations),
        variation_max: ev.variations.iter().copied().fold(0.0, f64::max),
        variation_histogram: Histogram::new(&ev.variations, 20),
        variation_bound: bound,
        mass_above_bound,
        diverged_candidates: t.diverged,
        flagged_paths: ev.flagged,
        scenario_hash: format!("{:016x}", scenarios.hash()),
    })
}

fn box_search<P: ControlProblem>(t: &mut Tracker<'_, P>) -> Result<()> {
    let family = t.family;
    let dim = family.bounds.len();
    let center = family.center();
    t.eval(&center)?;

    // Odd lattice: the largest m with m^dim within half the budget.
    let lattice_budget = (t.budget / 2).max(1);
    let mut m = 1usize;
    while (m + 2).checked_pow(dim as u32).is_some_and(|c| c <= lattice_budget) {
        m += 2;
    }
    if m > 1 && dim > 0 {
        let mut idx = vec![0usize; dim];
        'lattice: loop {
            if t.exhausted() {
                break;
            }
            let x: Vec<f64> = idx
                .iter()
                .zip(&family.bounds)
                .map(|(&i, [lo, hi])| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                .collect();
            if x != center {
                t.eval(&x)?;
            }
            for j in (0..dim).rev() {
                idx[j] += 1;
                if idx[j] < m {
                    continue 'lattice;
                }
                idx[j] = 0;
            }
            break;
        }
    }
    let Some(mut x) = t.incumbent() else {
        return Ok(());
    };
    let widths: Vec<f64> = family.bounds.iter().map(|[lo, hi]| hi - lo).collect();
    let mut step: Vec<f64> = widths
        .iter()
        .map(|w| if m > 1 { w / (m - 1) as f64 / 2.0 } else { w / 4.0 })
        .collect();

    // Coordinate refinement.
    let refine_budget = t.evaluations + (t.budget - t.evaluations.min(t.budget)) / 2;
    let mut best_val = t.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1);
    while t.evaluations < refine_budget && step.iter().zip(&widths).any(|(s, w)| *s > 1e-6 * w) {
        let mut improved = false;
        for j in 0..dim {
            if widths[j] == 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                if t.evaluations >= refine_budget {
                    break;
                }
                let mut y = x.clone();
                y[j] += sign * step[j];
                family.clamp(&mut y);
                if y == x {
                    continue;
                }
                let v = t.eval(&y)?;
                if v > best_val {
                    best_val = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s /= 2.0);
        }
    }

    nelder_mead(t, x, &step)
}

fn nelder_mead<P: ControlProblem>(t: &mut Tracker<'_, P>, start: Vec<f64>, step: &[f64]) -> Result<()> {
    let family = t.family;
    let active: Vec<usize> = (0..start.len()).filter(|&j| family.bounds[j][0] < family.bounds[j][1]).collect();
    let n = active.len();
    if n == 0 || t.exhausted() {
        return Ok(());
    }
    let mut g = rng::stream(t.scenarios.seed, Purpose::Polish, 0);
    let lift = |z: &[f64]| -> Vec<f64> {
        let mut x = start.clone();
        for (k, &j) in active.iter().enumerate() {
            x[j] = z[k];
        }
        family.clamp(&mut x);
        x
    };
    let z0: Vec<f64> = active.iter().map(|&j| start[j]).collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start_val = t.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1);
    simplex.push((z0.clone(), start_val));
    for (k, &j) in active.iter().enumerate() {
        if t.exhausted() {
            return Ok(());
        }
        let sign = if g.random::<bool>() { 1.0 } else { -1.0 };
        let w = family.bounds[j][1] - family.bounds[j][0];
        let mut z = z0.clone();
        z[k] += sign * (2.0 * step[j]).max(1e-3 * w);
        let x = lift(&z);
        let v = t.eval(&x)?;
        simplex.push((active.iter().map(|&j| x[j]).collect(), v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| b.1.total_cmp(&a.1));
    while !t.exhausted() {
        order(&mut simplex);
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |c: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(m, w)| m + c * (m - w)).collect()
        };
        let project = |z: Vec<f64>| -> Vec<f64> {
            let x = lift(&z);
            active.iter().map(|&j| x[j]).collect()
        };
        let zr = project(along(1.0));
        let vr = t.eval(&lift(&zr))?;
        if vr > simplex[0].1 {
            if t.exhausted() {
                simplex[n] = (zr, vr);
                break;
            }
            let ze = project(along(2.0));
            let ve = t.eval(&lift(&ze))?;
            simplex[n] = if ve > vr { (ze, ve) } else { (zr, vr) };
        } else if vr > simplex[n - 1].1 {
            simplex[n] = (zr, vr);
        } else {
            if t.exhausted() {
                break;
            }
            let zc = project(along(if vr > worst.1 { 0.5 } else { -0.5 }));
            let vc = t.eval(&lift(&zc))?;
            if vc > worst.1.max(vr) {
                simplex[n] = (zc, vc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    if t.exhausted() {
                        break;
                    }
                    let z: Vec<f64> = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let z = project(z);
                    let v = t.eval(&lift(&z))?;
                    *p = (z, v);
                }
            }
        }
    }
    Ok(())
}

/// One cell of a refinement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub grid: usize,
    pub n_paths: usize,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub rows: Vec<RefinementRow>,
    /// `|v(grid_{j+1}) - v(grid_j)|` at the largest sample size.
    pub grid_gaps: Vec<f64>,
    /// `|v(n_{j+1}) - v(n_j)|` on the finest grid.
    pub sample_gaps: Vec<f64>,
    pub final_gap: f64,
    pub final_ci_width: f64,
    /// Grid gaps shrink and the last one is below the final interval width.
    pub stable: bool,
    /// Search report on the finest grid and largest sample.
    pub finest: SearchReport,
}

impl RefinementReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["grid", "n_paths", "value", "ci_lo", "ci_hi"])?;
        for r in &self.rows {
            w.write_record([
                r.grid.to_string(),
                r.n_paths.to_string(),
                crate::paths::format_f64(r.value),
                crate::paths::format_f64(r.ci_lo),
                crate::paths::format_f64(r.ci_hi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Optimizes on every `(grid, sample size)` pair with the same master seed.
/// Grids must be dyadic refinements of each other so that noise paths are
/// nested; smaller samples are prefixes of larger ones.
pub fn refinement_study<P: ControlProblem>(
    problem: &P,
    family: &PolicyFamily,
    grids: &[usize],
    sample_sizes: &[usize],
    budget: usize,
    master_seed: u64,
) -> Result<RefinementReport> {
    if grids.is_empty() || sample_sizes.is_empty() {
        return Err(Error::invalid("refinement needs at least one grid and one sample size"));
    }
    let mut sorted = grids.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        let ratio = w[1] / w[0].max(1);
        if w[0] == 0 || w[1] % w[0] != 0 || !ratio.is_power_of_two() {
            return Err(Error::invalid(format!("grids {} and {} are not dyadically nested", w[0], w[1])));
        }
    }
    let mut sizes = sample_sizes.to_vec();
    sizes.sort_unstable();
    let horizon = problem.grid().horizon();
    let mut rows = Vec::new();
    let mut finest = None;
    for &n_steps in &sorted {
        let p = problem.with_grid(TimeGrid::new(horizon, n_steps)?);
        for &n in &sizes {
            let settings = SearchSettings {
                n_paths: n,
                budget,
                master_seed,
            };
            let report = optimize(&p, family, &settings)?;
            rows.push(RefinementRow {
                grid: n_steps,
                n_paths: n,
                value: report.best_value,
                ci_lo: report.ci_low,
                ci_hi: report.ci_high,
            });
            finest = Some(report);
        }
    }
    let at = |g: usize, n: usize| rows.iter().find(|r| r.grid == g && r.n_paths == n).expect("row computed");
    let n_max = *sizes.last().expect("nonempty");
    let g_max = *sorted.last().expect("nonempty");
    let grid_gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| (at(w[1], n_max).value - at(w[0], n_max).value).abs())
        .collect();
    let sample_gaps: Vec<f64> = sizes
        .windows(2)
        .map(|w| (at(g_max, w[1]).value - at(g_max, w[0]).value).abs())
        .collect();
    let last = at(g_max, n_max);
    let final_ci_width = last.ci_hi - last.ci_lo;
    let final_gap = grid_gaps.last().copied().unwrap_or(0.0);
    let shrinking = grid_gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(RefinementReport {
        stable: shrinking && final_gap < final_ci_width,
        rows,
        grid_gaps,
        sample_gaps,
        final_gap,
        final_ci_width,
        finest: finest.expect("at least one row"),
    })
}

/// Best mixture over a weight lattice against the best pure menu item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationReport {
    pub pure_values: Vec<f64>,
    pub best_pure: usize,
    pub best_weights: Vec<f64>,
    pub best_mixture_value: f64,
    pub gap: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RandomizationReport {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Weight vectors on the simplex with coordinates in multiples of `1/steps`,
/// lexicographic with the first weight varying slowest.
fn weight_lattice(m: usize, steps: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(m - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, steps, &mut Vec::new(), &mut out);
    out
}

/// Weight-lattice resolution of [`randomization_benefit`] (step 0.05).
pub const MIXTURE_STEPS: usize = 20;

pub fn randomization_benefit<P: ControlProblem>(
    problem: &P,
    items: &[MenuItem],
    n_paths: usize,
    seed: u64,
) -> Result<RandomizationReport> {
    if items.len() < 2 {
        return Err(Error::invalid("randomization needs at least two menu items"));
    }
    let family = PolicyFamily::menu(items.to_vec());
    family.validate(problem)?;
    let scenarios = Scenarios::new(problem, seed, n_paths)?;
    let mut table = Vec::with_capacity(items.len());
    let mut pure_values = Vec::with_capacity(items.len());
    for i in 0..items.len() {
        let ev = evaluate_point(problem, &family, &RandomizedPolicy::pure(vec![i as f64]), &scenarios)?;
        pure_values.push(ev.value);
        table.push(ev.outcomes);
    }
    let best_pure = argmax(&pure_values);
    let mixture = |weights: &[f64], idx: &mut dyn Iterator<Item = usize>| -> Vec<f64> {
        let policy = RandomizedPolicy {
            components: Vec::new(),
            weights: weights.to_vec(),
        };
        idx.map(|i| table[policy.select(scenarios.xi[i])][i]).collect()
    };
    let mut best_weights = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    for lattice in weight_lattice(items.len(), MIXTURE_STEPS) {
        let w: Vec<f64> = lattice.iter().map(|&k| k as f64 / MIXTURE_STEPS as f64).collect();
        let outcomes = mixture(&w, &mut (0..n_paths));
        let v = problem.goal_value(&outcomes, &scenarios.benchmarks)?;
        let v = if v.diverged { f64::NEG_INFINITY } else { v.value };
        if v > best_value || best_weights.is_empty() {
            best_value = v;
            best_weights = w;
        }
    }
    let gap = best_value - pure_values[best_pure];
    let mut b = vec![0.0; n_paths];
    let (ci_low, ci_high) = stats::bootstrap_ci(n_paths, BOOTSTRAP_RESAMPLES, CI_LEVEL, seed, |idx| {
        let mixed = mixture(&best_weights, &mut idx.iter().copied());
        let pure: Vec<f64> = idx.iter().map(|&i| table[best_pure][i]).collect();
        for (j, &i) in idx.iter().enumerate() {
            b[j] = scenarios.benchmarks[i];
        }
        let vm = problem.goal_value(&mixed, &b).map_or(f64::NEG_INFINITY, |g| g.value);
        let vp = problem.goal_value(&pure, &b).map_or(f64::NEG_INFINITY, |g| g.value);
        vm - vp
    });
    Ok(RandomizationReport {
        pure_values,
        best_pure,
        best_weights,
        best_mixture_value: best_value,
        gap,
        ci_low,
        ci_high,
    })
}

/// Index of the largest value; ties keep the smallest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
