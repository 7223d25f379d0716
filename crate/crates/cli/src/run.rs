//! Subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use sclab_core::market::{make_cps, simulate_prices, supermartingale_check, variation_bound_check, write_price_csv, PricePath};
use sclab_core::paths::{mz_distance, read_path_dump, total_variation, write_path_dump, FVPath, TimeGrid};
use sclab_core::rng::{self, Purpose};
use sclab_core::search::{
    optimize, refinement_study, ControlProblem, MarketProblem, PolicyFamily, PolicyKind, RefinementReport, Scenarios,
    SearchReport, SearchSettings, StorageProblem, Strategy,
};
use sclab_core::storage::{write_state_csv, ControlPair, StatePath};
use sclab_core::Error;

use crate::config::{ExperimentConfig, Format, Problem};

/// Failure of a subcommand other than a configuration error.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// How a problem's noise and controls are written to disk.
trait Dump: ControlProblem {
    const NOISE_FILE: &'static str;
    const CONTROL_PREFIX: &'static str;
    fn write_noise(paths: &[Self::Noise], out: &mut dyn Write) -> Result<(), Error>;
    fn control_path(control: &Self::Control) -> Result<FVPath, Error>;
}

impl Dump for MarketProblem {
    const NOISE_FILE: &'static str = "prices.csv";
    const CONTROL_PREFIX: &'static str = "B";

    fn write_noise(paths: &[PricePath], out: &mut dyn Write) -> Result<(), Error> {
        write_price_csv(paths, out)
    }

    fn control_path(control: &FVPath) -> Result<FVPath, Error> {
        Ok(control.clone())
    }
}

impl Dump for StorageProblem {
    const NOISE_FILE: &'static str = "demand.csv";
    const CONTROL_PREFIX: &'static str = "L";

    fn write_noise(paths: &[StatePath], out: &mut dyn Write) -> Result<(), Error> {
        write_state_csv(paths, out)
    }

    /// `L⁺` components followed by `L⁻` components.
    fn control_path(control: &ControlPair) -> Result<FVPath, Error> {
        let grid = *control.plus().grid();
        let rows = (0..grid.n_nodes())
            .map(|k| control.plus().value(k).iter().chain(control.minus().value(k)).copied().collect())
            .collect();
        FVPath::new(grid, rows)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn simulate_with<P: Dump>(p: &P, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), Failure> {
    let n = cfg.search.n_paths;
    let scenarios = Scenarios::new(p, seed, n)?;
    // The center of the box, or the first menu item.
    let params = match &cfg.policy.kind {
        PolicyKind::Menu { .. } => vec![0.0],
        _ => cfg.policy.center(),
    };
    let strategy = strategy_for(&cfg.policy, &params);
    let mut controls = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut variations = Vec::with_capacity(n);
    let mut flagged = 0;
    for noise in &scenarios.noise {
        let em = p.emit(strategy, noise)?;
        let o = p.outcome(&em.control, noise)?;
        flagged += usize::from(em.flagged);
        controls.push(P::control_path(&em.control)?);
        outcomes.push(o.value);
        variations.push(o.variation);
    }
    let goal = p.goal_value(&outcomes, &scenarios.benchmarks)?;
    if cfg.wants(Format::Csv) {
        let mut w = create(out, P::NOISE_FILE)?;
        P::write_noise(&scenarios.noise, &mut w)?;
        w.flush()?;
        let mut w = create(out, "controls.csv")?;
        write_path_dump(&controls, P::CONTROL_PREFIX, &mut w)?;
        w.flush()?;
        let mut w = create(out, "outcomes.csv")?;
        writeln!(w, "path_id,outcome,benchmark,variation")?;
        for i in 0..n {
            writeln!(w, "{i},{},{},{}", fmt(outcomes[i]), fmt(scenarios.benchmarks[i]), fmt(variations[i]))?;
        }
        w.flush()?;
    }
    if cfg.wants(Format::Json) {
        let summary = json!({
            "n_paths": n,
            "master_seed": seed,
            "scenario_hash": format!("{:016x}", scenarios.hash()),
            "policy": strategy_label(&cfg.policy, &params),
            "goal_value": goal.value,
            "diverged": goal.diverged,
            "flagged_paths": flagged,
            "variation_mean": sclab_core::stats::mean(&variations),
        });
        write_json(out, "simulate.json", &summary)?;
    }
    Ok(())
}

fn strategy_label(family: &PolicyFamily, params: &[f64]) -> serde_json::Value {
    match &family.kind {
        PolicyKind::Menu { items } => json!({ "menu_item": 0, "item": items[0] }),
        kind => json!({ "kind": kind.name(), "params": params }),
    }
}

#[derive(Serialize)]
struct OptimizeArtifact<'a> {
    search: &'a SearchReport,
    refinement: &'a RefinementReport,
}

fn optimize_with<P: Dump>(p: &P, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(), Failure> {
    let settings = SearchSettings {
        n_paths: cfg.search.n_paths,
        budget: cfg.search.budget,
        master_seed: seed,
    };
    let report = optimize(p, &cfg.policy, &settings)?;
    let grids = cfg.grids_or(p.grid().n_steps());
    let study = refinement_study(p, &cfg.policy, &grids, &cfg.sample_sizes(), cfg.search.budget, seed)?;
    if cfg.wants(Format::Json) {
        write_json(out, "report.json", &OptimizeArtifact { search: &report, refinement: &study })?;
    }
    if cfg.wants(Format::Csv) {
        study.write_csv(create(out, "refinement.csv")?)?;
        let mut w = create(out, "trace.csv")?;
        writeln!(w, "evaluation,best_value")?;
        for (i, v) in report.trace.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, fmt(*v))?;
        }
        w.flush()?;
        let mut w = create(out, "variation_histogram.csv")?;
        writeln!(w, "lo,hi,count")?;
        let h = &report.variation_histogram;
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(w, "{},{},{c}", fmt(h.edges[i]), fmt(h.edges[i + 1]))?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    status: &'static str,
    detail: serde_json::Value,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: serde_json::Value) -> Self {
        Check {
            name,
            status: if pass { "pass" } else { "fail" },
            detail,
        }
    }

    fn skipped(name: &'static str, why: &str) -> Self {
        Check {
            name,
            status: "skipped",
            detail: json!({ "reason": why }),
        }
    }
}

fn random_params<R: Rng>(family: &PolicyFamily, rng: &mut R) -> Vec<f64> {
    match &family.kind {
        PolicyKind::Menu { items } => vec![rng.random_range(0..items.len()) as f64],
        _ => family
            .bounds
            .iter()
            .map(|[lo, hi]| if lo < hi { rng.random_range(*lo..=*hi) } else { *lo })
            .collect(),
    }
}

fn strategy_for<'a>(family: &'a PolicyFamily, params: &'a [f64]) -> Strategy<'a> {
    match &family.kind {
        PolicyKind::Menu { items } => Strategy::Item(&items[params[0] as usize]),
        kind => Strategy::Param(kind, params),
    }
}

fn metric_axioms_check(grid: TimeGrid, seed: u64) -> Result<Check, Failure> {
    let mut g = rng::stream(seed, Purpose::Sampling, 0);
    let mut random_path = || -> Result<FVPath, Error> {
        let incs: Vec<Vec<f64>> = (0..grid.n_nodes())
            .map(|_| {
                if g.random::<f64>() < 0.3 {
                    vec![g.random_range(-1.0..1.0), g.random_range(-1.0..1.0)]
                } else {
                    vec![0.0, 0.0]
                }
            })
            .collect();
        FVPath::from_increments(grid, &incs)
    };
    let mut asym: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (f, gg, h) = (random_path()?, random_path()?, random_path()?);
        let fg = mz_distance(&f, &gg)?;
        asym = asym.max((fg - mz_distance(&gg, &f)?).abs());
        excess = excess.max(mz_distance(&f, &h)? - fg - mz_distance(&gg, &h)?);
    }
    Ok(Check::new(
        "metric_axioms",
        asym <= 1e-12 && excess <= 1e-12,
        json!({ "triples": 1000, "max_asymmetry": asym, "max_triangle_excess": excess }),
    ))
}

fn market_checks(p: &MarketProblem, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Check>, Failure> {
    let mut checks = Vec::new();
    let cone = p.cone();
    let mut g = rng::stream(seed, Purpose::Sampling, 1);
    match cone.lambda_section() {
        Ok(section) => {
            let mut worst_section: f64 = 0.0;
            let mut worst_purchase: f64 = 0.0;
            for _ in 0..1000 {
                let x: Vec<f64> = (0..cone.dim()).map(|_| g.random_range(-3.0..3.0)).collect();
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                worst_section = worst_section.max((cone.liquidation(&x)? - section.liquidation(&x)).abs());
                worst_purchase = worst_purchase.max((cone.purchase(&x)? + cone.liquidation(&neg)?).abs());
            }
            checks.push(Check::new(
                "duality",
                worst_section <= 1e-8 && worst_purchase <= 1e-12,
                json!({ "points": 1000, "max_section_error": worst_section, "max_purchase_error": worst_purchase }),
            ));
        }
        Err(e) => checks.push(Check::skipped("duality", &e.to_string())),
    }
    let cps = match make_cps(p.model(), cone) {
        Ok(cps) => cps,
        Err(e) => {
            checks.push(Check::skipped("variation_bound", &e.to_string()));
            checks.push(Check::skipped("supermartingale", &e.to_string()));
            return Ok(checks);
        }
    };
    let prices = simulate_prices(p.model(), p.grid(), seed, cfg.search.n_paths)?;
    let mut bound_fail = 0;
    let mut super_fail = 0;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut bound = 0.0;
    let strategies = 20;
    for s in 0..strategies {
        let params = random_params(&cfg.policy, &mut g);
        let controls = prices
            .iter()
            .map(|path| Ok(p.emit(strategy_for(&cfg.policy, &params), path)?.control))
            .collect::<Result<Vec<FVPath>, Error>>()?;
        let vars: Vec<f64> = controls.iter().map(total_variation).collect();
        let r = variation_bound_check(p.endowment(), &vars, &cps, cone, seed.wrapping_add(s))?;
        bound = r.bound;
        worst_upper = worst_upper.max(r.ci_high);
        bound_fail += usize::from(!r.pass);
        if s < 10 {
            let sm = supermartingale_check(p.endowment(), &controls, &prices, &cps)?;
            super_fail += usize::from(!sm.pass);
        }
    }
    checks.push(Check::new(
        "variation_bound",
        bound_fail == 0,
        json!({ "strategies": strategies, "failures": bound_fail, "largest_upper_limit": worst_upper, "bound": bound, "epsilon": cps.epsilon }),
    ));
    checks.push(Check::new(
        "supermartingale",
        super_fail == 0,
        json!({ "strategies": 10, "failures": super_fail }),
    ));
    Ok(checks)
}

fn storage_checks(p: &StorageProblem, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Check>, Failure> {
    let mut g = rng::stream(seed, Purpose::Sampling, 1);
    let mut worst: f64 = 0.0;
    let n = cfg.search.n_paths.min(1000);
    for _ in 0..20 {
        let params = random_params(&cfg.policy, &mut g);
        for i in 0..n as u64 {
            let noise = p.sample_noise(seed, i);
            let em = p.emit(strategy_for(&cfg.policy, &params), &noise)?;
            worst = worst.max(em.control.used_budget());
        }
    }
    Ok(vec![
        Check::skipped("duality", "storage models have no solvency cone"),
        Check::new(
            "budget_feasibility",
            worst <= p.budget() + 1e-12,
            json!({ "strategies": 20, "largest_used_budget": worst, "budget": p.budget() }),
        ),
    ])
}

/// Returns whether every check passed.
fn verify(problem: &Problem, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<bool, Failure> {
    let grid = match problem {
        Problem::Market(p) => *p.grid(),
        Problem::Storage(p) => *p.grid(),
    };
    let mut checks = vec![metric_axioms_check(grid, seed)?];
    checks.extend(match problem {
        Problem::Market(p) => market_checks(p, cfg, seed)?,
        Problem::Storage(p) => storage_checks(p, cfg, seed)?,
    });
    let pass = checks.iter().all(|c| c.status != "fail");
    write_json(out, "verify.json", &json!({ "pass": pass, "checks": checks }))?;
    Ok(pass)
}

fn detect_prefix(path: &Path) -> Result<String, Failure> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or_default();
    let col = header
        .split(',')
        .nth(2)
        .ok_or_else(|| Failure::Runtime(format!("{}: not a path dump", path.display())))?;
    Ok(col.trim_end_matches(|c: char| c.is_ascii_digit()).to_string())
}

fn metric(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let input: PathBuf = cfg.metric.input.clone().unwrap_or_else(|| out.join("controls.csv"));
    if !input.exists() {
        return Err(Failure::Config(format!(
            "metric.input: {} does not exist (run simulate first or set the path)",
            input.display()
        )));
    }
    let prefix = match &cfg.metric.prefix {
        Some(p) => p.clone(),
        None => detect_prefix(&input)?,
    };
    let mut paths = read_path_dump(File::open(&input)?, &prefix)?;
    paths.truncate(cfg.metric.max_paths.unwrap_or(50));
    let mut rows = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            rows.push((i, j, mz_distance(&paths[i], &paths[j])?));
        }
    }
    if cfg.wants(Format::Csv) {
        let mut w = create(out, "mz_distances.csv")?;
        writeln!(w, "i,j,distance")?;
        for (i, j, d) in &rows {
            writeln!(w, "{i},{j},{}", fmt(*d))?;
        }
        w.flush()?;
    }
    if cfg.wants(Format::Json) {
        let max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let mean = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64 };
        write_json(
            out,
            "metric.json",
            &json!({ "input": input.display().to_string(), "n_paths": paths.len(), "pairs": rows.len(), "max": max, "mean": mean }),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Optimize,
    Verify,
    Metric,
}

pub enum Outcome {
    Done,
    VerificationFailed,
}

pub fn execute(command: Command, problem: &Problem, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Outcome, Failure> {
    match (command, problem) {
        (Command::Simulate, Problem::Market(p)) => simulate_with(p, cfg, seed, out)?,
        (Command::Simulate, Problem::Storage(p)) => simulate_with(p, cfg, seed, out)?,
        (Command::Optimize, Problem::Market(p)) => optimize_with(p, cfg, seed, out)?,
        (Command::Optimize, Problem::Storage(p)) => optimize_with(p, cfg, seed, out)?,
        (Command::Verify, _) => {
            if !verify(problem, cfg, seed, out)? {
                return Ok(Outcome::VerificationFailed);
            }
        }
        (Command::Metric, _) => metric(cfg, out)?,
    }
    Ok(Outcome::Done)
}
