//! Finite-variation càdlàg paths on a uniform grid.
//!
//! A [`FVPath`] is piecewise constant: the value stored at node `t_k` is the
//! right limit and holds on `[t_k, t_{k+1})`. The left limit at zero is fixed
//! to the origin, so `values[0]` is the jump (atom) at time zero and every
//! variation or Stieltjes computation counts it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cones::Cone;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, solve};

/// Uniform discretization `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Time of node `k`; the last node is exactly the horizon.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.node(k))
    }

    /// True when every node of `self` is a node of `finer`.
    pub fn is_refined_by(&self, finer: &TimeGrid) -> bool {
        self.horizon == finer.horizon && finer.n_steps % self.n_steps == 0
    }
}

/// Monotonicity direction with respect to a cone order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// Right-continuous piecewise-constant path of finite variation.
#[derive(Debug, Clone, PartialEq)]
pub struct FVPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl FVPath {
    /// Builds a path from one `dim`-vector per grid node.
    pub fn new(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        let dim = values.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::invalid("path dimension must be positive"));
        }
        let mut flat = Vec::with_capacity(dim * values.len());
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            flat.extend_from_slice(v);
        }
        Self::from_flat(grid, dim, flat)
    }

    /// Builds a path from node-major flat storage.
    pub fn from_flat(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be positive"));
        }
        if values.len() != dim * grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: dim * grid.n_nodes(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(FVPath { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        FVPath {
            grid,
            dim,
            values: vec![0.0; dim * grid.n_nodes()],
        }
    }

    /// Cumulative sum of per-node increments; `increments[0]` is the atom at zero.
    pub fn from_increments(grid: TimeGrid, increments: &[Vec<f64>]) -> Result<Self> {
        let mut acc = vec![0.0; increments.first().map_or(0, Vec::len)];
        let values = increments
            .iter()
            .map(|inc| {
                for (a, x) in acc.iter_mut().zip(inc) {
                    *a += x;
                }
                acc.clone()
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// Right-limit value at node `k`.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.grid.n_steps)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Jump at node `k`; at `k = 0` this is `f(0) - f(0-) = f(0)`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            self.value(0).to_vec()
        } else {
            self.value(k)
                .iter()
                .zip(self.value(k - 1))
                .map(|(a, b)| a - b)
                .collect()
        }
    }

    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_nodes()).map(move |k| self.increment(k))
    }

    fn check_compatible(&self, other: &FVPath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &FVPath, f: impl Fn(f64, f64) -> f64) -> Result<FVPath> {
        self.check_compatible(other)?;
        Ok(FVPath {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &FVPath) -> Result<FVPath> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &FVPath) -> Result<FVPath> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> FVPath {
        FVPath {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Restriction to the nodes of a coarser nested grid.
    pub fn restrict(&self, coarse: &TimeGrid) -> Result<FVPath> {
        if !coarse.is_refined_by(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let stride = self.grid.n_steps / coarse.n_steps;
        let values = (0..coarse.n_nodes())
            .flat_map(|k| self.value(k * stride).to_vec())
            .collect();
        FVPath::from_flat(*coarse, self.dim, values)
    }

    /// Writes `t,c1,...,cd` with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|j| format!("c{j}")));
        w.write_record(&header)?;
        for k in 0..self.n_nodes() {
            let mut rec = vec![format_f64(self.grid.node(k))];
            rec.extend(self.value(k).iter().map(|&v| format_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the format written by [`FVPath::write_csv`]. The grid is
    /// recovered from the `t` column and must be uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<FVPath> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("t") || headers.len() < 2 {
            return Err(Error::invalid("expected header t,c1,...,cd"));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut it = rec.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
            });
            times.push(it.next().ok_or_else(|| Error::invalid("empty row"))??);
            for v in it {
                values.push(v?);
            }
        }
        if times.len() < 2 {
            return Err(Error::invalid("a path needs at least two nodes"));
        }
        let grid = TimeGrid::new(*times.last().unwrap_or(&0.0), times.len() - 1)?;
        for (k, &t) in times.iter().enumerate() {
            if (t - grid.node(k)).abs() > 1e-9 * grid.horizon() {
                return Err(Error::invalid(format!("non-uniform grid at row {k}")));
            }
        }
        FVPath::from_flat(grid, dim, values)
    }
}

/// Writes several paths as `path_id,t,<prefix>1,...,<prefix>d`.
pub fn write_path_dump<W: Write>(paths: &[FVPath], prefix: &str, out: W) -> Result<()> {
    let d = paths.first().map_or(0, |p| p.dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("{prefix}{i}")));
    w.write_record(&header)?;
    for (id, p) in paths.iter().enumerate() {
        for k in 0..p.grid.n_nodes() {
            let mut rec = vec![id.to_string(), format_f64(p.grid.node(k))];
            rec.extend(p.value(k).iter().map(|&v| format_f64(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_path_dump`].
pub fn read_path_dump<R: Read>(input: R, prefix: &str) -> Result<Vec<FVPath>> {
    read_id_rows(input, prefix)?
        .into_iter()
        .map(|(grid, dim, values)| FVPath::from_flat(grid, dim, values))
        .collect()
}

/// Parses `path_id,t,<prefix>1,...` dumps into per-path node-major values.
pub(crate) fn read_id_rows<R: Read>(input: R, prefix: &str) -> Result<Vec<(TimeGrid, usize, Vec<f64>)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let dim = headers.len().saturating_sub(2);
    let expected: Vec<String> = ["path_id".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=dim).map(|i| format!("{prefix}{i}")))
        .collect();
    if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::invalid(format!("expected header {}", expected.join(","))));
    }
    let mut out: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
        };
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::invalid(format!("bad path id {:?}: {e}", &rec[0])))?;
        if id == out.len() {
            out.push((Vec::new(), Vec::new()));
        } else if id + 1 != out.len() {
            return Err(Error::invalid(format!("path ids must be consecutive, found {id}")));
        }
        let entry = out.last_mut().expect("pushed above");
        entry.0.push(num(&rec[1])?);
        for v in rec.iter().skip(2) {
            entry.1.push(num(v)?);
        }
    }
    out.into_iter()
        .map(|(times, values)| {
            if times.len() < 2 {
                return Err(Error::invalid("a path needs at least two nodes"));
            }
            let grid = TimeGrid::new(times[times.len() - 1], times.len() - 1)?;
            for (k, &t) in times.iter().enumerate() {
                if (t - grid.node(k)).abs() > 1e-9 * grid.horizon() {
                    return Err(Error::invalid(format!("non-uniform grid at node {k}")));
                }
            }
            Ok((grid, dim, values))
        })
        .collect()
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Total variation `|f(t_0)| + Σ |f(t_k) - f(t_{k-1})|`, summed over components.
pub fn total_variation(f: &FVPath) -> f64 {
    f.increments().map(|inc| norm1(&inc)).sum()
}

/// Meyer–Zheng distance: Lebesgue integral of `min(|f - g|, 1)` over
/// `[0, T)` plus the same quantity at `T`, with the Euclidean norm.
pub fn mz_distance(f: &FVPath, g: &FVPath) -> Result<f64> {
    f.check_compatible(g)?;
    let gap = |k: usize| -> f64 {
        let d: f64 = f
            .value(k)
            .iter()
            .zip(g.value(k))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d.sqrt().min(1.0)
    };
    let n = f.grid.n_steps;
    let dt = f.grid.dt();
    let body: f64 = (0..n).map(|k| dt * gap(k)).sum();
    Ok(body + gap(n))
}

/// Lebesgue–Stieltjes integral `∫_{[0,T]} f dg` of a grid-sampled continuous
/// integrand; the atom of `dg` at zero contributes `f(0) g(0)`.
pub fn stieltjes_integral(f: &[f64], g: &FVPath) -> Result<Vec<f64>> {
    if f.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.n_nodes(),
            got: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("integrand must be finite at every node"));
    }
    let mut acc = vec![0.0; g.dim];
    for (k, &fk) in f.iter().enumerate() {
        for (a, dg) in acc.iter_mut().zip(g.increment(k)) {
            *a += fk * dg;
        }
    }
    Ok(acc)
}

/// Componentwise Jordan decomposition `f = plus - minus`.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanPair {
    pub plus: FVPath,
    pub minus: FVPath,
}

pub fn jordan(f: &FVPath) -> JordanPair {
    let d = f.dim;
    let mut plus = Vec::with_capacity(f.values.len());
    let mut minus = Vec::with_capacity(f.values.len());
    let mut p = vec![0.0; d];
    let mut m = vec![0.0; d];
    for inc in f.increments() {
        for j in 0..d {
            if inc[j] > 0.0 {
                p[j] += inc[j];
            } else {
                m[j] -= inc[j];
            }
        }
        plus.extend_from_slice(&p);
        minus.extend_from_slice(&m);
    }
    JordanPair {
        plus: FVPath { grid: f.grid, dim: d, values: plus },
        minus: FVPath { grid: f.grid, dim: d, values: minus },
    }
}

/// True iff every increment (including the atom at zero) lies in `K`
/// (increasing) or `-K` (decreasing), up to the LP tolerance `tol`.
pub fn is_k_monotone(f: &FVPath, cone: &Cone, direction: Monotonicity, tol: f64) -> Result<bool> {
    if cone.dim() != f.dim {
        return Err(Error::DimensionMismatch {
            expected: cone.dim(),
            got: f.dim,
        });
    }
    let sign = match direction {
        Monotonicity::Increasing => 1.0,
        Monotonicity::Decreasing => -1.0,
    };
    for inc in f.increments() {
        if inc.iter().all(|&v| v == 0.0) {
            continue;
        }
        let v: Vec<f64> = inc.iter().map(|x| sign * x).collect();
        if !cone.contains(&v, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One atom of the variation measure together with the density of `df`
/// against it.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeAtom {
    pub node: usize,
    /// `Δf / |Δf|_1`, a unit vector in the `ℓ¹` norm.
    pub direction: Vec<f64>,
    /// Mass `|Δf|_1` of `dVar f` at this node.
    pub mass: f64,
}

/// Radon–Nikodym derivative `df / dVar f` of a grid path.
#[derive(Debug, Clone, PartialEq)]
pub struct RnDerivative {
    pub grid: TimeGrid,
    pub dim: usize,
    pub atoms: Vec<DerivativeAtom>,
}

impl RnDerivative {
    pub fn is_null(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `t ↦ ∫_{[0,t]} (df/dVar) dVar`, which must reproduce the source path.
    pub fn reconstruct(&self) -> FVPath {
        let mut incs = vec![vec![0.0; self.dim]; self.grid.n_nodes()];
        for a in &self.atoms {
            for (v, u) in incs[a.node].iter_mut().zip(&a.direction) {
                *v = u * a.mass;
            }
        }
        FVPath::from_increments(self.grid, &incs).expect("atoms are finite and aligned")
    }
}

pub fn rn_derivative(f: &FVPath, cone: &Cone) -> Result<RnDerivative> {
    let tol = crate::cones::DEFAULT_TOL;
    if !is_k_monotone(f, cone, Monotonicity::Increasing, tol)?
        && !is_k_monotone(f, cone, Monotonicity::Decreasing, tol)?
    {
        return Err(Error::invalid("path is not monotone with respect to the cone"));
    }
    let atoms = f
        .increments()
        .enumerate()
        .filter_map(|(node, inc)| {
            let mass = norm1(&inc);
            (mass > 0.0).then(|| DerivativeAtom {
                node,
                direction: inc.iter().map(|v| v / mass).collect(),
                mass,
            })
        })
        .collect();
    Ok(RnDerivative {
        grid: f.grid,
        dim: f.dim,
        atoms,
    })
}

/// Coordinates of a path in a basis drawn from the dual cone.
///
/// With `a_1..a_d` linearly independent dual generators and `g_i = a_i·f`,
/// the coefficients `c = G^{-1} g` (Gram matrix `G`) satisfy
/// `f = Σ c_i a_i`. Monotonicity of `f` makes every `g_i` monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct GramDecomposition {
    pub basis: Vec<Vec<f64>>,
    pub projections: Vec<Vec<f64>>,
    pub coefficients: Vec<Vec<f64>>,
    /// Every projection `g_i` is monotone in the stated direction.
    pub projections_monotone: bool,
    /// Largest nodewise error of `Σ c_i a_i` against the path.
    pub reconstruction_error: f64,
}

pub fn gram_decomposition(f: &FVPath, cone: &Cone, direction: Monotonicity) -> Result<GramDecomposition> {
    let d = f.dim;
    if cone.dim() != d {
        return Err(Error::DimensionMismatch { expected: cone.dim(), got: d });
    }
    let duals = cone
        .dual_generators()
        .ok_or_else(|| Error::Unsupported("dual generators unavailable".into()))?;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for y in duals {
        let mut trial = basis.clone();
        trial.push(y.clone());
        if crate::linalg::rank(&trial, 1e-10) == trial.len() {
            basis = trial;
        }
        if basis.len() == d {
            break;
        }
    }
    if basis.len() < d {
        return Err(Error::NotProper("dual generators do not span".into()));
    }
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|a| basis.iter().map(|b| dot(a, b)).collect())
        .collect();
    let sign = match direction {
        Monotonicity::Increasing => 1.0,
        Monotonicity::Decreasing => -1.0,
    };
    let mut projections = Vec::with_capacity(f.n_nodes());
    let mut coefficients = Vec::with_capacity(f.n_nodes());
    let mut monotone = true;
    let mut err: f64 = 0.0;
    let mut prev = vec![0.0; d];
    for k in 0..f.n_nodes() {
        let fk = f.value(k);
        let g: Vec<f64> = basis.iter().map(|a| dot(a, fk)).collect();
        let scale = 1.0 + norm1(fk);
        if g.iter().zip(&prev).any(|(now, before)| sign * (now - before) < -1e-9 * scale) {
            monotone = false;
        }
        let c = solve(&gram, &g).ok_or_else(|| Error::NotProper("singular Gram matrix".into()))?;
        for j in 0..d {
            let rebuilt: f64 = basis.iter().zip(&c).map(|(a, ci)| a[j] * ci).sum();
            err = err.max((rebuilt - fk[j]).abs());
        }
        prev = g.clone();
        projections.push(g);
        coefficients.push(c);
    }
    Ok(GramDecomposition {
        basis,
        projections,
        coefficients,
        projections_monotone: monotone,
        reconstruction_error: err,
    })
}

/// Result of the diagonal Helly selection.
#[derive(Debug, Clone, PartialEq)]
pub struct HellySubsequence {
    /// Strictly increasing indices into the input sequence.
    pub indices: Vec<usize>,
    /// Refinement level at which each selected element was certified; the
    /// element lies in the level's dyadic cell, of side `2c / 2^level`.
    pub levels: Vec<usize>,
    pub limit: FVPath,
    /// Side of the final cell (zero when the tail is exactly constant).
    pub final_width: f64,
}

impl HellySubsequence {
    /// Upper bound on `mz_distance(limit, f)` for an element certified at `level`.
    pub fn envelope(&self, var_bound: f64, level: usize) -> f64 {
        let width = 2.0 * var_bound / 2f64.powi(level as i32);
        let per_node = (width * (self.limit.dim() as f64).sqrt()).min(1.0);
        (self.limit.grid().horizon() + 1.0) * per_node
    }
}

const HELLY_MAX_LEVELS: usize = 60;

/// Diagonal subsequence extraction over grid nodes.
///
/// Every path with `Var ≤ c` has all coordinates in `[-c, c]`. Each level
/// halves the cell along every coordinate in node-major order, keeping the
/// half with more members (ties go to the half holding the earliest index).
/// The subsequence is the final cluster preceded by, for each coarser level,
/// the largest member below the current first index.
pub fn helly_subsequence(paths: &[FVPath], var_bound: f64) -> Result<HellySubsequence> {
    let first = paths
        .first()
        .ok_or_else(|| Error::invalid("empty path sequence"))?;
    if !(var_bound.is_finite() && var_bound >= 0.0) {
        return Err(Error::invalid("variation bound must be finite and nonnegative"));
    }
    for (i, p) in paths.iter().enumerate() {
        first.check_compatible(p)?;
        let v = total_variation(p);
        if v > var_bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::invalid(format!(
                "path {i} has variation {v} above the bound {var_bound}"
            )));
        }
    }
    let coords = first.values.len();
    let identical = |set: &[usize]| {
        set.iter()
            .all(|&i| paths[i].values == paths[set[0]].values)
    };

    let mut current: Vec<usize> = (0..paths.len()).collect();
    let mut lo = vec![-var_bound; coords];
    let mut width = 2.0 * var_bound;
    let mut chain = vec![current.clone()];
    while chain.len() <= HELLY_MAX_LEVELS && current.len() > 1 && !identical(&current) {
        width /= 2.0;
        for (c, lo_c) in lo.iter_mut().enumerate() {
            let mid = *lo_c + width;
            let (high, low): (Vec<usize>, Vec<usize>) =
                current.iter().partition(|&&i| paths[i].values[c] >= mid);
            let keep_high = match high.len().cmp(&low.len()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => high.first() < low.first() && !high.is_empty(),
            };
            if keep_high {
                *lo_c = mid;
                current = high;
            } else {
                current = low;
            }
        }
        chain.push(current.clone());
    }

    let tail = chain.last().cloned().unwrap_or_default();
    let final_level = chain.len() - 1;
    let mut indices = tail.clone();
    let mut levels = vec![final_level; tail.len()];
    for level in (0..final_level).rev() {
        let head = indices[0];
        if let Some(&i) = chain[level].iter().rev().find(|&&i| i < head) {
            indices.insert(0, i);
            levels.insert(0, level);
        }
    }

    let (limit, final_width) = if identical(&tail) {
        (paths[tail[0]].clone(), 0.0)
    } else {
        let center = lo.iter().map(|l| l + width / 2.0).collect();
        (FVPath::from_flat(first.grid, first.dim, center)?, width)
    };
    Ok(HellySubsequence {
        indices,
        levels,
        limit,
        final_width,
    })
}
