//! Polyhedral solvency cones.
//!
//! A cone is stored through its generators. Membership, liquidation and
//! purchase values are small linear programs; the dual cone is computed once
//! by facet enumeration (dimension at most four).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, orthogonal_complement, rank};
use crate::lp::{self, LpResult};

/// Absolute LP residual accepted as membership.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Largest dimension for which the dual cone is enumerated.
pub const MAX_DUAL_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    dim: usize,
    generators: Vec<Vec<f64>>,
    dual_generators: Option<Vec<Vec<f64>>>,
    section: Option<LambdaSection>,
    contains_orthant: bool,
}

#[derive(Serialize)]
struct ConeExport<'a> {
    dim: usize,
    generators: &'a [Vec<f64>],
    dual_generators: Option<&'a [Vec<f64>]>,
}

impl Serialize for Cone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConeExport {
            dim: self.dim,
            generators: &self.generators,
            dual_generators: self.dual_generators.as_deref(),
        }
        .serialize(s)
    }
}

impl Cone {
    /// Builds the cone spanned by `generators`, which must be full-dimensional
    /// and pointed.
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        let dim = generators
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("a cone needs at least one generator"))?;
        if dim == 0 {
            return Err(Error::invalid("cone dimension must be positive"));
        }
        for (i, g) in generators.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: g.len() });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("generator {i} is not finite")));
            }
            if norm2(g) == 0.0 {
                return Err(Error::invalid(format!("generator {i} is zero")));
            }
        }
        if rank(&generators, 1e-12) < dim {
            return Err(Error::NotProper("generators do not span the space".into()));
        }
        // Pointed iff no convex combination of generators vanishes.
        let m = generators.len();
        let mut a: Vec<Vec<f64>> = (0..dim)
            .map(|j| generators.iter().map(|g| g[j]).collect())
            .collect();
        a.push(vec![1.0; m]);
        let mut b = vec![0.0; dim];
        b.push(1.0);
        match lp::solve(&a, &b, &vec![0.0; m], 1e-10).map_err(Error::Lp)? {
            LpResult::Infeasible { .. } => {}
            _ => return Err(Error::NotProper("cone contains a line".into())),
        }

        let mut cone = Cone {
            dim,
            generators,
            dual_generators: None,
            section: None,
            contains_orthant: false,
        };
        cone.contains_orthant = (0..dim).all(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            cone.contains(&e, DEFAULT_TOL).unwrap_or(false)
        });
        if dim <= MAX_DUAL_DIM {
            cone.dual_generators = Some(cone.enumerate_dual()?);
            cone.section = cone.lambda_section().ok();
        }
        Ok(cone)
    }

    /// Like [`Cone::new`] but additionally requires `R^d_+ ⊆ K`.
    pub fn solvency(generators: Vec<Vec<f64>>) -> Result<Self> {
        let cone = Cone::new(generators)?;
        if !cone.contains_orthant {
            return Err(Error::invalid("solvency cone must contain the nonnegative orthant"));
        }
        Ok(cone)
    }

    pub fn orthant(dim: usize) -> Result<Self> {
        Cone::new(
            (0..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Extreme rays of the dual cone, unit Euclidean length. `None` above
    /// [`MAX_DUAL_DIM`].
    pub fn dual_generators(&self) -> Option<&[Vec<f64>]> {
        self.dual_generators.as_deref()
    }

    pub fn contains_orthant(&self) -> bool {
        self.contains_orthant
    }

    fn enumerate_dual(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim;
        if d == 1 {
            return Ok(vec![vec![self.generators[0][0].signum()]]);
        }
        let mut out: Vec<Vec<f64>> = Vec::new();
        let m = self.generators.len();
        let mut subset: Vec<usize> = (0..d - 1).collect();
        loop {
            let vs: Vec<&[f64]> = subset.iter().map(|&i| self.generators[i].as_slice()).collect();
            let n = orthogonal_complement(&vs, d);
            let len = norm2(&n);
            if len > 1e-12 {
                let n: Vec<f64> = n.iter().map(|v| v / len).collect();
                let signs: Vec<f64> = self
                    .generators
                    .iter()
                    .map(|g| dot(g, &n) / norm2(g))
                    .collect();
                let orient = if signs.iter().all(|&s| s >= -1e-10) {
                    Some(1.0)
                } else if signs.iter().all(|&s| s <= 1e-10) {
                    Some(-1.0)
                } else {
                    None
                };
                if let Some(o) = orient {
                    let y: Vec<f64> = n.iter().map(|v| o * v).collect();
                    if !out.iter().any(|z| z.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9)) {
                        out.push(y);
                    }
                }
            }
            // Next (d-1)-subset in lexicographic order.
            let mut i = d - 1;
            loop {
                if i == 0 {
                    return finish_dual(out);
                }
                i -= 1;
                if subset[i] < m - (d - 1) + i {
                    subset[i] += 1;
                    for j in i + 1..d - 1 {
                        subset[j] = subset[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// LP membership: `x = Σ c_g g` with `c ≥ 0` feasible within `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        self.check_dim(x)?;
        if x.iter().all(|&v| v == 0.0) {
            return Ok(true);
        }
        let a = self.generator_columns(&[]);
        match lp::solve(&a, x, &vec![0.0; self.generators.len()], tol).map_err(Error::Lp)? {
            LpResult::Infeasible { .. } => Ok(false),
            _ => Ok(true),
        }
    }

    /// Halfspace membership against the dual generators: `y·x ≥ -tol` for
    /// every unit dual ray `y`. Agrees with [`Cone::contains`] away from the
    /// boundary and is much cheaper.
    pub fn contains_dual(&self, x: &[f64], tol: f64) -> Result<bool> {
        self.check_dim(x)?;
        let duals = self
            .dual_generators()
            .ok_or_else(|| Error::Unsupported(format!("dual cone for dimension {}", self.dim)))?;
        Ok(duals.iter().all(|y| dot(y, x) >= -tol))
    }

    /// Rows of the matrix whose columns are the generators followed by `extra`.
    fn generator_columns(&self, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|j| {
                self.generators
                    .iter()
                    .chain(extra)
                    .map(|g| g[j])
                    .collect()
            })
            .collect()
    }

    fn unit(&self, i: usize, sign: f64) -> Vec<f64> {
        let mut e = vec![0.0; self.dim];
        e[i] = sign;
        e
    }

    fn lp_value(&self, extra: &[Vec<f64>], b: &[f64], extra_cost: &[f64]) -> Result<f64> {
        let a = self.generator_columns(extra);
        let mut c = vec![0.0; self.generators.len()];
        c.extend_from_slice(extra_cost);
        match lp::solve(&a, b, &c, DEFAULT_TOL).map_err(Error::Lp)? {
            LpResult::Optimal { value, .. } => Ok(value),
            LpResult::Infeasible { residual } => Err(Error::Lp(format!(
                "no cash position reaches the cone (residual {residual:e})"
            ))),
            LpResult::Unbounded => Err(Error::Lp("unbounded program".into())),
        }
    }

    /// Liquidation value `sup{y : x - y e_1 ∈ K}` by the primal LP.
    pub fn liquidation(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        // x = G c + (y+ - y-) e_1, maximize y+ - y-.
        let v = self.lp_value(&[self.unit(0, 1.0), self.unit(0, -1.0)], x, &[-1.0, 1.0])?;
        Ok(-v)
    }

    /// Liquidation value through the dual section when it exists, falling
    /// back to the primal LP.
    pub fn liquidation_value(&self, x: &[f64]) -> Result<f64> {
        match &self.section {
            Some(sec) => {
                self.check_dim(x)?;
                Ok(sec.liquidation(x))
            }
            None => self.liquidation(x),
        }
    }

    /// Purchase value `inf{y : y e_1 - x ∈ K}` by the primal LP.
    pub fn purchase(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        // -x = G c - (y+ - y-) e_1, minimize y+ - y-.
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        self.lp_value(&[self.unit(0, -1.0), self.unit(0, 1.0)], &neg, &[1.0, -1.0])
    }

    /// Cosine margin of `x` inside `self`: the minimum of `x·y / (|x||y|)`
    /// over the dual generators `y`. Positive iff `x` is interior; `x` lies in
    /// the ε-interior iff the margin exceeds ε.
    pub fn epsilon_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let duals = self
            .dual_generators()
            .ok_or_else(|| Error::Unsupported(format!("dual cone for dimension {}", self.dim)))?;
        cosine_margin(duals, x)
    }

    /// Cosine margin of `x` inside the dual cone, tested against the
    /// generators of `self`. For a solvency cone `K` and a price ratio `x`
    /// this is the ε of the ε-interior of `K*`.
    pub fn dual_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        cosine_margin(&self.generators, x)
    }

    /// The dual cone `K*`.
    pub fn dual(&self) -> Result<Cone> {
        let duals = self
            .dual_generators()
            .ok_or_else(|| Error::Unsupported(format!("dual cone for dimension {}", self.dim)))?;
        Cone::new(duals.to_vec())
    }

    /// Section `Λ = K* ∩ {z : z^1 = 1}`.
    pub fn lambda_section(&self) -> Result<LambdaSection> {
        let duals = self
            .dual_generators()
            .ok_or_else(|| Error::Unsupported(format!("dual cone for dimension {}", self.dim)))?;
        let mut vertices = Vec::with_capacity(duals.len());
        for (index, y) in duals.iter().enumerate() {
            if y[0] <= 1e-12 {
                return Err(Error::DegenerateSection { index });
            }
            vertices.push(y.iter().map(|v| v / y[0]).collect());
        }
        Ok(LambdaSection { vertices })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cone export is plain data")
    }
}

fn finish_dual(mut out: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    if out.is_empty() {
        return Err(Error::NotProper("no supporting facets found".into()));
    }
    out.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| y.total_cmp(x))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

fn cosine_margin(tests: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    let nx = norm2(x);
    if nx == 0.0 {
        return Err(Error::invalid("margin of the zero vector is undefined"));
    }
    Ok(tests
        .iter()
        .map(|y| dot(x, y) / (nx * norm2(y)))
        .fold(f64::INFINITY, f64::min))
}

/// Compact section of the dual cone at first coordinate one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSection {
    pub vertices: Vec<Vec<f64>>,
}

impl LambdaSection {
    /// `min_{y ∈ Λ} x·y`, the dual form of the liquidation value.
    pub fn liquidation(&self, x: &[f64]) -> f64 {
        self.vertices.iter().map(|y| dot(x, y)).fold(f64::INFINITY, f64::min)
    }

    /// `max_{y ∈ Λ} x·y`, the dual form of the purchase value.
    pub fn purchase(&self, x: &[f64]) -> f64 {
        self.vertices.iter().map(|y| dot(x, y)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Proportional transaction costs `λ_ij` for converting asset `j` into `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionCostSpec {
    pub lambda: Vec<Vec<f64>>,
}

impl TransactionCostSpec {
    pub fn new(lambda: Vec<Vec<f64>>) -> Result<Self> {
        let spec = TransactionCostSpec { lambda };
        spec.validate()?;
        Ok(spec)
    }

    /// Same fee between every ordered pair of assets.
    pub fn uniform(dim: usize, fee: f64) -> Result<Self> {
        Self::new(
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 0.0 } else { fee }).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Checks shape and sign rules. Error messages name the offending entry
    /// as `lambda[i][j]`.
    pub fn validate(&self) -> Result<()> {
        let d = self.lambda.len();
        if d == 0 {
            return Err(Error::invalid("lambda: matrix is empty"));
        }
        for (i, row) in self.lambda.iter().enumerate() {
            if row.len() != d {
                return Err(Error::invalid(format!(
                    "lambda[{i}]: expected {d} entries, got {}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("lambda[{i}][{j}]: must be finite")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::invalid(format!("lambda[{i}][{j}]: diagonal fee must be 0, got {v}")));
                }
                if v < 0.0 {
                    return Err(Error::invalid(format!("lambda[{i}][{j}]: fee must be nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Generators `e_i` and `(1 + λ_ij) e_i - e_j` for `i ≠ j`.
    pub fn generators(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut gens = Vec::with_capacity(d * d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            gens.push(e);
        }
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    let mut g = vec![0.0; d];
                    g[i] = 1.0 + self.lambda[i][j];
                    g[j] = -1.0;
                    gens.push(g);
                }
            }
        }
        gens
    }

    pub fn cone(&self) -> Result<Cone> {
        self.validate()?;
        Cone::solvency(self.generators())
    }

    pub fn all_fees_positive(&self) -> bool {
        self.lambda
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| i == j || v > 0.0))
    }
}
