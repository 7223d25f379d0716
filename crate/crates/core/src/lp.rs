//! Dense two-phase simplex for the small cone programs.
//!
//! Solves `min c·x  s.t.  A x = b, x >= 0` with a full tableau and Bland's
//! rule. Problems here have at most a few dozen columns.

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-12;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    /// Phase one could not drive the artificial mass below tolerance.
    Infeasible { residual: f64 },
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    row[col] = 0.0;
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Runs simplex iterations over columns `0..allowed`. Returns false on
    /// unboundedness.
    fn run(&mut self, allowed: usize) -> Option<bool> {
        for _ in 0..MAX_ITER {
            let entering = (0..allowed).find(|&j| self.obj[j] < -COST_EPS);
            let Some(col) = entering else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_EPS {
                    let ratio = row[self.rhs] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15
                                || (ratio <= lr + 1e-15 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                None => return Some(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        None
    }
}

/// Solves the standard-form program. `feas_tol` bounds the phase-one
/// objective (total artificial mass) accepted as feasible.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64], feas_tol: f64) -> Result<LpResult, String> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err("inconsistent program dimensions".into());
    }
    let rhs = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; n + m + 1];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[rhs] = sign * b[i];
        rows.push(row);
    }
    let mut obj = vec![0.0; n + m + 1];
    for row in &rows {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[rhs] -= row[rhs];
    }
    let mut t = Tableau {
        rows,
        obj,
        basis: (n..n + m).collect(),
        rhs,
    };
    match t.run(n + m) {
        None => return Err("iteration limit in phase one".into()),
        Some(false) => return Err("phase one unbounded".into()),
        Some(true) => {}
    }
    let residual = -t.obj[rhs];
    if residual > feas_tol {
        return Ok(LpResult::Infeasible { residual });
    }

    // Drive artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            let col = (0..n).find(|&j| t.rows[i][j].abs() > 1e-9);
            match col {
                Some(j) => {
                    t.pivot(i, j);
                    i += 1;
                }
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut obj = vec![0.0; n + m + 1];
    obj[..n].copy_from_slice(c);
    for (row, &bj) in t.rows.iter().zip(&t.basis) {
        let cb = c[bj];
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= cb * v;
            }
        }
    }
    t.obj = obj;
    match t.run(n) {
        None => return Err("iteration limit in phase two".into()),
        Some(false) => return Ok(LpResult::Unbounded),
        Some(true) => {}
    }
    let mut x = vec![0.0; n];
    for (row, &bj) in t.rows.iter().zip(&t.basis) {
        if bj < n {
            x[bj] = row[rhs];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpResult::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
        let r = solve(&a, &[4.0, 6.0], &[-1.0, -1.0, 0.0, 0.0], 1e-9).unwrap();
        match r {
            LpResult::Optimal { value, x } => {
                assert!((value + 2.8).abs() < 1e-12);
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert!(matches!(
            solve(&a, &[-1.0], &[0.0, 0.0], 1e-9).unwrap(),
            LpResult::Infeasible { .. }
        ));
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(solve(&a, &[1.0], &[-1.0, 0.0], 1e-9).unwrap(), LpResult::Unbounded);
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        match solve(&a, &[1.0, 2.0], &[1.0, 2.0], 1e-9).unwrap() {
            LpResult::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
