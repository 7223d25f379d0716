//! Small dense linear algebra used by the cone and market code.
//!
//! Matrices here are at most a few dozen entries, so everything is a plain
//! `Vec<Vec<f64>>` with partial pivoting.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub(crate) fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let n_cols = m[0].len();
    let mut r = 0;
    for col in 0..n_cols {
        if r == m.len() {
            break;
        }
        let (piv, best) = (r..m.len())
            .map(|i| (i, m[i][col].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol {
            continue;
        }
        m.swap(r, piv);
        for i in (r + 1)..m.len() {
            let f = m[i][col] / m[r][col];
            for j in col..n_cols {
                m[i][j] -= f * m[r][j];
            }
        }
        r += 1;
    }
    r
}

/// Solves `a x = b` for square `a`; `None` when singular.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = m[i][col] / m[col][col];
                if f != 0.0 {
                    for j in col..=n {
                        m[i][j] -= f * m[col][j];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

pub(crate) fn det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    match n {
        0 => 1.0,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            let mut m = a.to_vec();
            let mut sign = 1.0;
            let mut acc = 1.0;
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                    .unwrap_or(col);
                if m[piv][col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    m.swap(col, piv);
                    sign = -sign;
                }
                acc *= m[col][col];
                for i in (col + 1)..n {
                    let f = m[i][col] / m[col][col];
                    for j in col..n {
                        m[i][j] -= f * m[col][j];
                    }
                }
            }
            sign * acc
        }
    }
}

/// Vector orthogonal to the `d - 1` given vectors in `R^d` (generalized
/// cross product via cofactors). Zero when the vectors are dependent.
pub(crate) fn orthogonal_complement(vectors: &[&[f64]], d: usize) -> Vec<f64> {
    debug_assert_eq!(vectors.len() + 1, d);
    (0..d)
        .map(|i| {
            let minor: Vec<Vec<f64>> = vectors
                .iter()
                .map(|v| {
                    v.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &x)| x)
                        .collect()
                })
                .collect();
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * det(&minor)
        })
        .collect()
}

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
/// Pivots within `tol` of zero are treated as zero (semi-definite case).
pub(crate) fn cholesky_psd(a: &[Vec<f64>], tol: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let piv = a[i][i] - s;
                if piv < -tol {
                    return None;
                }
                l[i][i] = piv.max(0.0).sqrt();
            } else if l[j][j] > tol {
                l[i][j] = (a[i][j] - s) / l[j][j];
            } else if (a[i][j] - s).abs() > tol {
                return None;
            }
        }
    }
    Some(l)
}
