//! Dense two-phase simplex for small linear programs in the form
//! `minimize c . x  subject to  A x >= b, x >= 0`.
//!
//! Entering and leaving variables follow Bland's rule (lowest index), which
//! rules out cycling; the iteration cap is purely defensive.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("LP is infeasible (phase-1 objective {0:.3e})")]
    Infeasible(f64),
    #[error("LP is unbounded below")]
    Unbounded,
    #[error("pivoting did not terminate within {0} iterations")]
    Cycling(usize),
    #[error("malformed LP: {0}")]
    BadShape(String),
}

/// `minimize objective . x  s.t.  rows[i] . x >= rhs[i]  for all i, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

/// Solves the LP to an optimal basic solution.
pub fn simplex_solve(lp: &LinearProgram) -> Result<SimplexSolution, SimplexError> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    if lp.rhs.len() != m || lp.rows.iter().any(|r| r.len() != n) {
        return Err(SimplexError::BadShape(format!(
            "expected {m} rows of width {n}"
        )));
    }
    if m == 0 {
        // Nothing constrains x, so the minimum sits at the origin unless
        // some cost is negative.
        if lp.objective.iter().any(|&c| c < -COST_TOL) {
            return Err(SimplexError::Unbounded);
        }
        return Ok(SimplexSolution {
            x: vec![0.0; n],
            objective: 0.0,
        });
    }

    // Columns: structural (n) | surplus (m) | artificial (m) | rhs.
    let n_surplus = m;
    let n_art = m;
    let total = n + n_surplus + n_art;
    let mut tab = vec![vec![0.0; total + 1]; m];
    for (i, row) in lp.rows.iter().enumerate() {
        let flip = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in row.iter().enumerate() {
            tab[i][j] = flip * a;
        }
        tab[i][n + i] = -flip; // a.x - s = b
        tab[i][n + n_surplus + i] = 1.0;
        tab[i][total] = flip * lp.rhs[i];
    }
    let mut basis: Vec<usize> = (0..m).map(|i| n + n_surplus + i).collect();

    // Phase 1: minimize the sum of artificial variables.
    let mut phase1_cost = vec![0.0; total];
    for j in n + n_surplus..total {
        phase1_cost[j] = 1.0;
    }
    pivot_to_optimum(&mut tab, &mut basis, &phase1_cost, total)?;
    let phase1_obj: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &var)| var >= n + n_surplus)
        .map(|(i, _)| tab[i][total])
        .sum();
    if phase1_obj > 1e-7 {
        return Err(SimplexError::Infeasible(phase1_obj));
    }

    // Drive any zero-valued artificial out of the basis, dropping rows that
    // turn out redundant.
    let mut drop_rows = Vec::new();
    for i in 0..m {
        if basis[i] < n + n_surplus {
            continue;
        }
        let pivot_col = (0..n + n_surplus).find(|&j| tab[i][j].abs() > PIVOT_TOL);
        match pivot_col {
            Some(j) => pivot(&mut tab, &mut basis, i, j, total),
            None => drop_rows.push(i),
        }
    }
    for &i in drop_rows.iter().rev() {
        tab.remove(i);
        basis.remove(i);
    }

    // Phase 2: original objective over structural + surplus columns, with
    // artificial columns barred from re-entering.
    let mut phase2_cost = vec![0.0; total];
    phase2_cost[..n].copy_from_slice(&lp.objective);
    for j in n + n_surplus..total {
        phase2_cost[j] = f64::INFINITY;
    }
    pivot_to_optimum(&mut tab, &mut basis, &phase2_cost, total)?;

    let mut x = vec![0.0; n];
    for (i, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = tab[i][total];
        }
    }
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
    Ok(SimplexSolution { x, objective })
}

/// Bland-rule pivoting until no reduced cost is negative.
fn pivot_to_optimum(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    total: usize,
) -> Result<usize, SimplexError> {
    let m = tab.len();
    let cap = 10_000 + 200 * (m + total);
    for iter in 0..cap {
        // Reduced cost c_j - c_B . B^-1 A_j, scanned lowest index first.
        let mut entering = None;
        for j in 0..total {
            if cost[j].is_infinite() {
                continue; // barred column
            }
            let mut reduced = cost[j];
            for i in 0..m {
                let cb = cost[basis[i]];
                if cb != 0.0 && cb.is_finite() {
                    reduced -= cb * tab[i][j];
                }
            }
            if reduced < -COST_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return Ok(iter);
        };

        // Ratio test; ties resolved by the smallest basic variable index.
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            if tab[i][col] > PIVOT_TOL {
                let ratio = tab[i][total] / tab[i][col];
                leaving = match leaving {
                    None => Some((i, ratio)),
                    Some((best_i, best)) => {
                        if ratio < best - PIVOT_TOL
                            || (ratio < best + PIVOT_TOL && basis[i] < basis[best_i])
                        {
                            Some((i, ratio))
                        } else {
                            Some((best_i, best))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leaving else {
            return Err(SimplexError::Unbounded);
        };
        pivot(tab, basis, row, col, total);
    }
    Err(SimplexError::Cycling(cap))
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize, total: usize) {
    let scale = tab[row][col];
    for j in 0..=total {
        tab[row][j] /= scale;
    }
    for i in 0..tab.len() {
        if i == row {
            continue;
        }
        let factor = tab[i][col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..=total {
            tab[i][j] -= factor * tab[row][j];
        }
    }
    basis[row] = col;
}

/// Largest violation `max(0, rhs - row . x)` over all constraints.
pub fn feasibility_residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    lp.rows
        .iter()
        .zip(&lp.rhs)
        .map(|(row, &b)| {
            let lhs: f64 = row.iter().zip(x).map(|(a, xi)| a * xi).sum();
            (b - lhs).max(0.0)
        })
        .fold(0.0, f64::max)
}
