//! Dense two-phase simplex for small equality-form linear programs:
//! minimize `c.x` subject to `A x = b`, `x >= 0`.
//!
//! Sized for envelope evaluation, where `A` has `d + 1` rows and one column
//! per action point. Bland's rule keeps the iteration finite.

use crate::error::{Error, Result};
use crate::linalg::dot;

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

pub(crate) enum LpOutcome {
    Optimal(LpSolution),
    /// Phase-1 optimum stayed positive: the constraints are inconsistent.
    Infeasible { residual: f64 },
}

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 20_000;

pub(crate) fn solve_equality_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let m = a.len();
    let n = c.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), m);

    let total = n + m;
    // Tableau rows: [original columns | artificial columns | rhs].
    let mut t = vec![vec![0.0; total + 1]; m];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][total] = flip * b[i];
    }
    let mut basis: Vec<usize> = (n..total).collect();

    let mut phase1_cost = vec![0.0; total];
    for slot in &mut phase1_cost[n..] {
        *slot = 1.0;
    }
    iterate(&mut t, &mut basis, &phase1_cost, total)?;
    let residual = objective(&t, &basis, &phase1_cost);
    if residual > 1e-9 {
        return Ok(LpOutcome::Infeasible { residual });
    }

    // Drive leftover artificials out of the basis; a row with no usable
    // original column is a redundant constraint and keeps rhs ~ 0.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > PIVOT_EPS) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    let mut phase2_cost = vec![0.0; total];
    phase2_cost[..n].copy_from_slice(c);
    iterate(&mut t, &mut basis, &phase2_cost, n)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][total].max(0.0);
        }
    }
    let objective = dot(c, &x);
    Ok(LpOutcome::Optimal(LpSolution { x, objective }))
}

/// Runs simplex pivots until no entering column among `0..enter_limit`
/// improves the cost.
fn iterate(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    enter_limit: usize,
) -> Result<()> {
    let m = t.len();
    let rhs = t[0].len() - 1;
    for _ in 0..MAX_PIVOTS {
        // Bland's rule: smallest-index column with negative reduced cost.
        let mut entering = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let reduced = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            if reduced < -COST_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else {
            return Ok(());
        };
        // Ratio test, ties broken toward the smallest basis variable index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > PIVOT_EPS {
                let ratio = t[i][rhs] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-15
                            || (ratio <= lr + 1e-15 && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::numerical("simplex: unbounded linear program"));
        };
        pivot(t, basis, row, j);
    }
    Err(Error::numerical("simplex: pivot limit exceeded"))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let width = t[0].len();
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i == row {
            continue;
        }
        let factor = t[i][col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            let delta = factor * t[row][j];
            t[i][j] -= delta;
        }
    }
    basis[row] = col;
}

fn objective(t: &[Vec<f64>], basis: &[usize], cost: &[f64]) -> f64 {
    let rhs = t[0].len() - 1;
    basis
        .iter()
        .enumerate()
        .map(|(i, &v)| cost[v] * t[i][rhs])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_simplex_weighted_minimum() {
        // min v.alpha with alpha on the simplex and barycenter fixed at 0.5:
        // points 0, 0.5, 1 with values 1, 0, 1 -> optimum picks the middle.
        let a = vec![vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 1.0]];
        let b = vec![0.5, 1.0];
        let c = vec![1.0, 0.0, 1.0];
        match solve_equality_lp(&a, &b, &c).unwrap() {
            LpOutcome::Optimal(sol) => {
                assert!((sol.objective - 0.0).abs() < 1e-9);
                assert!((sol.x[1] - 1.0).abs() < 1e-9);
            }
            LpOutcome::Infeasible { .. } => panic!("feasible LP reported infeasible"),
        }
    }

    #[test]
    fn detects_infeasible_barycenter() {
        // Barycenter 2.0 is outside [0, 1].
        let a = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let b = vec![2.0, 1.0];
        let c = vec![0.0, 0.0];
        match solve_equality_lp(&a, &b, &c).unwrap() {
            LpOutcome::Infeasible { residual } => assert!(residual > 0.5),
            LpOutcome::Optimal(_) => panic!("infeasible LP reported optimal"),
        }
    }

    #[test]
    fn finds_cheapest_vertex() {
        // Two ways to write the barycenter; values make the right one cheaper.
        let a = vec![vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]];
        let b = vec![1.0, 1.0];
        let c = vec![1.0, 1.0, 0.0];
        match solve_equality_lp(&a, &b, &c).unwrap() {
            LpOutcome::Optimal(sol) => {
                // alpha = (0.5, 0, 0.5) gives objective 0.5, beating (0,1,0).
                assert!((sol.objective - 0.5).abs() < 1e-9);
            }
            LpOutcome::Infeasible { .. } => panic!("feasible LP reported infeasible"),
        }
    }
}
