//! Convex envelopes of tabulated functions over finite point sets.
//!
//! The envelope of `r` over points `z^1..z^N` at a query `x` is the smallest
//! simplex-weighted average of the `r(z^k)` whose barycenter is `x`. Every
//! evaluation returns a [`GeneratorWitness`]: at most `d + 1` support points
//! with their weights, reproducing both the query point and the envelope
//! value. Dimension one gets a sorted lower-hull fast path; higher dimensions
//! solve one small linear program per query.
//!
//! Tolerance hierarchy: 1e-12 for exact identities, 1e-9 for witness
//! algebra, 1e-6 for oracle-level comparisons in tests.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, linf_dist, norm};
use crate::simplex::{solve_equality_lp, LpOutcome};

/// Equal-point detection and exact-identity tolerance.
pub const EXACT_TOL: f64 = 1e-12;
/// Witness algebra tolerance (barycenter reproduction, weight sums).
pub const WITNESS_TOL: f64 = 1e-9;

/// Generator points attaining the envelope value at a query point, with
/// their simplex weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorWitness {
    /// Support points, each drawn from the envelope's point list.
    pub support: Vec<Vec<f64>>,
    /// Simplex weights, same length as `support`.
    pub weights: Vec<f64>,
    /// Raw tabulated values at the support points.
    pub values: Vec<f64>,
    /// Indices of the support points in the envelope's point list.
    pub indices: Vec<usize>,
    /// Weighted support combination; reproduces the query point.
    pub barycenter: Vec<f64>,
}

impl GeneratorWitness {
    fn from_parts(
        support: Vec<Vec<f64>>,
        weights: Vec<f64>,
        values: Vec<f64>,
        indices: Vec<usize>,
    ) -> Self {
        let dim = support[0].len();
        let mut barycenter = vec![0.0; dim];
        for (w, z) in weights.iter().zip(&support) {
            for (acc, v) in barycenter.iter_mut().zip(z) {
                *acc += w * v;
            }
        }
        GeneratorWitness {
            support,
            weights,
            values,
            indices,
            barycenter,
        }
    }

    fn singleton(point: Vec<f64>, value: f64, index: usize) -> Self {
        GeneratorWitness {
            barycenter: point.clone(),
            support: vec![point],
            weights: vec![1.0],
            values: vec![value],
            indices: vec![index],
        }
    }

    /// Weighted envelope value `sum_k alpha^k r(z^k)`.
    pub fn value(&self) -> f64 {
        dot(&self.weights, &self.values)
    }

    /// Checks the simplex and barycenter identities.
    pub fn validate(&self) -> Result<()> {
        let k = self.support.len();
        if k == 0 || self.weights.len() != k || self.values.len() != k || self.indices.len() != k {
            return Err(Error::invalid("witness field lengths disagree"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > EXACT_TOL * 10.0 {
            return Err(Error::invalid(format!(
                "witness weights sum to {sum}, not 1"
            )));
        }
        if self.weights.iter().any(|&w| w < -EXACT_TOL) {
            return Err(Error::invalid("witness weights must be nonnegative"));
        }
        let mut bary = vec![0.0; self.barycenter.len()];
        for (w, z) in self.weights.iter().zip(&self.support) {
            for (acc, v) in bary.iter_mut().zip(z) {
                *acc += w * v;
            }
        }
        if dist(&bary, &self.barycenter) > WITNESS_TOL {
            return Err(Error::invalid("witness barycenter is inconsistent"));
        }
        Ok(())
    }
}

/// Sorted lower convex hull of a one-dimensional point set.
#[derive(Debug, Clone)]
struct Hull1d {
    /// Strictly increasing coordinates of the hull breakpoints.
    xs: Vec<f64>,
    /// Envelope values at the breakpoints.
    vs: Vec<f64>,
    /// Index of each breakpoint in the envelope's point list.
    idx: Vec<usize>,
}

/// Convex envelope of a tabulated function over a finite point set.
#[derive(Debug, Clone)]
pub struct Envelope {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    dim: usize,
    hull: Option<Hull1d>,
}

impl Envelope {
    /// Builds the envelope of `values` over `points`.
    ///
    /// Duplicate points keep the smaller value (with a warning when the
    /// values disagree). For one-dimensional sets the lower hull is computed
    /// once by a monotone-chain scan.
    pub fn build(points: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("envelope needs at least one point"));
        }
        if points.len() != values.len() {
            return Err(Error::invalid("points and values must have equal length"));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::invalid("envelope points must have dimension >= 1"));
        }
        for (p, v) in points.iter().zip(values) {
            if p.len() != dim {
                return Err(Error::invalid("envelope points must share one dimension"));
            }
            if p.iter().any(|c| !c.is_finite()) || !v.is_finite() {
                return Err(Error::invalid("envelope data must be finite"));
            }
        }

        // Deduplicate, keeping the smaller value per point.
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
        for (p, &v) in points.iter().zip(values) {
            match kept.iter_mut().find(|(q, _)| linf_dist(p, q) <= EXACT_TOL) {
                Some((q, existing)) => {
                    if (v - *existing).abs() > EXACT_TOL {
                        log::warn!(
                            "duplicate envelope point {:?} with values {} and {}; keeping the smaller",
                            q,
                            existing,
                            v
                        );
                    }
                    *existing = existing.min(v);
                }
                None => kept.push((p.clone(), v)),
            }
        }
        let points: Vec<Vec<f64>> = kept.iter().map(|(p, _)| p.clone()).collect();
        let values: Vec<f64> = kept.iter().map(|(_, v)| *v).collect();

        let hull = if dim == 1 {
            Some(lower_hull_1d(&points, &values))
        } else {
            None
        };
        Ok(Envelope {
            points,
            values,
            dim,
            hull,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Deduplicated point list backing the envelope.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Tabulated values aligned with [`Envelope::points`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the stored point equal to `x` within 1e-12, if any.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| linf_dist(p, x) <= EXACT_TOL)
    }

    /// One-dimensional hull breakpoints: coordinates, envelope values, and
    /// indices into the point list. `None` for higher dimensions.
    pub fn hull_points_1d(&self) -> Option<(&[f64], &[f64], &[usize])> {
        self.hull
            .as_ref()
            .map(|h| (h.xs.as_slice(), h.vs.as_slice(), h.idx.as_slice()))
    }

    /// Envelope value and witness at `x`.
    ///
    /// `x` must lie in the convex hull of the point set; otherwise an error
    /// carrying the distance to the hull is returned. When `x` coincides
    /// with a hull vertex the witness is the singleton `{x}`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, GeneratorWitness)> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "query dimension {} does not match envelope dimension {}",
                x.len(),
                self.dim
            )));
        }
        if self.dim == 1 {
            self.eval_1d(x[0])
        } else {
            self.eval_lp(x)
        }
    }

    fn eval_1d(&self, x: f64) -> Result<(f64, GeneratorWitness)> {
        let hull = self.hull.as_ref().expect("1-d envelope carries a hull");
        let (lo, hi) = (hull.xs[0], *hull.xs.last().unwrap());
        let slack = WITNESS_TOL * (1.0 + x.abs());
        if x < lo - slack || x > hi + slack {
            let d = if x < lo { lo - x } else { x - hi };
            return Err(Error::invalid(format!(
                "query {x} lies outside the hull [{lo}, {hi}] (distance {d:.3e})"
            )));
        }
        let x = x.clamp(lo, hi);

        // Singleton witness when the query sits on a breakpoint.
        for (j, &bx) in hull.xs.iter().enumerate() {
            if (x - bx).abs() <= EXACT_TOL * (1.0 + bx.abs()) {
                let w = GeneratorWitness::singleton(vec![bx], hull.vs[j], hull.idx[j]);
                return Ok((hull.vs[j], w));
            }
        }

        let seg = hull.xs.partition_point(|&b| b <= x).min(hull.xs.len() - 1);
        let (j0, j1) = (seg - 1, seg);
        let (x0, x1) = (hull.xs[j0], hull.xs[j1]);
        let (v0, v1) = (hull.vs[j0], hull.vs[j1]);
        let t = (x - x0) / (x1 - x0);
        let value = v0 + t * (v1 - v0);
        let witness = GeneratorWitness::from_parts(
            vec![vec![x0], vec![x1]],
            vec![1.0 - t, t],
            vec![v0, v1],
            vec![hull.idx[j0], hull.idx[j1]],
        );
        Ok((value, witness))
    }

    fn eval_lp(&self, x: &[f64]) -> Result<(f64, GeneratorWitness)> {
        let n = self.points.len();
        // Rows: d barycenter constraints plus the simplex normalization.
        let mut a = vec![vec![0.0; n]; self.dim + 1];
        for (j, p) in self.points.iter().enumerate() {
            for (t, &coord) in p.iter().enumerate() {
                a[t][j] = coord;
            }
            a[self.dim][j] = 1.0;
        }
        let mut b = x.to_vec();
        b.push(1.0);
        match solve_equality_lp(&a, &b, &self.values)? {
            LpOutcome::Infeasible { residual } => {
                let d = self.distance_to_hull(x);
                Err(Error::invalid(format!(
                    "query point lies outside the hull (distance {d:.3e}, lp residual {residual:.1e})"
                )))
            }
            LpOutcome::Optimal(sol) => {
                let mut support = Vec::new();
                let mut weights = Vec::new();
                let mut values = Vec::new();
                let mut indices = Vec::new();
                for (j, &w) in sol.x.iter().enumerate() {
                    if w > EXACT_TOL {
                        support.push(self.points[j].clone());
                        weights.push(w);
                        values.push(self.values[j]);
                        indices.push(j);
                    }
                }
                if support.is_empty() {
                    return Err(Error::numerical("envelope LP returned an empty support"));
                }
                if support.len() == 1 {
                    weights[0] = 1.0;
                }
                let witness =
                    GeneratorWitness::from_parts(support, weights, values, indices);
                Ok((sol.objective, witness))
            }
        }
    }

    /// Euclidean distance from `x` to the convex hull of the point set,
    /// estimated by Frank-Wolfe on `min ||Z a - x||^2` over the simplex.
    fn distance_to_hull(&self, x: &[f64]) -> f64 {
        let n = self.points.len();
        let mut alpha = vec![0.0; n];
        alpha[0] = 1.0;
        let mut z = self.points[0].clone();
        for _ in 0..200 {
            let grad: Vec<f64> = z.iter().zip(x).map(|(zi, xi)| zi - xi).collect();
            let s = (0..n)
                .min_by(|&a, &b| {
                    dot(&grad, &self.points[a])
                        .partial_cmp(&dot(&grad, &self.points[b]))
                        .unwrap()
                })
                .unwrap();
            let dir: Vec<f64> = self.points[s].iter().zip(&z).map(|(p, zi)| p - zi).collect();
            let denom = dot(&dir, &dir);
            if denom <= 1e-30 {
                break;
            }
            let t = (-dot(&grad, &dir) / denom).clamp(0.0, 1.0);
            if t <= 0.0 {
                break;
            }
            for (zi, di) in z.iter_mut().zip(&dir) {
                *zi += t * di;
            }
            alpha.iter_mut().for_each(|a| *a *= 1.0 - t);
            alpha[s] += t;
        }
        dist(&z, x)
    }

    /// Writes one CSV row per stored point: coordinates, raw value, envelope
    /// value.
    pub fn write_debug_csv(&self, w: &mut impl Write) -> Result<()> {
        let coord_headers: Vec<String> = (0..self.dim).map(|t| format!("x{t}")).collect();
        writeln!(w, "{},raw_value,envelope_value", coord_headers.join(","))?;
        for (p, v) in self.points.iter().zip(&self.values) {
            let (env, _) = self.eval(p)?;
            let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{},{}", coords.join(","), v, env)?;
        }
        Ok(())
    }
}

/// Monotone-chain lower hull over sorted (coordinate, value) pairs.
fn lower_hull_1d(points: &[Vec<f64>], values: &[f64]) -> Hull1d {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].partial_cmp(&points[b][0]).unwrap());

    let mut stack: Vec<usize> = Vec::new();
    for &j in &order {
        while stack.len() >= 2 {
            let a = stack[stack.len() - 2];
            let b = stack[stack.len() - 1];
            let cross = (points[b][0] - points[a][0]) * (values[j] - values[a])
                - (points[j][0] - points[a][0]) * (values[b] - values[a]);
            if cross <= 0.0 {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(j);
    }
    Hull1d {
        xs: stack.iter().map(|&j| points[j][0]).collect(),
        vs: stack.iter().map(|&j| values[j]).collect(),
        idx: stack,
    }
}

/// Reduces a witness to at most `d + 1` support points while preserving the
/// barycenter and never increasing the weighted value.
///
/// Repeatedly finds an affine dependence among the support points and moves
/// the weights along it (in the value-nonincreasing direction) until one
/// weight hits zero.
pub fn caratheodory_reduce(witness: &GeneratorWitness) -> Result<GeneratorWitness> {
    let dim = witness.barycenter.len();
    witness.validate()?;

    let mut support = witness.support.clone();
    let mut weights = witness.weights.clone();
    let mut values = witness.values.clone();
    let mut indices = witness.indices.clone();

    // Drop zero-weight entries up front.
    prune_zeros(&mut support, &mut weights, &mut values, &mut indices);

    while support.len() > dim + 1 {
        let lambda = affine_dependence(&support)?;
        let lambda_r = dot(&lambda, &values);

        // Moving weights by -t * lambda changes the value by -t * lambda_r;
        // pick the sign that cannot increase the value.
        let mut t_plus = f64::INFINITY;
        let mut t_minus = f64::INFINITY;
        for (w, l) in weights.iter().zip(&lambda) {
            if *l > EXACT_TOL {
                t_plus = t_plus.min(w / l);
            } else if *l < -EXACT_TOL {
                t_minus = t_minus.min(w / -l);
            }
        }
        let t = if lambda_r >= 0.0 { t_plus } else { -t_minus };
        if !t.is_finite() {
            return Err(Error::numerical(
                "degenerate affine dependence during reduction",
            ));
        }
        for (w, l) in weights.iter_mut().zip(&lambda) {
            *w -= t * l;
            if *w < EXACT_TOL {
                *w = 0.0;
            }
        }
        let before = support.len();
        prune_zeros(&mut support, &mut weights, &mut values, &mut indices);
        if support.len() == before {
            return Err(Error::numerical(
                "reduction step failed to remove a support point",
            ));
        }
    }

    let reduced = GeneratorWitness::from_parts(support, weights, values, indices);
    if dist(&reduced.barycenter, &witness.barycenter) > WITNESS_TOL {
        return Err(Error::numerical("reduction perturbed the barycenter"));
    }
    Ok(reduced)
}

fn prune_zeros(
    support: &mut Vec<Vec<f64>>,
    weights: &mut Vec<f64>,
    values: &mut Vec<f64>,
    indices: &mut Vec<usize>,
) {
    let mut j = 0;
    while j < weights.len() {
        if weights[j] <= 0.0 {
            support.remove(j);
            weights.remove(j);
            values.remove(j);
            indices.remove(j);
        } else {
            j += 1;
        }
    }
}

/// Nonzero `lambda` with `sum_k lambda_k z_k = 0` and `sum_k lambda_k = 0`,
/// for `s > d + 1` points in dimension `d`.
fn affine_dependence(support: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = support[0].len();
    let s = support.len();
    let rows = dim + 1;
    let mut mat = vec![vec![0.0; s]; rows];
    for (j, z) in support.iter().enumerate() {
        for (t, &c) in z.iter().enumerate() {
            mat[t][j] = c;
        }
        mat[dim][j] = 1.0;
    }

    if let Some(lambda) = null_vector_elimination(&mat, s) {
        if residual(&mat, &lambda) <= WITNESS_TOL {
            return Ok(lambda);
        }
    }
    // Fallback: extract the null direction by projecting out a twice
    // re-orthogonalized row basis.
    if let Some(lambda) = null_vector_projection(&mat, s) {
        if residual(&mat, &lambda) <= WITNESS_TOL {
            return Ok(lambda);
        }
    }
    Err(Error::numerical(
        "could not find a reliable affine dependence among support points",
    ))
}

fn residual(mat: &[Vec<f64>], lambda: &[f64]) -> f64 {
    let scale = norm(lambda).max(1.0);
    mat.iter()
        .map(|row| dot(row, lambda).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Gaussian elimination with partial pivoting; returns a null vector with a
/// free column set to one.
fn null_vector_elimination(mat: &[Vec<f64>], cols: usize) -> Option<Vec<f64>> {
    let rows = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    let mut pivot_col_of_row: Vec<usize> = Vec::new();
    let mut is_pivot = vec![false; cols];
    let mut r = 0;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        let (best, mag) = (r..rows)
            .map(|i| (i, a[i][c].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if mag <= 1e-13 {
            continue;
        }
        a.swap(r, best);
        let p = a[r][c];
        for j in 0..cols {
            a[r][j] /= p;
        }
        for i in 0..rows {
            if i != r && a[i][c] != 0.0 {
                let f = a[i][c];
                for j in 0..cols {
                    a[i][j] -= f * a[r][j];
                }
            }
        }
        pivot_col_of_row.push(c);
        is_pivot[c] = true;
        r += 1;
    }
    let free = (0..cols).find(|&c| !is_pivot[c])?;
    let mut lambda = vec![0.0; cols];
    lambda[free] = 1.0;
    for (row, &pc) in pivot_col_of_row.iter().enumerate() {
        lambda[pc] = -a[row][free];
    }
    Some(lambda)
}

/// Null vector via projection against a modified-Gram-Schmidt row basis,
/// re-orthogonalized twice.
fn null_vector_projection(mat: &[Vec<f64>], cols: usize) -> Option<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for row in mat {
        let mut v = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..cols {
        let mut v = vec![0.0; cols];
        v[j] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = norm(&v);
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, v));
        }
    }
    let (n, mut v) = best?;
    if n <= 1e-10 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}
