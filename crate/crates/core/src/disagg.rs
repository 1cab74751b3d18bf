//! Recovering feasible strategies from a convexified profile.
//!
//! Given per-player generator witnesses whose barycenters form the
//! convexified profile, [`sf_disaggregate`] picks one generator point per
//! player while moving the weighted aggregate by at most
//! `sqrt(q) * M * delta`:
//!
//! 1. purification pivots the stacked witness weights along null-space
//!    directions of the linear system {per-player simplex, fixed weighted
//!    aggregate} until a vertex is reached, leaving at most `q` players with
//!    more than one support point;
//! 2. each remaining fractional player rounds to its heaviest support point;
//! 3. a single polish pass over the fractional players accepts any generator
//!    swap that strictly shrinks the aggregate deviation.
//!
//! [`randomized_disaggregate`] instead turns each witness into a mixed
//! strategy (probabilities equal to the weights) and samples it, which keeps
//! the aggregate unbiased with an `O(sqrt(n))` deviation in expectation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::GeneratorWitness;
use crate::error::{Error, Result};
use crate::game::{Feasibility, GameConstants, Profile};
use crate::linalg::{axpy, dist, norm, sub};
use crate::seed::rng_from;

/// Per-player discrete distributions over generator points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedProfile {
    pub strategies: Vec<MixedStrategy>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

/// Outcome of the deterministic Shapley-Folkman disaggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisaggregationResult {
    /// Feasible pure profile: one generator point per player.
    pub profile: Profile,
    /// `|| sum_i a_i x_i - sum_i a_i x_tilde_i ||`.
    pub aggregate_deviation: f64,
    /// Players that still had two or more support points after
    /// purification; at most `q` of them.
    pub fractional_players: Vec<usize>,
    /// The guaranteed ceiling `sqrt(q) * M * delta`.
    pub bound: f64,
}

impl DisaggregationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Working copy of one player's witness during purification.
struct SupportState {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SupportState {
    fn active(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&l| self.weights[l] > 0.0)
            .collect()
    }

    fn barycenter(&self, d: usize) -> Vec<f64> {
        let mut b = vec![0.0; d];
        for (w, z) in self.weights.iter().zip(&self.points) {
            axpy(&mut b, *w, z);
        }
        b
    }
}

/// Disaggregates `x_tilde` into a pure profile supported on the witnesses'
/// generator points.
pub fn sf_disaggregate(
    x_tilde: &Profile,
    witnesses: &[GeneratorWitness],
    weights: &[f64],
    constants: &GameConstants,
) -> Result<DisaggregationResult> {
    let n = witnesses.len();
    let d = constants.d;
    let q = constants.q;
    if x_tilde.actions.len() != n || weights.len() != n {
        return Err(Error::invalid("profile, witnesses, and weights disagree on n"));
    }
    for (i, (w, x)) in witnesses.iter().zip(&x_tilde.actions).enumerate() {
        w.validate()?;
        if dist(&w.barycenter, x) > 1e-9 {
            return Err(Error::invalid(format!(
                "witness barycenter of player {i} does not reproduce its profile point"
            )));
        }
    }

    let mut states: Vec<SupportState> = witnesses
        .iter()
        .map(|w| SupportState {
            points: w.support.clone(),
            weights: w.weights.clone(),
        })
        .collect();

    // Target weighted aggregate (not divided by n).
    let mut target = vec![0.0; d];
    for (a, x) in weights.iter().zip(&x_tilde.actions) {
        axpy(&mut target, *a, x);
    }

    purify(&mut states, weights, q, d, &target)?;

    let fractional: Vec<usize> = (0..n)
        .filter(|&i| states[i].active().len() >= 2)
        .collect();

    // Round: integral players take their unique point; fractional players
    // take the heaviest one (ties: smaller norm, then smaller index).
    let mut chosen_points: Vec<Vec<f64>> = states
        .iter()
        .map(|state| {
            let active = state.active();
            let pick = *active
                .iter()
                .max_by(|&&a, &&b| {
                    let wa = state.weights[a];
                    let wb = state.weights[b];
                    wa.partial_cmp(&wb)
                        .unwrap()
                        .then(
                            norm(&state.points[b])
                                .partial_cmp(&norm(&state.points[a]))
                                .unwrap(),
                        )
                        .then(b.cmp(&a))
                })
                .unwrap();
            state.points[pick].clone()
        })
        .collect();

    let deviation_of = |picks: &[Vec<f64>]| {
        let mut dev = target.clone();
        for (pick, &a) in picks.iter().zip(weights) {
            axpy(&mut dev, -a, pick);
        }
        dev
    };
    let mut dev = deviation_of(&chosen_points);

    // Polish: one pass over fractional players, accepting strict decreases.
    // The search covers the original generator points, including ones
    // purification zeroed out.
    for &i in &fractional {
        let mut best_point: Option<Vec<f64>> = None;
        let mut best_norm = norm(&dev);
        for z in &witnesses[i].support {
            let mut cand = dev.clone();
            axpy(&mut cand, weights[i], &chosen_points[i]);
            axpy(&mut cand, -weights[i], z);
            let cn = norm(&cand);
            if cn < best_norm {
                best_norm = cn;
                best_point = Some(z.clone());
            }
        }
        if let Some(z) = best_point {
            axpy(&mut dev, weights[i], &chosen_points[i]);
            axpy(&mut dev, -weights[i], &z);
            chosen_points[i] = z;
        }
    }

    let bound = (q as f64).sqrt() * constants.w_max * constants.delta;

    // Backstop: enumerate the fractional players' purified supports when the
    // rounding missed the guaranteed ceiling (the enumeration minimum always
    // meets it because the purified weights average to the target).
    if norm(&dev) > bound + 1e-12 {
        let product: usize = fractional
            .iter()
            .map(|&i| states[i].active().len())
            .product();
        if product > 0 && product <= 1 << 16 {
            enumerate_fractional(&states, weights, &fractional, &target, &mut chosen_points);
            dev = deviation_of(&chosen_points);
        }
    }

    let profile = Profile {
        actions: chosen_points,
        feasibility: Feasibility::Nonconvex,
    };
    Ok(DisaggregationResult {
        profile,
        aggregate_deviation: norm(&dev),
        fractional_players: fractional,
        bound,
    })
}

/// Pivots the stacked weights to a vertex of {per-player simplex, fixed
/// weighted aggregate}. Any `q + 1` within-player difference columns are
/// linearly dependent in `R^q`, so each pivot zeroes at least one weight
/// among the first `q + 1` extra columns; a cursor skips the growing
/// integral prefix (a pivot never adds support, so integral players stay
/// integral).
fn purify(
    states: &mut [SupportState],
    weights: &[f64],
    q: usize,
    d: usize,
    target: &[f64],
) -> Result<()> {
    let mut perturbed = false;
    let mut cursor = 0usize;
    loop {
        // Gather up to q + 1 extra columns: (player, slot, base slot).
        let mut extras: Vec<(usize, usize, usize)> = Vec::with_capacity(q + 1);
        let mut prefix_integral = true;
        let mut i = cursor;
        while i < states.len() && extras.len() <= q {
            let active = states[i].active();
            if active.len() >= 2 {
                prefix_integral = false;
                for &l in &active[1..] {
                    extras.push((i, l, active[0]));
                    if extras.len() > q {
                        break;
                    }
                }
            } else if prefix_integral {
                cursor = i + 1;
            }
            i += 1;
        }
        if extras.is_empty() {
            break;
        }
        let cols: Vec<Vec<f64>> = extras
            .iter()
            .map(|&(i, l, base)| {
                let mut col = sub(&states[i].points[l], &states[i].points[base]);
                col.iter_mut().for_each(|c| *c *= weights[i]);
                col
            })
            .collect();
        let Some(beta) = null_of_columns(&cols, d) else {
            if extras.len() <= q {
                // The remaining columns are independent: vertex reached.
                break;
            }
            // q + 1 columns in R^q cannot be independent; this is numerical
            // degeneracy. Perturb once and retry.
            if perturbed {
                return Err(Error::numerical(
                    "purification could not find a null direction",
                ));
            }
            perturb(states);
            perturbed = true;
            continue;
        };
        // The direction must keep the weighted aggregate fixed.
        let mut resid = vec![0.0; d];
        for (col, b) in cols.iter().zip(&beta) {
            axpy(&mut resid, *b, col);
        }
        let scale = beta.iter().fold(0.0f64, |m, b| m.max(b.abs())).max(1.0);
        if norm(&resid) > 1e-9 * scale {
            if perturbed {
                return Err(Error::numerical(
                    "purification null direction is unreliable",
                ));
            }
            perturb(states);
            perturbed = true;
            continue;
        }

        // Per-(player, slot) direction with zero per-player sums, sparse
        // over the players appearing in the extras.
        let mut involved: Vec<usize> = extras.iter().map(|&(i, _, _)| i).collect();
        involved.sort_unstable();
        involved.dedup();
        let mut delta: Vec<Vec<f64>> = involved
            .iter()
            .map(|&i| vec![0.0; states[i].weights.len()])
            .collect();
        for (&(i, l, base), &b) in extras.iter().zip(&beta) {
            let slot = involved.binary_search(&i).unwrap();
            delta[slot][l] += b;
            delta[slot][base] -= b;
        }
        // Largest step keeping all weights nonnegative.
        let mut t = f64::INFINITY;
        for (&i, drow) in involved.iter().zip(&delta) {
            for (w, dl) in states[i].weights.iter().zip(drow) {
                if *dl < 0.0 && *w > 0.0 {
                    t = t.min(w / -dl);
                }
            }
        }
        if !t.is_finite() || t <= 0.0 {
            if perturbed {
                return Err(Error::numerical("purification pivot stalled"));
            }
            perturb(states);
            perturbed = true;
            continue;
        }
        let mut removed = false;
        for (&i, drow) in involved.iter().zip(&delta) {
            for (w, dl) in states[i].weights.iter_mut().zip(drow) {
                if *dl == 0.0 {
                    continue;
                }
                let before = *w;
                *w += t * dl;
                if *w <= 1e-13 {
                    *w = 0.0;
                    if before > 0.0 {
                        removed = true;
                    }
                }
            }
        }
        if !removed {
            return Err(Error::numerical("purification pivot removed no weight"));
        }
    }
    // Full aggregate invariant after all pivots.
    let mut agg = vec![0.0; d];
    for (state, &a) in states.iter().zip(weights) {
        axpy(&mut agg, a, &state.barycenter(d));
    }
    if dist(&agg, target) > 1e-9 * (1.0 + norm(target)) {
        return Err(Error::numerical(
            "purification drifted off the target aggregate",
        ));
    }
    Ok(())
}

/// Null vector of up to `q + 1` columns in `R^q` by Gaussian elimination.
fn null_of_columns(cols: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    let m = cols.len();
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|t| cols.iter().map(|c| c[t]).collect())
        .collect();
    let mut pivot_cols: Vec<(usize, usize)> = Vec::new(); // (row, col)
    let mut is_pivot = vec![false; m];
    let mut r = 0;
    for c in 0..m {
        if r >= d {
            break;
        }
        let best = (r..d).max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap())?;
        if a[best][c].abs() <= 1e-12 {
            continue;
        }
        a.swap(r, best);
        let p = a[r][c];
        for v in a[r].iter_mut() {
            *v /= p;
        }
        for i in 0..d {
            if i != r && a[i][c] != 0.0 {
                let f = a[i][c];
                for j in 0..m {
                    a[i][j] -= f * a[r][j];
                }
            }
        }
        pivot_cols.push((r, c));
        is_pivot[c] = true;
        r += 1;
    }
    let free = (0..m).find(|&c| !is_pivot[c])?;
    let mut beta = vec![0.0; m];
    beta[free] = 1.0;
    for &(row, col) in &pivot_cols {
        beta[col] = -a[row][free];
    }
    Some(beta)
}

/// Deterministic tiny perturbation used to break numerical degeneracy.
fn perturb(states: &mut [SupportState]) {
    for (i, state) in states.iter_mut().enumerate() {
        let active = state.active();
        if active.len() < 2 {
            continue;
        }
        let eps = 1e-13;
        let k = active.len() as f64;
        for (j, &l) in active.iter().enumerate() {
            state.weights[l] += eps * (j as f64 - (k - 1.0) / 2.0) * ((i % 7) as f64 + 1.0);
        }
        let sum: f64 = active.iter().map(|&l| state.weights[l]).sum();
        for &l in &active {
            state.weights[l] /= sum;
        }
    }
}

/// Exhaustive search over the fractional players' active support products.
fn enumerate_fractional(
    states: &[SupportState],
    weights: &[f64],
    fractional: &[usize],
    target: &[f64],
    chosen: &mut [Vec<f64>],
) {
    let mut base_dev = target.to_vec();
    for (i, pick) in chosen.iter().enumerate() {
        if !fractional.contains(&i) {
            axpy(&mut base_dev, -weights[i], pick);
        }
    }
    let supports: Vec<Vec<usize>> = fractional.iter().map(|&i| states[i].active()).collect();
    let mut counter = vec![0usize; fractional.len()];
    let mut best_norm = f64::INFINITY;
    let mut best = counter.clone();
    loop {
        let mut dev = base_dev.clone();
        for ((&i, slots), &c) in fractional.iter().zip(&supports).zip(&counter) {
            axpy(&mut dev, -weights[i], &states[i].points[slots[c]]);
        }
        let n = norm(&dev);
        if n < best_norm {
            best_norm = n;
            best = counter.clone();
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == counter.len() {
                for ((&i, slots), &c) in fractional.iter().zip(&supports).zip(&best) {
                    chosen[i] = states[i].points[slots[c]].clone();
                }
                return;
            }
            counter[pos] += 1;
            if counter[pos] < supports[pos].len() {
                break;
            }
            counter[pos] = 0;
            pos += 1;
        }
    }
}

/// Builds the mixed profile whose probabilities are the witness weights and
/// draws one independent sample per player.
pub fn randomized_disaggregate(
    witnesses: &[GeneratorWitness],
    seed: u64,
) -> (MixedProfile, Profile) {
    let strategies: Vec<MixedStrategy> = witnesses
        .iter()
        .map(|w| MixedStrategy {
            support: w.support.clone(),
            probs: w.weights.clone(),
        })
        .collect();
    let actions: Vec<Vec<f64>> = strategies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng_from(seed, &[0xD15A, i as u64]);
            let u: f64 = rng.random();
            s.support[sample_index(&s.probs, u)].clone()
        })
        .collect();
    (
        MixedProfile { strategies },
        Profile {
            actions,
            feasibility: Feasibility::Nonconvex,
        },
    )
}

/// Index of the cumulative-probability cell containing `u`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (l, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    probs.len() - 1
}
