//! Cyclic gradient-proximal solver for the convexified auxiliary game.
//!
//! One sweep updates every player in index order. Player `i` sees the price
//! at the mid-sweep aggregate (players before `i` already updated) and
//! solves a proximal subproblem over its hull:
//!
//! ```text
//! min_{x in conv X_i}  <price, x - x_prev> + (a_i L_g / 2n) ||x - x_prev||^2 + env_i(x)
//! ```
//!
//! In the witness parameterization `x = Z alpha` this is a convex QP over
//! the simplex, solved exactly in closed form for one-dimensional or
//! two-point sets and by away-step Frank-Wolfe otherwise. The sweep with the
//! smallest step norm certifies the returned iterate: it is an approximate
//! equilibrium of the convexified game at the level given by [`omega_bound`].

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{caratheodory_reduce, Envelope, GeneratorWitness};
use crate::error::{Error, Result};
use crate::game::{aggregate_actions, AuxiliaryGame, GameConstants, Profile};
use crate::linalg::{dist, dot};
use crate::seed::rng_from;

/// Iterations allowed to one Frank-Wolfe subproblem before giving up.
const MAX_INNER_ITERS: usize = 50_000;
/// Trajectory snapshots kept in the report.
const TRAJECTORY_SNAPSHOTS: usize = 32;

/// Initial profile selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Every player starts at its anchor point.
    Anchor,
    /// Every player starts at a seeded uniformly random vertex.
    UniformVertex,
    /// Start from a given (convexified or pure) profile.
    Provided { profile: Profile },
}

/// Solver configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Maximum number of outer sweeps (`K`).
    pub max_sweeps: usize,
    /// Early-stop threshold on the sweep step norm.
    pub step_tol: f64,
    /// First-order optimality gap required of each proximal subproblem.
    pub inner_tol: f64,
    /// Seed for randomized initialization.
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_sweeps: 100,
            step_tol: 1e-9,
            inner_tol: 1e-10,
            seed: 0,
            init: InitStrategy::Anchor,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be >= 1"));
        }
        if !(self.step_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// A thinned trajectory snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySnapshot {
    pub k: usize,
    pub profile: Profile,
}

/// Everything a solver run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Sweeps actually executed (`<= max_sweeps` under early stop).
    pub sweeps: usize,
    /// `step_norms[k - 1]` is the full-profile step norm of sweep `k`.
    pub step_norms: Vec<f64>,
    /// `potentials[k]` is the potential after sweep `k` (entry 0: initial).
    pub potentials: Vec<f64>,
    /// Sweep index with the smallest step norm, ties broken toward later
    /// sweeps.
    pub k_star: usize,
    pub step_norm_kstar: f64,
    /// The certified iterate.
    pub profile_kstar: Profile,
    /// Per-player envelope witnesses at the certified iterate.
    pub witnesses: Vec<GeneratorWitness>,
    pub final_profile: Profile,
    pub trajectory: Vec<TrajectorySnapshot>,
    /// Approximation level `omega(K, n)` for the executed sweep count.
    pub omega: f64,
    /// Realized stability level `eta(u_kstar) * delta`.
    pub eta_kstar: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SolveReport> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<SolveReport> {
        SolveReport::from_json(&std::fs::read_to_string(path)?)
    }

    /// Writes the step/potential trace as CSV columns `k,step_norm,potential`.
    pub fn write_trace_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "k,step_norm,potential")?;
        writeln!(w, "0,,{}", self.potentials[0])?;
        for (j, step) in self.step_norms.iter().enumerate() {
            writeln!(w, "{},{},{}", j + 1, step, self.potentials[j + 1])?;
        }
        Ok(())
    }
}

/// Potential of the convexified auxiliary game:
/// `sum_t G_t(aggregate_t) + sum_j (a_j / n) env_j(x_j)`, where each `G_t`
/// is the antiderivative of the price function normalized to vanish at the
/// low end of the aggregate range.
pub fn potential(aux: &AuxiliaryGame, actions: &[Vec<f64>]) -> Result<f64> {
    let game = aux.game();
    let consts = aux.constants();
    let agg = aggregate_actions(&game.weights, actions, game.d);
    let mut total = 0.0;
    for t in 0..game.d {
        total += game.g[t].integral_from(consts.d1, agg[t]);
    }
    let inv_n = 1.0 / game.n as f64;
    for (j, x) in actions.iter().enumerate() {
        total += game.weights[j] * inv_n * aux.envelope(j).eval(x)?.0;
    }
    Ok(total)
}

/// Approximation level reached after `k` sweeps with `n` players:
/// `sqrt(2 C L_g) (M/m) sqrt(n/k) + 2 L_g M delta / n`.
pub fn omega_bound(k: usize, n: usize, c: &GameConstants) -> f64 {
    let nf = n as f64;
    (2.0 * c.c * c.l_g).sqrt() * c.w_max / c.w_min * (nf / k as f64).sqrt()
        + 2.0 * c.l_g * c.w_max * c.delta / nf
}

/// Stability level certified by a step norm `u`:
/// `L_g M u / sqrt(n) + 2 L_g M delta / n`.
pub fn eta(u: f64, n: usize, c: &GameConstants) -> f64 {
    let nf = n as f64;
    c.l_g * c.w_max * u / nf.sqrt() + 2.0 * c.l_g * c.w_max * c.delta / nf
}

/// Additive equilibrium bound for the disaggregated profile built from an
/// iterate with step norm `u`. The iterate's equilibrium level and its
/// stability level each contribute `eta(u) * delta`; swapping to generator
/// points costs `2 L_g delta (sqrt(q) + 1) M delta / n`; and moving from the
/// auxiliary game back to the original adds `(L_h M delta + 2 L_g M
/// delta^2) / n`.
pub fn additive_bound_from_step(u: f64, c: &GameConstants) -> f64 {
    let nf = c.n as f64;
    2.0 * eta(u, c.n, c) * c.delta
        + 2.0 * c.l_g * c.w_max * c.delta * c.delta * ((c.q as f64).sqrt() + 2.0) / nf
        + c.l_h * c.w_max * c.delta / nf
}

/// Solves one proximal subproblem for player `i` at the given price vector.
///
/// Returns the minimizer over `conv X_i` together with a generator witness
/// of at most `d + 1` support points. The proximal coefficient is
/// `a_i L_g / n` with the globally derived `L_g`.
pub fn proximal_step(
    aux: &AuxiliaryGame,
    i: usize,
    price: &[f64],
    x_prev: &[f64],
    env: &Envelope,
    inner_tol: f64,
) -> Result<(Vec<f64>, GeneratorWitness)> {
    let consts = aux.constants();
    let curvature = aux.game().weights[i] * consts.l_g / consts.n as f64;
    prox_over_envelope(price, x_prev, env, curvature, inner_tol)
}

fn prox_over_envelope(
    price: &[f64],
    x_prev: &[f64],
    env: &Envelope,
    curvature: f64,
    inner_tol: f64,
) -> Result<(Vec<f64>, GeneratorWitness)> {
    let points = env.points();
    let values = env.values();

    if points.len() == 1 {
        let witness = env.eval(&points[0])?.1;
        return Ok((points[0].clone(), witness));
    }

    // Zero curvature makes the objective linear over the hull, so some
    // vertex is optimal.
    if curvature <= 0.0 {
        let best = (0..points.len())
            .min_by(|&a, &b| {
                let va = dot(price, &points[a]) + values[a];
                let vb = dot(price, &points[b]) + values[b];
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        let witness = env.eval(&points[best])?.1;
        return Ok((points[best].clone(), witness));
    }

    if points.len() == 2 {
        return prox_two_points(price, x_prev, env, curvature);
    }
    if env.dim() == 1 {
        return prox_scan_1d(price[0], x_prev[0], env, curvature);
    }
    prox_frank_wolfe(price, x_prev, env, curvature, inner_tol)
}

/// Exact minimization along the chord between two points.
fn prox_two_points(
    price: &[f64],
    x_prev: &[f64],
    env: &Envelope,
    curvature: f64,
) -> Result<(Vec<f64>, GeneratorWitness)> {
    let (z0, z1) = (&env.points()[0], &env.points()[1]);
    let (r0, r1) = (env.values()[0], env.values()[1]);
    let dz: Vec<f64> = z1.iter().zip(z0).map(|(b, a)| b - a).collect();
    let rel: Vec<f64> = z0.iter().zip(x_prev).map(|(a, y)| a - y).collect();
    let quad = curvature * dot(&dz, &dz);
    let lin = dot(price, &dz) + curvature * dot(&rel, &dz) + (r1 - r0);
    let t = if quad > 0.0 {
        (-lin / quad).clamp(0.0, 1.0)
    } else if lin >= 0.0 {
        0.0
    } else {
        1.0
    };
    if t <= 1e-12 {
        return Ok((z0.clone(), env.eval(z0)?.1));
    }
    if t >= 1.0 - 1e-12 {
        return Ok((z1.clone(), env.eval(z1)?.1));
    }
    let x: Vec<f64> = z0.iter().zip(&dz).map(|(a, d)| a + t * d).collect();
    let witness = GeneratorWitness {
        barycenter: x.clone(),
        support: vec![z0.clone(), z1.clone()],
        weights: vec![1.0 - t, t],
        values: vec![r0, r1],
        indices: vec![0, 1],
    };
    Ok((x, witness))
}

/// Exact segment-by-segment minimization over a one-dimensional hull.
fn prox_scan_1d(
    price: f64,
    x_prev: f64,
    env: &Envelope,
    curvature: f64,
) -> Result<(Vec<f64>, GeneratorWitness)> {
    let (xs, vs, _) = env
        .hull_points_1d()
        .expect("one-dimensional envelope carries a hull");
    let objective = |x: f64, local: f64| {
        price * (x - x_prev) + 0.5 * curvature * (x - x_prev) * (x - x_prev) + local
    };
    let mut best_x = xs[0];
    let mut best_val = objective(xs[0], vs[0]);
    for j in 0..xs.len().saturating_sub(1) {
        let (x0, x1) = (xs[j], xs[j + 1]);
        let slope = (vs[j + 1] - vs[j]) / (x1 - x0);
        let cand = (x_prev - (price + slope) / curvature).clamp(x0, x1);
        let local = vs[j] + slope * (cand - x0);
        let val = objective(cand, local);
        if val < best_val {
            best_val = val;
            best_x = cand;
        }
    }
    let (_, witness) = env.eval(&[best_x])?;
    Ok((vec![best_x], witness))
}

/// Away-step Frank-Wolfe over the simplex parameterization.
fn prox_frank_wolfe(
    price: &[f64],
    x_prev: &[f64],
    env: &Envelope,
    curvature: f64,
    inner_tol: f64,
) -> Result<(Vec<f64>, GeneratorWitness)> {
    let points = env.points();
    let values = env.values();
    let n_pts = points.len();
    let d = env.dim();

    // Start at the best single vertex.
    let vertex_obj = |k: usize| {
        dot(price, &points[k]) + 0.5 * curvature * dist(&points[k], x_prev).powi(2) + values[k]
    };
    let start = (0..n_pts)
        .min_by(|&a, &b| vertex_obj(a).partial_cmp(&vertex_obj(b)).unwrap())
        .unwrap();
    let mut alpha = vec![0.0; n_pts];
    alpha[start] = 1.0;
    let mut w = points[start].clone();

    let mut grad = vec![0.0; n_pts];
    let mut gap = f64::INFINITY;
    for iter in 0..MAX_INNER_ITERS {
        // grad_k = <price + curvature (w - x_prev), z_k> + r_k
        let gvec: Vec<f64> = price
            .iter()
            .zip(w.iter().zip(x_prev))
            .map(|(p, (wi, yi))| p + curvature * (wi - yi))
            .collect();
        for (k, slot) in grad.iter_mut().enumerate() {
            *slot = dot(&gvec, &points[k]) + values[k];
        }
        let grad_dot_alpha = dot(&grad, &alpha);
        let s = (0..n_pts)
            .min_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap())
            .unwrap();
        gap = grad_dot_alpha - grad[s];
        if gap <= inner_tol {
            break;
        }
        let v = (0..n_pts)
            .filter(|&k| alpha[k] > 0.0)
            .max_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap())
            .unwrap();
        let away_score = grad[v] - grad_dot_alpha;

        if gap >= away_score {
            // Toward-vertex step, t in [0, 1].
            let dir: Vec<f64> = points[s].iter().zip(&w).map(|(p, wi)| p - wi).collect();
            let quad = curvature * dot(&dir, &dir);
            let t = if quad > 0.0 { (gap / quad).min(1.0) } else { 1.0 };
            for a in alpha.iter_mut() {
                *a *= 1.0 - t;
            }
            alpha[s] += t;
            for (wi, di) in w.iter_mut().zip(&dir) {
                *wi += t * di;
            }
        } else {
            // Away step from the worst active vertex, t in [0, a_v/(1-a_v)].
            let t_max = alpha[v] / (1.0 - alpha[v]).max(1e-300);
            let dir: Vec<f64> = w.iter().zip(&points[v]).map(|(wi, p)| wi - p).collect();
            let quad = curvature * dot(&dir, &dir);
            let t = if quad > 0.0 {
                (away_score / quad).min(t_max)
            } else {
                t_max
            };
            for a in alpha.iter_mut() {
                *a *= 1.0 + t;
            }
            alpha[v] -= t;
            if alpha[v] < 1e-15 {
                alpha[v] = 0.0;
            }
            for (wi, di) in w.iter_mut().zip(&dir) {
                *wi += t * di;
            }
        }
        // Resynchronize the barycenter periodically against drift.
        if iter % 64 == 63 {
            w = vec![0.0; d];
            for (a, p) in alpha.iter().zip(points) {
                for (wi, c) in w.iter_mut().zip(p) {
                    *wi += a * c;
                }
            }
        }
    }
    if gap > inner_tol {
        return Err(Error::numerical(format!(
            "proximal subproblem stalled with optimality gap {gap:.3e} (tolerance {inner_tol:.1e})"
        )));
    }

    let mut support = Vec::new();
    let mut weights = Vec::new();
    let mut vals = Vec::new();
    let mut indices = Vec::new();
    for (k, &a) in alpha.iter().enumerate() {
        if a > 1e-15 {
            support.push(points[k].clone());
            weights.push(a);
            vals.push(values[k]);
            indices.push(k);
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|a| *a /= sum);
    let mut barycenter = vec![0.0; d];
    for (a, p) in weights.iter().zip(&support) {
        for (bi, c) in barycenter.iter_mut().zip(p) {
            *bi += a * c;
        }
    }
    let witness = caratheodory_reduce(&GeneratorWitness {
        support,
        weights,
        values: vals,
        indices,
        barycenter: barycenter.clone(),
    })?;
    Ok((barycenter, witness))
}

/// Runs the solver; see [`run_observed`] for a per-sweep callback.
pub fn run(aux: &AuxiliaryGame, cfg: &SolverConfig) -> Result<SolveReport> {
    run_observed(aux, cfg, |_, _, _| {})
}

/// Runs cyclic sweeps, invoking `observer(k, actions, step_norm)` after each
/// sweep.
pub fn run_observed(
    aux: &AuxiliaryGame,
    cfg: &SolverConfig,
    mut observer: impl FnMut(usize, &[Vec<f64>], f64),
) -> Result<SolveReport> {
    cfg.validate()?;
    let game = aux.game();
    let consts = aux.constants();
    let n = game.n;

    let mut current: Vec<Vec<f64>> = match &cfg.init {
        InitStrategy::Anchor => (0..n).map(|i| game.anchor_point(i).to_vec()).collect(),
        InitStrategy::UniformVertex => {
            let mut rng = rng_from(cfg.seed, &[0x1517]);
            (0..n)
                .map(|i| {
                    let set = &game.action_sets[i];
                    set[rng.random_range(0..set.len())].clone()
                })
                .collect()
        }
        InitStrategy::Provided { profile } => {
            profile.validate_against(game)?;
            for (i, x) in profile.actions.iter().enumerate() {
                aux.envelope(i)
                    .eval(x)
                    .map_err(|e| Error::invalid(format!("provided profile, player {i}: {e}")))?;
            }
            profile.actions.clone()
        }
    };

    // Running weighted sum a_j x_j; dividing by n on use gives the aggregate.
    let full_sum = |actions: &[Vec<f64>]| {
        let mut s = vec![0.0; game.d];
        for (a, x) in game.weights.iter().zip(actions) {
            for (acc, c) in s.iter_mut().zip(x) {
                *acc += a * c;
            }
        }
        s
    };
    let mut weighted_sum = full_sum(&current);

    let mut step_norms = Vec::with_capacity(cfg.max_sweeps);
    let mut potentials = Vec::with_capacity(cfg.max_sweeps + 1);
    potentials.push(potential(aux, &current)?);

    let stride = cfg.max_sweeps.div_ceil(TRAJECTORY_SNAPSHOTS).max(1);
    let mut trajectory = vec![TrajectorySnapshot {
        k: 0,
        profile: Profile::convexified(current.clone()),
    }];

    let mut k_star = 0usize;
    let mut best_step = f64::INFINITY;
    let mut best_profile = current.clone();

    let inv_n = 1.0 / n as f64;
    let mut executed = 0;
    for k in 1..=cfg.max_sweeps {
        let prev = current.clone();
        for i in 0..n {
            let price: Vec<f64> = (0..game.d)
                .map(|t| game.g[t].eval(weighted_sum[t] * inv_n))
                .collect();
            let (x_new, _) =
                proximal_step(aux, i, &price, &current[i], aux.envelope(i), cfg.inner_tol)
                    .map_err(|e| Error::numerical(format!("sweep {k}, player {i}: {e}")))?;
            let a_i = game.weights[i];
            for (acc, (new, old)) in weighted_sum.iter_mut().zip(x_new.iter().zip(&current[i])) {
                *acc += a_i * (new - old);
            }
            current[i] = x_new;
        }
        weighted_sum = full_sum(&current);

        let step = current
            .iter()
            .zip(&prev)
            .map(|(a, b)| dist(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        step_norms.push(step);
        potentials.push(potential(aux, &current)?);
        if step <= best_step {
            best_step = step;
            k_star = k;
            best_profile = current.clone();
        }
        if k % stride == 0 {
            trajectory.push(TrajectorySnapshot {
                k,
                profile: Profile::convexified(current.clone()),
            });
        }
        observer(k, &current, step);
        executed = k;
        if step <= cfg.step_tol {
            break;
        }
    }

    let witnesses = best_profile
        .iter()
        .enumerate()
        .map(|(i, x)| Ok(aux.envelope(i).eval(x)?.1))
        .collect::<Result<Vec<_>>>()?;

    Ok(SolveReport {
        sweeps: executed,
        omega: omega_bound(executed, n, consts),
        eta_kstar: eta(best_step, n, consts) * consts.delta,
        step_norms,
        potentials,
        k_star,
        step_norm_kstar: best_step,
        profile_kstar: Profile::convexified(best_profile),
        witnesses,
        final_profile: Profile::convexified(current),
        trajectory,
    })
}
