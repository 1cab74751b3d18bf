//! Equilibrium quality measurement by exhaustive best response.
//!
//! Action sets are finite, so per-player best (and worst) responses come
//! from a full scan of the alternatives with the opponents frozen. The
//! additive gap is `f_i(x) - min_y f_i(y, x_-i)`; the relative gap divides
//! by the player's best-to-worst cost range, making the measure invariant
//! under per-player affine cost rescaling.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disagg::MixedProfile;
use crate::envelope::GeneratorWitness;
use crate::error::{Error, Result};
use crate::game::{aggregate_actions, AuxiliaryGame, Game, Profile};
use crate::linalg::dot;
use crate::seed::rng_from;

/// Best alternative for one player against a frozen opponent profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestResponse {
    pub index: usize,
    pub point: Vec<f64>,
    pub cost: f64,
}

/// Per-player gap data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerGap {
    pub player: usize,
    pub current_cost: f64,
    pub best_cost: f64,
    pub worst_cost: f64,
    pub best_point: Vec<f64>,
    /// `current_cost - best_cost`, always nonnegative.
    pub gap: f64,
    /// `gap / (worst - best)`, `0` for indifferent players.
    pub relative_gap: f64,
}

/// Equilibrium quality of a pure profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub players: Vec<PlayerGap>,
    /// `max_i gap_i`.
    pub additive_eps: f64,
    /// `max_i relative_gap_i`, in `[0, 1]`.
    pub relative_eps: f64,
    /// Theory bound supplied by the caller, for context.
    pub theory_bound: Option<f64>,
}

impl EquilibriumReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One CSV row per player.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "player,current,best,worst,gap,relative_gap")?;
        for p in &self.players {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.player, p.current_cost, p.best_cost, p.worst_cost, p.gap, p.relative_gap
            )?;
        }
        Ok(())
    }
}

/// Cost of every alternative of player `i` with opponents frozen at
/// `actions`; the per-candidate aggregate swaps the player's own term.
fn scan_player(game: &Game, i: usize, actions: &[Vec<f64>]) -> Vec<f64> {
    let n = game.n as f64;
    let base = aggregate_actions(&game.weights, actions, game.d);
    let a_i = game.weights[i];
    game.action_sets[i]
        .iter()
        .enumerate()
        .map(|(idx, y)| {
            let agg: Vec<f64> = base
                .iter()
                .zip(y.iter().zip(&actions[i]))
                .map(|(b, (yc, xc))| b + a_i * (yc - xc) / n)
                .collect();
            game.cost_with_aggregate(i, idx, &agg)
        })
        .collect()
}

/// Exhaustive best response of player `i` against `profile` (entry `i` is
/// ignored); ties go to the smaller index.
pub fn best_response(game: &Game, i: usize, profile: &Profile) -> Result<BestResponse> {
    profile.validate_against(game)?;
    let costs = scan_player(game, i, &profile.actions);
    let index = argmin(&costs);
    Ok(BestResponse {
        index,
        point: game.action_sets[i][index].clone(),
        cost: costs[index],
    })
}

fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = j;
        }
    }
    best
}

/// Full additive/relative gap report for a pure feasible profile.
pub fn additive_epsilon(game: &Game, profile: &Profile) -> Result<EquilibriumReport> {
    profile.validate_against(game)?;
    report_from_scan(game.n, profile, |i| {
        let costs = scan_player(game, i, &profile.actions);
        let current = game
            .action_index_of(i, &profile.actions[i])
            .expect("validated profile");
        (costs, current, game.action_sets[i].clone())
    })
}

/// Maximum relative gap of a pure feasible profile.
pub fn relative_epsilon(game: &Game, profile: &Profile) -> Result<f64> {
    Ok(additive_epsilon(game, profile)?.relative_eps)
}

/// Gap report measured in the auxiliary game (prices frozen at anchors).
pub fn additive_epsilon_aux(aux: &AuxiliaryGame, profile: &Profile) -> Result<EquilibriumReport> {
    let game = aux.game();
    profile.validate_against(game)?;
    report_from_scan(game.n, profile, |i| {
        let price = aux.price_at(i, &profile.actions);
        let costs: Vec<f64> = game.action_sets[i]
            .iter()
            .enumerate()
            .map(|(idx, y)| dot(&price, y) + game.r[i][idx])
            .collect();
        let current = game
            .action_index_of(i, &profile.actions[i])
            .expect("validated profile");
        (costs, current, game.action_sets[i].clone())
    })
}

fn report_from_scan(
    n: usize,
    _profile: &Profile,
    mut scan: impl FnMut(usize) -> (Vec<f64>, usize, Vec<Vec<f64>>),
) -> Result<EquilibriumReport> {
    let mut players = Vec::with_capacity(n);
    let mut additive: f64 = 0.0;
    let mut relative: f64 = 0.0;
    for i in 0..n {
        let (costs, current_idx, points) = scan(i);
        let best_idx = argmin(&costs);
        let best = costs[best_idx];
        let worst = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let current = costs[current_idx];
        let gap = current - best;
        let range = worst - best;
        let relative_gap = if range > 0.0 { gap / range } else { 0.0 };
        additive = additive.max(gap);
        relative = relative.max(relative_gap);
        players.push(PlayerGap {
            player: i,
            current_cost: current,
            best_cost: best,
            worst_cost: worst,
            best_point: points[best_idx].clone(),
            gap,
            relative_gap,
        });
    }
    Ok(EquilibriumReport {
        players,
        additive_eps: additive,
        relative_eps: relative,
        theory_bound: None,
    })
}

/// Gap report for a (possibly interior) solver iterate, measured against
/// the original costs: the player's own cost uses the envelope as the
/// extension of the tabulated local cost, while the alternatives range over
/// the finite action set. Negative gaps (an interior point can undercut
/// every vertex) are clamped to zero.
pub fn iterate_epsilon(aux: &AuxiliaryGame, actions: &[Vec<f64>]) -> Result<EquilibriumReport> {
    let game = aux.game();
    if actions.len() != game.n {
        return Err(Error::invalid("iterate has the wrong number of players"));
    }
    let base = aggregate_actions(&game.weights, actions, game.d);
    let mut players = Vec::with_capacity(game.n);
    let mut additive: f64 = 0.0;
    let mut relative: f64 = 0.0;
    for i in 0..game.n {
        let x_i = &actions[i];
        let local = aux.envelope(i).eval(x_i)?.0;
        let mut current = local;
        for t in 0..game.d {
            current += game.g[t].eval(base[t]) * x_i[t] + game.h[i].eval(base[t]);
        }
        let costs = scan_player(game, i, actions);
        let best_idx = argmin(&costs);
        let best = costs[best_idx];
        let worst = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gap = (current - best).max(0.0);
        let range = worst - best;
        let relative_gap = if range > 0.0 {
            (gap / range).min(1.0)
        } else {
            0.0
        };
        additive = additive.max(gap);
        relative = relative.max(relative_gap);
        players.push(PlayerGap {
            player: i,
            current_cost: current,
            best_cost: best,
            worst_cost: worst,
            best_point: game.action_sets[i][best_idx].clone(),
            gap,
            relative_gap,
        });
    }
    Ok(EquilibriumReport {
        players,
        additive_eps: additive,
        relative_eps: relative,
        theory_bound: None,
    })
}

/// Monte-Carlo estimate of the mixed-strategy equilibrium gap
/// `max_i max_y (E f_i(X) - E f_i(y, X_-i))`, with a 95% normal
/// half-width for the maximizing pair. Deviation costs reuse the same
/// opponent samples (common random numbers).
pub fn mixed_epsilon(
    game: &Game,
    mixed: &MixedProfile,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::invalid("mixed_epsilon needs at least 100 samples"));
    }
    if mixed.strategies.len() != game.n {
        return Err(Error::invalid("mixed profile size does not match the game"));
    }
    for (i, s) in mixed.strategies.iter().enumerate() {
        let total: f64 = s.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || s.probs.iter().any(|&p| p < -1e-12) {
            return Err(Error::invalid(format!(
                "player {i} mixed strategy is not a distribution"
            )));
        }
        if s.support.len() != s.probs.len() || s.support.is_empty() {
            return Err(Error::invalid(format!(
                "player {i} mixed strategy support/probability mismatch"
            )));
        }
    }

    // Sampled action index per (sample, player), one stream per player.
    let mut draws: Vec<Vec<usize>> = Vec::with_capacity(samples);
    let mut rngs: Vec<_> = (0..game.n)
        .map(|i| rng_from(seed, &[0x313D, i as u64]))
        .collect();
    for _ in 0..samples {
        draws.push(
            mixed
                .strategies
                .iter()
                .zip(&mut rngs)
                .map(|(s, rng)| crate::disagg::sample_index(&s.probs, rng.random()))
                .collect(),
        );
    }

    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_halfwidth = 0.0;
    let n = game.n as f64;
    for i in 0..game.n {
        // Per-sample own cost and per-candidate deviation cost.
        let mut diffs: Vec<Vec<f64>> =
            vec![Vec::with_capacity(samples); game.action_sets[i].len()];
        for draw in &draws {
            let actions: Vec<&[f64]> = draw
                .iter()
                .enumerate()
                .map(|(j, &l)| mixed.strategies[j].support[l].as_slice())
                .collect();
            let mut base = vec![0.0; game.d];
            for (j, x) in actions.iter().enumerate() {
                for (acc, c) in base.iter_mut().zip(x.iter()) {
                    *acc += game.weights[j] * c;
                }
            }
            base.iter_mut().for_each(|v| *v /= n);
            let own_idx = game
                .action_index_of(i, actions[i])
                .ok_or_else(|| Error::invalid("mixed support point outside action set"))?;
            let own = game.cost_with_aggregate(i, own_idx, &base);
            for (idx, y) in game.action_sets[i].iter().enumerate() {
                let agg: Vec<f64> = base
                    .iter()
                    .zip(y.iter().zip(actions[i].iter()))
                    .map(|(b, (yc, xc))| b + game.weights[i] * (yc - xc) / n)
                    .collect();
                diffs[idx].push(own - game.cost_with_aggregate(i, idx, &agg));
            }
        }
        for series in &diffs {
            let mean = series.iter().sum::<f64>() / samples as f64;
            if mean > worst {
                let var = series
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / (samples as f64 - 1.0);
                worst = mean;
                worst_halfwidth = 1.96 * (var / samples as f64).sqrt();
            }
        }
    }
    Ok((worst, worst_halfwidth))
}

/// Smallest stability level of `profile` with respect to `witnesses` in the
/// convexified auxiliary game: the largest envelope-cost increase when a
/// player moves to one of its own generator points.
pub fn stability_slack(
    aux: &AuxiliaryGame,
    profile: &Profile,
    witnesses: &[GeneratorWitness],
) -> Result<f64> {
    if witnesses.len() != aux.n() {
        return Err(Error::invalid("witness count does not match the game"));
    }
    let mut slack = f64::NEG_INFINITY;
    for (i, witness) in witnesses.iter().enumerate() {
        let here = aux.convexified_cost(i, &profile.actions[i], &profile.actions)?;
        for z in &witness.support {
            let there = aux.convexified_cost(i, z, &profile.actions)?;
            slack = slack.max(there - here);
        }
    }
    Ok(slack)
}
