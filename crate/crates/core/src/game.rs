//! Congestion-type sum-aggregative game instances.
//!
//! A game couples `n` players through the weighted average of their actions:
//! player `i` pays `<g(u), x_i> + h_i(u) + r_i(x_i)` where
//! `u = (1/n) sum_j a_j x_j`, `g` applies one scalar price function per
//! coordinate, `h_i` is a coordinate-separable offset cost, and `r_i` is a
//! local cost tabulated on the player's finite action set.
//!
//! The auxiliary game freezes each player's own contribution to the price at
//! an anchor point, which makes the per-player cost a linear term plus the
//! local cost — the form the convexification and the solver work on.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::linalg::{dist, dot, linf_dist};

/// Matching tolerance for "this point is a member of the action set".
pub const ACTION_MATCH_TOL: f64 = 1e-12;

/// Whether a profile's points are action-set members or hull points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feasibility {
    /// Every `x_i` is an element of `X_i`.
    Nonconvex,
    /// Every `x_i` lies in the convex hull of `X_i`.
    Convexified,
}

/// A full action profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile {
    pub actions: Vec<Vec<f64>>,
    pub feasibility: Feasibility,
}

impl Profile {
    pub fn nonconvex(actions: Vec<Vec<f64>>) -> Self {
        Profile {
            actions,
            feasibility: Feasibility::Nonconvex,
        }
    }

    pub fn convexified(actions: Vec<Vec<f64>>) -> Self {
        Profile {
            actions,
            feasibility: Feasibility::Convexified,
        }
    }

    /// Checks length, dimension, and (for nonconvex profiles) membership of
    /// every point in its action set.
    pub fn validate_against(&self, game: &Game) -> Result<()> {
        if self.actions.len() != game.n {
            return Err(Error::invalid(format!(
                "profile has {} actions for {} players",
                self.actions.len(),
                game.n
            )));
        }
        for (i, x) in self.actions.iter().enumerate() {
            if x.len() != game.d {
                return Err(Error::invalid(format!(
                    "player {i} action has dimension {}, expected {}",
                    x.len(),
                    game.d
                )));
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("player {i} action is not finite")));
            }
            if self.feasibility == Feasibility::Nonconvex && game.action_index_of(i, x).is_none() {
                return Err(Error::invalid(format!(
                    "player {i} action {x:?} is not a member of its action set"
                )));
            }
        }
        Ok(())
    }
}

/// A congestion-type game instance. This struct is the canonical JSON
/// interchange document for the whole toolkit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Game {
    /// Player count.
    pub n: usize,
    /// Action dimension.
    pub d: usize,
    /// Aggregate dimension; equals `d` for this game class. Serialized for
    /// traceability, defaulted to `d` when absent.
    #[serde(default)]
    pub q: usize,
    /// Positive player weights `a_1..a_n`.
    pub weights: Vec<f64>,
    /// Finite action set per player: a list of points in `R^d`.
    pub action_sets: Vec<Vec<Vec<f64>>>,
    /// Price function per coordinate; must be nondecreasing on the aggregate
    /// range.
    pub g: Vec<FunctionSpec>,
    /// Per-player offset cost, applied to each aggregate coordinate and
    /// summed.
    pub h: Vec<FunctionSpec>,
    /// Local cost table per player: one value per action point.
    pub r: Vec<Vec<f64>>,
    /// Anchor index into each player's action set (the frozen own
    /// contribution in the auxiliary game).
    pub anchors: Vec<usize>,
}

/// Constants derived from a validated game.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GameConstants {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    /// Smallest player weight (`m`).
    pub w_min: f64,
    /// Largest player weight (`M`).
    pub w_max: f64,
    /// Bound on both action norms and action-set diameters.
    pub delta: f64,
    /// Largest per-coordinate price Lipschitz constant on `[d1, d2]`.
    pub l_g: f64,
    /// Largest offset-cost Lipschitz constant on `[d1, d2]^d` (per-coordinate
    /// constant times `sqrt(d)` for the separable form used here).
    pub l_h: f64,
    /// Bound on `|r_i|` over all tabulated values.
    pub b_r: f64,
    /// Bound on `|g_t|` over `[d1, d2]`.
    pub b_g: f64,
    /// Smallest reachable aggregate coordinate.
    pub d1: f64,
    /// Largest reachable aggregate coordinate.
    pub d2: f64,
    /// Step-budget constant `(d * delta * l_g + 2 * b_r) * w_max`.
    pub c: f64,
}

impl Game {
    /// Builds and validates a game; `q` is set to `d`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        weights: Vec<f64>,
        action_sets: Vec<Vec<Vec<f64>>>,
        g: Vec<FunctionSpec>,
        h: Vec<FunctionSpec>,
        r: Vec<Vec<f64>>,
        anchors: Vec<usize>,
    ) -> Result<Game> {
        let n = weights.len();
        let d = g.len();
        Game {
            n,
            d,
            q: d,
            weights,
            action_sets,
            g,
            h,
            r,
            anchors,
        }
        .normalized()
    }

    /// Fills defaults and validates.
    pub fn normalized(mut self) -> Result<Game> {
        if self.q == 0 {
            self.q = self.d;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("game needs at least one player"));
        }
        if self.d == 0 {
            return Err(Error::invalid("action dimension must be >= 1"));
        }
        if self.q != self.d {
            return Err(Error::invalid(format!(
                "aggregate dimension q = {} must equal d = {} for this game class",
                self.q, self.d
            )));
        }
        if self.weights.len() != self.n
            || self.action_sets.len() != self.n
            || self.h.len() != self.n
            || self.r.len() != self.n
            || self.anchors.len() != self.n
        {
            return Err(Error::invalid("per-player field lengths must equal n"));
        }
        if self.g.len() != self.d {
            return Err(Error::invalid("g must provide one function per coordinate"));
        }
        for (i, &a) in self.weights.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::invalid(format!(
                    "weight of player {i} must be positive and finite, got {a}"
                )));
            }
        }
        for (i, set) in self.action_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::invalid(format!("player {i} has an empty action set")));
            }
            for p in set {
                if p.len() != self.d {
                    return Err(Error::invalid(format!(
                        "player {i} has an action of dimension {}, expected {}",
                        p.len(),
                        self.d
                    )));
                }
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid(format!(
                        "player {i} has a non-finite action point"
                    )));
                }
            }
            if self.r[i].len() != set.len() {
                return Err(Error::invalid(format!(
                    "player {i} local-cost table has {} entries for {} actions",
                    self.r[i].len(),
                    set.len()
                )));
            }
            if self.r[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "player {i} local-cost table must be finite"
                )));
            }
            if self.anchors[i] >= set.len() {
                return Err(Error::invalid(format!(
                    "player {i} anchor index {} is out of range",
                    self.anchors[i]
                )));
            }
        }
        for spec in self.g.iter().chain(&self.h) {
            spec.validate()?;
        }
        let (d1, d2) = self.aggregate_range();
        for (t, g_t) in self.g.iter().enumerate() {
            if !g_t.is_nondecreasing_on(d1, d2) {
                return Err(Error::invalid(format!(
                    "price function g[{t}] is decreasing somewhere on [{d1}, {d2}]"
                )));
            }
        }
        Ok(())
    }

    /// Smallest and largest aggregate coordinate reachable from the convex
    /// hulls of the action sets.
    pub fn aggregate_range(&self) -> (f64, f64) {
        let mut d1 = f64::INFINITY;
        let mut d2 = f64::NEG_INFINITY;
        for t in 0..self.d {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (set, &a) in self.action_sets.iter().zip(&self.weights) {
                let mn = set.iter().map(|p| p[t]).fold(f64::INFINITY, f64::min);
                let mx = set.iter().map(|p| p[t]).fold(f64::NEG_INFINITY, f64::max);
                lo += a * mn;
                hi += a * mx;
            }
            d1 = d1.min(lo / self.n as f64);
            d2 = d2.max(hi / self.n as f64);
        }
        (d1, d2)
    }

    /// Weighted average `(1/n) sum_j a_j x_j` of a profile.
    pub fn aggregate(&self, profile: &Profile) -> Result<Vec<f64>> {
        if profile.actions.len() != self.n {
            return Err(Error::invalid(format!(
                "profile has {} actions for {} players",
                profile.actions.len(),
                self.n
            )));
        }
        for x in &profile.actions {
            if x.len() != self.d {
                return Err(Error::invalid("profile action dimension mismatch"));
            }
        }
        Ok(aggregate_actions(&self.weights, &profile.actions, self.d))
    }

    /// Index of the action point equal to `x` within 1e-12, if any.
    pub fn action_index_of(&self, i: usize, x: &[f64]) -> Option<usize> {
        self.action_sets[i]
            .iter()
            .position(|p| linf_dist(p, x) <= ACTION_MATCH_TOL)
    }

    /// Full cost of player `i` under `profile`. The player's own action must
    /// be a member of its action set, since `r_i` is only tabulated there.
    pub fn cost(&self, i: usize, profile: &Profile) -> Result<f64> {
        let x_i = &profile.actions[i];
        let Some(idx) = self.action_index_of(i, x_i) else {
            return Err(Error::invalid(format!(
                "player {i} action {x_i:?} is not in its action set; use the convex envelope for interior points"
            )));
        };
        let agg = self.aggregate(profile)?;
        Ok(self.cost_with_aggregate(i, idx, &agg))
    }

    /// Cost of player `i` playing action `idx` when the full aggregate
    /// (including the player's own term) is `agg`.
    pub fn cost_with_aggregate(&self, i: usize, idx: usize, agg: &[f64]) -> f64 {
        let x_i = &self.action_sets[i][idx];
        let mut total = self.r[i][idx];
        for t in 0..self.d {
            total += self.g[t].eval(agg[t]) * x_i[t] + self.h[i].eval(agg[t]);
        }
        total
    }

    /// Constants used by all bounds; computed exactly from the stored data.
    pub fn derive_constants(&self) -> GameConstants {
        let w_min = self.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let w_max = self
            .weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut delta: f64 = 0.0;
        for set in &self.action_sets {
            for (j, p) in set.iter().enumerate() {
                delta = delta.max(dot(p, p).sqrt());
                for pq in &set[j + 1..] {
                    delta = delta.max(dist(p, pq));
                }
            }
        }
        let (d1, d2) = self.aggregate_range();
        let l_g = self
            .g
            .iter()
            .map(|g_t| g_t.lipschitz_on(d1, d2))
            .fold(0.0, f64::max);
        let l_h = (self.d as f64).sqrt()
            * self
                .h
                .iter()
                .map(|h_i| h_i.lipschitz_on(d1, d2))
                .fold(0.0, f64::max);
        let b_r = self
            .r
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        let b_g = self
            .g
            .iter()
            .map(|g_t| g_t.max_abs_on(d1, d2))
            .fold(0.0, f64::max);
        let c = (self.d as f64 * delta * l_g + 2.0 * b_r) * w_max;
        GameConstants {
            n: self.n,
            d: self.d,
            q: self.q,
            w_min,
            w_max,
            delta,
            l_g,
            l_h,
            b_r,
            b_g,
            d1,
            d2,
            c,
        }
    }

    /// Anchor action point of player `i`.
    pub fn anchor_point(&self, i: usize) -> &[f64] {
        &self.action_sets[i][self.anchors[i]]
    }

    pub fn from_json(text: &str) -> Result<Game> {
        let game: Game = serde_json::from_str(text)?;
        game.normalized()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Game> {
        Game::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Weighted average `(1/n) sum_j a_j x_j` over raw action slices.
pub fn aggregate_actions(weights: &[f64], actions: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut agg = vec![0.0; d];
    for (a, x) in weights.iter().zip(actions) {
        for (acc, c) in agg.iter_mut().zip(x) {
            *acc += a * c;
        }
    }
    let inv = 1.0 / weights.len() as f64;
    agg.iter_mut().for_each(|v| *v *= inv);
    agg
}

/// The auxiliary game: each player's own price contribution is frozen at its
/// anchor, and the local costs carry their convex envelopes.
#[derive(Debug, Clone)]
pub struct AuxiliaryGame {
    game: Game,
    constants: GameConstants,
    envelopes: Vec<Envelope>,
}

impl AuxiliaryGame {
    pub fn new(game: Game) -> Result<AuxiliaryGame> {
        game.validate()?;
        let envelopes = game
            .action_sets
            .iter()
            .zip(&game.r)
            .map(|(set, values)| Envelope::build(set, values))
            .collect::<Result<Vec<_>>>()?;
        let constants = game.derive_constants();
        Ok(AuxiliaryGame {
            game,
            constants,
            envelopes,
        })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn constants(&self) -> &GameConstants {
        &self.constants
    }

    pub fn envelope(&self, i: usize) -> &Envelope {
        &self.envelopes[i]
    }

    pub fn n(&self) -> usize {
        self.game.n
    }

    pub fn d(&self) -> usize {
        self.game.d
    }

    /// Price vector seen by player `i`: `g` evaluated at the aggregate with
    /// the player's own term frozen at its anchor. `actions[i]` is ignored.
    pub fn price_at(&self, i: usize, actions: &[Vec<f64>]) -> Vec<f64> {
        let game = &self.game;
        let mut u = vec![0.0; game.d];
        for (j, x) in actions.iter().enumerate() {
            let source = if j == i { game.anchor_point(i) } else { x };
            for (acc, c) in u.iter_mut().zip(source) {
                *acc += game.weights[j] * c;
            }
        }
        let inv = 1.0 / game.n as f64;
        (0..game.d)
            .map(|t| game.g[t].eval(u[t] * inv))
            .collect()
    }

    /// Auxiliary cost of player `i` playing `x_i` against `actions`
    /// (`actions[i]` is ignored): linear price term plus the local cost —
    /// tabulated when `x_i` is an action point, else its envelope value.
    pub fn auxiliary_cost(&self, i: usize, x_i: &[f64], actions: &[Vec<f64>]) -> Result<f64> {
        let price = self.price_at(i, actions);
        let local = match self.game.action_index_of(i, x_i) {
            Some(idx) => self.game.r[i][idx],
            None => self.envelopes[i].eval(x_i)?.0,
        };
        Ok(dot(&price, x_i) + local)
    }

    /// Convexified auxiliary cost: the local term is always the envelope
    /// value, matching the convexified game's definition.
    pub fn convexified_cost(&self, i: usize, x_i: &[f64], actions: &[Vec<f64>]) -> Result<f64> {
        let price = self.price_at(i, actions);
        let (local, _) = self.envelopes[i].eval(x_i)?;
        Ok(dot(&price, x_i) + local)
    }
}
