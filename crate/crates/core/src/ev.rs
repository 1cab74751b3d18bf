//! Electric-vehicle charging benchmark.
//!
//! Players are EV owners choosing between two charging powers. A player's
//! action is the fraction of battery capacity charged during peak hours; the
//! two-level power menu makes the action set a two-point subset of [0, 1].
//! Peak/off-peak production costs are quadratic in the total load, which
//! after normalization yields an affine price `g(y) = (aP - aOP)/n +
//! beta0 e (2y - 1)` of the weighted average peak fraction, an affine offset
//! cost `h(y) = aOP/n + beta0 e (1 - y)`, player weights `1 - tau_i`, and a
//! local cost `||x - x_ref||^2 / (1 - tau_i)` penalizing deviation from the
//! preferred (fastest) charging profile.
//!
//! Arrival and departure times follow Von Mises laws mapped onto two-hour
//! windows; the initial state of charge follows a Beta law. The experiment
//! harness runs the full solve/disaggregate/verify pipeline over grids of
//! player counts and sweeps and emits a long-format results table.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disagg::sf_disaggregate;
use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::game::{AuxiliaryGame, Game};
use crate::metrics::iterate_epsilon;
use crate::seed::{derive_seed, rng_from};
use crate::solver::{self, omega_bound, InitStrategy, SolverConfig};

/// Resampling attempts per player before the parameters are declared
/// infeasible.
const RESAMPLE_CAP: usize = 100;
/// Seed-stream tag for instance sampling.
const STREAM_INSTANCE: u64 = 0xE7;

/// Benchmark parameters. Defaults follow the published tariff study:
/// 40 kWh battery, 3.7/7 kW charging levels, peak hours 6:00-22:00,
/// affine-in-n tariffs with slopes 0.59 * 12 and 0.59 * 8 over a -4.17
/// intercept, quadratic coefficient 0.295, Von Mises(1) arrivals in
/// 17:00-19:00 and departures in 7:00-9:00, and Beta(2, 5) state of charge.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvParams {
    /// Battery capacity `e` (kWh).
    pub battery_kwh: f64,
    /// Slow charging power (kW).
    pub p_min_kw: f64,
    /// Fast charging power (kW).
    pub p_max_kw: f64,
    /// Peak window in hours of day.
    pub peak_window: (f64, f64),
    /// Peak tariff `(intercept, slope-in-n)` (euro/kWh).
    pub alpha_peak: (f64, f64),
    /// Off-peak tariff `(intercept, slope-in-n)` (euro/kWh).
    pub alpha_offpeak: (f64, f64),
    /// Quadratic tariff coefficient (euro/kWh^2).
    pub beta0: f64,
    /// Von Mises concentration for arrival and departure times.
    pub kappa: f64,
    /// Arrival window (hours).
    pub arrival_window: (f64, f64),
    /// Departure window (hours, next day).
    pub departure_window: (f64, f64),
    /// Beta law parameters for the initial state of charge.
    pub soc_alpha: f64,
    pub soc_beta: f64,
    /// Instances per grid point.
    pub instances: usize,
    /// Player counts to benchmark.
    pub n_grid: Vec<usize>,
    /// Solver sweeps per run (`K`).
    pub sweeps: usize,
    /// Master seed.
    pub seed: u64,
}

impl Default for EvParams {
    fn default() -> Self {
        EvParams {
            battery_kwh: 40.0,
            p_min_kw: 3.7,
            p_max_kw: 7.0,
            peak_window: (6.0, 22.0),
            alpha_peak: (-4.17, 0.59 * 12.0),
            alpha_offpeak: (-4.17, 0.59 * 8.0),
            beta0: 0.295,
            kappa: 1.0,
            arrival_window: (17.0, 19.0),
            departure_window: (7.0, 9.0),
            soc_alpha: 2.0,
            soc_beta: 5.0,
            instances: 10,
            n_grid: vec![64, 128, 256, 512, 1024],
            sweeps: 100,
            seed: 0,
        }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min_kw > 0.0) || self.p_min_kw > self.p_max_kw {
            return Err(Error::invalid("need 0 < p_min <= p_max"));
        }
        if !(self.battery_kwh > 0.0) {
            return Err(Error::invalid("battery capacity must be positive"));
        }
        if !(self.beta0 > 0.0) {
            return Err(Error::invalid("beta0 must be positive"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if !(self.soc_alpha > 0.0) || !(self.soc_beta > 0.0) {
            return Err(Error::invalid("state-of-charge Beta parameters must be positive"));
        }
        for (lo, hi) in [
            self.peak_window,
            self.arrival_window,
            self.departure_window,
        ] {
            if !(lo < hi) || lo < 0.0 || hi > 24.0 {
                return Err(Error::invalid("time windows must satisfy 0 <= lo < hi <= 24"));
            }
        }
        if self.instances == 0 || self.sweeps == 0 {
            return Err(Error::invalid("instances and sweeps must be >= 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n == 0) {
            return Err(Error::invalid("n_grid must list positive player counts"));
        }
        Ok(())
    }

    /// The full published grid: `n = 2^1..2^15`, fifty instances.
    pub fn full_scale(mut self) -> Self {
        self.n_grid = (1..=15).map(|s| 1usize << s).collect();
        self.instances = 50;
        self
    }
}

/// One sampled player.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvPlayer {
    /// Arrival hour in the arrival window.
    pub arrival: f64,
    /// Departure hour (next day) in the departure window.
    pub departure: f64,
    /// Remaining battery proportion on arrival, in (0, 1).
    pub tau: f64,
    /// Peak fraction when charging at `p_min`.
    pub x_low: f64,
    /// Peak fraction when charging at `p_max`.
    pub x_high: f64,
    /// Preferred action (fastest charging).
    pub x_ref: f64,
}

/// A sampled benchmark instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvInstance {
    pub players: Vec<EvPlayer>,
}

/// Seed of instance `instance` at player count `n`, as derived by the
/// experiment harness; `gen` uses the same derivation so a generated game
/// reproduces the corresponding benchmark instance.
pub fn instance_seed(master: u64, n: usize, instance: usize) -> u64 {
    derive_seed(master, &[STREAM_INSTANCE, n as u64, instance as u64])
}

/// Von Mises(0, kappa) sample on `[-pi, pi]` by Best-Fisher rejection.
pub fn sample_von_mises(rng: &mut ChaCha8Rng, kappa: f64) -> f64 {
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        let u2: f64 = rng.random();
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            return (u3 - 0.5).signum() * f.clamp(-1.0, 1.0).acos();
        }
    }
}

/// Affine map from `[-pi, pi]` onto a time window.
fn map_to_window(theta: f64, window: (f64, f64)) -> f64 {
    let center = 0.5 * (window.0 + window.1);
    let half = 0.5 * (window.1 - window.0);
    center + theta * half / PI
}

/// Overlap length of the charging span `[start, start + duration)` with the
/// peak window, on a 24-hour circle unrolled over two days.
fn peak_overlap(start: f64, duration: f64, peak: (f64, f64)) -> f64 {
    let seg = |lo: f64, hi: f64| (start + duration).min(hi) - start.max(lo);
    let mut total = 0.0;
    for day in 0..2 {
        let off = 24.0 * day as f64;
        let o = seg(peak.0 + off, peak.1 + off);
        if o > 0.0 {
            total += o;
        }
    }
    total
}

/// Samples one instance. Players violating feasibility (charging must end
/// before departure at either power level) are redrawn, up to a cap.
pub fn sample_instance(params: &EvParams, n: usize, seed: u64) -> Result<EvInstance> {
    params.validate()?;
    let soc = Beta::new(params.soc_alpha, params.soc_beta)
        .map_err(|e| Error::invalid(format!("bad Beta parameters: {e}")))?;
    let mut players = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_from(seed, &[STREAM_INSTANCE, i as u64]);
        let mut attempt = 0;
        let player = loop {
            attempt += 1;
            if attempt > RESAMPLE_CAP {
                return Err(Error::invalid(format!(
                    "player {i}: could not sample a feasible charging window in {RESAMPLE_CAP} draws"
                )));
            }
            let arrival = map_to_window(sample_von_mises(&mut rng, params.kappa), params.arrival_window);
            let departure =
                map_to_window(sample_von_mises(&mut rng, params.kappa), params.departure_window);
            let tau: f64 = soc.sample(&mut rng);
            if tau <= 0.0 || tau >= 1.0 {
                continue;
            }
            let energy = (1.0 - tau) * params.battery_kwh;
            // Hours until departure, wrapping midnight.
            let window = (departure - arrival).rem_euclid(24.0);
            if energy / params.p_max_kw > window || energy / params.p_min_kw > window {
                continue;
            }
            let fraction = |p: f64| {
                p * peak_overlap(arrival, energy / p, params.peak_window) / params.battery_kwh
            };
            let x_low = fraction(params.p_min_kw);
            let x_high = fraction(params.p_max_kw);
            if !(0.0..=1.0).contains(&x_low) || !(0.0..=1.0).contains(&x_high) || x_low > x_high {
                continue;
            }
            break EvPlayer {
                arrival,
                departure,
                tau,
                x_low,
                x_high,
                x_ref: x_high,
            };
        };
        players.push(player);
    }
    Ok(EvInstance { players })
}

/// Maps an instance onto the congestion game: one-dimensional actions
/// `{x_low, x_high}`, weights `1 - tau`, affine price and offset costs, and
/// the quadratic preference penalty as the local cost table.
pub fn build_game(params: &EvParams, instance: &EvInstance) -> Result<Game> {
    let n = instance.players.len();
    let nf = n as f64;
    let e = params.battery_kwh;
    let alpha_p = params.alpha_peak.0 + params.alpha_peak.1 * nf;
    let alpha_op = params.alpha_offpeak.0 + params.alpha_offpeak.1 * nf;

    // g(y) = (aP - aOP)/n + beta0 e (2y - 1)
    let g = FunctionSpec::Affine {
        c0: (alpha_p - alpha_op) / nf - params.beta0 * e,
        c1: 2.0 * params.beta0 * e,
    };
    // h(y) = aOP/n + beta0 e (1 - y)
    let h = FunctionSpec::Affine {
        c0: alpha_op / nf + params.beta0 * e,
        c1: -params.beta0 * e,
    };

    let mut weights = Vec::with_capacity(n);
    let mut action_sets = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for p in &instance.players {
        let scale = 1.0 - p.tau;
        weights.push(scale);
        action_sets.push(vec![vec![p.x_low], vec![p.x_high]]);
        r.push(vec![
            (p.x_low - p.x_ref) * (p.x_low - p.x_ref) / scale,
            (p.x_high - p.x_ref) * (p.x_high - p.x_ref) / scale,
        ]);
    }
    Game::new(
        weights,
        action_sets,
        vec![g],
        vec![h; n],
        r,
        vec![0; n],
    )
}

/// One checkpoint of the experiment table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub instance_id: usize,
    pub n: usize,
    pub k: usize,
    pub relative_eps: f64,
    pub additive_eps: f64,
    pub deviation: f64,
    pub omega: f64,
}

/// Experiment output: checkpoint rows plus per-instance failures (the run
/// continues past them).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub failures: Vec<String>,
}

/// Runs the full pipeline over `n_grid x instances`, recording the quality
/// of the disaggregated iterate at every sweep `k = 1..K`. Instances run
/// concurrently on up to `jobs` threads; the table is merged
/// deterministically by `(instance_id, n, k)`.
pub fn run_experiment(params: &EvParams, jobs: usize) -> Result<ExperimentTable> {
    params.validate()?;
    let tasks: Vec<(usize, usize)> = params
        .n_grid
        .iter()
        .flat_map(|&n| (0..params.instances).map(move |inst| (n, inst)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::numerical(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, usize, Result<Vec<ExperimentRow>>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, inst)| (n, inst, run_single(params, n, inst)))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, inst, outcome) in outcomes {
        match outcome {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => {
                let msg = format!("instance {inst}, n = {n}: {e}");
                log::warn!("{msg}");
                failures.push(msg);
            }
        }
    }
    rows.sort_by_key(|r| (r.instance_id, r.n, r.k));
    Ok(ExperimentTable { rows, failures })
}

fn run_single(params: &EvParams, n: usize, inst: usize) -> Result<Vec<ExperimentRow>> {
    let seed = instance_seed(params.seed, n, inst);
    let instance = sample_instance(params, n, seed)?;
    let game = build_game(params, &instance)?;
    let aux = AuxiliaryGame::new(game)?;
    let consts = *aux.constants();

    let cfg = SolverConfig {
        max_sweeps: params.sweeps,
        step_tol: 1e-300,
        inner_tol: 1e-10,
        seed,
        init: InitStrategy::Anchor,
    };
    let mut rows = Vec::with_capacity(params.sweeps);
    let mut checkpoint_err: Option<Error> = None;
    let report = solver::run_observed(&aux, &cfg, |k, actions, _step| {
        if checkpoint_err.is_some() {
            return;
        }
        let result = (|| -> Result<ExperimentRow> {
            let witnesses = actions
                .iter()
                .enumerate()
                .map(|(i, x)| Ok(aux.envelope(i).eval(x)?.1))
                .collect::<Result<Vec<_>>>()?;
            let profile = crate::game::Profile::convexified(actions.to_vec());
            let disagg = sf_disaggregate(&profile, &witnesses, &aux.game().weights, &consts)?;
            // Error of the iterate itself, the quantity whose decay the
            // published charts track; the disaggregated profile's quality is
            // summarized by its aggregate deviation.
            let report = iterate_epsilon(&aux, actions)?;
            Ok(ExperimentRow {
                instance_id: inst,
                n,
                k,
                relative_eps: report.relative_eps,
                additive_eps: report.additive_eps,
                deviation: disagg.aggregate_deviation,
                omega: omega_bound(k, n, &consts),
            })
        })();
        match result {
            Ok(row) => rows.push(row),
            Err(e) => checkpoint_err = Some(e),
        }
    })?;
    if let Some(e) = checkpoint_err {
        return Err(e);
    }
    // A converged run is a fixed point: later checkpoints repeat the last
    // recorded metrics, keeping the table rectangular.
    if report.sweeps < params.sweeps {
        if let Some(last) = rows.last().cloned() {
            for k in report.sweeps + 1..=params.sweeps {
                rows.push(ExperimentRow {
                    k,
                    omega: omega_bound(k, n, &consts),
                    ..last.clone()
                });
            }
        }
    }
    Ok(rows)
}

/// Long-format CSV of the experiment table.
pub fn write_experiment_csv(table: &ExperimentTable, w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "instance_id,n,k,relative_eps,additive_eps,deviation,omega"
    )?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.instance_id, r.n, r.k, r.relative_eps, r.additive_eps, r.deviation, r.omega
        )?;
    }
    Ok(())
}

/// Instance-averaged series behind the two benchmark figures, with log10
/// columns for log-log plotting: relative error against sweeps per player
/// count (figure 1) and against player count per sweep checkpoint
/// (figure 2).
pub fn write_plot_data_csv(table: &ExperimentTable, w: &mut impl Write) -> Result<()> {
    writeln!(w, "figure,series,x,y,log10_x,log10_y")?;
    let mut ns: Vec<usize> = table.rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut ks: Vec<usize> = table.rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();

    let mean_eps = |n: usize, k: usize| -> Option<f64> {
        let values: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.n == n && r.k == k)
            .map(|r| r.relative_eps)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };

    for &n in &ns {
        for &k in &ks {
            if let Some(y) = mean_eps(n, k) {
                writeln!(
                    w,
                    "1,{n},{k},{y},{},{}",
                    (k as f64).log10(),
                    y.log10()
                )?;
            }
        }
    }
    let fig2_ks: Vec<usize> = if ks.len() > 10 {
        ks.iter().copied().filter(|k| k % 10 == 0).collect()
    } else {
        ks.clone()
    };
    for &k in &fig2_ks {
        for &n in &ns {
            if let Some(y) = mean_eps(n, k) {
                writeln!(
                    w,
                    "2,{k},{n},{y},{},{}",
                    (n as f64).log10(),
                    y.log10()
                )?;
            }
        }
    }
    Ok(())
}
