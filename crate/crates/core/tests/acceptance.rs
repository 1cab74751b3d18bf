//! Acceptance suite: every release-gating property of the toolkit, one test
//! per criterion, each printing a PASS line with its runtime. Oracles are
//! independent re-implementations living in `common`.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use aggnash_core::disagg::{randomized_disaggregate, sf_disaggregate};
use aggnash_core::envelope::{Envelope, GeneratorWitness};
use aggnash_core::ev::{self, EvParams, ExperimentTable};
use aggnash_core::game::{AuxiliaryGame, GameConstants, Profile};
use aggnash_core::metrics::{additive_epsilon, stability_slack};
use aggnash_core::seed::rng_from;
use aggnash_core::solver::{self, InitStrategy, SolverConfig};
use common::{
    envelope_oracle_1d, envelope_oracle_2d, random_congestion_game, random_two_action_game_1d,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const PASS: &str = "PASS";

/// Criterion 1 — envelope evaluation matches the exact enumeration oracles
/// on random one- and two-dimensional point sets, within 1e-6, in under 10s.
#[test]
fn criterion_01_envelope_matches_oracles() {
    let start = Instant::now();
    let mut rng = rng_from(101, &[1]);
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let vs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let env = Envelope::build(&points, &vs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..100 {
            let x = rng.random_range(lo..=hi);
            let (got, witness) = env.eval(&[x]).unwrap();
            let want = envelope_oracle_1d(&xs, &vs, x).unwrap();
            assert!(
                (got - want).abs() < 1e-6,
                "1-d envelope {got} vs oracle {want} at {x}"
            );
            assert!((witness.value() - got).abs() < 1e-9);
        }
    }
    let mut rng = rng_from(101, &[2]);
    for _ in 0..50 {
        let n = rng.random_range(3..=10);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let env = Envelope::build(&points, &values).unwrap();
        for _ in 0..20 {
            let mut w: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= s);
            let x = vec![
                w.iter().zip(&points).map(|(wi, p)| wi * p[0]).sum::<f64>(),
                w.iter().zip(&points).map(|(wi, p)| wi * p[1]).sum::<f64>(),
            ];
            let (got, witness) = env.eval(&x).unwrap();
            let want = envelope_oracle_2d(&points, &values, &x).unwrap();
            assert!(
                (got - want).abs() < 1e-6,
                "2-d envelope {got} vs oracle {want}"
            );
            assert!(witness.support.len() <= 3);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.2?}");
    println!("criterion 01 envelope-oracle equivalence: {PASS} ({elapsed:.2?})");
}

/// Deterministic instance pool shared by criteria 2-4.
fn descent_instances() -> Vec<AuxiliaryGame> {
    let mut rng = rng_from(102, &[0]);
    (0..100)
        .map(|_| {
            AuxiliaryGame::new(random_congestion_game(&mut rng, 50, 4, 2)).unwrap()
        })
        .collect()
}

fn descent_config() -> SolverConfig {
    SolverConfig {
        max_sweeps: 40,
        step_tol: 1e-13,
        inner_tol: 1e-11,
        seed: 7,
        init: InitStrategy::Anchor,
    }
}

/// Criterion 2 — the potential never increases along the sweeps and the
/// total squared step mass stays within `2 n^2 C / (m^2 L_g)`, on 100 random
/// instances, in under 60s.
#[test]
fn criterion_02_potential_descent_and_step_budget() {
    let start = Instant::now();
    let cfg = descent_config();
    for aux in descent_instances() {
        let report = solver::run(&aux, &cfg).unwrap();
        for w in report.potentials.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "potential increased from {} to {}",
                w[0],
                w[1]
            );
        }
        let c = aux.constants();
        let budget = 2.0 * (c.n * c.n) as f64 * c.c / (c.w_min * c.w_min * c.l_g);
        let spent: f64 = report.step_norms.iter().map(|s| s * s).sum();
        assert!(spent <= budget + 1e-6, "step mass {spent} > budget {budget}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:.2?}");
    println!("criterion 02 potential descent and step budget: {PASS} ({elapsed:.2?})");
}

/// Criterion 3 — the certified step norm obeys
/// `u_kstar <= sqrt(2C) n / (m sqrt(L_g K))` on every criterion-2 instance.
#[test]
fn criterion_03_certificate_bound() {
    let start = Instant::now();
    let cfg = descent_config();
    for aux in descent_instances() {
        let report = solver::run(&aux, &cfg).unwrap();
        let c = aux.constants();
        let cert = (2.0 * c.c).sqrt() * c.n as f64
            / (c.w_min * (c.l_g * report.sweeps as f64).sqrt());
        assert!(
            report.step_norm_kstar <= cert + 1e-9,
            "step {} > certificate {}",
            report.step_norm_kstar,
            cert
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 03 certificate bound: {PASS} ({elapsed:.2?})");
}

/// Criterion 4 — at the certified iterate, the stability slack with respect
/// to the recomputed witnesses stays below `eta(u_kstar) * delta + 1e-6`.
#[test]
fn criterion_04_stability_slack() {
    let start = Instant::now();
    let cfg = descent_config();
    for aux in descent_instances() {
        let report = solver::run(&aux, &cfg).unwrap();
        let slack = stability_slack(&aux, &report.profile_kstar, &report.witnesses).unwrap();
        assert!(
            slack <= report.eta_kstar + 1e-6,
            "slack {} > eta_kstar {}",
            slack,
            report.eta_kstar
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 04 stability slack: {PASS} ({elapsed:.2?})");
}

fn random_witness(rng: &mut ChaCha8Rng, d: usize, max_support: usize) -> GeneratorWitness {
    let s = rng.random_range(1..=max_support);
    let support: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut weights: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut barycenter = vec![0.0; d];
    for (w, z) in weights.iter().zip(&support) {
        for (b, c) in barycenter.iter_mut().zip(z) {
            *b += w * c;
        }
    }
    GeneratorWitness {
        support,
        weights,
        values: vec![0.0; s],
        indices: (0..s).collect(),
        barycenter,
    }
}

fn witness_constants(witnesses: &[GeneratorWitness], weights: &[f64], d: usize) -> GameConstants {
    let mut delta: f64 = 0.0;
    for w in witnesses {
        for (j, z) in w.support.iter().enumerate() {
            delta = delta.max(z.iter().map(|c| c * c).sum::<f64>().sqrt());
            for z2 in &w.support[j + 1..] {
                let dist: f64 = z
                    .iter()
                    .zip(z2)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                delta = delta.max(dist);
            }
        }
    }
    GameConstants {
        n: witnesses.len(),
        d,
        q: d,
        w_min: weights.iter().cloned().fold(f64::INFINITY, f64::min),
        w_max: weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        delta,
        l_g: 1.0,
        l_h: 0.0,
        b_r: 1.0,
        b_g: 1.0,
        d1: -2.0,
        d2: 2.0,
        c: 1.0,
    }
}

/// Criterion 5 — the deterministic disaggregation respects the
/// `sqrt(q) M delta` ceiling on 1000 random witness sets, leaves at most `q`
/// players off a purified singleton, and stays within one ceiling of the
/// exact enumeration optimum whenever the product space is enumerable.
#[test]
fn criterion_05_sf_deviation() {
    let start = Instant::now();
    let mut rng = rng_from(105, &[0]);
    for trial in 0..1000 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(2..=20);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let witnesses: Vec<GeneratorWitness> =
            (0..n).map(|_| random_witness(&mut rng, d, d + 1)).collect();
        let consts = witness_constants(&witnesses, &weights, d);
        let profile =
            Profile::convexified(witnesses.iter().map(|w| w.barycenter.clone()).collect());
        let out = sf_disaggregate(&profile, &witnesses, &weights, &consts).unwrap();
        assert!(
            out.aggregate_deviation <= out.bound + 1e-9,
            "trial {trial}: deviation {} > bound {}",
            out.aggregate_deviation,
            out.bound
        );
        assert!(
            out.fractional_players.len() <= d,
            "trial {trial}: {} fractional players in dimension {d}",
            out.fractional_players.len()
        );
        for (i, x) in out.profile.actions.iter().enumerate() {
            assert!(witnesses[i].support.contains(x), "player {i} left its generator");
        }
    }

    // Sub-enumerable cases: compare against the exact product optimum.
    let mut rng = rng_from(105, &[1]);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let witnesses: Vec<GeneratorWitness> =
            (0..n).map(|_| random_witness(&mut rng, 1, 2)).collect();
        let consts = witness_constants(&witnesses, &weights, 1);
        let profile =
            Profile::convexified(witnesses.iter().map(|w| w.barycenter.clone()).collect());
        let out = sf_disaggregate(&profile, &witnesses, &weights, &consts).unwrap();

        let target: f64 = weights
            .iter()
            .zip(&profile.actions)
            .map(|(a, x)| a * x[0])
            .sum();
        let mut exact = f64::INFINITY;
        let mut counter = vec![0usize; n];
        'outer: loop {
            let total: f64 = counter
                .iter()
                .enumerate()
                .map(|(i, &c)| weights[i] * witnesses[i].support[c][0])
                .sum();
            exact = exact.min((target - total).abs());
            let mut pos = 0;
            loop {
                if pos == n {
                    break 'outer;
                }
                counter[pos] += 1;
                if counter[pos] < witnesses[pos].support.len() {
                    break;
                }
                counter[pos] = 0;
                pos += 1;
            }
        }
        assert!(
            out.aggregate_deviation <= exact + out.bound + 1e-9,
            "deviation {} vs exact {} + bound {}",
            out.aggregate_deviation,
            exact,
            out.bound
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 05 shapley-folkman deviation: {PASS} ({elapsed:.2?})");
}

/// Criterion 6 — randomized disaggregation on a 100-player instance:
/// the empirical mean aggregate deviation over 1e4 samples stays below
/// `sqrt(n) M delta` and every player's sampled mean is unbiased within
/// four standard errors.
#[test]
fn criterion_06_randomized_disaggregation() {
    let start = Instant::now();
    let mut rng = rng_from(106, &[0]);
    let n = 100;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let witnesses: Vec<GeneratorWitness> = (0..n)
        .map(|_| {
            let z0 = rng.random_range(-1.0..0.0);
            let z1 = rng.random_range(0.0..1.0);
            let p: f64 = rng.random_range(0.1..0.9);
            GeneratorWitness {
                support: vec![vec![z0], vec![z1]],
                weights: vec![1.0 - p, p],
                values: vec![0.0, 0.0],
                indices: vec![0, 1],
                barycenter: vec![(1.0 - p) * z0 + p * z1],
            }
        })
        .collect();
    let consts = witness_constants(&witnesses, &weights, 1);
    let target: f64 = weights
        .iter()
        .zip(&witnesses)
        .map(|(a, w)| a * w.barycenter[0])
        .sum();

    let samples = 10_000;
    let mut mean_dev = 0.0;
    let mut sums = vec![0.0; n];
    for s in 0..samples {
        let (_, sample) = randomized_disaggregate(&witnesses, 40_000 + s);
        let total: f64 = weights
            .iter()
            .zip(&sample.actions)
            .map(|(a, x)| a * x[0])
            .sum();
        mean_dev += (total - target).abs();
        for (acc, x) in sums.iter_mut().zip(&sample.actions) {
            *acc += x[0];
        }
    }
    mean_dev /= samples as f64;
    let ceiling = (n as f64).sqrt() * consts.w_max * consts.delta;
    assert!(mean_dev <= ceiling, "mean deviation {mean_dev} > {ceiling}");

    for (i, sum) in sums.iter().enumerate() {
        let mean = sum / samples as f64;
        let w = &witnesses[i];
        let expect = w.barycenter[0];
        let var = w.weights[0] * (w.support[0][0] - expect).powi(2)
            + w.weights[1] * (w.support[1][0] - expect).powi(2);
        let se = (var / samples as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 4.0 * se + 1e-12,
            "player {i}: mean {mean} vs {expect} (se {se})"
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 06 randomized disaggregation: {PASS} ({elapsed:.2?})");
}

/// Criterion 7 — end-to-end bound on tiny two-action instances: with
/// `K >= (2C / (m^2 L_g)) n^2 + 1` the disaggregated certified iterate is an
/// additive eps-equilibrium with
/// `eps <= 2 L_g M delta (n^-1/2 + (q + 4) delta / n) + L_h M delta / n`,
/// measured by exhaustive best responses.
#[test]
fn criterion_07_end_to_end_bound() {
    let start = Instant::now();
    let mut rng = rng_from(107, &[0]);
    for trial in 0..50 {
        let n = rng.random_range(2..=8);
        let game = random_two_action_game_1d(&mut rng, n);
        let aux = AuxiliaryGame::new(game).unwrap();
        let c = *aux.constants();
        let delta_exp = 0.5;
        let sweeps = (2.0 * c.c / (c.w_min * c.w_min * c.l_g)
            * (n as f64).powf(1.0 + 2.0 * delta_exp))
        .ceil() as usize
            + 1;
        let cfg = SolverConfig {
            max_sweeps: sweeps,
            step_tol: 1e-13,
            inner_tol: 1e-11,
            seed: trial,
            init: InitStrategy::Anchor,
        };
        let report = solver::run(&aux, &cfg).unwrap();
        let disagg = sf_disaggregate(
            &report.profile_kstar,
            &report.witnesses,
            &aux.game().weights,
            &c,
        )
        .unwrap();
        let measured = additive_epsilon(aux.game(), &disagg.profile)
            .unwrap()
            .additive_eps;
        let nf = n as f64;
        let bound = 2.0 * c.l_g * c.w_max * c.delta
            * (nf.powf(-delta_exp) + (c.q as f64 + 4.0) * c.delta / nf)
            + c.l_h * c.w_max * c.delta / nf;
        assert!(
            measured <= bound + 1e-9,
            "trial {trial} (n = {n}): eps {measured} > bound {bound}"
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 07 end-to-end additive bound: {PASS} ({elapsed:.2?})");
}

/// Benchmark table shared by criteria 8 and 9; built once.
fn figure_table() -> &'static (EvParams, ExperimentTable, f64) {
    static TABLE: OnceLock<(EvParams, ExperimentTable, f64)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let params = EvParams {
            n_grid: vec![64, 256, 1024],
            instances: 10,
            sweeps: 100,
            seed: 2024,
            ..EvParams::default()
        };
        let start = Instant::now();
        let table = ev::run_experiment(&params, 2).unwrap();
        (params, table, start.elapsed().as_secs_f64())
    })
}

fn mean_relative_eps(table: &ExperimentTable, n: usize, k: usize) -> f64 {
    let vals: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.n == n && r.k == k)
        .map(|r| r.relative_eps)
        .collect();
    assert!(!vals.is_empty(), "no rows for n = {n}, k = {k}");
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Criterion 8 — benchmark trends at desk scale: the instance-averaged
/// relative error does not grow from sweep 10 to sweep 100 for any player
/// count, and at sweep 100 it is smaller with 1024 players than with 64;
/// total runtime under ten minutes.
#[test]
fn criterion_08_benchmark_trends() {
    let (_, table, seconds) = figure_table();
    assert!(table.failures.is_empty(), "failures: {:?}", table.failures);
    for &n in &[64usize, 256, 1024] {
        let early = mean_relative_eps(table, n, 10);
        let late = mean_relative_eps(table, n, 100);
        assert!(
            late <= early,
            "n = {n}: mean relative eps grew from {early} (k=10) to {late} (k=100)"
        );
    }
    let small_n = mean_relative_eps(table, 64, 100);
    let large_n = mean_relative_eps(table, 1024, 100);
    assert!(
        large_n <= small_n,
        "mean relative eps at n=1024 ({large_n}) exceeds n=64 ({small_n})"
    );
    assert!(*seconds < 600.0, "benchmark took {seconds}s");
    println!("criterion 08 benchmark trends: {PASS} ({seconds:.1}s)");
}

/// Criterion 9 — the approximation-level formula matches an independent
/// re-evaluation on random inputs to 1e-12, and the benchmark errors never
/// beat the theory: for every (instance, n) the best observed additive gap
/// stays below the bound implied by the sweep-count certificate.
#[test]
fn criterion_09_omega_formula_and_bounds() {
    let start = Instant::now();
    let mut rng = rng_from(109, &[0]);
    for _ in 0..100 {
        let n = rng.random_range(2..=4096);
        let k = rng.random_range(1..=100_000);
        let d = rng.random_range(1..=3);
        let w_min = rng.random_range(0.1..1.0);
        let w_max = w_min + rng.random_range(0.0..2.0);
        let delta = rng.random_range(0.1..5.0);
        let l_g = rng.random_range(0.01..50.0);
        let b_r = rng.random_range(0.0..10.0);
        let consts = GameConstants {
            n,
            d,
            q: d,
            w_min,
            w_max,
            delta,
            l_g,
            l_h: rng.random_range(0.0..10.0),
            b_r,
            b_g: rng.random_range(0.0..10.0),
            d1: 0.0,
            d2: 1.0,
            c: (d as f64 * delta * l_g + 2.0 * b_r) * w_max,
        };
        let got = solver::omega_bound(k, n, &consts);
        let fresh = ((2.0 * consts.c * l_g).sqrt() * w_max / w_min)
            * ((n as f64) / (k as f64)).sqrt()
            + 2.0 * l_g * w_max * delta / n as f64;
        assert!(
            (got - fresh).abs() <= 1e-12 * fresh.abs().max(1.0),
            "omega {got} vs re-evaluation {fresh}"
        );
    }

    let (params, table, _) = figure_table();
    for &n in &params.n_grid {
        for inst in 0..params.instances {
            let rows: Vec<_> = table
                .rows
                .iter()
                .filter(|r| r.n == n && r.instance_id == inst)
                .collect();
            assert!(!rows.is_empty());
            for r in &rows {
                assert!((0.0..=1.0).contains(&r.relative_eps));
            }
            // Rebuild the instance to recover its constants.
            let seed = ev::instance_seed(params.seed, n, inst);
            let instance = ev::sample_instance(params, n, seed).unwrap();
            let game = ev::build_game(params, &instance).unwrap();
            let c = game.derive_constants();
            let k_total = rows.iter().map(|r| r.k).max().unwrap();
            let certified_step =
                (2.0 * c.c).sqrt() * n as f64 / (c.w_min * (c.l_g * k_total as f64).sqrt());
            let implied = solver::additive_bound_from_step(certified_step, &c);
            let best_additive = rows
                .iter()
                .map(|r| r.additive_eps)
                .fold(f64::INFINITY, f64::min);
            assert!(
                best_additive <= implied + 1e-9,
                "n = {n}, instance {inst}: best additive {best_additive} > implied {implied}"
            );
        }
    }
    let elapsed = start.elapsed();
    println!("criterion 09 approximation-level formula: {PASS} ({elapsed:.2?})");
}
