//! Command implementations. Each writes its artifacts under the output
//! directory and prints a short summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use aggnash_core::disagg::{randomized_disaggregate, sf_disaggregate, MixedProfile};
use aggnash_core::ev::{self, EvParams};
use aggnash_core::game::{AuxiliaryGame, Feasibility, Game, Profile};
use aggnash_core::linalg::{axpy, norm};
use aggnash_core::metrics::{additive_epsilon, additive_epsilon_aux, iterate_epsilon};
use aggnash_core::solver::{self, additive_bound_from_step, InitStrategy, SolveReport, SolverConfig};
use aggnash_core::{Error, Result};

use crate::args::{parse_n_grid, Cli, Command, FileConfig};

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_ref())?;
    let out_dir = cli
        .out
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os("AGGNASH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);

    match cli.command {
        Command::Gen { n, params } => gen(&out_dir, seed, n.or(file.n), params.or(file.params)),
        Command::Solve {
            game,
            k,
            step_tol,
            inner_tol,
            init,
            init_profile,
        } => {
            let cfg = SolverConfig {
                max_sweeps: k.or(file.k).unwrap_or(100),
                step_tol: step_tol.or(file.step_tol).unwrap_or(1e-9),
                inner_tol: inner_tol.or(file.inner_tol).unwrap_or(1e-10),
                seed,
                init: parse_init(
                    init.or(file.init.clone()).as_deref(),
                    init_profile.or(file.init_profile.clone()).as_ref(),
                )?,
            };
            solve(&out_dir, game.or(file.game).as_ref(), &cfg)
        }
        Command::Disaggregate { game, report, mode } => disaggregate(
            &out_dir,
            seed,
            game.or(file.game).as_ref(),
            report.or(file.report).as_ref(),
            mode.or(file.mode).as_deref().unwrap_or("sf"),
        ),
        Command::Verify {
            game,
            profile,
            report,
        } => verify(
            &out_dir,
            game.or(file.game).as_ref(),
            profile.or(file.profile).as_ref(),
            report.or(file.report).as_ref(),
        ),
        Command::Bench {
            n_grid,
            instances,
            k,
            jobs,
            full_scale,
            params,
        } => {
            let mut ev_params = load_params(params.or(file.params).as_ref())?;
            if full_scale || file.full_scale.unwrap_or(false) {
                ev_params = ev_params.full_scale();
            }
            if let Some(grid) = n_grid {
                ev_params.n_grid = parse_n_grid(&grid)?;
            } else if let Some(grid) = file.n_grid {
                ev_params.n_grid = grid;
            }
            if let Some(i) = instances.or(file.instances) {
                ev_params.instances = i;
            }
            if let Some(k) = k.or(file.k) {
                ev_params.sweeps = k;
            }
            ev_params.seed = seed;
            bench(&out_dir, &ev_params, jobs.or(file.jobs).unwrap_or(1))
        }
    }
}

fn required<'a>(path: Option<&'a PathBuf>, what: &str, flag: &str) -> Result<&'a PathBuf> {
    path.ok_or_else(|| Error::Invalid(format!("{what} is required; pass {flag}")))
}

fn load_params(path: Option<&PathBuf>) -> Result<EvParams> {
    match path {
        None => Ok(EvParams::default()),
        Some(p) => {
            let params: EvParams = serde_json::from_str(&fs::read_to_string(p)?)?;
            params.validate()?;
            Ok(params)
        }
    }
}

fn parse_init(name: Option<&str>, profile: Option<&PathBuf>) -> Result<InitStrategy> {
    match name.unwrap_or("anchor") {
        "anchor" => Ok(InitStrategy::Anchor),
        "uniform-vertex" => Ok(InitStrategy::UniformVertex),
        "provided" => {
            let path = required(profile, "an initial profile", "--init-profile")?;
            let profile: Profile = serde_json::from_str(&fs::read_to_string(path)?)?;
            Ok(InitStrategy::Provided { profile })
        }
        other => Err(Error::Invalid(format!(
            "unknown init strategy {other:?}; use anchor, uniform-vertex, or provided"
        ))),
    }
}

fn gen(out_dir: &Path, seed: u64, n: Option<usize>, params: Option<PathBuf>) -> Result<()> {
    let n = n.ok_or_else(|| Error::Invalid("gen needs --n".into()))?;
    let params = load_params(params.as_ref())?;
    let instance = ev::sample_instance(&params, n, ev::instance_seed(seed, n, 0))?;
    let game = ev::build_game(&params, &instance)?;
    let path = out_dir.join("game.json");
    game.save(&path)?;
    println!(
        "wrote {} ({} players, {} actions each)",
        path.display(),
        game.n,
        game.action_sets[0].len()
    );
    Ok(())
}

fn solve(out_dir: &Path, game_path: Option<&PathBuf>, cfg: &SolverConfig) -> Result<()> {
    let game = Game::load(required(game_path, "a game file", "--game")?)?;
    let aux = AuxiliaryGame::new(game)?;
    let report = solver::run(&aux, cfg)?;

    let report_path = out_dir.join("solve_report.json");
    report.save(&report_path)?;
    let mut trace = Vec::new();
    report.write_trace_csv(&mut trace)?;
    let trace_path = out_dir.join("trace.csv");
    fs::write(&trace_path, trace)?;

    println!(
        "solved in {} sweeps; certified sweep {} with step norm {:.3e}",
        report.sweeps, report.k_star, report.step_norm_kstar
    );
    println!(
        "approximation level omega = {:.6e}, stability level = {:.6e}",
        report.omega, report.eta_kstar
    );
    println!("wrote {} and {}", report_path.display(), trace_path.display());
    Ok(())
}

/// Output of `disaggregate --mode randomized`.
#[derive(Debug, Serialize, Deserialize)]
struct RandomizedOutput {
    mixed_profile: MixedProfile,
    sampled_profile: Profile,
    aggregate_deviation: f64,
    /// Expected-deviation ceiling `sqrt(n) M delta`.
    expected_bound: f64,
}

fn disaggregate(
    out_dir: &Path,
    seed: u64,
    game_path: Option<&PathBuf>,
    report_path: Option<&PathBuf>,
    mode: &str,
) -> Result<()> {
    let game = Game::load(required(game_path, "a game file", "--game")?)?;
    let report = SolveReport::load(required(report_path, "a solve report", "--report")?)?;
    let constants = game.derive_constants();
    let path = out_dir.join("disaggregation.json");
    match mode {
        "sf" => {
            let result = sf_disaggregate(
                &report.profile_kstar,
                &report.witnesses,
                &game.weights,
                &constants,
            )?;
            result.save(&path)?;
            println!(
                "deviation {:.6e} (bound {:.6e}), {} fractional player(s)",
                result.aggregate_deviation,
                result.bound,
                result.fractional_players.len()
            );
        }
        "randomized" => {
            let (mixed, sample) = randomized_disaggregate(&report.witnesses, seed);
            let mut dev = vec![0.0; game.d];
            for ((a, x), w) in game
                .weights
                .iter()
                .zip(&report.profile_kstar.actions)
                .zip(&sample.actions)
            {
                axpy(&mut dev, *a, x);
                axpy(&mut dev, -a, w);
            }
            let out = RandomizedOutput {
                mixed_profile: mixed,
                sampled_profile: sample,
                aggregate_deviation: norm(&dev),
                expected_bound: (game.n as f64).sqrt() * constants.w_max * constants.delta,
            };
            fs::write(&path, serde_json::to_string_pretty(&out)?)?;
            println!(
                "sampled deviation {:.6e} (expected bound {:.6e})",
                out.aggregate_deviation, out.expected_bound
            );
        }
        other => {
            return Err(Error::Invalid(format!(
                "unknown mode {other:?}; use sf or randomized"
            )))
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Accepts a bare profile, a disaggregation result, or a solve report.
fn load_profile_flexible(path: &Path) -> Result<Profile> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("profile").is_some() {
        #[derive(Deserialize)]
        struct WithProfile {
            profile: Profile,
        }
        let wrapped: WithProfile = serde_json::from_str(&text)?;
        return Ok(wrapped.profile);
    }
    if value.get("profile_kstar").is_some() {
        let report: SolveReport = serde_json::from_str(&text)?;
        return Ok(report.profile_kstar);
    }
    Ok(serde_json::from_str(&text)?)
}

/// Equilibrium verification artifact: the main report measured on the
/// original costs, plus the anchored-game variant for pure profiles.
#[derive(Debug, Serialize)]
struct VerifyOutput {
    game: aggnash_core::EquilibriumReport,
    auxiliary: Option<aggnash_core::EquilibriumReport>,
}

fn verify(
    out_dir: &Path,
    game_path: Option<&PathBuf>,
    profile_path: Option<&PathBuf>,
    report_path: Option<&PathBuf>,
) -> Result<()> {
    let game = Game::load(required(game_path, "a game file", "--game")?)?;
    let profile = load_profile_flexible(required(profile_path, "a profile", "--profile")?)?;
    let aux = AuxiliaryGame::new(game.clone())?;

    let (mut main_report, auxiliary) = match profile.feasibility {
        Feasibility::Nonconvex => (
            additive_epsilon(&game, &profile)?,
            Some(additive_epsilon_aux(&aux, &profile)?),
        ),
        Feasibility::Convexified => (iterate_epsilon(&aux, &profile.actions)?, None),
    };
    if let Some(path) = report_path {
        let solve_report = SolveReport::load(path)?;
        main_report.theory_bound = Some(additive_bound_from_step(
            solve_report.step_norm_kstar,
            aux.constants(),
        ));
    }

    let json_path = out_dir.join("equilibrium.json");
    let output = VerifyOutput {
        game: main_report,
        auxiliary,
    };
    fs::write(&json_path, serde_json::to_string_pretty(&output)?)?;
    let mut csv = Vec::new();
    output.game.write_csv(&mut csv)?;
    let csv_path = out_dir.join("equilibrium.csv");
    fs::write(&csv_path, csv)?;

    println!(
        "additive eps = {:.6e}, relative eps = {:.6e}{}",
        output.game.additive_eps,
        output.game.relative_eps,
        match output.game.theory_bound {
            Some(b) => format!(", theory bound {b:.6e}"),
            None => String::new(),
        }
    );
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn bench(out_dir: &Path, params: &EvParams, jobs: usize) -> Result<()> {
    let table = ev::run_experiment(params, jobs)?;

    let mut csv = Vec::new();
    ev::write_experiment_csv(&table, &mut csv)?;
    let experiment_path = out_dir.join("experiment.csv");
    fs::write(&experiment_path, csv)?;

    let mut plot = Vec::new();
    ev::write_plot_data_csv(&table, &mut plot)?;
    let plot_path = out_dir.join("plot_data.csv");
    fs::write(&plot_path, plot)?;

    println!(
        "{} checkpoint rows over n in {:?}, {} instance(s) each, {} sweeps",
        table.rows.len(),
        params.n_grid,
        params.instances,
        params.sweeps
    );
    for failure in &table.failures {
        println!("failed: {failure}");
    }
    println!(
        "wrote {} and {}",
        experiment_path.display(),
        plot_path.display()
    );
    Ok(())
}
