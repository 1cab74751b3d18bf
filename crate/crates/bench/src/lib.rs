//! Shared fixtures for the benchmark targets.

use aggnash_core::ev::{self, EvParams};
use aggnash_core::game::AuxiliaryGame;

/// Charging-benchmark auxiliary game with `n` players, fixed seed.
pub fn charging_instance(n: usize) -> AuxiliaryGame {
    let params = EvParams::default();
    let instance = ev::sample_instance(&params, n, ev::instance_seed(12, n, 0))
        .expect("default parameters are feasible");
    let game = ev::build_game(&params, &instance).expect("instance maps to a valid game");
    AuxiliaryGame::new(game).expect("charging games are valid")
}
