#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbm_core::model::MigrationSpec;
use scbm_core::power::BalancedPowerModel;
use scbm_core::solver::check_feasibility;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A feasible instance with the deadlines set at random multiples of what the cap
/// achieves, so every constraint can be active or slack.
pub fn random_feasible(rng: &mut ChaCha8Rng, i_max: usize, q: usize) -> MigrationSpec {
    loop {
        let r_hat = rng.random_range(5.0..50.0);
        let ratio: f64 = rng.random_range(0.02..0.45);
        let w = ratio * r_hat;
        let beta = rng.random_range(1.0..(1.0 / ratio).min(2.0));
        let m0 = rng.random_range(16.0..256.0);
        let mut spec = MigrationSpec::new(m0, w, i_max, q, beta, 1e9, 1e9, r_hat).unwrap();
        let f = check_feasibility(&spec).unwrap();
        spec.delta_mt = 1e9 * f.time_margin * rng.random_range(1.05..4.0);
        spec.delta_dt = 1e9 * f.downtime_margin * rng.random_range(1.05..30.0);
        if check_feasibility(&spec).unwrap().feasible {
            return spec;
        }
    }
}

pub fn random_power(rng: &mut ChaCha8Rng) -> BalancedPowerModel {
    BalancedPowerModel {
        k0: rng.random_range(0.005..0.1),
        alpha: rng.random_range(1.5..3.0),
        p_setup_total: rng.random_range(0.0..0.5),
    }
}
