//! Controllability Gramian on a warm noise-driven base: one forced mode
//! against the saturating pair `B = {0, 1}`.
//!
//! ```bash
//! cargo run --release --example gramian
//! ```

use std::f64::consts::PI;

use schrodmix::dynamics::{markov_step, solve_nls, Forcing, SolverConfig};
use schrodmix::linear::assemble_gramian;
use schrodmix::mixing::random_state;
use schrodmix::noise::{sample_noise_path_seeded, NoiseSpec};
use schrodmix::rng::{Purpose, SeedRecord};
use schrodmix::spectral::{DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(64, 21)?;
    let cfg = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
    let spec = NoiseSpec::default();
    let mut u = random_state(grid, 2.0, 1.0, 1, 0);
    for s in 0..20 {
        u = markov_step(&u, &sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 0, s)), &cfg)?;
    }
    let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 0, 20));
    let base = solve_nls(&u, &Forcing::noise(&zeta), 1.0, &cfg.clone().with_stride(1))?;

    for modes in [vec![0], vec![0, 1]] {
        let g = assemble_gramian(&base, &modes, 6, 4)?;
        println!(
            "B = {modes:?}: lambda_min on |k| <= {} is {:.3e}, lambda_max {:.3e}",
            g.target_cutoff, g.target_subspace_min_eig, g.eigenvalues[0]
        );
    }
    Ok(())
}
