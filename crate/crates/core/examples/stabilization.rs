//! One-step stabilization: shift the noise of `x` so that it lands closer
//! to `S(y, ζ)` than the uncontrolled step does.
//!
//! ```bash
//! cargo run --release --example stabilization
//! ```

use std::f64::consts::PI;

use schrodmix::control::{contraction_search, gamma_grid, ContractionOptions};
use schrodmix::dynamics::{markov_step, SolverConfig};
use schrodmix::mixing::random_state;
use schrodmix::noise::{sample_noise_path_seeded, NoiseSpec};
use schrodmix::rng::{Purpose, SeedRecord};
use schrodmix::spectral::{DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(64, 21)?;
    let cfg = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
    let spec = NoiseSpec::default();
    let mut y = random_state(grid, 2.0, 1.0, 1, 0);
    for s in 0..20 {
        y = markov_step(&y, &sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 0, s)), &cfg)?;
    }
    let gammas = gamma_grid(1e-4, 1e-1, 7);
    for draw in 0..5 {
        let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 1 + draw, 0));
        let x = &y + &random_state(grid, 2.0, 1e-3, 1, 100 + draw);
        let r = contraction_search(&y, &x, &zeta, &gammas, &cfg, &ContractionOptions::default())?;
        println!(
            "draw {draw}: controlled {:.4}, uncontrolled {:.4}, gamma {:.1e}, |shift| {:.3e}",
            r.q_ratio, r.q_uncontrolled, r.gamma, r.shift_norm
        );
    }
    Ok(())
}
