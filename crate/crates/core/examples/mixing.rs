//! Dictionary distance between two ensembles started from different states.
//! A reduced ensemble keeps the run short; the noise floor is `2/√M`.
//!
//! ```bash
//! cargo run --release --example mixing
//! ```

use std::f64::consts::PI;

use schrodmix::dynamics::SolverConfig;
use schrodmix::mixing::{mixing_experiment, random_state};
use schrodmix::noise::NoiseSpec;
use schrodmix::spectral::{DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(64, 21)?;
    let cfg = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
    let (ua, ub) = (random_state(grid, 2.0, 1.5, 7, 0), random_state(grid, 2.0, 1.5, 7, 1));
    let r = mixing_experiment(&ua, &ub, 100, 12, &NoiseSpec::default(), &cfg, 11)?;
    for (n, d) in r.distances.iter().enumerate() {
        println!("step {n:>2}: distance {d:.4}");
    }
    println!(
        "floor {:.3}, fitted rate {:?}, r {:?}, window {:?}",
        r.noise_floor, r.fitted_rate, r.correlation, r.fit_window
    );
    Ok(())
}
