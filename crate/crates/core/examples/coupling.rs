//! Two chains driven by the same noise, with and without the stabilizing
//! shift on the second one.
//!
//! ```bash
//! cargo run --release --example coupling
//! ```

use std::f64::consts::PI;

use schrodmix::control::{gamma_grid, ContractionOptions};
use schrodmix::dynamics::SolverConfig;
use schrodmix::mixing::{random_state, synchronous_coupling_experiment, CouplingControl};
use schrodmix::noise::NoiseSpec;
use schrodmix::spectral::{DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(64, 21)?;
    let cfg = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
    let spec = NoiseSpec::default();
    let y = random_state(grid, 2.0, 1.0, 3, 0);
    let x = &y + &random_state(grid, 2.0, 1e-2, 3, 1);
    let ctl = CouplingControl {
        gammas: gamma_grid(1e-4, 1e-1, 4),
        options: ContractionOptions::default(),
    };
    let free = synchronous_coupling_experiment(&y, &x, 8, &spec, &cfg, 3, 0, None)?;
    let held = synchronous_coupling_experiment(&y, &x, 8, &spec, &cfg, 3, 0, Some(&ctl))?;
    println!("step  uncontrolled  controlled");
    for (n, (a, b)) in free.distances.iter().zip(&held.distances).enumerate() {
        println!("{n:>4}  {a:.4e}    {b:.4e}");
    }
    Ok(())
}
