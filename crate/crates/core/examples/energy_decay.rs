//! Energy decay under localized damping, and the constant-damping rate `2α`.
//!
//! ```bash
//! cargo run --release --example energy_decay
//! ```

use std::f64::consts::PI;

use schrodmix::dynamics::SolverConfig;
use schrodmix::mixing::{decay_experiment, random_state};
use schrodmix::spectral::{DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(64, 21)?;
    let u0 = random_state(grid, 2.0, 1.0, 5, 0);

    let bump = SolverConfig::new(grid, 1.0 / 128.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
    let r = decay_experiment(&u0, 50.0, 2, &bump)?;
    println!(
        "bump damping: E(0) = {:.4}, E(50) = {:.3e}, beta = {:.4}, r = {:.4}",
        r.energies[0],
        r.energies.last().unwrap(),
        r.beta.unwrap_or(f64::NAN),
        r.correlation.unwrap_or(f64::NAN)
    );

    let alpha = 0.3;
    let small = u0.scale_real(1e-3);
    let flat = SolverConfig::new(grid, 1.0 / 128.0, 3, DampingProfile::constant(grid, alpha)?)?;
    let r = decay_experiment(&small, 20.0, 2, &flat)?;
    println!(
        "constant damping alpha = {alpha}: beta = {:.4} (2 alpha = {})",
        r.beta.unwrap_or(f64::NAN),
        2.0 * alpha
    );
    Ok(())
}
