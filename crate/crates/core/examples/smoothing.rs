//! Nonlinear smoothing: the remainder `u(t) − e^{−iθ} S_a(t) u₀` stays
//! bounded in `H^{5/4}` as the spectral cutoff grows, while rough initial
//! data does not.
//!
//! ```bash
//! cargo run --release --example smoothing
//! ```

use std::f64::consts::PI;

use schrodmix::dynamics::{smoothing_remainder, Forcing, SolverConfig};
use schrodmix::mixing::random_state;
use schrodmix::spectral::{sobolev_norm, DampingProfile, Grid};

fn main() -> schrodmix::Result<()> {
    let fine = Grid::new(256, 85)?;
    let u = random_state(fine, 1.51, 1.0, 2, 0);
    for k in [21usize, 42, 85] {
        let grid = Grid::new((2 * k + 2).next_power_of_two(), k)?;
        let cfg = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0)?)?;
        let low = u.low_pass(k).regrid(grid);
        let u0 = low.scale_real(1.0 / low.norm_h1());
        let rem = smoothing_remainder(&u0, &Forcing::Zero, 1.0, &cfg)?;
        println!(
            "k_max = {k:>2}: |u0|_H5/4 = {:.4}, |remainder|_H5/4 = {:.4e}",
            sobolev_norm(&u0, 1.25),
            sobolev_norm(&rem, 1.25)
        );
    }
    Ok(())
}
