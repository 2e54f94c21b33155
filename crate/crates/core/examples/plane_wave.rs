//! Undamped cubic NLS from a plane wave, compared with the exact solution
//! `u(t) = A e^{i(kx − (k² + A²)t)}`.
//!
//! ```bash
//! cargo run --release --example plane_wave
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use schrodmix::dynamics::{solve_nls, Forcing, SolverConfig};
use schrodmix::spectral::{DampingProfile, FourierField, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(128, 42)?;
    let (k, amp) = (1, 1.0);
    // Coefficients are taken against e^{ikx}/√(2π).
    let c = (2.0 * PI).sqrt() * amp;
    let u0 = FourierField::mode(grid, k, Complex64::new(c, 0.0))?;
    let omega = (k * k) as f64 + amp * amp;
    for dt in [1e-3, 5e-4, 2.5e-4] {
        let cfg = SolverConfig::new(grid, dt, 3, DampingProfile::none(grid))?;
        let traj = solve_nls(&u0, &Forcing::Zero, 1.0, &cfg)?;
        let exact = FourierField::mode(grid, k, Complex64::from_polar(c, -omega))?;
        let err = (traj.last() - &exact).norm_l2() / exact.norm_l2();
        println!("dt = {dt:.2e}  relative L2 error at t = 1: {err:.3e}");
    }
    Ok(())
}
