//! Resonant / non-resonant split of the cubic product on a single mode.
//!
//! ```bash
//! cargo run --release --example resonance
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use schrodmix::dynamics::{nmult, nnonres, nres};
use schrodmix::spectral::{FourierField, Grid};

fn main() -> schrodmix::Result<()> {
    let grid = Grid::new(32, 10)?;
    let a = 0.7;
    let u = FourierField::mode(grid, 1, Complex64::new(a, 0.0))?;
    let fields = [u.clone(), u.clone(), u];
    let (n, r, nr) = (nmult(&fields)?, nres(&fields)?, nnonres(&fields)?);
    println!("N(e_1)    = {:.6}", n.get(1));
    println!("N_R(e_1)  = {:.6}  closed form {:.6}", r.get(1), a.powi(3) / PI);
    println!("N_NR(e_1) = {:.6}  closed form {:.6}", nr.get(1), -a.powi(3) / (2.0 * PI));
    println!("|N - N_R - N_NR| = {:e}", (&n - &(&r + &nr)).norm_l2());
    Ok(())
}
