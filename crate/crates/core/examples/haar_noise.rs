//! Samples a Haar noise path, checks the sup-norm bound and prints the
//! first cells as CSV.
//!
//! ```bash
//! cargo run --release --example haar_noise
//! ```

use schrodmix::noise::{orthonormal_time_basis, sample_noise_path_seeded, NoiseSpec};
use schrodmix::rng::{Purpose, SeedRecord};

fn main() {
    let spec = NoiseSpec::default();
    let basis = orthonormal_time_basis(spec.level_max);
    let cells = basis[0].1.len() as f64;
    let worst = basis
        .iter()
        .enumerate()
        .flat_map(|(i, (_, a))| basis.iter().enumerate().map(move |(j, (_, b))| (i, j, a, b)))
        .map(|(i, j, a, b)| {
            let ip: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / cells;
            (ip - if i == j { 1.0 } else { 0.0 }).abs()
        })
        .fold(0.0, f64::max);
    println!("{} basis functions, max |<h_a, h_b> - delta_ab| = {worst:e}", basis.len());

    let path = sample_noise_path_seeded(&spec, SeedRecord::new(42, Purpose::Noise, 0, 0));
    for i in 0..spec.modes.len() {
        println!(
            "mode {}: sup |eta| = {:.4} (bound {:.4}), mean = {:.4}",
            spec.modes[i],
            path.sup_norm(i),
            spec.path_bound(),
            path.mean(i)
        );
    }
    let mut csv = Vec::new();
    path.write_csv(&mut csv).expect("in-memory write");
    for line in String::from_utf8(csv).unwrap().lines().take(7) {
        println!("{line}");
    }
}
