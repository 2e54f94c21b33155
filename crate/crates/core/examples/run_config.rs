//! Library route to what the `schrodmix` binary does: parse a config, run
//! it, and read back the manifest.
//!
//! ```bash
//! cargo run --example run_config
//! ```

use schrodmix::{parse_config, run_experiment};

const CONFIG: &str = r#"
seed = 17
output_dir = "target/example-decay"

[solver]
n_points = 32
k_max = 10
dt = 0.0078125
damping = constant
damping_alpha = 0.2

[experiment]
kind = decay
horizon = 10
samples_per_unit = 2
"#;

fn main() -> schrodmix::Result<()> {
    let cfg = parse_config(CONFIG, "inline", None)?;
    println!("config digest {}", cfg.digest());
    let manifest = run_experiment(&cfg)?;
    for f in &manifest.outputs {
        println!("{}  {:>7} bytes  {}", f.sha256, f.bytes, f.name);
    }
    print!("{}", cfg.to_text());
    Ok(())
}
