//! Experiment dispatch, result files and run manifests.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentSpec, InitialData};
use crate::control::{contraction_search, saturation_span, ContractionOptions};
use crate::dynamics::{markov_step, smoothing_remainder, solve_nls, Forcing, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::linear::assemble_gramian;
use crate::mixing::{
    decay_experiment, mixing_experiment, noise_for, random_state, random_state_from,
    synchronous_coupling_experiment, CouplingControl,
};
use crate::noise::NoiseSpec;
use crate::rng::{Purpose, SeedRecord};
use crate::spectral::{energy, sobolev_norm, DampingProfile, FourierField, Grid};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub kind: String,
    pub seed: u64,
    pub config_digest: String,
    /// Canonical config text; saving it and rerunning reproduces every output.
    pub config: String,
    pub output_dir: PathBuf,
    /// Sup-norm bound on the noise discarded by truncating at `level_max`.
    pub noise_truncation_error: f64,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn output(&self, name: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|o| o.name == name)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Result files collected in memory and written at the end of a run.
#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.0.push((name.to_string(), bytes));
    }

    fn text(&mut self, name: &str, body: String) {
        self.add(name, body.into_bytes());
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_vec_pretty(value)?;
        v.push(b'\n');
        self.add(name, v);
        Ok(())
    }
}

fn initial_state(init: &InitialData, grid: Grid, master: u64, chain: u64) -> Result<FourierField> {
    Ok(match init {
        InitialData::Zero => FourierField::zeros(grid),
        InitialData::Random { h1, .. } if *h1 == 0.0 => FourierField::zeros(grid),
        InitialData::Random { h1, decay } => random_state(grid, *decay, *h1, master, chain),
        InitialData::Plane { mode, amplitude } => {
            // e_k = e^{ikx}/√(2π), so amplitude·e^{ikx} has coefficient amplitude·√(2π).
            let c = num_complex::Complex64::new(amplitude * crate::spectral::SQRT_2PI, 0.0);
            FourierField::mode(grid, *mode, c)?
        }
    })
}

/// `warm_steps` Markov steps of chain `chain` from the configured initial
/// state, driven by the `(seed, Noise, chain, s)` substreams.
fn warm_state(
    init: &InitialData,
    warm_steps: usize,
    spec: &NoiseSpec,
    cfg: &SolverConfig,
    seed: u64,
    chain: u64,
) -> Result<FourierField> {
    let mut u = initial_state(init, cfg.grid, seed, chain)?;
    for s in 0..warm_steps {
        u = markov_step(&u, &noise_for(spec, SeedRecord::new(seed, Purpose::Noise, chain, s as u64)), cfg)?;
    }
    Ok(u)
}

fn perturbation(grid: Grid, size: f64, seed: u64, draw: u64) -> FourierField {
    if size == 0.0 {
        return FourierField::zeros(grid);
    }
    random_state_from(grid, 2.0, size, SeedRecord::new(seed, Purpose::Perturbation, draw, 0))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        f64::NAN
    } else {
        s[s.len() / 2]
    }
}

/// Runs the configured experiment, writes its result files and
/// `manifest.json` into `cfg.output_dir`, and returns the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started = unix_now();
    let solver = cfg.solver.build()?;
    let mut out = Outputs::default();
    match &cfg.experiment {
        ExperimentSpec::Simulate {
            horizon,
            initial,
            forced,
            store_stride,
        } => simulate(cfg, &solver, *horizon, initial, *forced, *store_stride, &mut out)?,
        ExperimentSpec::Decay {
            horizon,
            samples_per_unit,
            initial,
        } => {
            let u0 = initial_state(initial, solver.grid, cfg.seed, 0)?;
            let report = decay_experiment(&u0, *horizon, *samples_per_unit, &solver)?;
            let mut csv = String::from("t,energy\n");
            for (t, e) in report.times.iter().zip(&report.energies) {
                let _ = writeln!(csv, "{t},{e:e}");
            }
            out.text("decay.csv", csv);
            out.json("decay.json", &report)?;
        }
        ExperimentSpec::Gramian {
            warm_steps,
            time_level,
            galerkin_cutoff,
            modes_b,
            initial,
        } => {
            let u = warm_state(initial, *warm_steps, &cfg.noise, &solver, cfg.seed, 0)?;
            let zeta = noise_for(&cfg.noise, SeedRecord::new(cfg.seed, Purpose::Noise, 0, *warm_steps as u64));
            let base = solve_nls(&u, &Forcing::noise(&zeta), 1.0, &solver.clone().with_stride(1))?;
            let modes = if modes_b.is_empty() { &cfg.noise.modes } else { modes_b };
            let report = assemble_gramian(&base, modes, *time_level, *galerkin_cutoff)?;
            let mut csv = String::from("index,eigenvalue\n");
            for (i, l) in report.eigenvalues.iter().enumerate() {
                let _ = writeln!(csv, "{i},{l:e}");
            }
            out.text("eigenvalues.csv", csv);
            out.json("gramian.json", &report)?;
        }
        ExperimentSpec::Stabilize {
            draws,
            perturbation: size,
            gammas,
            time_level,
            warm_steps,
            norm,
            initial,
        } => {
            // Each draw warm-starts its own chain; the draw's noise is the
            // step after the warm-up on that chain.
            let opts = ContractionOptions {
                level: *time_level,
                norm: *norm,
            };
            let grid_g = gammas.values();
            let reports = (0..*draws as u64)
                .into_par_iter()
                .map(|draw| {
                    let y = warm_state(initial, *warm_steps, &cfg.noise, &solver, cfg.seed, draw)?;
                    let record = SeedRecord::new(cfg.seed, Purpose::Noise, draw, *warm_steps as u64);
                    let x = &y + &perturbation(solver.grid, *size, cfg.seed, draw);
                    contraction_search(&y, &x, &noise_for(&cfg.noise, record), &grid_g, &solver, &opts)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("draw,gamma,q_ratio,q_uncontrolled,shift_norm,success\n");
            for (draw, r) in reports.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{draw},{},{},{},{},{}",
                    r.gamma, r.q_ratio, r.q_uncontrolled, r.shift_norm, r.success
                );
            }
            let q: Vec<f64> = reports.iter().map(|r| r.q_ratio).collect();
            let qu: Vec<f64> = reports.iter().map(|r| r.q_uncontrolled).collect();
            let summary = StabilizeSummary {
                draws: *draws,
                success_fraction: reports.iter().filter(|r| r.success).count() as f64 / *draws as f64,
                median_controlled: median(&q),
                median_uncontrolled: median(&qu),
                reports,
            };
            out.text("stabilize.csv", csv);
            out.json("stabilize.json", &summary)?;
        }
        ExperimentSpec::Couple {
            steps,
            perturbation: size,
            control,
            gammas,
            time_level,
            warm_steps,
            initial,
        } => {
            let y = warm_state(initial, *warm_steps, &cfg.noise, &solver, cfg.seed, 0)?;
            let x = &y + &perturbation(solver.grid, *size, cfg.seed, 0);
            let ctl = CouplingControl {
                gammas: gammas.values(),
                options: ContractionOptions {
                    level: *time_level,
                    ..ContractionOptions::default()
                },
            };
            // Chain 1 keeps the coupling noise apart from the warm-up noise.
            let report = synchronous_coupling_experiment(
                &y,
                &x,
                *steps,
                &cfg.noise,
                &solver,
                cfg.seed,
                1,
                control.then_some(&ctl),
            )?;
            let mut csv = String::from("step,distance,ratio,shift_norm,gamma\n");
            let _ = writeln!(csv, "0,{},,,", report.distances[0]);
            for s in 0..*steps {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    s + 1,
                    report.distances[s + 1],
                    report.ratios[s],
                    report.shift_norms[s],
                    report.gammas[s]
                );
            }
            out.text("coupling.csv", csv);
            out.json("coupling.json", &report)?;
        }
        ExperimentSpec::Mix {
            ensemble_size,
            steps,
            initial_h1,
            initial_decay,
            same_initial,
        } => {
            let grid = solver.grid;
            let ua = random_state(grid, *initial_decay, *initial_h1, cfg.seed, 0);
            let ub = if *same_initial {
                ua.clone()
            } else {
                random_state(grid, *initial_decay, *initial_h1, cfg.seed, 1)
            };
            let mut report = mixing_experiment(&ua, &ub, *ensemble_size, *steps, &cfg.noise, &solver, cfg.seed)?;
            report.config_digest = Some(cfg.digest());
            let mut csv = String::from("step,distance,distance_cosines\n");
            for (n, (d, a)) in report.distances.iter().zip(&report.distances_alt).enumerate() {
                let _ = writeln!(csv, "{n},{d},{a}");
            }
            out.text("mixing.csv", csv);
            out.json("mix.json", &report)?;
        }
        ExperimentSpec::Saturate {
            generators,
            iterations,
        } => {
            let b: BTreeSet<i64> = generators.iter().copied().collect();
            out.json("saturation.json", &saturation_span(&b, *iterations))?;
        }
        ExperimentSpec::Smooth {
            draws,
            tail_decay,
            horizon,
            cutoffs,
        } => smooth(cfg, &solver, *draws, *tail_decay, *horizon, cutoffs, &mut out)?,
    }

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::with_capacity(out.0.len());
    for (name, bytes) in &out.0 {
        fs::write(dir.join(name), bytes)?;
        outputs.push(OutputFile {
            name: name.clone(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: cfg.kind().to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        config: cfg.to_text(),
        output_dir: dir.clone(),
        noise_truncation_error: cfg.noise.truncation_error(),
        started,
        finished: unix_now(),
        outputs,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

fn write_manifest(m: &RunManifest, dir: &Path) -> Result<()> {
    let f = fs::File::create(dir.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(BufWriter::new(f), m)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StabilizeSummary {
    draws: usize,
    success_fraction: f64,
    median_controlled: f64,
    median_uncontrolled: f64,
    reports: Vec<crate::control::StabilizationReport>,
}

fn simulate(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    horizon: f64,
    initial: &InitialData,
    forced: bool,
    stride: usize,
    out: &mut Outputs,
) -> Result<()> {
    let u0 = initial_state(initial, solver.grid, cfg.seed, 0)?;
    let forcing = if forced {
        let units = horizon.ceil() as u64;
        let paths: Vec<_> = (0..units)
            .map(|s| noise_for(&cfg.noise, SeedRecord::new(cfg.seed, Purpose::Noise, 0, s)))
            .collect();
        Forcing::noise_chain(&paths)
    } else {
        Forcing::Zero
    };
    let traj: Trajectory = solve_nls(&u0, &forcing, horizon, &solver.clone().with_stride(stride))?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    out.add("trajectory.csv", csv);
    let mut bin = Vec::new();
    traj.write_binary(&mut bin)?;
    out.add("trajectory.bin", bin);
    let mut norms = String::from("t,l2,h1,energy\n");
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let _ = writeln!(norms, "{t},{},{},{}", s.norm_l2(), s.norm_h1(), energy(s, solver.p)?);
    }
    out.text("norms.csv", norms);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SmoothCutoff {
    k_max: usize,
    n_points: usize,
    median_input_h54: f64,
    max_remainder_h54: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SmoothSummary {
    draws: usize,
    tail_decay: f64,
    horizon: f64,
    cutoffs: Vec<SmoothCutoff>,
    /// Median over draws of `‖u₀‖_{H^{5/4}}` at the largest cutoff over the smallest.
    input_growth: f64,
    /// Largest over smallest of the per-cutoff maximal remainder norms.
    remainder_growth: f64,
}

/// Remainder of the nonlinear smoothing identity across spectral cutoffs.
/// Inputs are drawn once on the finest grid, then low-passed to each cutoff
/// and rescaled to unit H¹ norm.
fn smooth(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    draws: usize,
    tail_decay: f64,
    horizon: f64,
    cutoffs: &[usize],
    out: &mut Outputs,
) -> Result<()> {
    const S: f64 = 1.25;
    let mut ks = cutoffs.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let grids = ks
        .iter()
        .map(|&k| Grid::new((2 * k + 2).next_power_of_two(), k))
        .collect::<Result<Vec<_>>>()?;
    let finest = *grids.last().expect("nonempty cutoffs");
    let inputs: Vec<FourierField> = (0..draws as u64)
        .map(|d| random_state(finest, tail_decay, 1.0, cfg.seed, d))
        .collect();
    let mut csv = String::from("draw,k_max,input_h54,remainder_h54\n");
    let mut rows = Vec::new();
    let mut input_norms = vec![Vec::new(); grids.len()];
    for (gi, &grid) in grids.iter().enumerate() {
        let damping = DampingProfile::new(grid, cfg.solver.damping)?;
        let sc = SolverConfig::new(grid, solver.dt, solver.p, damping)?;
        let mut rem_max: f64 = 0.0;
        for (d, u) in inputs.iter().enumerate() {
            let low = u.low_pass(grid.k_max()).regrid(grid);
            let u0 = low.scale_real(1.0 / low.norm_h1());
            let inorm = sobolev_norm(&u0, S);
            let rnorm = sobolev_norm(&smoothing_remainder(&u0, &Forcing::Zero, horizon, &sc)?, S);
            let _ = writeln!(csv, "{d},{},{inorm},{rnorm}", grid.k_max());
            input_norms[gi].push(inorm);
            rem_max = rem_max.max(rnorm);
        }
        rows.push(SmoothCutoff {
            k_max: grid.k_max(),
            n_points: grid.n_points(),
            median_input_h54: median(&input_norms[gi]),
            max_remainder_h54: rem_max,
        });
    }
    let last = rows.len() - 1;
    let growth: Vec<f64> = input_norms[last]
        .iter()
        .zip(&input_norms[0])
        .map(|(a, b)| a / b)
        .collect();
    let summary = SmoothSummary {
        draws,
        tail_decay,
        horizon,
        input_growth: median(&growth),
        remainder_growth: rows[last].max_remainder_h54 / rows[0].max_remainder_h54,
        cutoffs: rows,
    };
    out.text("smooth.csv", csv);
    out.json("smooth.json", &summary)?;
    Ok(())
}

/// Process exit status for a run outcome: 0 on success, 2 for invalid
/// input, 3 for blow-up, 4 for I/O failure, 1 otherwise.
pub fn exit_code(r: &Result<RunManifest>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(Error::Validation(_) | Error::Parse { .. } | Error::InvalidArgument(_)) => 2,
        Err(Error::BlowUp { .. }) => 3,
        Err(Error::Io(_)) => 4,
        Err(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    fn cfg_in(dir: &Path, kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.output_dir = dir.to_path_buf();
        cfg.solver.n_points = 32;
        cfg.solver.k_max = 10;
        cfg
    }

    fn read_json(path: &Path) -> serde_json::Value {
        serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
    }

    #[test]
    fn saturate_writes_interval() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_in(dir.path(), ExperimentKind::Saturate);
        let m = run_experiment(&cfg).unwrap();
        let v = read_json(&dir.path().join("saturation.json"));
        let set: Vec<i64> = serde_json::from_value(v["set"].clone()).unwrap();
        assert!((-3..=4).all(|k| set.contains(&k)));
        assert_eq!(m.outputs.len(), 1);
        let back: RunManifest = serde_json::from_value(read_json(&dir.path().join(MANIFEST_FILE))).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn zero_simulation_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(dir.path(), ExperimentKind::Simulate);
        cfg.noise = cfg.noise.silent();
        cfg.experiment = ExperimentSpec::Simulate {
            horizon: 0.25,
            initial: InitialData::Zero,
            forced: true,
            store_stride: 8,
        };
        run_experiment(&cfg).unwrap();
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert!(csv.starts_with("t,mode,re,im\n"));
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
            assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
        }
        let bin = fs::read(dir.path().join("trajectory.bin")).unwrap();
        let (times, states) = crate::dynamics::read_binary(&bin[..], cfg.solver.grid().unwrap()).unwrap();
        assert_eq!(times.len(), 9);
        assert!(states.iter().all(|s| s.norm_l2() == 0.0));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut ca = cfg_in(a.path(), ExperimentKind::Mix);
        ca.experiment = ExperimentSpec::Mix {
            ensemble_size: 4,
            steps: 2,
            initial_h1: 1.0,
            initial_decay: 2.0,
            same_initial: false,
        };
        let mut cb = ca.clone();
        cb.output_dir = b.path().to_path_buf();
        let (ma, mb) = (run_experiment(&ca).unwrap(), run_experiment(&cb).unwrap());
        assert_eq!(ma.outputs, mb.outputs);
        assert_eq!(ma.config_digest, mb.config_digest);
        for o in &ma.outputs {
            assert_eq!(fs::read(a.path().join(&o.name)).unwrap(), fs::read(b.path().join(&o.name)).unwrap());
        }
    }

    #[test]
    fn blow_up_and_io_codes() {
        assert_eq!(
            exit_code(&Err(Error::BlowUp {
                time: 1.0,
                norm: f64::INFINITY
            })),
            3
        );
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        let cfg = cfg_in(&file, ExperimentKind::Saturate);
        assert_eq!(exit_code(&run_experiment(&cfg)), 4);
        let mut bad = cfg_in(dir.path(), ExperimentKind::Saturate);
        bad.noise.haar_q = 0.5;
        assert_eq!(exit_code(&run_experiment(&bad)), 2);
    }
}
