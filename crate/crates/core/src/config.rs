//! Experiment configuration files.
//!
//! Line-oriented `key = value` text. Top-level keys come first; `[solver]`,
//! `[noise]` and `[experiment]` open sections. `#` starts a comment, lists are
//! comma separated, strings may be quoted. Unknown keys are rejected.
//!
//! ```text
//! seed = 7
//! output_dir = "out/mix"
//!
//! [solver]
//! n_points = 64
//! k_max = 21
//! dt = 0.00390625
//! damping = bump
//! damping_amplitude = 2
//!
//! [noise]
//! modes = 0, 1
//! amplitudes = 0.4, 0.4
//!
//! [experiment]
//! kind = mix
//! ensemble_size = 400
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::DistanceNorm;
use crate::dynamics::SolverConfig;
use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, RhoSpec};
use crate::spectral::{DampingProfile, DampingShape, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Decay,
    Gramian,
    Stabilize,
    Couple,
    Mix,
    Saturate,
    Smooth,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::Decay,
        ExperimentKind::Gramian,
        ExperimentKind::Stabilize,
        ExperimentKind::Couple,
        ExperimentKind::Mix,
        ExperimentKind::Saturate,
        ExperimentKind::Smooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Gramian => "gramian",
            ExperimentKind::Stabilize => "stabilize",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Mix => "mix",
            ExperimentKind::Saturate => "saturate",
            ExperimentKind::Smooth => "smooth",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment kind `{s}`")))
    }
}

/// Initial state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialData {
    Zero,
    /// Random phases, `|û(k)| ∝ ⟨k⟩^{-decay}`, scaled to the given H¹ norm.
    Random { h1: f64, decay: f64 },
    /// `amplitude·e^{i·mode·x}` in physical units.
    Plane { mode: i64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub n_points: usize,
    pub k_max: usize,
    pub dt: f64,
    pub p: u32,
    pub damping: DampingShape,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            n_points: 128,
            k_max: 42,
            dt: 1.0 / 256.0,
            p: 3,
            damping: DampingShape::Bump {
                amplitude: 2.0,
                center: PI,
                width: 1.0,
            },
        }
    }
}

impl SolverSection {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_points, self.k_max)
    }

    pub fn build(&self) -> Result<SolverConfig> {
        let grid = self.grid()?;
        SolverConfig::new(grid, self.dt, self.p, DampingProfile::new(grid, self.damping)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GammaGrid {
    pub fn values(&self) -> Vec<f64> {
        crate::control::gamma_grid(self.min, self.max, self.count)
    }
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 1e-1,
            count: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExperimentSpec {
    Simulate {
        horizon: f64,
        initial: InitialData,
        forced: bool,
        store_stride: usize,
    },
    Decay {
        horizon: f64,
        samples_per_unit: usize,
        initial: InitialData,
    },
    Gramian {
        warm_steps: usize,
        time_level: u32,
        galerkin_cutoff: usize,
        /// Control modes; the noise modes when empty.
        modes_b: Vec<i64>,
        initial: InitialData,
    },
    Stabilize {
        draws: usize,
        perturbation: f64,
        gammas: GammaGrid,
        time_level: u32,
        warm_steps: usize,
        norm: DistanceNorm,
        initial: InitialData,
    },
    Couple {
        steps: usize,
        perturbation: f64,
        control: bool,
        gammas: GammaGrid,
        time_level: u32,
        warm_steps: usize,
        initial: InitialData,
    },
    Mix {
        ensemble_size: usize,
        steps: usize,
        initial_h1: f64,
        initial_decay: f64,
        /// Start both ensembles from the same state.
        same_initial: bool,
    },
    Saturate {
        generators: Vec<i64>,
        iterations: usize,
    },
    Smooth {
        draws: usize,
        tail_decay: f64,
        horizon: f64,
        cutoffs: Vec<usize>,
    },
}

fn default_random() -> InitialData {
    InitialData::Random { h1: 1.0, decay: 2.0 }
}

impl ExperimentSpec {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Simulate => ExperimentSpec::Simulate {
                horizon: 1.0,
                initial: default_random(),
                forced: true,
                store_stride: 16,
            },
            ExperimentKind::Decay => ExperimentSpec::Decay {
                horizon: 200.0,
                samples_per_unit: 4,
                initial: default_random(),
            },
            ExperimentKind::Gramian => ExperimentSpec::Gramian {
                warm_steps: 20,
                time_level: 6,
                galerkin_cutoff: 4,
                modes_b: Vec::new(),
                initial: default_random(),
            },
            ExperimentKind::Stabilize => ExperimentSpec::Stabilize {
                draws: 50,
                perturbation: 1e-3,
                gammas: GammaGrid::default(),
                time_level: 6,
                warm_steps: 20,
                norm: DistanceNorm::H1,
                initial: default_random(),
            },
            ExperimentKind::Couple => ExperimentSpec::Couple {
                steps: 10,
                perturbation: 1e-3,
                control: true,
                gammas: GammaGrid::default(),
                time_level: 6,
                warm_steps: 20,
                initial: default_random(),
            },
            ExperimentKind::Mix => ExperimentSpec::Mix {
                ensemble_size: 400,
                steps: 60,
                initial_h1: 1.5,
                initial_decay: 2.0,
                same_initial: false,
            },
            ExperimentKind::Saturate => ExperimentSpec::Saturate {
                generators: vec![0, 1],
                iterations: 3,
            },
            ExperimentKind::Smooth => ExperimentSpec::Smooth {
                draws: 20,
                tail_decay: 1.51,
                horizon: 1.0,
                cutoffs: vec![42, 85],
            },
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentSpec::Simulate { .. } => ExperimentKind::Simulate,
            ExperimentSpec::Decay { .. } => ExperimentKind::Decay,
            ExperimentSpec::Gramian { .. } => ExperimentKind::Gramian,
            ExperimentSpec::Stabilize { .. } => ExperimentKind::Stabilize,
            ExperimentSpec::Couple { .. } => ExperimentKind::Couple,
            ExperimentSpec::Mix { .. } => ExperimentKind::Mix,
            ExperimentSpec::Saturate { .. } => ExperimentKind::Saturate,
            ExperimentSpec::Smooth { .. } => ExperimentKind::Smooth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub solver: SolverSection,
    pub noise: NoiseSpec,
    pub experiment: ExperimentSpec,
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            solver: SolverSection::default(),
            noise: NoiseSpec::default(),
            experiment: ExperimentSpec::default_for(kind),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind()
    }

    /// Cross-field checks; every violation is reported.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let solver = match self.solver.build() {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push(format!("solver: {}", strip(&e)));
                None
            }
        };
        if let Err(e) = self.noise.validate() {
            errs.push(strip(&e));
        }
        if let Some(s) = &solver {
            let width = self.noise.cell_width();
            if self.kind() != ExperimentKind::Saturate && !s.divides(width) {
                errs.push(format!(
                    "solver: dt = {} must divide the noise cell width 2^-(level_max+1) = {width} (SolverConfig invariant)",
                    s.dt
                ));
            }
            if let Some(k) = self.noise.modes.iter().find(|&&k| s.grid.index(k).is_none()) {
                errs.push(format!("noise: mode {k} lies outside |k| <= k_max = {}", s.grid.k_max()));
            }
        }
        self.validate_experiment(solver.as_ref(), &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn validate_experiment(&self, solver: Option<&SolverConfig>, errs: &mut Vec<String>) {
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(format!("experiment: {msg}"));
            }
        };
        let check_initial = |init: &InitialData, need: &mut dyn FnMut(bool, &str)| match init {
            InitialData::Zero => {}
            InitialData::Random { h1, decay } => {
                need(*h1 >= 0.0 && h1.is_finite(), "initial_h1 must be >= 0");
                need(decay.is_finite(), "initial_decay must be finite");
            }
            InitialData::Plane { mode, amplitude } => {
                need(amplitude.is_finite(), "initial_amplitude must be finite");
                if let Some(s) = solver {
                    need(s.grid.index(*mode).is_some(), "initial_mode must lie in the band");
                }
            }
        };
        let level_ok = |level: u32| level <= self.noise.level_max;
        match &self.experiment {
            ExperimentSpec::Simulate {
                horizon,
                initial,
                store_stride,
                ..
            } => {
                need(*horizon > 0.0 && horizon.is_finite(), "horizon must be > 0");
                need(*store_stride >= 1, "store_stride must be >= 1");
                check_initial(initial, &mut need);
            }
            ExperimentSpec::Decay {
                horizon,
                samples_per_unit,
                initial,
            } => {
                need(*horizon > 0.0 && horizon.is_finite(), "horizon must be > 0");
                need(*samples_per_unit >= 1, "samples_per_unit must be >= 1");
                if let Some(s) = solver {
                    need(s.damping.is_active(), "decay needs active damping");
                }
                check_initial(initial, &mut need);
            }
            ExperimentSpec::Gramian {
                time_level,
                galerkin_cutoff,
                initial,
                ..
            } => {
                need(level_ok(*time_level), "time_level must not exceed noise level_max");
                need(*galerkin_cutoff <= self.solver.k_max, "galerkin_cutoff must not exceed k_max");
                check_initial(initial, &mut need);
            }
            ExperimentSpec::Stabilize {
                draws,
                perturbation,
                gammas,
                time_level,
                initial,
                norm,
                ..
            } => {
                need(*draws >= 1, "draws must be >= 1");
                need(*perturbation > 0.0, "perturbation must be > 0");
                need(gammas.min > 0.0 && gammas.max >= gammas.min && gammas.count >= 1, "gamma grid must satisfy 0 < gamma_min <= gamma_max, gamma_count >= 1");
                need(level_ok(*time_level), "time_level must not exceed noise level_max");
                if let DistanceNorm::Decayed { tau0 } = norm {
                    need(*tau0 > 0.0, "tau0 must be > 0");
                }
                check_initial(initial, &mut need);
            }
            ExperimentSpec::Couple {
                steps,
                perturbation,
                gammas,
                time_level,
                initial,
                ..
            } => {
                need(*steps >= 1, "steps must be >= 1");
                need(*perturbation >= 0.0, "perturbation must be >= 0");
                need(gammas.min > 0.0 && gammas.max >= gammas.min && gammas.count >= 1, "gamma grid must satisfy 0 < gamma_min <= gamma_max, gamma_count >= 1");
                need(level_ok(*time_level), "time_level must not exceed noise level_max");
                check_initial(initial, &mut need);
            }
            ExperimentSpec::Mix {
                ensemble_size,
                steps,
                initial_h1,
                ..
            } => {
                need(*ensemble_size >= 1, "ensemble_size must be >= 1");
                need(*steps >= 1, "steps must be >= 1");
                need(*initial_h1 >= 0.0, "initial_h1 must be >= 0");
            }
            ExperimentSpec::Saturate { generators, .. } => {
                need(!generators.is_empty(), "generators must be nonempty");
            }
            ExperimentSpec::Smooth {
                draws,
                horizon,
                cutoffs,
                ..
            } => {
                need(*draws >= 1, "draws must be >= 1");
                need(*horizon > 0.0, "horizon must be > 0");
                need(!cutoffs.is_empty() && cutoffs.iter().all(|&k| k >= 1), "cutoffs must be a nonempty list of positive integers");
            }
        }
    }

    /// Canonical text form; [`parse_config`] reads it back field for field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "output_dir = \"{}\"", self.output_dir.display());
        s.push_str(&self.results_text());
        s
    }

    /// Canonical text without `output_dir`, which does not affect results.
    fn results_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "seed = {}", self.seed);
        let sv = &self.solver;
        let _ = writeln!(w, "\n[solver]");
        let _ = writeln!(w, "n_points = {}", sv.n_points);
        let _ = writeln!(w, "k_max = {}", sv.k_max);
        let _ = writeln!(w, "dt = {}", sv.dt);
        let _ = writeln!(w, "p = {}", sv.p);
        match sv.damping {
            DampingShape::None => {
                let _ = writeln!(w, "damping = none");
            }
            DampingShape::Constant { alpha } => {
                let _ = writeln!(w, "damping = constant\ndamping_alpha = {alpha}");
            }
            DampingShape::Bump {
                amplitude,
                center,
                width,
            } => {
                let _ = writeln!(
                    w,
                    "damping = bump\ndamping_amplitude = {amplitude}\ndamping_center = {center}\ndamping_width = {width}"
                );
            }
        }
        let n = &self.noise;
        let _ = writeln!(w, "\n[noise]");
        let _ = writeln!(w, "modes = {}", join(&n.modes));
        let _ = writeln!(w, "amplitudes = {}", join(&n.amplitudes));
        let _ = writeln!(w, "haar_c = {}", n.haar_c);
        let _ = writeln!(w, "haar_q = {}", n.haar_q);
        let _ = writeln!(w, "level_max = {}", n.level_max);
        let _ = writeln!(w, "rho = {}", rho_name(n.rho));
        let _ = writeln!(w, "\n[experiment]");
        let _ = writeln!(w, "kind = {}", self.kind());
        write_experiment(w, &self.experiment);
        s
    }

    /// Hex SHA-256 of every field that affects results.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.results_text().as_bytes()))
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::InvalidArgument(m) => m.clone(),
        Error::Validation(v) => v.join("; "),
        other => other.to_string(),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn rho_name(r: RhoSpec) -> &'static str {
    match r {
        RhoSpec::RaisedCosine => "raised-cosine",
        RhoSpec::Triangular => "triangular",
    }
}

fn write_initial(w: &mut String, init: &InitialData) {
    match init {
        InitialData::Zero => {
            let _ = writeln!(w, "initial = zero");
        }
        InitialData::Random { h1, decay } => {
            let _ = writeln!(w, "initial = random\ninitial_h1 = {h1}\ninitial_decay = {decay}");
        }
        InitialData::Plane { mode, amplitude } => {
            let _ = writeln!(w, "initial = plane\ninitial_mode = {mode}\ninitial_amplitude = {amplitude}");
        }
    }
}

fn write_gammas(w: &mut String, g: &GammaGrid) {
    let _ = writeln!(w, "gamma_min = {}\ngamma_max = {}\ngamma_count = {}", g.min, g.max, g.count);
}

fn write_experiment(w: &mut String, e: &ExperimentSpec) {
    match e {
        ExperimentSpec::Simulate {
            horizon,
            initial,
            forced,
            store_stride,
        } => {
            let _ = writeln!(w, "horizon = {horizon}\nforced = {forced}\nstore_stride = {store_stride}");
            write_initial(w, initial);
        }
        ExperimentSpec::Decay {
            horizon,
            samples_per_unit,
            initial,
        } => {
            let _ = writeln!(w, "horizon = {horizon}\nsamples_per_unit = {samples_per_unit}");
            write_initial(w, initial);
        }
        ExperimentSpec::Gramian {
            warm_steps,
            time_level,
            galerkin_cutoff,
            modes_b,
            initial,
        } => {
            let _ = writeln!(
                w,
                "warm_steps = {warm_steps}\ntime_level = {time_level}\ngalerkin_cutoff = {galerkin_cutoff}\nmodes_b = {}",
                join(modes_b)
            );
            write_initial(w, initial);
        }
        ExperimentSpec::Stabilize {
            draws,
            perturbation,
            gammas,
            time_level,
            warm_steps,
            norm,
            initial,
        } => {
            let _ = writeln!(
                w,
                "draws = {draws}\nperturbation = {perturbation}\ntime_level = {time_level}\nwarm_steps = {warm_steps}"
            );
            write_gammas(w, gammas);
            match norm {
                DistanceNorm::H1 => {
                    let _ = writeln!(w, "norm = h1");
                }
                DistanceNorm::Decayed { tau0 } => {
                    let _ = writeln!(w, "norm = decayed\ntau0 = {tau0}");
                }
            }
            write_initial(w, initial);
        }
        ExperimentSpec::Couple {
            steps,
            perturbation,
            control,
            gammas,
            time_level,
            warm_steps,
            initial,
        } => {
            let _ = writeln!(
                w,
                "steps = {steps}\nperturbation = {perturbation}\ncontrol = {control}\ntime_level = {time_level}\nwarm_steps = {warm_steps}"
            );
            write_gammas(w, gammas);
            write_initial(w, initial);
        }
        ExperimentSpec::Mix {
            ensemble_size,
            steps,
            initial_h1,
            initial_decay,
            same_initial,
        } => {
            let _ = writeln!(
                w,
                "ensemble_size = {ensemble_size}\nsteps = {steps}\ninitial_h1 = {initial_h1}\ninitial_decay = {initial_decay}\nsame_initial = {same_initial}"
            );
        }
        ExperimentSpec::Saturate {
            generators,
            iterations,
        } => {
            let _ = writeln!(w, "generators = {}\niterations = {iterations}", join(generators));
        }
        ExperimentSpec::Smooth {
            draws,
            tail_decay,
            horizon,
            cutoffs,
        } => {
            let _ = writeln!(
                w,
                "draws = {draws}\ntail_decay = {tail_decay}\nhorizon = {horizon}\ncutoffs = {}",
                join(cutoffs)
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

struct Entry {
    value: String,
    line: usize,
}

/// Keys of one section; typed getters record errors and consume the key.
struct Section<'a> {
    name: &'static str,
    entries: BTreeMap<String, Entry>,
    errs: &'a mut Vec<String>,
}

impl Section<'_> {
    fn take_raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T {
        match self.take_raw(key) {
            None => default,
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => v,
                Err(_) => {
                    self.errs.push(format!(
                        "line {}: [{}] {key} = `{}` is not a valid {}",
                        e.line,
                        self.name,
                        e.value,
                        std::any::type_name::<T>()
                    ));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T> {
        match self.take_raw(key) {
            None => default,
            Some(e) => {
                if e.value.trim().is_empty() {
                    return Vec::new();
                }
                let parsed: std::result::Result<Vec<T>, _> =
                    e.value.split(',').map(|s| s.trim().parse::<T>()).collect();
                parsed.unwrap_or_else(|_| {
                    self.errs.push(format!(
                        "line {}: [{}] {key} = `{}` is not a comma-separated list of {}",
                        e.line,
                        self.name,
                        e.value,
                        std::any::type_name::<T>()
                    ));
                    default
                })
            }
        }
    }

    fn word(&mut self, key: &str, default: &str) -> (String, usize) {
        match self.take_raw(key) {
            None => (default.to_string(), 0),
            Some(e) => (e.value, e.line),
        }
    }

    fn finish(self) {
        for (k, e) in self.entries {
            self.errs
                .push(format!("line {}: unknown key `{k}` in [{}]", e.line, self.name));
        }
    }
}

fn initial_from(sec: &mut Section<'_>, default: InitialData) -> InitialData {
    let default_name = match default {
        InitialData::Zero => "zero",
        InitialData::Random { .. } => "random",
        InitialData::Plane { .. } => "plane",
    };
    let (name, line) = sec.word("initial", default_name);
    match name.as_str() {
        "zero" => InitialData::Zero,
        "random" => InitialData::Random {
            h1: sec.get("initial_h1", 1.0),
            decay: sec.get("initial_decay", 2.0),
        },
        "plane" => InitialData::Plane {
            mode: sec.get("initial_mode", 1),
            amplitude: sec.get("initial_amplitude", 1.0),
        },
        other => {
            sec.errs.push(format!(
                "line {line}: [experiment] initial = `{other}`; expected zero, random or plane"
            ));
            default
        }
    }
}

fn gammas_from(sec: &mut Section<'_>) -> GammaGrid {
    let d = GammaGrid::default();
    GammaGrid {
        min: sec.get("gamma_min", d.min),
        max: sec.get("gamma_max", d.max),
        count: sec.get("gamma_count", d.count),
    }
}

fn experiment_from(sec: &mut Section<'_>, kind: ExperimentKind) -> ExperimentSpec {
    let spec = ExperimentSpec::default_for(kind);
    match spec {
        ExperimentSpec::Simulate {
            horizon,
            initial,
            forced,
            store_stride,
        } => ExperimentSpec::Simulate {
            horizon: sec.get("horizon", horizon),
            forced: sec.get("forced", forced),
            store_stride: sec.get("store_stride", store_stride),
            initial: initial_from(sec, initial),
        },
        ExperimentSpec::Decay {
            horizon,
            samples_per_unit,
            initial,
        } => ExperimentSpec::Decay {
            horizon: sec.get("horizon", horizon),
            samples_per_unit: sec.get("samples_per_unit", samples_per_unit),
            initial: initial_from(sec, initial),
        },
        ExperimentSpec::Gramian {
            warm_steps,
            time_level,
            galerkin_cutoff,
            modes_b,
            initial,
        } => ExperimentSpec::Gramian {
            warm_steps: sec.get("warm_steps", warm_steps),
            time_level: sec.get("time_level", time_level),
            galerkin_cutoff: sec.get("galerkin_cutoff", galerkin_cutoff),
            modes_b: sec.list("modes_b", modes_b),
            initial: initial_from(sec, initial),
        },
        ExperimentSpec::Stabilize {
            draws,
            perturbation,
            time_level,
            warm_steps,
            initial,
            ..
        } => {
            let draws = sec.get("draws", draws);
            let perturbation = sec.get("perturbation", perturbation);
            let time_level = sec.get("time_level", time_level);
            let warm_steps = sec.get("warm_steps", warm_steps);
            let gammas = gammas_from(sec);
            let (norm_name, line) = sec.word("norm", "h1");
            let norm = match norm_name.as_str() {
                "h1" => DistanceNorm::H1,
                "decayed" => DistanceNorm::Decayed {
                    tau0: sec.get("tau0", 1.0),
                },
                other => {
                    sec.errs.push(format!(
                        "line {line}: [experiment] norm = `{other}`; expected h1 or decayed"
                    ));
                    DistanceNorm::H1
                }
            };
            ExperimentSpec::Stabilize {
                draws,
                perturbation,
                gammas,
                time_level,
                warm_steps,
                norm,
                initial: initial_from(sec, initial),
            }
        }
        ExperimentSpec::Couple {
            steps,
            perturbation,
            control,
            time_level,
            warm_steps,
            initial,
            ..
        } => ExperimentSpec::Couple {
            steps: sec.get("steps", steps),
            perturbation: sec.get("perturbation", perturbation),
            control: sec.get("control", control),
            time_level: sec.get("time_level", time_level),
            warm_steps: sec.get("warm_steps", warm_steps),
            gammas: gammas_from(sec),
            initial: initial_from(sec, initial),
        },
        ExperimentSpec::Mix {
            ensemble_size,
            steps,
            initial_h1,
            initial_decay,
            same_initial,
        } => ExperimentSpec::Mix {
            ensemble_size: sec.get("ensemble_size", ensemble_size),
            steps: sec.get("steps", steps),
            initial_h1: sec.get("initial_h1", initial_h1),
            initial_decay: sec.get("initial_decay", initial_decay),
            same_initial: sec.get("same_initial", same_initial),
        },
        ExperimentSpec::Saturate {
            generators,
            iterations,
        } => ExperimentSpec::Saturate {
            generators: sec.list("generators", generators),
            iterations: sec.get("iterations", iterations),
        },
        ExperimentSpec::Smooth {
            draws,
            tail_decay,
            horizon,
            cutoffs,
        } => ExperimentSpec::Smooth {
            draws: sec.get("draws", draws),
            tail_decay: sec.get("tail_decay", tail_decay),
            horizon: sec.get("horizon", horizon),
            cutoffs: sec.list("cutoffs", cutoffs),
        },
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Parses configuration text. `origin` names the source in error messages.
/// `kind` supplies the experiment kind when the file has none; a file naming
/// a different kind is rejected.
pub fn parse_config(text: &str, origin: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    const SECTIONS: [&str; 4] = ["", "solver", "noise", "experiment"];
    let mut raw: Vec<BTreeMap<String, Entry>> = (0..4).map(|_| BTreeMap::new()).collect();
    let mut current = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let parse_err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: lineno,
            message,
        };
        let body = match line.find('#') {
            Some(p) if !line[..p].contains('"') || line[..p].matches('"').count() % 2 == 0 => &line[..p],
            _ => line,
        }
        .trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(format!("malformed section header `{body}`")))?
                .trim();
            current = SECTIONS[1..]
                .iter()
                .position(|s| *s == name)
                .map(|p| p + 1)
                .ok_or_else(|| parse_err(format!("unknown section [{name}]")))?;
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, found `{body}`")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(parse_err(format!("invalid key `{key}`")));
        }
        let entry = Entry {
            value: unquote(value).to_string(),
            line: lineno,
        };
        if raw[current].insert(key.to_string(), entry).is_some() {
            return Err(parse_err(format!("duplicate key `{key}`")));
        }
    }

    let mut errs = Vec::new();
    let mut sections = raw.into_iter();
    let mut top = Section {
        name: "top level",
        entries: sections.next().expect("four sections"),
        errs: &mut errs,
    };
    let seed = top.get("seed", 0u64);
    let (dir, _) = top.word("output_dir", "out");
    top.finish();

    let mut sv = Section {
        name: "solver",
        entries: sections.next().expect("four sections"),
        errs: &mut errs,
    };
    let d = SolverSection::default();
    let n_points = sv.get("n_points", d.n_points);
    let k_max = sv.get("k_max", d.k_max);
    let dt = sv.get("dt", d.dt);
    let p = sv.get("p", d.p);
    let (damping_name, dline) = sv.word("damping", "bump");
    let damping = match damping_name.as_str() {
        "none" => DampingShape::None,
        "constant" => DampingShape::Constant {
            alpha: sv.get("damping_alpha", 0.1),
        },
        "bump" => DampingShape::Bump {
            amplitude: sv.get("damping_amplitude", 2.0),
            center: sv.get("damping_center", PI),
            width: sv.get("damping_width", 1.0),
        },
        other => {
            sv.errs.push(format!(
                "line {dline}: [solver] damping = `{other}`; expected none, constant or bump"
            ));
            d.damping
        }
    };
    sv.finish();
    let solver = SolverSection {
        n_points,
        k_max,
        dt,
        p,
        damping,
    };

    let mut ns = Section {
        name: "noise",
        entries: sections.next().expect("four sections"),
        errs: &mut errs,
    };
    let nd = NoiseSpec::default();
    let modes = ns.list("modes", nd.modes.clone());
    let default_amps = if modes == nd.modes {
        nd.amplitudes.clone()
    } else {
        vec![nd.amplitudes[0]; modes.len()]
    };
    let amplitudes = ns.list("amplitudes", default_amps);
    let haar_c = ns.get("haar_c", nd.haar_c);
    let haar_q = ns.get("haar_q", nd.haar_q);
    let level_max = ns.get("level_max", nd.level_max);
    let (rho_word, rline) = ns.word("rho", "raised-cosine");
    let rho = match rho_word.as_str() {
        "raised-cosine" => RhoSpec::RaisedCosine,
        "triangular" => RhoSpec::Triangular,
        other => {
            ns.errs.push(format!(
                "line {rline}: [noise] rho = `{other}`; expected raised-cosine or triangular"
            ));
            RhoSpec::RaisedCosine
        }
    };
    ns.finish();
    let noise = NoiseSpec {
        modes,
        amplitudes,
        haar_c,
        haar_q,
        level_max,
        rho,
    };

    let mut ex = Section {
        name: "experiment",
        entries: sections.next().expect("four sections"),
        errs: &mut errs,
    };
    let (kind_word, kline) = ex.word("kind", "");
    let kind = match (kind_word.as_str(), kind) {
        ("", Some(k)) => k,
        ("", None) => {
            ex.errs.push("[experiment] kind is missing".to_string());
            ExperimentKind::Saturate
        }
        (word, requested) => match word.parse::<ExperimentKind>() {
            Ok(k) => {
                if let Some(r) = requested.filter(|r| *r != k) {
                    ex.errs.push(format!(
                        "line {kline}: [experiment] kind = {k} conflicts with the requested kind {r}"
                    ));
                }
                k
            }
            Err(_) => {
                ex.errs.push(format!("line {kline}: unknown experiment kind `{word}`"));
                requested.unwrap_or(ExperimentKind::Saturate)
            }
        },
    };
    let experiment = experiment_from(&mut ex, kind);
    ex.finish();

    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let cfg = ExperimentConfig {
        seed,
        output_dir: PathBuf::from(dir),
        solver,
        noise,
        experiment,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string(), kind)
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[experiment]\nkind = saturate\n", "mem", None).unwrap();
        assert_eq!(cfg, ExperimentConfig::default_for(ExperimentKind::Saturate));
        let again = parse_config("# nothing else\n", "mem", Some(ExperimentKind::Saturate)).unwrap();
        assert_eq!(cfg.digest(), again.digest());
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in ExperimentKind::ALL {
            let mut cfg = ExperimentConfig::default_for(kind);
            cfg.seed = 99;
            cfg.output_dir = PathBuf::from("some dir/x");
            cfg.solver.dt = 1.0 / 512.0;
            let back = parse_config(&cfg.to_text(), "mem", None).unwrap();
            assert_eq!(back, cfg, "{kind}");
        }
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Stabilize);
        if let ExperimentSpec::Stabilize { norm, initial, .. } = &mut cfg.experiment {
            *norm = DistanceNorm::Decayed { tau0: 0.5 };
            *initial = InitialData::Plane { mode: 2, amplitude: 0.3 };
        }
        cfg.solver.damping = DampingShape::Constant { alpha: 0.25 };
        cfg.noise.rho = RhoSpec::Triangular;
        assert_eq!(parse_config(&cfg.to_text(), "mem", None).unwrap(), cfg);
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = ExperimentConfig::default_for(ExperimentKind::Mix);
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn misaligned_dt_is_rejected() {
        let err = parse_config("[solver]\ndt = 0.001\n[experiment]\nkind = simulate\n", "mem", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("SolverConfig invariant"), "{msg}");
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn small_q_is_rejected() {
        let err = parse_config("[noise]\nhaar_q = 1.0\n[experiment]\nkind = mix\n", "mem", None).unwrap_err();
        assert!(err.to_string().contains("q > 1"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("seed = 1\n\nthis is wrong\n", "cfg.txt", None).unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "cfg.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_config("[solver]\nbogus = 3\n[experiment]\nkind = mix\n", "m", None).unwrap_err();
        assert!(err.to_string().contains("line 2: unknown key `bogus`"), "{err}");
        let err = parse_config("[solver]\ndt = fast\n[experiment]\nkind = mix\n", "m", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_config("[wrong]\n", "m", None).is_err());
        assert!(parse_config("seed = 1\nseed = 2\n", "m", None).is_err());
    }

    #[test]
    fn kind_conflicts() {
        let text = "[experiment]\nkind = mix\n";
        assert!(parse_config(text, "m", Some(ExperimentKind::Decay)).is_err());
        assert!(parse_config(text, "m", Some(ExperimentKind::Mix)).is_ok());
        assert!(parse_config("", "m", None).is_err());
        assert!("walk".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn several_violations_are_listed() {
        let text = "[solver]\np = 4\n[noise]\nhaar_q = 0.5\n[experiment]\nkind = gramian\ngalerkin_cutoff = 99\n";
        match parse_config(text, "m", None).unwrap_err() {
            Error::Validation(v) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_quotes() {
        let text = "seed = 5 # master\noutput_dir = \"a#b\"\n[experiment]\nkind = saturate\ngenerators = 5, 6\n";
        let cfg = parse_config(text, "m", None).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.output_dir, PathBuf::from("a#b"));
        assert_eq!(
            cfg.experiment,
            ExperimentSpec::Saturate {
                generators: vec![5, 6],
                iterations: 3
            }
        );
    }
}
