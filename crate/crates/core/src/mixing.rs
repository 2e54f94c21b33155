//! Ensemble experiments: Markov chains, energy decay, law distances and
//! coupled chains.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{search, ContractionOptions};
use crate::dynamics::{markov_step, solve_nls, Forcing, SolverConfig};
use crate::error::{Error, Result};
use crate::linear::Component;
use crate::noise::{sample_noise_path_seeded, NoisePath, NoiseSpec};
use crate::rng::{Purpose, SeedRecord};
use crate::spectral::{energy, japanese, sobolev_norm, FourierField};

/// Noise path for `record`; the zero path when every amplitude vanishes.
pub fn noise_for(spec: &NoiseSpec, record: SeedRecord) -> NoisePath {
    if spec.amplitudes.iter().all(|&b| b == 0.0) {
        NoisePath::zero(spec)
    } else {
        sample_noise_path_seeded(spec, record)
    }
}

fn step_with(u: &FourierField, spec: &NoiseSpec, record: SeedRecord, cfg: &SolverConfig) -> Result<FourierField> {
    markov_step(u, &noise_for(spec, record), cfg).map_err(|e| match e {
        Error::BlowUp { time, norm } => Error::BlowUp {
            time: record.step as f64 + time,
            norm,
        },
        other => other,
    })
}

/// States `u_0, …, u_n` of one chain. Step `s` draws its noise from the
/// substream `(master, purpose, chain, s)`.
pub fn run_chain(
    u0: &FourierField,
    n_steps: usize,
    spec: &NoiseSpec,
    cfg: &SolverConfig,
    master: u64,
    purpose: Purpose,
    chain: u64,
) -> Result<Vec<FourierField>> {
    if n_steps == 0 {
        return Err(Error::invalid("run_chain needs at least one step"));
    }
    spec.validate()?;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(u0.clone());
    for s in 0..n_steps {
        let next = step_with(&out[s], spec, SeedRecord::new(master, purpose, chain, s as u64), cfg)?;
        out.push(next);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fits

/// Least-squares line through `(x, y)`: slope, intercept and the Pearson
/// correlation of the data.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Some((slope, my - slope * mx, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `−slope` of `log E` against `t` over the fit window.
    pub beta: Option<f64>,
    /// Correlation of `log E` with `t` over the fit window.
    pub correlation: Option<f64>,
    pub fit_window: (f64, f64),
    /// Samples at or below the underflow floor were dropped from the fit.
    pub censored: bool,
    /// `u₀ = 0`: nothing to fit.
    pub degenerate: bool,
}

const ENERGY_FLOOR: f64 = 1e-250;

/// Records `E(u(t))` at `samples_per_unit` points per unit time and fits
/// `log E` over `[horizon/2, horizon]`.
pub fn decay_experiment(
    u0: &FourierField,
    horizon: f64,
    samples_per_unit: usize,
    cfg: &SolverConfig,
) -> Result<DecayReport> {
    if !cfg.damping.is_active() {
        return Err(Error::invalid("decay experiment needs active damping"));
    }
    if samples_per_unit == 0 {
        return Err(Error::invalid("samples_per_unit must be >= 1"));
    }
    let stride = ((1.0 / cfg.dt) / samples_per_unit as f64).round().max(1.0) as usize;
    let traj = solve_nls(u0, &Forcing::Zero, horizon, &cfg.clone().with_stride(stride))?;
    let energies = traj
        .states
        .iter()
        .map(|s| energy(s, cfg.p))
        .collect::<Result<Vec<_>>>()?;
    let window = (horizon / 2.0, horizon);
    let mut report = DecayReport {
        times: traj.times.clone(),
        energies,
        beta: None,
        correlation: None,
        fit_window: window,
        censored: false,
        degenerate: u0.norm_l2() == 0.0,
    };
    if report.degenerate {
        return Ok(report);
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &e) in report.times.iter().zip(&report.energies) {
        if t >= window.0 - 1e-12 {
            if e > ENERGY_FLOOR {
                xs.push(t);
                ys.push(e.ln());
            } else {
                report.censored = true;
            }
        }
    }
    if let Some((slope, _, r)) = linear_fit(&xs, &ys) {
        report.beta = Some(-slope);
        report.correlation = Some(r);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Dictionary distance between ensembles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<FourierField>,
    pub step_index: usize,
    pub master_seed: u64,
}

/// Bounded-Lipschitz test functional with `|f| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Observable {
    /// `cos(α·X + β)` with `X` the real or imaginary part of `û(k)`.
    Cosine {
        mode: i64,
        part: Component,
        alpha: f64,
        beta: f64,
    },
    /// `exp(−s·‖u − w‖_{H¹})`.
    Anchor { anchor: FourierField, scale: f64 },
}

impl Observable {
    pub fn eval(&self, u: &FourierField) -> f64 {
        match self {
            Observable::Cosine {
                mode,
                part,
                alpha,
                beta,
            } => {
                let c = u.get(*mode);
                let x = match part {
                    Component::Real => c.re,
                    Component::Imag => c.im,
                };
                (alpha * x + beta).cos()
            }
            Observable::Anchor { anchor, scale } => (-scale * (u - anchor).norm_h1()).exp(),
        }
    }

    /// Lipschitz constant in H¹: `|X(u) − X(w)| <= ‖u − w‖_{H¹}/⟨k⟩`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Observable::Cosine { mode, alpha, .. } => alpha.abs() / japanese(*mode),
            Observable::Anchor { scale, .. } => scale.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDictionary {
    pub observables: Vec<Observable>,
}

impl ObservableDictionary {
    /// Fails unless every member has Lipschitz constant at most 1.
    pub fn certify(&self) -> Result<()> {
        if self.observables.is_empty() {
            return Err(Error::invalid("empty observable dictionary"));
        }
        for (i, o) in self.observables.iter().enumerate() {
            if o.lipschitz() > 1.0 + 1e-15 {
                return Err(Error::invalid(format!(
                    "observable {i} has Lipschitz constant {} > 1",
                    o.lipschitz()
                )));
            }
        }
        Ok(())
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.observables.iter().map(Observable::lipschitz).fold(0.0, f64::max)
    }

    /// Cosines on `|k| <= mode_cutoff` (real and imaginary parts, `α = ⟨k⟩`
    /// and `⟨k⟩/2`, phases `0` and `π/2`).
    pub fn cosines(mode_cutoff: i64) -> Self {
        let mut observables = Vec::new();
        for mode in -mode_cutoff..=mode_cutoff {
            for part in [Component::Real, Component::Imag] {
                for frac in [1.0, 0.5] {
                    for beta in [0.0, PI / 2.0] {
                        observables.push(Observable::Cosine {
                            mode,
                            part,
                            alpha: frac * japanese(mode),
                            beta,
                        });
                    }
                }
            }
        }
        Self { observables }
    }

    /// Anchored exponentials at each anchor with scales `1` and `½`.
    pub fn anchors(anchors: &[FourierField]) -> Self {
        let observables = anchors
            .iter()
            .flat_map(|w| {
                [1.0, 0.5].map(|scale| Observable::Anchor {
                    anchor: w.clone(),
                    scale,
                })
            })
            .collect();
        Self { observables }
    }

    /// Cosines on `|k| <= 2` followed by anchors.
    pub fn standard(anchors: &[FourierField]) -> Self {
        let mut d = Self::cosines(2);
        d.observables.extend(Self::anchors(anchors).observables);
        d
    }
}

fn means(members: &[FourierField], dict: &ObservableDictionary) -> Vec<f64> {
    let m = members.len() as f64;
    dict.observables
        .iter()
        .map(|o| members.iter().map(|u| o.eval(u)).sum::<f64>() / m)
        .collect()
}

/// `max_f |E_a f − E_b f|` over the dictionary: a lower bound for the
/// dual-Lipschitz distance of the two laws, up to Monte Carlo error.
pub fn dual_lipschitz_estimate(a: &Ensemble, b: &Ensemble, dict: &ObservableDictionary) -> Result<f64> {
    dictionary_distance(&a.members, &b.members, dict)
}

fn dictionary_distance(a: &[FourierField], b: &[FourierField], dict: &ObservableDictionary) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let grid = a[0].grid();
    if a.iter().chain(b).any(|u| u.grid() != grid) {
        return Err(Error::invalid("ensembles live on different grids"));
    }
    let (ma, mb) = (means(a, dict), means(b, dict));
    Ok(ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub distances: Vec<f64>,
    /// Distances under the cosine-only dictionary.
    pub distances_alt: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub fitted_rate_alt: Option<f64>,
    pub correlation: Option<f64>,
    /// Inclusive step range of the fit.
    pub fit_window: Option<(usize, usize)>,
    pub ensemble_size: usize,
    /// `2/√M`.
    pub noise_floor: f64,
    pub master_seed: u64,
    pub indistinguishable: bool,
    pub config_digest: Option<String>,
}

/// Fit over the initial run of steps with `distance > 3·floor`.
fn fit_decay(d: &[f64], floor: f64) -> (Option<(usize, usize)>, Option<f64>, Option<f64>) {
    let thr = 3.0 * floor;
    let end = d.iter().position(|&v| v <= thr).unwrap_or(d.len());
    if end < 3 {
        return (None, None, None);
    }
    let xs: Vec<f64> = (0..end).map(|n| n as f64).collect();
    let ys: Vec<f64> = d[..end].iter().map(|v| v.ln()).collect();
    match linear_fit(&xs, &ys) {
        Some((slope, _, r)) => (Some((0, end - 1)), Some(-slope), Some(r)),
        None => (None, None, None),
    }
}

/// Two ensembles of `m` independent chains from `u0_a` and `u0_b`; the
/// distance at every step uses [`ObservableDictionary::standard`] with
/// anchors `{0, u0_a, u0_b}`.
pub fn mixing_experiment(
    u0_a: &FourierField,
    u0_b: &FourierField,
    m: usize,
    n_steps: usize,
    spec: &NoiseSpec,
    cfg: &SolverConfig,
    master: u64,
) -> Result<MixReport> {
    if m == 0 || n_steps == 0 {
        return Err(Error::invalid("mixing experiment needs m >= 1 and n_steps >= 1"));
    }
    spec.validate()?;
    let grid = cfg.grid;
    let dict = ObservableDictionary::standard(&[FourierField::zeros(grid), u0_a.clone(), u0_b.clone()]);
    let alt = ObservableDictionary::cosines(2);
    dict.certify()?;
    let mut a = vec![u0_a.clone(); m];
    let mut b = vec![u0_b.clone(); m];
    let mut distances = Vec::with_capacity(n_steps + 1);
    let mut distances_alt = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        if step > 0 {
            let s = (step - 1) as u64;
            let adv = |members: &mut Vec<FourierField>, purpose: Purpose| -> Result<()> {
                let next = members
                    .par_iter()
                    .enumerate()
                    .map(|(i, u)| step_with(u, spec, SeedRecord::new(master, purpose, i as u64, s), cfg))
                    .collect::<Result<Vec<_>>>()?;
                *members = next;
                Ok(())
            };
            adv(&mut a, Purpose::EnsembleA)?;
            adv(&mut b, Purpose::EnsembleB)?;
        }
        distances.push(dictionary_distance(&a, &b, &dict)?);
        distances_alt.push(dictionary_distance(&a, &b, &alt)?);
    }
    let floor = 2.0 / (m as f64).sqrt();
    let (fit_window, fitted_rate, correlation) = fit_decay(&distances, floor);
    let (_, fitted_rate_alt, _) = fit_decay(&distances_alt, floor);
    Ok(MixReport {
        indistinguishable: distances[0] <= 3.0 * floor,
        distances,
        distances_alt,
        fitted_rate,
        fitted_rate_alt,
        correlation,
        fit_window,
        ensemble_size: m,
        noise_floor: floor,
        master_seed: master,
        config_digest: None,
    })
}

// ---------------------------------------------------------------------------
// Attractor proximity and coupling

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityRow {
    pub step: usize,
    /// `‖(Id − P_{<=K/2}) u_n‖_{H¹}`.
    pub tail_h1: f64,
    /// `‖u_n‖_{H^s}` at the probe exponent.
    pub probe_norm: f64,
}

pub fn attractor_proximity(chain: &[FourierField], probe_s: f64) -> Result<Vec<ProximityRow>> {
    if !(probe_s > 1.0) {
        return Err(Error::invalid(format!("probe exponent must exceed 1, got {probe_s}")));
    }
    Ok(chain
        .iter()
        .enumerate()
        .map(|(step, u)| {
            let half = u.grid().k_max() / 2;
            let tail = u - &u.low_pass(half);
            ProximityRow {
                step,
                tail_h1: tail.norm_h1(),
                probe_norm: sobolev_norm(u, probe_s),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingControl {
    /// γ values searched at every step.
    pub gammas: Vec<f64>,
    pub options: ContractionOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// `‖y_n − x_n‖_{H¹}` for `n = 0..=n_steps`.
    pub distances: Vec<f64>,
    /// `distances[n+1] / distances[n]` (0 once the chains meet).
    pub ratios: Vec<f64>,
    /// `‖ξ_n − ζ_n‖` per step; zeros without control.
    pub shift_norms: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl CouplingReport {
    pub fn median_ratio(&self) -> f64 {
        let mut r = self.ratios.clone();
        r.sort_by(f64::total_cmp);
        if r.is_empty() {
            return 0.0;
        }
        r[r.len() / 2]
    }
}

/// Evolves `y` and `x` with the same noise draw per step; with `control`,
/// the noise of `x` is shifted by the stabilizing shift of the best γ.
#[allow(clippy::too_many_arguments)]
pub fn synchronous_coupling_experiment(
    y0: &FourierField,
    x0: &FourierField,
    n_steps: usize,
    spec: &NoiseSpec,
    cfg: &SolverConfig,
    master: u64,
    chain: u64,
    control: Option<&CouplingControl>,
) -> Result<CouplingReport> {
    spec.validate()?;
    let (mut y, mut x) = (y0.clone(), x0.clone());
    let mut report = CouplingReport {
        distances: vec![(&y - &x).norm_h1()],
        ratios: Vec::new(),
        shift_norms: Vec::new(),
        gammas: Vec::new(),
    };
    for s in 0..n_steps {
        let record = SeedRecord::new(master, Purpose::Noise, chain, s as u64);
        let zeta = noise_for(spec, record);
        let before = *report.distances.last().expect("nonempty");
        let (ny, nx, shift, gamma) = match control {
            Some(ctl) if before > 0.0 => {
                let (rep, sy, sx) = search(&y, &x, &zeta, &ctl.gammas, cfg, &ctl.options)?;
                (sy, sx, rep.shift_norm, rep.gamma)
            }
            _ => (markov_step(&y, &zeta, cfg)?, markov_step(&x, &zeta, cfg)?, 0.0, 0.0),
        };
        y = ny;
        x = nx;
        let after = (&y - &x).norm_h1();
        report.ratios.push(if before > 0.0 { after / before } else { 0.0 });
        report.distances.push(after);
        report.shift_norms.push(shift);
        report.gammas.push(gamma);
    }
    Ok(report)
}

/// Field with `|û(k)| ∝ ⟨k⟩^{-decay}` and random phases from the
/// `(master, InitialData, chain, 0)` substream, rescaled to H¹ norm `h1`
/// when `h1 > 0`.
pub fn random_state(grid: crate::spectral::Grid, decay: f64, h1: f64, master: u64, chain: u64) -> FourierField {
    random_state_from(grid, decay, h1, SeedRecord::new(master, Purpose::InitialData, chain, 0))
}

/// [`random_state`] drawing its phases from an arbitrary substream.
pub fn random_state_from(grid: crate::spectral::Grid, decay: f64, h1: f64, record: SeedRecord) -> FourierField {
    use rand::Rng;
    let mut rng = record.rng();
    let mut f = FourierField::zeros(grid);
    for k in grid.wavenumbers() {
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        f.set(k, Complex64::from_polar(japanese(k).powf(-decay), phase));
    }
    if h1 > 0.0 {
        f = f.scale_real(h1 / f.norm_h1());
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DampingProfile, Grid};

    fn cfg(grid: Grid) -> SolverConfig {
        SolverConfig::new(grid, 1.0 / 128.0, 3, DampingProfile::bump(grid, 2.0, PI, 1.0).unwrap()).unwrap()
    }

    fn spec() -> NoiseSpec {
        NoiseSpec {
            level_max: 4,
            ..NoiseSpec::default()
        }
    }

    #[test]
    fn silent_chain_from_zero_stays_zero() {
        let g = Grid::new(32, 10).unwrap();
        let out = run_chain(&FourierField::zeros(g), 3, &spec().silent(), &cfg(g), 1, Purpose::Noise, 0).unwrap();
        assert!(out.iter().all(|u| u.norm_l2() == 0.0));
        assert!(run_chain(&FourierField::zeros(g), 0, &spec(), &cfg(g), 1, Purpose::Noise, 0).is_err());
    }

    #[test]
    fn silent_damped_chain_loses_energy() {
        let g = Grid::new(32, 10).unwrap();
        let u0 = random_state(g, 2.0, 1.0, 3, 0);
        let out = run_chain(&u0, 5, &spec().silent(), &cfg(g), 1, Purpose::Noise, 0).unwrap();
        let e: Vec<f64> = out.iter().map(|u| energy(u, 3).unwrap()).collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn chains_are_reproducible() {
        let g = Grid::new(32, 10).unwrap();
        let u0 = random_state(g, 2.0, 1.0, 3, 0);
        let a = run_chain(&u0, 3, &spec(), &cfg(g), 9, Purpose::Noise, 4).unwrap();
        let b = run_chain(&u0, 3, &spec(), &cfg(g), 9, Purpose::Noise, 4).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&u0, 3, &spec(), &cfg(g), 9, Purpose::Noise, 5).unwrap();
        assert_ne!(a[3], c[3]);
    }

    #[test]
    fn fits() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 0.5 * t).collect();
        let (s, i, r) = linear_fit(&x, &y).unwrap();
        assert!((s + 0.5).abs() < 1e-15 && (i - 2.0).abs() < 1e-15 && (r + 1.0).abs() < 1e-15);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn decay_of_zero_is_degenerate() {
        let g = Grid::new(32, 10).unwrap();
        let r = decay_experiment(&FourierField::zeros(g), 2.0, 4, &cfg(g)).unwrap();
        assert!(r.degenerate && r.beta.is_none());
        let undamped = SolverConfig::new(g, 1.0 / 128.0, 3, DampingProfile::none(g)).unwrap();
        assert!(decay_experiment(&FourierField::zeros(g), 2.0, 4, &undamped).is_err());
    }

    #[test]
    fn constant_damping_rate_is_twice_alpha() {
        let g = Grid::new(32, 10).unwrap();
        let alpha = 0.1;
        let c = SolverConfig::new(g, 1.0 / 128.0, 3, DampingProfile::constant(g, alpha).unwrap()).unwrap();
        let u0 = random_state(g, 2.0, 1e-3, 1, 0);
        let r = decay_experiment(&u0, 40.0, 2, &c).unwrap();
        let beta = r.beta.unwrap();
        assert!((beta / (2.0 * alpha) - 1.0).abs() < 0.15, "beta = {beta}");
    }

    #[test]
    fn dictionary_properties() {
        let g = Grid::new(32, 10).unwrap();
        let dict = ObservableDictionary::standard(&[FourierField::zeros(g)]);
        dict.certify().unwrap();
        assert!(dict.max_lipschitz() <= 1.0);
        let members: Vec<_> = (0..10).map(|i| random_state(g, 2.0, 1.0, 2, i)).collect();
        let others: Vec<_> = (0..7).map(|i| random_state(g, 2.0, 0.3, 5, i)).collect();
        let ea = Ensemble {
            members: members.clone(),
            step_index: 0,
            master_seed: 0,
        };
        let eb = Ensemble {
            members: others,
            step_index: 3,
            master_seed: 0,
        };
        assert_eq!(dual_lipschitz_estimate(&ea, &ea, &dict).unwrap(), 0.0);
        let ab = dual_lipschitz_estimate(&ea, &eb, &dict).unwrap();
        assert_eq!(ab, dual_lipschitz_estimate(&eb, &ea, &dict).unwrap());
        assert!(ab > 0.0 && ab <= 2.0);
        let empty = Ensemble {
            members: vec![],
            step_index: 0,
            master_seed: 0,
        };
        assert!(dual_lipschitz_estimate(&ea, &empty, &dict).is_err());
        let bad = ObservableDictionary {
            observables: vec![Observable::Anchor {
                anchor: FourierField::zeros(g),
                scale: 2.0,
            }],
        };
        assert!(bad.certify().is_err());
    }

    #[test]
    fn point_masses_are_lipschitz_close() {
        let g = Grid::new(32, 10).unwrap();
        let dict = ObservableDictionary::standard(&[FourierField::zeros(g), random_state(g, 2.0, 1.0, 1, 0)]);
        for delta in [1e-1, 1e-2] {
            let a = Ensemble {
                members: vec![FourierField::zeros(g)],
                step_index: 0,
                master_seed: 0,
            };
            let b = Ensemble {
                members: vec![FourierField::mode(g, 0, Complex64::new(delta, 0.0)).unwrap()],
                step_index: 0,
                master_seed: 0,
            };
            let d = dual_lipschitz_estimate(&a, &b, &dict).unwrap();
            assert!(d <= delta * dict.max_lipschitz() + 1e-15, "delta {delta}: {d}");
            assert!(d > 0.0);
        }
    }

    #[test]
    fn silent_mixing_collapses() {
        let g = Grid::new(32, 10).unwrap();
        let ua = random_state(g, 2.0, 1.0, 1, 0);
        let ub = random_state(g, 2.0, 1.0, 1, 1);
        let r = mixing_experiment(&ua, &ub, 4, 12, &spec().silent(), &cfg(g), 3).unwrap();
        assert!(r.distances.iter().all(|&d| (0.0..=2.0).contains(&d)));
        assert!(r.distances[12] < r.distances[0] * 0.5);
        let same = mixing_experiment(&ua, &ua, 16, 3, &spec(), &cfg(g), 3).unwrap();
        assert!(same.indistinguishable);
        assert_eq!(same.distances[0], 0.0);
    }

    #[test]
    fn proximity_rows() {
        let g = Grid::new(32, 10).unwrap();
        assert!(attractor_proximity(&[FourierField::zeros(g)], 1.0).is_err());
        let rows = attractor_proximity(&vec![FourierField::zeros(g); 3], 1.25).unwrap();
        assert!(rows.iter().all(|r| r.tail_h1 == 0.0 && r.probe_norm == 0.0));
        let u0 = random_state(g, 1.0, 1.0, 2, 0);
        let chain = run_chain(&u0, 4, &spec().silent(), &cfg(g), 1, Purpose::Noise, 0).unwrap();
        let rows = attractor_proximity(&chain, 1.25).unwrap();
        assert!(rows.windows(2).all(|w| w[1].probe_norm < w[0].probe_norm));
    }

    #[test]
    fn coupling_without_control_preserves_marginals() {
        let g = Grid::new(32, 10).unwrap();
        let y0 = random_state(g, 2.0, 1.0, 1, 0);
        let x0 = random_state(g, 2.0, 1.0, 1, 1);
        let rep = synchronous_coupling_experiment(&y0, &x0, 3, &spec(), &cfg(g), 4, 2, None).unwrap();
        let solo_y = run_chain(&y0, 3, &spec(), &cfg(g), 4, Purpose::Noise, 2).unwrap();
        let solo_x = run_chain(&x0, 3, &spec(), &cfg(g), 4, Purpose::Noise, 2).unwrap();
        assert!(((&solo_y[3] - &solo_x[3]).norm_h1() - rep.distances[3]).abs() < 1e-15);
        let same = synchronous_coupling_experiment(&y0, &y0, 3, &spec(), &cfg(g), 4, 2, None).unwrap();
        assert!(same.distances.iter().all(|&d| d == 0.0));
    }
}
