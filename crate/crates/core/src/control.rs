//! Stabilizing noise shifts and saturating mode sets.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{linear_group, markov_step, phase_theta, solve_nls, Forcing, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::linear::{control_elements, fingerprint, from_h1_coordinates, h1_coordinates, response_matrix, ControlElement, Linearization};
use crate::noise::{ForcingPath, NoisePath};
use crate::rng::SeedRecord;
use crate::spectral::{DampingProfile, FourierField, Grid};

// ---------------------------------------------------------------------------
// Saturating sets

/// `B_prev ∪ {2k − l : k ∈ B₀, l ∈ B_prev}`.
pub fn saturate_once(b0: &BTreeSet<i64>, prev: &BTreeSet<i64>) -> BTreeSet<i64> {
    let mut out = prev.clone();
    for &k in b0 {
        for &l in prev {
            out.insert(2 * k - l);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub generators: Vec<i64>,
    pub iterations: usize,
    pub set: Vec<i64>,
    /// Longest run of consecutive integers in `set` (leftmost on ties).
    pub interval: Option<(i64, i64)>,
}

impl SaturationReport {
    pub fn contains_interval(&self, lo: i64, hi: i64) -> bool {
        (lo..=hi).all(|k| self.set.binary_search(&k).is_ok())
    }
}

/// Applies [`saturate_once`] `iterations` times starting from `B`.
pub fn saturation_span(b: &BTreeSet<i64>, iterations: usize) -> SaturationReport {
    let mut cur = b.clone();
    for _ in 0..iterations {
        let next = saturate_once(b, &cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    let set: Vec<i64> = cur.into_iter().collect();
    let mut best: Option<(i64, i64)> = None;
    let mut start = 0;
    for i in 0..set.len() {
        if i + 1 == set.len() || set[i + 1] != set[i] + 1 {
            let run = (set[start], set[i]);
            if best.map_or(true, |(a, b)| run.1 - run.0 > b - a) {
                best = Some(run);
            }
            start = i + 1;
        }
    }
    SaturationReport {
        generators: b.iter().copied().collect(),
        iterations,
        set,
        interval: best,
    }
}

// ---------------------------------------------------------------------------
// Control map and regularized inverse

/// Responses of the tangent flow around one base trajectory to the control
/// elements `h(t)·e_k·{1, i}`, as real H¹ coordinates over the full band.
#[derive(Debug, Clone)]
pub struct ControlBasisMap {
    pub modes: Vec<i64>,
    pub level: u32,
    pub elements: Vec<ControlElement>,
    pub base_id: u64,
    pub grid: Grid,
    /// Column `j` holds the coordinates of the response to `elements[j]`.
    pub matrix: DMatrix<f64>,
}

impl ControlBasisMap {
    pub fn n_columns(&self) -> usize {
        self.elements.len()
    }

    pub fn column(&self, j: usize) -> Result<FourierField> {
        from_h1_coordinates(self.grid, self.matrix.column(j).as_slice())
    }

    /// `Σ c_j · response_j`.
    pub fn apply(&self, coeffs: &[f64]) -> Result<FourierField> {
        let x = &self.matrix * DVector::from_column_slice(coeffs);
        from_h1_coordinates(self.grid, x.as_slice())
    }

    /// The forcing `Σ c_j g_j`.
    pub fn realize(&self, coeffs: &[f64]) -> ForcingPath {
        let cells = 1usize << (self.level + 1);
        let mut fp = ForcingPath::zero(&self.modes, cells);
        for (e, &c) in self.elements.iter().zip(coeffs) {
            let i = self.modes.iter().position(|&k| k == e.mode).expect("element mode in B");
            let unit = e.component.unit() * c;
            for (v, h) in fp.values[i].iter_mut().zip(&e.profile) {
                *v += unit * *h;
            }
        }
        fp
    }
}

/// Builds the control map for modes `B` at Haar level `level` around `base`.
pub fn assemble_control_map(base: &Trajectory, modes: &[i64], level: u32) -> Result<ControlBasisMap> {
    let lin = Linearization::new(base)?;
    build_map(&lin, modes, level)
}

fn build_map(lin: &Linearization<'_>, modes: &[i64], level: u32) -> Result<ControlBasisMap> {
    let grid = lin.base.config.grid;
    if modes.is_empty() {
        return Err(Error::invalid("control map needs a nonempty mode set"));
    }
    let elements = control_elements(modes, level);
    let matrix = response_matrix(lin, &elements, grid.k_max())?;
    Ok(ControlBasisMap {
        modes: modes.to_vec(),
        level,
        elements,
        base_id: lin.id,
        grid,
        matrix,
    })
}

/// `Aᵀ(AAᵀ + γI)⁻¹ t` by Cholesky factorization.
pub fn regularized_pinv(a: &DMatrix<f64>, gamma: f64, target: &DVector<f64>) -> Result<DVector<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    if target.len() != a.nrows() {
        return Err(Error::SizeMismatch {
            expected: a.nrows(),
            found: target.len(),
        });
    }
    let m = a * a.transpose() + DMatrix::identity(a.nrows(), a.nrows()) * gamma;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Factorization("AAᵀ + γI is not positive definite".into()))?;
    Ok(a.transpose() * chol.solve(target))
}

/// Control coefficients `c = R^γ target` in the real H¹ realization.
pub fn pseudo_inverse_apply(map: &ControlBasisMap, gamma: f64, target: &FourierField) -> Result<Vec<f64>> {
    if target.grid() != map.grid {
        return Err(Error::invalid("target is not on the control map's grid"));
    }
    let t = DVector::from_vec(h1_coordinates(target, map.grid.k_max()));
    Ok(regularized_pinv(&map.matrix, gamma, &t)?.as_slice().to_vec())
}

// ---------------------------------------------------------------------------
// Compact part of the linearization

fn compact_t(lin: &Linearization<'_>, w: &FourierField) -> Result<FourierField> {
    let base = lin.base;
    let v1 = lin.forward(w, &Forcing::Zero, false)?.last().clone();
    let theta = phase_theta(base, base.horizon())?;
    let free = linear_group(w, base.horizon() - base.times[0], &base.config.damping, base.config.dt / 2.0)?;
    Ok(&v1 - &free.scale(Complex64::from_polar(1.0, -theta)))
}

/// `T w = v(1) − e^{-iθ_u(1)} S_a(1) w`, with `v` the tangent flow from `w`.
/// `S_a` runs at the solver's half step so that `T = 0` around `u ≡ 0`.
pub fn compact_t_apply(base: &Trajectory, w: &FourierField) -> Result<FourierField> {
    compact_t(&Linearization::new(base)?, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    /// The shifted noise `ξ`.
    pub xi: NoisePath,
    /// `ξ − ζ` as spectral forcing.
    pub delta: ForcingPath,
    pub coeffs: Vec<f64>,
    /// `(∫₀¹ ‖ξ − ζ‖²_{L²} dt)^{1/2}` in forcing units.
    pub shift_norm: f64,
    /// `T(x − y)` and the part of it the control leaves, `T(x − y) − A c`.
    pub target: FourierField,
    pub residual: FourierField,
}

fn shift_with(
    lin: &Linearization<'_>,
    zeta: &NoisePath,
    x: &FourierField,
    gamma: f64,
    map: &ControlBasisMap,
) -> Result<Shift> {
    if map.base_id != lin.id {
        return Err(Error::invalid("control map was assembled on a different base"));
    }
    let d = x - &lin.base.states[0];
    let target = compact_t(lin, &d)?;
    let coeffs = pseudo_inverse_apply(map, gamma, &target)?;
    let control = map.realize(&coeffs);
    let delta = ForcingPath::zero(&map.modes, control.cells()).axpy(-1.0, &control);
    let xi = zeta.shifted(&delta)?;
    let residual = &target - &map.apply(&coeffs)?;
    Ok(Shift {
        xi,
        shift_norm: delta.norm_l2(),
        delta,
        coeffs,
        target,
        residual,
    })
}

/// `ξ = ζ − R^γ T(y, ζ)(x − y)` realized on the modes of `map`.
pub fn stabilizing_shift(
    base_y: &Trajectory,
    zeta: &NoisePath,
    x: &FourierField,
    gamma: f64,
    map: &ControlBasisMap,
) -> Result<Shift> {
    if fingerprint(base_y) != map.base_id {
        return Err(Error::invalid("control map was assembled on a different base"));
    }
    shift_with(&Linearization::new(base_y)?, zeta, x, gamma, map)
}

// ---------------------------------------------------------------------------
// Contraction test

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistanceNorm {
    H1,
    /// `‖S_a(τ₀) d‖_{H¹}`.
    Decayed { tau0: f64 },
}

impl DistanceNorm {
    pub fn measure(&self, d: &FourierField, damping: &DampingProfile, dt: f64) -> Result<f64> {
        match *self {
            DistanceNorm::H1 => Ok(d.norm_h1()),
            DistanceNorm::Decayed { tau0 } => Ok(linear_group(d, tau0, damping, dt)?.norm_h1()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionOptions {
    pub level: u32,
    pub norm: DistanceNorm,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            level: 6,
            norm: DistanceNorm::H1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub gamma: f64,
    pub q_ratio: f64,
    /// Same ratio with `ξ = ζ`.
    pub q_uncontrolled: f64,
    pub shift_norm: f64,
    pub success: bool,
    /// `x = y`; ratios are reported as 0.
    pub degenerate: bool,
    /// `(γ, q_ratio)` for every γ tried.
    pub gamma_scan: Vec<(f64, f64)>,
    pub seeds: Option<SeedRecord>,
}

/// Runs the contraction test for every γ in `gammas` and reports the best.
pub fn contraction_search(
    y: &FourierField,
    x: &FourierField,
    zeta: &NoisePath,
    gammas: &[f64],
    cfg: &SolverConfig,
    opts: &ContractionOptions,
) -> Result<StabilizationReport> {
    Ok(search(y, x, zeta, gammas, cfg, opts)?.0)
}

/// [`contraction_search`] that also returns `S(y, ζ)` and `S(x, ξ)` for the
/// chosen γ.
pub(crate) fn search(
    y: &FourierField,
    x: &FourierField,
    zeta: &NoisePath,
    gammas: &[f64],
    cfg: &SolverConfig,
    opts: &ContractionOptions,
) -> Result<(StabilizationReport, FourierField, FourierField)> {
    if gammas.is_empty() {
        return Err(Error::invalid("empty gamma grid"));
    }
    let seeds = zeta.seed_record;
    let d0 = x - y;
    if d0.norm_h1() == 0.0 {
        let sy = markov_step(y, zeta, cfg)?;
        let report = StabilizationReport {
            gamma: gammas[0],
            q_ratio: 0.0,
            q_uncontrolled: 0.0,
            shift_norm: 0.0,
            success: true,
            degenerate: true,
            gamma_scan: Vec::new(),
            seeds,
        };
        return Ok((report, sy.clone(), sy));
    }
    let cfg1 = cfg.clone().with_stride(1);
    let base = solve_nls(y, &Forcing::noise(zeta), 1.0, &cfg1)?;
    let lin = Linearization::new(&base)?;
    let map = build_map(&lin, &zeta.spec.modes, opts.level)?;
    let measure = |d: &FourierField| opts.norm.measure(d, &cfg.damping, cfg.dt);
    let before = measure(&d0)?;
    let sy = base.last().clone();
    let q_uncontrolled = measure(&(&sy - &markov_step(x, zeta, cfg)?))? / before;
    let mut best: Option<(f64, f64, f64, FourierField)> = None;
    let mut scan = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let shift = shift_with(&lin, zeta, x, gamma, &map)?;
        let sx = markov_step(x, &shift.xi, cfg)?;
        let q = measure(&(&sy - &sx))? / before;
        scan.push((gamma, q));
        if best.as_ref().map_or(true, |b| q < b.1) {
            best = Some((gamma, q, shift.shift_norm, sx));
        }
    }
    let (gamma, q_ratio, shift_norm, sx) = best.expect("nonempty grid");
    let report = StabilizationReport {
        gamma,
        q_ratio,
        q_uncontrolled,
        shift_norm,
        success: q_ratio < 1.0,
        degenerate: false,
        gamma_scan: scan,
        seeds,
    };
    Ok((report, sy, sx))
}

/// Contraction test at a single γ.
pub fn contraction_test(
    y: &FourierField,
    x: &FourierField,
    zeta: &NoisePath,
    gamma: f64,
    cfg: &SolverConfig,
    opts: &ContractionOptions,
) -> Result<StabilizationReport> {
    contraction_search(y, x, zeta, &[gamma], cfg, opts)
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn gamma_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
