//! Linearization of the step map around a stored trajectory.
//!
//! The forward solver differentiates the discrete step exactly: the base's
//! state entering each nonlinear substep is recomputed from the stored
//! samples, and the tangent substep is the derivative of the rotation
//! `u ↦ u e^{-i|u|^{p-1}dt}` at that state. The backward solver applies the
//! transpose of every forward substep in reverse order, so the real pairing
//! `Re Σ_k v̂(k) conj(φ̂(k))` between the two is conserved to round-off.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Forcing, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{orthonormal_time_basis, ForcingPath, TimeBasisElement};
use crate::spectral::{japanese, FourierField, Grid};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedRun {
    /// Identifies the base trajectory.
    pub base_id: u64,
    pub direction: Direction,
    /// Increasing for forward runs, decreasing for backward runs.
    pub times: Vec<f64>,
    pub states: Vec<FourierField>,
    /// Backward runs only: per solver step `n` (in increasing time order),
    /// the average of the adjoint state at the two forcing kicks of the step.
    /// `Σ_n dt·Re⟨−i g_n, midpoint_states[n]⟩` reproduces the pairing of the
    /// Duhamel response to `g` with the final adjoint datum.
    pub midpoint_states: Vec<FourierField>,
}

impl LinearizedRun {
    pub fn state_at(&self, t: f64) -> Result<&FourierField> {
        let tol = 1e-9;
        self.times
            .iter()
            .position(|&s| (s - t).abs() < tol)
            .map(|i| &self.states[i])
            .ok_or_else(|| Error::invalid(format!("no stored state at t = {t}")))
    }

    pub fn last(&self) -> &FourierField {
        self.states.last().expect("nonempty run")
    }
}

pub(crate) fn fingerprint(base: &Trajectory) -> u64 {
    let mut h = DefaultHasher::new();
    base.times.len().hash(&mut h);
    for (t, s) in base.times.iter().zip(&base.states) {
        t.to_bits().hash(&mut h);
        for c in s.coeffs() {
            c.re.to_bits().hash(&mut h);
            c.im.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Per-step base states entering the nonlinear substep, on the padded grid.
pub(crate) struct Linearization<'a> {
    pub(crate) base: &'a Trajectory,
    pub(crate) id: u64,
    inner: Vec<Vec<Complex64>>,
}

impl<'a> Linearization<'a> {
    pub(crate) fn new(base: &'a Trajectory) -> Result<Self> {
        let cfg = &base.config;
        let gaps_ok = base
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - cfg.dt).abs() < 1e-9 * cfg.dt.max(1.0));
        if cfg.store_stride != 1 || !gaps_ok {
            return Err(Error::invalid(
                "linearization needs a base stored at every solver step (store_stride = 1)",
            ));
        }
        let mut st = Stepper::new(cfg);
        let inner = base.states[..base.states.len() - 1]
            .iter()
            .zip(&base.times)
            .map(|(u, &t)| {
                let mut c = u.coeffs().to_vec();
                let mut rec = Vec::with_capacity(st.padded());
                st.linear_half(&mut c);
                st.nonlinear(&mut c, &base.forcing.at(t + 0.5 * cfg.dt), Some(&mut rec));
                rec
            })
            .collect();
        Ok(Self {
            base,
            id: fingerprint(base),
            inner,
        })
    }

    fn grid(&self) -> Grid {
        self.base.config.grid
    }

    fn steps(&self) -> usize {
        self.inner.len()
    }

    fn mid_time(&self, n: usize) -> f64 {
        self.base.times[n] + 0.5 * self.base.config.dt
    }

    fn check(&self, f: &FourierField, what: &str) -> Result<()> {
        if f.grid() != self.grid() {
            return Err(Error::invalid(format!("{what} is not on the base trajectory's grid")));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, v0: &FourierField, g: &Forcing, keep: bool) -> Result<LinearizedRun> {
        self.check(v0, "v0")?;
        if let Forcing::Paths(ps) = g {
            let cfg = &self.base.config;
            for p in ps {
                if !cfg.divides(1.0 / p.cells() as f64) {
                    return Err(Error::invalid(format!(
                        "time resolution: dt = {} does not divide the control cell width 1/{}",
                        cfg.dt,
                        p.cells()
                    )));
                }
            }
        }
        let mut st = Stepper::new(&self.base.config);
        let mut c = v0.coeffs().to_vec();
        let mut states = vec![v0.clone()];
        for n in 0..self.steps() {
            st.linear_half(&mut c);
            st.nonlinear_tangent(&mut c, &self.inner[n], &g.at(self.mid_time(n)));
            st.linear_half(&mut c);
            if keep || n + 1 == self.steps() {
                states.push(FourierField::from_coeffs(self.grid(), c.clone())?);
            }
        }
        let times = if keep {
            self.base.times.clone()
        } else {
            vec![self.base.times[0], self.base.horizon()]
        };
        Ok(LinearizedRun {
            base_id: self.id,
            direction: Direction::Forward,
            times,
            states,
            midpoint_states: Vec::new(),
        })
    }

    pub(crate) fn backward(&self, phi1: &FourierField, keep: bool) -> Result<LinearizedRun> {
        self.check(phi1, "phi1")?;
        let grid = self.grid();
        let mut st = Stepper::new(&self.base.config);
        let mut c = phi1.coeffs().to_vec();
        let mut states = vec![phi1.clone()];
        let mut mids = vec![FourierField::zeros(grid); self.steps()];
        for n in (0..self.steps()).rev() {
            st.linear_half_transpose(&mut c);
            let after = c.clone();
            st.nonlinear_tangent_transpose(&mut c, &self.inner[n]);
            let mid: Vec<Complex64> = after.iter().zip(&c).map(|(a, b)| 0.5 * (a + b)).collect();
            mids[n] = FourierField::from_coeffs(grid, mid)?;
            st.linear_half_transpose(&mut c);
            if keep || n == 0 {
                states.push(FourierField::from_coeffs(grid, c.clone())?);
            }
        }
        let times = if keep {
            self.base.times.iter().rev().copied().collect()
        } else {
            vec![self.base.horizon(), self.base.times[0]]
        };
        Ok(LinearizedRun {
            base_id: self.id,
            direction: Direction::Backward,
            times,
            states,
            midpoint_states: mids,
        })
    }
}

/// Forward linearized (tangent) flow around `base` with initial direction
/// `v0` and forcing direction `g`.
pub fn solve_linearized(base: &Trajectory, v0: &FourierField, g: &Forcing) -> Result<LinearizedRun> {
    Linearization::new(base)?.forward(v0, g, true)
}

/// Backward adjoint flow from `phi1` at the final time down to the start.
pub fn solve_adjoint_backward(base: &Trajectory, phi1: &FourierField) -> Result<LinearizedRun> {
    Linearization::new(base)?.backward(phi1, true)
}

/// `Re Σ_k v̂(t,k) conj(φ̂(t,k))`.
pub fn duality_pairing(v: &LinearizedRun, phi: &LinearizedRun, t: f64) -> Result<f64> {
    if v.direction != Direction::Forward || phi.direction != Direction::Backward {
        return Err(Error::invalid("pairing needs a forward and a backward run"));
    }
    if v.base_id != phi.base_id {
        return Err(Error::invalid("pairing of runs around different base trajectories"));
    }
    Ok(v.state_at(t)?.inner(phi.state_at(t)?).re)
}

/// Response `v(1)` of the tangent flow started from zero under forcing `g`.
pub fn duhamel_control_map(base: &Trajectory, g: &Forcing) -> Result<FourierField> {
    Ok(Linearization::new(base)?
        .forward(&FourierField::zeros(base.config.grid), g, false)?
        .last()
        .clone())
}

// ---------------------------------------------------------------------------
// Control responses and the Gramian

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Real,
    Imag,
}

impl Component {
    pub fn unit(self) -> Complex64 {
        match self {
            Component::Real => Complex64::new(1.0, 0.0),
            Component::Imag => I,
        }
    }
}

/// Control element `h(t)·e_k·{1, i}` in spectral-coefficient units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlElement {
    pub time: TimeBasisElement,
    pub mode: i64,
    pub component: Component,
    pub profile: Vec<f64>,
}

impl ControlElement {
    pub fn forcing(&self) -> ForcingPath {
        ForcingPath::single(self.mode, &self.profile, self.component.unit())
    }
}

/// Control elements for modes `B` and Haar level `level`, ordered by time
/// basis element, then mode, then component.
pub fn control_elements(modes: &[i64], level: u32) -> Vec<ControlElement> {
    let mut out = Vec::new();
    for (time, profile) in orthonormal_time_basis(level) {
        for &mode in modes {
            for component in [Component::Real, Component::Imag] {
                out.push(ControlElement {
                    time,
                    mode,
                    component,
                    profile: profile.clone(),
                });
            }
        }
    }
    out
}

/// Real H¹ coordinates `(⟨k⟩ Re v̂(k), ⟨k⟩ Im v̂(k))` for `|k| <= cutoff`,
/// ordered by wavenumber then component.
pub fn h1_coordinates(f: &FourierField, cutoff: usize) -> Vec<f64> {
    let c = cutoff as i64;
    (-c..=c)
        .flat_map(|k| {
            let v = f.get(k) * japanese(k);
            [v.re, v.im]
        })
        .collect()
}

/// Inverse of [`h1_coordinates`] on the given grid.
pub fn from_h1_coordinates(grid: Grid, x: &[f64]) -> Result<FourierField> {
    if x.len() % 4 != 2 {
        return Err(Error::invalid("coordinate vector has no (2K+1)·2 layout"));
    }
    let cutoff = ((x.len() / 2 - 1) / 2) as i64;
    let mut f = FourierField::zeros(grid);
    for (i, k) in (-cutoff..=cutoff).enumerate() {
        f.set(k, Complex64::new(x[2 * i], x[2 * i + 1]) / japanese(k));
    }
    Ok(f)
}

/// Matrix whose column `j` holds the H¹ coordinates (up to `cutoff`) of the
/// Duhamel response to `elements[j]`.
///
/// Row `r` pairs each response with the coordinate functional `φ_r`, and by
/// the exact transpose structure equals `Σ_n dt Re⟨−i g_j(t_n), φ_r,mid(n)⟩`
/// with `φ_r` run backward once; the cost is one backward run per row.
pub(crate) fn response_matrix(
    lin: &Linearization<'_>,
    elements: &[ControlElement],
    cutoff: usize,
) -> Result<DMatrix<f64>> {
    let grid = lin.grid();
    let dt = lin.base.config.dt;
    for e in elements {
        if !lin.base.config.divides(1.0 / e.profile.len() as f64) {
            return Err(Error::invalid(format!(
                "time resolution: dt = {dt} does not divide the control cell width 1/{}",
                e.profile.len()
            )));
        }
    }
    let c = cutoff as i64;
    let functionals: Vec<(i64, Component)> = (-c..=c)
        .flat_map(|k| [(k, Component::Real), (k, Component::Imag)])
        .collect();
    let rows: Vec<Result<Vec<f64>>> = functionals
        .par_iter()
        .map(|&(k, comp)| {
            // Re(v̂(k)·conj(φ̂(k))) picks Re v̂(k) for φ = e_k and Im v̂(k) for φ = i·e_k.
            let phi1 = FourierField::mode(grid, k, comp.unit() * japanese(k))?;
            let run = lin.backward(&phi1, false)?;
            let row = elements
                .iter()
                .map(|e| {
                    let cells = e.profile.len();
                    let dir = -I * e.component.unit();
                    run.midpoint_states
                        .iter()
                        .enumerate()
                        .map(|(n, mid)| {
                            let t = lin.mid_time(n) - lin.base.times[0];
                            let h = e.profile[((t * cells as f64) as usize).min(cells - 1)];
                            h * (dir * mid.get(e.mode).conj()).re
                        })
                        .sum::<f64>()
                        * dt
                })
                .collect();
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), elements.len(), |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianReport {
    pub modes_b: Vec<i64>,
    pub galerkin_cutoff: usize,
    pub time_basis_level: u32,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Cutoff of the designated target subspace `|k| <= target_cutoff`.
    pub target_cutoff: usize,
    /// Smallest eigenvalue of `G` compressed to the target subspace.
    pub target_subspace_min_eig: f64,
    pub quadrature_steps: usize,
    /// Row-major `G` in the coordinates of [`h1_coordinates`].
    pub matrix: Vec<Vec<f64>>,
}

impl GramianReport {
    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.matrix.len();
        DMatrix::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    /// Smallest eigenvalue of the compression to modes `|k| <= cutoff`.
    pub fn subspace_min_eig(&self, cutoff: usize) -> Result<f64> {
        compressed_min_eig(&self.to_matrix(), self.galerkin_cutoff, cutoff)
    }
}

fn compressed_min_eig(g: &DMatrix<f64>, full: usize, cutoff: usize) -> Result<f64> {
    if cutoff > full {
        return Err(Error::invalid(format!(
            "target cutoff {cutoff} exceeds the Galerkin cutoff {full}"
        )));
    }
    let off = 2 * (full - cutoff);
    let n = 2 * (2 * cutoff + 1);
    let sub = g.view((off, off), (n, n)).into_owned();
    Ok(SymmetricEigen::new(sub).eigenvalues.min())
}

/// `G = A Aᵀ` over the control elements for modes `B` at Haar level
/// `time_basis_level`, in real H¹ coordinates on `|k| <= k_g`. The target
/// subspace is `|k| <= min(2, k_g)`.
pub fn assemble_gramian(
    base: &Trajectory,
    modes_b: &[i64],
    time_basis_level: u32,
    k_g: usize,
) -> Result<GramianReport> {
    let grid = base.config.grid;
    if k_g > grid.k_max() {
        return Err(Error::invalid(format!(
            "Galerkin cutoff {k_g} exceeds k_max = {}",
            grid.k_max()
        )));
    }
    if let Some(k) = modes_b.iter().find(|&&k| grid.index(k).is_none()) {
        return Err(Error::invalid(format!("control mode {k} outside the band")));
    }
    let lin = Linearization::new(base)?;
    let dim = 2 * (2 * k_g + 1);
    let elements = control_elements(modes_b, time_basis_level);
    let g = if elements.is_empty() {
        if !base.config.divides(1.0 / (1usize << (time_basis_level + 1)) as f64) {
            return Err(Error::invalid("time resolution too coarse for the requested level"));
        }
        DMatrix::zeros(dim, dim)
    } else {
        let a = response_matrix(&lin, &elements, k_g)?;
        let g = &a * a.transpose();
        (&g + g.transpose()) * 0.5
    };
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let target_cutoff = k_g.min(2);
    Ok(GramianReport {
        modes_b: modes_b.to_vec(),
        galerkin_cutoff: k_g,
        time_basis_level,
        eigenvalues,
        target_cutoff,
        target_subspace_min_eig: compressed_min_eig(&g, k_g, target_cutoff)?,
        quadrature_steps: lin.steps(),
        matrix: g.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}
