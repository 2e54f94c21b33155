//! Grids, Fourier fields, transforms and norms on the torus `R / 2πZ`.
//!
//! Fields are stored as coefficients against the normalized basis
//! `e_k(x) = e^{ikx} / √(2π)` for `|k| <= k_max`, so that the L² norm of a
//! field is the Euclidean norm of its coefficient vector.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Uniform periodic grid together with its spectral cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    k_max: usize,
}

impl Grid {
    pub fn new(n_points: usize, k_max: usize) -> Result<Self> {
        if n_points == 0 || n_points % 2 != 0 {
            return Err(Error::invalid(format!(
                "grid: n_points must be a positive even integer, got {n_points}"
            )));
        }
        if k_max < 1 {
            return Err(Error::invalid("grid: k_max must be at least 1"));
        }
        if n_points < 2 * k_max + 2 {
            return Err(Error::invalid(format!(
                "grid: n_points ({n_points}) must be >= 2*k_max+2 ({})",
                2 * k_max + 2
            )));
        }
        Ok(Self { n_points, k_max })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of stored coefficients, `2·k_max + 1`.
    pub fn n_modes(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn points(&self) -> Vec<f64> {
        physical_points(self.n_points)
    }

    /// Iterator over the wavenumbers `-k_max..=k_max` in storage order.
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    pub(crate) fn index(&self, k: i64) -> Option<usize> {
        let km = self.k_max as i64;
        (k.abs() <= km).then(|| (k + km) as usize)
    }

    /// Size of the zero-padded physical grid that evaluates products of
    /// `factors` band-limited fields without aliasing onto `|k| <= k_max`,
    /// and integrates them exactly. Rounded up to a power of two.
    pub fn padded_points(&self, factors: usize) -> usize {
        let need = (factors + 1) * self.k_max + 2;
        need.next_power_of_two().max(self.n_points)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n_points: 128,
            k_max: 42,
        }
    }
}

pub(crate) fn physical_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// `⟨k⟩ = (1 + k²)^{1/2}`.
#[inline]
pub fn japanese(k: i64) -> f64 {
    (1.0 + (k * k) as f64).sqrt()
}

/// Spectral coefficients of a complex field on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    grid: Grid,
    coeff: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeff: vec![Complex64::new(0.0, 0.0); grid.n_modes()],
        }
    }

    pub fn from_coeffs(grid: Grid, coeff: Vec<Complex64>) -> Result<Self> {
        if coeff.len() != grid.n_modes() {
            return Err(Error::SizeMismatch {
                expected: grid.n_modes(),
                found: coeff.len(),
            });
        }
        if coeff.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("field: coefficients must be finite"));
        }
        Ok(Self { grid, coeff })
    }

    /// Field `amplitude · e_k`.
    pub fn mode(grid: Grid, k: i64, amplitude: Complex64) -> Result<Self> {
        let mut f = Self::zeros(grid);
        let i = grid
            .index(k)
            .ok_or_else(|| Error::invalid(format!("mode {k} outside |k| <= {}", grid.k_max)))?;
        f.coeff[i] = amplitude;
        Ok(f)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeff
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeff
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeff
    }

    /// Coefficient `û(k)`; zero outside the stored band.
    pub fn get(&self, k: i64) -> Complex64 {
        self.grid
            .index(k)
            .map(|i| self.coeff[i])
            .unwrap_or_default()
    }

    pub fn set(&mut self, k: i64, value: Complex64) {
        if let Some(i) = self.grid.index(k) {
            self.coeff[i] = value;
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            grid: self.grid,
            coeff: self.coeff.iter().map(|c| c * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn conj(&self) -> Self {
        // conj of a field flips the wavenumber: conj(u)^(k) = conj(û(-k))
        let n = self.coeff.len();
        Self {
            grid: self.grid,
            coeff: (0..n).map(|i| self.coeff[n - 1 - i].conj()).collect(),
        }
    }

    /// Complex L² inner product `∫ u v̄ = Σ û(k) conj(v̂(k))`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeff
            .iter()
            .zip(&other.coeff)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    /// Real H^s inner product `Re Σ ⟨k⟩^{2s} û v̄`.
    pub fn inner_hs(&self, other: &Self, s: f64) -> f64 {
        self.grid
            .wavenumbers()
            .zip(self.coeff.iter().zip(&other.coeff))
            .map(|(k, (a, b))| (1.0 + (k * k) as f64).powf(s) * (a * b.conj()).re)
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeff.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_h1(&self) -> f64 {
        sobolev_norm(self, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeff.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest coefficient-wise distance; used by bitwise determinism checks.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeff
            .iter()
            .zip(&other.coeff)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Copy of this field with coefficients outside `|k| <= cutoff` zeroed.
    pub fn low_pass(&self, cutoff: usize) -> Self {
        let mut out = self.clone();
        for (k, c) in self.grid.wavenumbers().zip(out.coeff.iter_mut()) {
            if k.unsigned_abs() as usize > cutoff {
                *c = Complex64::default();
            }
        }
        out
    }

    /// Re-express on another grid, truncating or zero-extending the band.
    pub fn regrid(&self, grid: Grid) -> Self {
        let mut out = Self::zeros(grid);
        for k in grid.wavenumbers() {
            out.set(k, self.get(k));
        }
        out
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.grid, other.grid, "field arithmetic across grids");
        Self {
            grid: self.grid,
            coeff: self
                .coeff
                .iter()
                .zip(&other.coeff)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

impl Add for &FourierField {
    type Output = FourierField;
    fn add(self, rhs: Self) -> FourierField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &FourierField {
    type Output = FourierField;
    fn sub(self, rhs: Self) -> FourierField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &FourierField {
    type Output = FourierField;
    fn neg(self) -> FourierField {
        self.scale_real(-1.0)
    }
}

impl Mul<f64> for &FourierField {
    type Output = FourierField;
    fn mul(self, rhs: f64) -> FourierField {
        self.scale_real(rhs)
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing

pub(crate) struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn fft_pair(n: usize) -> Arc<FftPair> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPair>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(FftPair {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Reusable transform between a band-limited coefficient vector and samples
/// on an `n`-point physical grid. Holds its own scratch space.
pub(crate) struct Transform {
    n: usize,
    plans: Arc<FftPair>,
    scratch: Vec<Complex64>,
}

impl Transform {
    pub(crate) fn new(n: usize) -> Self {
        let plans = fft_pair(n);
        let len = plans
            .fwd
            .get_inplace_scratch_len()
            .max(plans.inv.get_inplace_scratch_len());
        Self {
            n,
            plans,
            scratch: vec![Complex64::default(); len],
        }
    }

    /// `out_j = Σ_k c_k e^{ikx_j} / √(2π)` for coefficients over `|k| <= k_max`.
    pub(crate) fn synthesize(&mut self, coeff: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let km = (coeff.len() - 1) / 2;
        debug_assert!(n > 2 * km);
        debug_assert_eq!(out.len(), n);
        out.iter_mut().for_each(|v| *v = Complex64::default());
        let s = 1.0 / SQRT_2PI;
        for (i, c) in coeff.iter().enumerate() {
            let k = i as i64 - km as i64;
            out[k.rem_euclid(n as i64) as usize] = c * s;
        }
        self.plans.inv.process_with_scratch(out, &mut self.scratch);
    }

    /// Inverse of [`Transform::synthesize`] on band-limited data; modes beyond
    /// `k_max` are discarded. `data` is overwritten.
    pub(crate) fn analyze(&mut self, data: &mut [Complex64], coeff: &mut [Complex64]) {
        let n = self.n;
        let km = (coeff.len() - 1) / 2;
        self.plans.fwd.process_with_scratch(data, &mut self.scratch);
        let s = SQRT_2PI / n as f64;
        for (i, c) in coeff.iter_mut().enumerate() {
            let k = i as i64 - km as i64;
            *c = data[k.rem_euclid(n as i64) as usize] * s;
        }
    }
}

/// Samples of the field on the grid points `x_j = 2πj / n_points`.
pub fn to_physical(f: &FourierField) -> Vec<Complex64> {
    let n = f.grid.n_points;
    let mut out = vec![Complex64::default(); n];
    Transform::new(n).synthesize(&f.coeff, &mut out);
    out
}

/// Samples on an arbitrary (typically zero-padded) grid of `n` points.
pub fn to_physical_on(f: &FourierField, n: usize) -> Result<Vec<Complex64>> {
    if n <= 2 * f.grid.k_max {
        return Err(Error::invalid(format!(
            "physical grid of {n} points cannot hold |k| <= {}",
            f.grid.k_max
        )));
    }
    let mut out = vec![Complex64::default(); n];
    Transform::new(n).synthesize(&f.coeff, &mut out);
    Ok(out)
}

/// Coefficients of the samples `p` taken on the grid's points.
pub fn to_spectral(grid: Grid, p: &[Complex64]) -> Result<FourierField> {
    if p.len() != grid.n_points {
        return Err(Error::SizeMismatch {
            expected: grid.n_points,
            found: p.len(),
        });
    }
    to_spectral_from(grid, p)
}

/// Coefficients over `|k| <= grid.k_max` from samples on any grid with more
/// than `2·k_max` points.
pub fn to_spectral_from(grid: Grid, p: &[Complex64]) -> Result<FourierField> {
    if p.len() <= 2 * grid.k_max {
        return Err(Error::SizeMismatch {
            expected: grid.n_points,
            found: p.len(),
        });
    }
    let mut data = p.to_vec();
    let mut out = FourierField::zeros(grid);
    Transform::new(p.len()).analyze(&mut data, &mut out.coeff);
    Ok(out)
}

/// `‖f‖_{H^s} = (Σ (1+k²)^s |û(k)|²)^{1/2}`.
pub fn sobolev_norm(f: &FourierField, s: f64) -> f64 {
    f.grid
        .wavenumbers()
        .zip(&f.coeff)
        .map(|(k, c)| (1.0 + (k * k) as f64).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `∫_T |v|^q dx` evaluated on a padded grid fine enough to be exact for the
/// even integer powers used here.
pub(crate) fn lebesgue_integral(f: &FourierField, q: u32) -> f64 {
    let m = f.grid.padded_points(q as usize);
    let phys = to_physical_on(f, m).expect("padded grid holds the band");
    let w = 2.0 * PI / m as f64;
    w * phys
        .iter()
        .map(|v| {
            let r2 = v.norm_sqr();
            if q % 2 == 0 {
                r2.powi(q as i32 / 2)
            } else {
                r2.sqrt().powi(q as i32)
            }
        })
        .sum::<f64>()
}

/// H¹ energy `½∫|v|² + ½∫|v_x|² + (1/(p+1))∫|v|^{p+1}`.
pub fn energy(f: &FourierField, p: u32) -> Result<f64> {
    check_exponent(p)?;
    let quad: f64 = f
        .grid
        .wavenumbers()
        .zip(&f.coeff)
        .map(|(k, c)| (1.0 + (k * k) as f64) * c.norm_sqr())
        .sum();
    Ok(0.5 * quad + lebesgue_integral(f, p + 1) / (p + 1) as f64)
}

pub(crate) fn check_exponent(p: u32) -> Result<()> {
    if p < 3 || p % 2 == 0 {
        return Err(Error::invalid(format!(
            "nonlinear exponent must be an odd integer >= 3, got {p}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Damping

/// Closed-form generator behind a [`DampingProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DampingShape {
    None,
    Constant { alpha: f64 },
    /// `A·exp(−1/(1−((x−x₀)/w)²))` for `|x−x₀| < w` (periodic distance), zero elsewhere.
    Bump { amplitude: f64, center: f64, width: f64 },
}

impl DampingShape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DampingShape::None => 0.0,
            DampingShape::Constant { alpha } => alpha,
            DampingShape::Bump {
                amplitude,
                center,
                width,
            } => {
                let d = (x - center).rem_euclid(2.0 * PI);
                let d = d.min(2.0 * PI - d);
                let r = d / width;
                if r >= 1.0 {
                    0.0
                } else {
                    amplitude * (-1.0 / (1.0 - r * r)).exp()
                }
            }
        }
    }
}

/// Nonnegative damping coefficient `a(x)` sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    shape: DampingShape,
    values: Vec<f64>,
    support_desc: String,
}

impl DampingProfile {
    pub fn new(grid: Grid, shape: DampingShape) -> Result<Self> {
        let support_desc = match shape {
            DampingShape::None => {
                "none".to_string()
            }
            DampingShape::Constant { alpha } => {
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::invalid("damping: constant alpha must be >= 0"));
                }
                format!("constant alpha={alpha}")
            }
            DampingShape::Bump {
                amplitude,
                center,
                width,
            } => {
                if !(amplitude > 0.0 && amplitude.is_finite()) {
                    return Err(Error::invalid("damping: bump amplitude must be > 0"));
                }
                if !(width > 0.0 && width <= PI) {
                    return Err(Error::invalid("damping: bump width must lie in (0, π]"));
                }
                format!("bump amplitude={amplitude} center={center} width={width}")
            }
        };
        let values: Vec<f64> = grid.points().iter().map(|&x| shape.eval(x)).collect();
        if !matches!(shape, DampingShape::None) && values.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(
                "damping: profile vanishes on every grid point; widen the bump",
            ));
        }
        Ok(Self {
            shape,
            values,
            support_desc,
        })
    }

    pub fn none(grid: Grid) -> Self {
        Self::new(grid, DampingShape::None).expect("zero damping is valid")
    }

    pub fn constant(grid: Grid, alpha: f64) -> Result<Self> {
        Self::new(grid, DampingShape::Constant { alpha })
    }

    pub fn bump(grid: Grid, amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(
            grid,
            DampingShape::Bump {
                amplitude,
                center,
                width,
            },
        )
    }

    pub fn shape(&self) -> DampingShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_desc(&self) -> &str {
        &self.support_desc
    }

    pub fn is_active(&self) -> bool {
        self.values.iter().any(|&v| v > 0.0)
    }

    /// Profile evaluated from its generator on an `n`-point grid.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        physical_points(n)
            .into_iter()
            .map(|x| self.shape.eval(x))
            .collect()
    }

    /// Spatial mean `(1/2π)∫a`, by the trapezoid rule on the stored samples.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
