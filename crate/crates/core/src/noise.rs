//! Degenerate Haar noise.
//!
//! Each forced mode `k ∈ B` carries an independent complex Haar process
//!
//! ```text
//! η_k(t) = (ξ⁰₁ + iξ⁰₂) h₀(t) + Σ_{j=1..J} Σ_{l<2^j} c_j (ξ¹_{jl} + iξ²_{jl}) h_{jl}(t),   c_j = c·j^{-q}
//! ```
//!
//! with i.i.d. coefficients drawn from a Lipschitz density supported in
//! `[-1, 1]`. The physical forcing is `η(t, x) = Σ_k b_k η_k(t) e^{ikx}`.
//! Truncation at level `J` makes every path constant on dyadic cells of
//! width `2^{-J-1}`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedRecord;
use crate::spectral::{FourierField, Grid, SQRT_2PI};

/// L∞-normalized Haar function.
///
/// `(0, 0)` is the box `h₀ = 1_{[0,1)}`; for `j >= 1`, `h_{jl}` is `+1` on
/// `[l2^{-j}, (l+½)2^{-j})`, `−1` on `[(l+½)2^{-j}, (l+1)2^{-j})` and zero
/// elsewhere.
pub fn haar_eval(j: u32, l: u64, t: f64) -> Result<f64> {
    if j == 0 {
        if l != 0 {
            return Err(Error::invalid("haar: level 0 only has l = 0 (h0)"));
        }
        return Ok(if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 });
    }
    haar_wavelet(j, l, t)
}

/// The two-signed Haar wavelet at any level `j >= 0`; `j = 0` is the mother
/// wavelet on `[0, 1)`, which the box-plus-`j >= 1` family above does not contain.
pub fn haar_wavelet(j: u32, l: u64, t: f64) -> Result<f64> {
    if j > 62 || l >= 1u64 << j {
        return Err(Error::invalid(format!(
            "haar: l = {l} out of range for level {j}"
        )));
    }
    let width = (-(j as f64)).exp2();
    let left = l as f64 * width;
    let mid = (l as f64 + 0.5) * width;
    let right = (l + 1) as f64 * width;
    Ok(if t >= left && t < mid {
        1.0
    } else if t >= mid && t < right {
        -1.0
    } else {
        0.0
    })
}

/// Values of a Haar function on `cells` equal dyadic cells of `[0, 1)`.
/// `wavelet = None` selects `h₀`.
pub(crate) fn haar_cells(wavelet: Option<(u32, u64)>, cells: usize) -> Vec<f64> {
    let w = 1.0 / cells as f64;
    (0..cells)
        .map(|m| {
            let t = (m as f64 + 0.5) * w;
            match wavelet {
                None => 1.0,
                Some((j, l)) => haar_wavelet(j, l, t).expect("valid wavelet index"),
            }
        })
        .collect()
}

/// One element of an L²(0,1)-orthonormal Haar basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeBasisElement {
    Box,
    Wavelet { j: u32, l: u64 },
}

/// Orthonormal Haar basis of piecewise constants on `2^{level+1}` cells:
/// `h₀`, the mother wavelet, and `2^{j/2} h_{jl}` for `1 <= j <= level`.
/// Returns the elements with their values on the cells.
pub fn orthonormal_time_basis(level: u32) -> Vec<(TimeBasisElement, Vec<f64>)> {
    let cells = 1usize << (level + 1);
    let mut out = vec![(TimeBasisElement::Box, haar_cells(None, cells))];
    for j in 0..=level {
        let scale = (j as f64 / 2.0).exp2();
        for l in 0..(1u64 << j) {
            let vals = haar_cells(Some((j, l)), cells)
                .into_iter()
                .map(|v| v * scale)
                .collect();
            out.push((TimeBasisElement::Wavelet { j, l }, vals));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Coefficient density

/// Density family of the i.i.d. Haar coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSpec {
    /// `ρ(x) = (1 + cos πx)/2` on `[-1, 1]`.
    #[default]
    RaisedCosine,
    /// `ρ(x) = 1 − |x|` on `[-1, 1]`.
    Triangular,
}

impl RhoSpec {
    pub fn density(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            RhoSpec::RaisedCosine => 0.5 * (1.0 + (PI * x).cos()),
            RhoSpec::Triangular => 1.0 - x.abs(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            RhoSpec::RaisedCosine => 0.5 * (x + 1.0) + (PI * x).sin() / (2.0 * PI),
            RhoSpec::Triangular => {
                if x < 0.0 {
                    0.5 * (1.0 + x) * (1.0 + x)
                } else {
                    1.0 - 0.5 * (1.0 - x) * (1.0 - x)
                }
            }
        }
    }

    /// Lipschitz constant of the density.
    pub fn lipschitz(&self) -> f64 {
        match self {
            RhoSpec::RaisedCosine => PI / 2.0,
            RhoSpec::Triangular => 1.0,
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            RhoSpec::Triangular => {
                if u < 0.5 {
                    (2.0 * u).sqrt() - 1.0
                } else {
                    1.0 - (2.0 * (1.0 - u)).sqrt()
                }
            }
            RhoSpec::RaisedCosine => {
                // Newton on the closed-form CDF, safeguarded by bisection.
                let (mut lo, mut hi) = (-1.0f64, 1.0f64);
                let mut x = 2.0 * u - 1.0;
                for _ in 0..100 {
                    let f = self.cdf(x) - u;
                    if f > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let d = self.density(x);
                    let mut next = if d > 1e-300 { x - f / d } else { f64::NAN };
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - x).abs() < 1e-15 || hi - lo < 1e-15 {
                        return next;
                    }
                    x = next;
                }
                x
            }
        }
    }

    /// `∫ρ` by composite Simpson quadrature; 1 within 1e-10 for valid families.
    pub fn integral(&self) -> f64 {
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut s = self.density(-1.0) + self.density(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.density(x);
        }
        s * h / 3.0
    }
}

/// Draws one coefficient `ξ ~ ρ` by inversion.
pub fn sample_xi<R: Rng + ?Sized>(rho: RhoSpec, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    rho.quantile(u)
}

// ---------------------------------------------------------------------------
// Noise specification and paths

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub modes: Vec<i64>,
    pub amplitudes: Vec<f64>,
    pub haar_c: f64,
    pub haar_q: f64,
    pub level_max: u32,
    pub rho: RhoSpec,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            modes: vec![0, 1],
            amplitudes: vec![0.4, 0.4],
            haar_c: 0.5,
            haar_q: 2.0,
            level_max: 6,
            rho: RhoSpec::RaisedCosine,
        }
    }
}

impl NoiseSpec {
    /// Same spec with every amplitude set to zero (deterministic dynamics).
    /// Zero amplitudes are allowed only through this constructor.
    pub fn silent(&self) -> Self {
        Self {
            amplitudes: vec![0.0; self.amplitudes.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.modes.is_empty() {
            errs.push("noise: mode set B must be nonempty".to_string());
        }
        if self.modes.len() != self.amplitudes.len() {
            errs.push(format!(
                "noise: {} modes but {} amplitudes",
                self.modes.len(),
                self.amplitudes.len()
            ));
        }
        let mut sorted = self.modes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.modes.len() {
            errs.push("noise: modes must be distinct".to_string());
        }
        let silent = self.amplitudes.iter().all(|&b| b == 0.0);
        if !silent && self.amplitudes.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            errs.push("noise: amplitudes b_k must be > 0".to_string());
        }
        if !(self.haar_c > 0.0 && self.haar_c.is_finite()) {
            errs.push("noise: Haar scale c must be > 0".to_string());
        }
        if !(self.haar_q > 1.0 && self.haar_q.is_finite()) {
            errs.push(format!(
                "noise: Haar decay requires q > 1 for a Lipschitz-observable process, got q = {}",
                self.haar_q
            ));
        }
        if self.level_max > 20 {
            errs.push("noise: level_max above 20 is not supported".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// `c_j = c·j^{-q}` for `j >= 1`.
    pub fn c_j(&self, j: u32) -> f64 {
        self.haar_c * (j as f64).powf(-self.haar_q)
    }

    /// Number of dyadic cells per unit time, `2^{J+1}`.
    pub fn cells(&self) -> usize {
        1usize << (self.level_max + 1)
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    /// Sup-norm bound `√2·(1 + Σ_{j<=J} c_j)` for every path of `η_k`.
    pub fn path_bound(&self) -> f64 {
        2f64.sqrt() * (1.0 + (1..=self.level_max).map(|j| self.c_j(j)).sum::<f64>())
    }

    /// Sup-norm truncation error `√2·Σ_{j>J} c_j` of the level-`J` series.
    pub fn truncation_error(&self) -> f64 {
        // direct sum up to a large index, integral tail beyond it
        let big = 100_000u32;
        let direct: f64 = ((self.level_max + 1)..=big).map(|j| self.c_j(j)).sum();
        let tail = self.haar_c * (big as f64 + 0.5).powf(1.0 - self.haar_q) / (self.haar_q - 1.0);
        2f64.sqrt() * (direct + tail)
    }
}

/// Sampled realization of a [`NoiseSpec`] on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub spec: NoiseSpec,
    /// `values[i][m]` is `η_{k_i}` on cell `m`.
    pub values: Vec<Vec<Complex64>>,
    pub seed_record: Option<SeedRecord>,
}

/// Draws a path; every coefficient is taken from `rng` in the fixed order
/// mode → (`h₀`, then level `j`, then shift `l`) → real, imaginary.
pub fn sample_noise_path<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    rng: &mut R,
    seed_record: Option<SeedRecord>,
) -> NoisePath {
    let cells = spec.cells();
    let big_j = spec.level_max;
    let mut values = Vec::with_capacity(spec.modes.len());
    for _ in &spec.modes {
        let mut path = vec![Complex64::default(); cells];
        let xi0 = Complex64::new(sample_xi(spec.rho, rng), sample_xi(spec.rho, rng));
        path.iter_mut().for_each(|v| *v = xi0);
        for j in 1..=big_j {
            let cj = spec.c_j(j);
            let half = 1usize << (big_j - j); // cells per half-support
            for l in 0..(1usize << j) {
                let xi = Complex64::new(sample_xi(spec.rho, rng), sample_xi(spec.rho, rng)) * cj;
                let start = l * 2 * half;
                for v in &mut path[start..start + half] {
                    *v += xi;
                }
                for v in &mut path[start + half..start + 2 * half] {
                    *v -= xi;
                }
            }
        }
        values.push(path);
    }
    NoisePath {
        spec: spec.clone(),
        values,
        seed_record,
    }
}

/// Draws a path from the substream named by `record`.
pub fn sample_noise_path_seeded(spec: &NoiseSpec, record: SeedRecord) -> NoisePath {
    let mut rng = record.rng();
    sample_noise_path(spec, &mut rng, Some(record))
}

impl NoisePath {
    pub fn zero(spec: &NoiseSpec) -> Self {
        Self {
            spec: spec.clone(),
            values: vec![vec![Complex64::default(); spec.cells()]; spec.modes.len()],
            seed_record: None,
        }
    }

    pub fn cells(&self) -> usize {
        self.spec.cells()
    }

    fn cell_of(&self, t: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::invalid(format!("noise path evaluated at t = {t} outside [0, 1)")));
        }
        Ok(((t * self.cells() as f64) as usize).min(self.cells() - 1))
    }

    /// `η_k(t)` for the `i`-th mode of the spec.
    pub fn eta(&self, i: usize, t: f64) -> Result<Complex64> {
        Ok(self.values[i][self.cell_of(t)?])
    }

    pub fn sup_norm(&self, i: usize) -> f64 {
        self.values[i].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Time average of `η_k` over `[0, 1)`.
    pub fn mean(&self, i: usize) -> Complex64 {
        self.values[i].iter().sum::<Complex64>() / self.cells() as f64
    }

    /// Spectral forcing `û(k) = b_k η_k √(2π)` as a piecewise-constant path.
    pub fn forcing(&self) -> ForcingPath {
        ForcingPath {
            modes: self.spec.modes.clone(),
            values: self
                .spec
                .amplitudes
                .iter()
                .zip(&self.values)
                .map(|(&b, path)| path.iter().map(|v| v * (b * SQRT_2PI)).collect())
                .collect(),
        }
    }

    /// Path whose forcing equals `self.forcing() + delta`. The perturbation
    /// must live on the spec's modes and a compatible cell count.
    pub fn shifted(&self, delta: &ForcingPath) -> Result<NoisePath> {
        let cells = self.cells();
        if cells % delta.cells() != 0 && delta.cells() % cells != 0 {
            return Err(Error::invalid("shift: incompatible cell counts"));
        }
        if delta.cells() > cells {
            return Err(Error::invalid("shift: perturbation finer than the noise cells"));
        }
        let mut out = self.clone();
        out.seed_record = None;
        let ratio = cells / delta.cells();
        for (mi, &k) in delta.modes.iter().enumerate() {
            let i = self
                .spec
                .modes
                .iter()
                .position(|&m| m == k)
                .ok_or_else(|| Error::invalid(format!("shift: mode {k} is not forced")))?;
            let b = self.spec.amplitudes[i];
            if b == 0.0 {
                return Err(Error::invalid("shift: cannot shift a silent mode"));
            }
            for m in 0..cells {
                out.values[i][m] += delta.values[mi][m / ratio] / (b * SQRT_2PI);
            }
        }
        Ok(out)
    }

    /// CSV with columns `cell_index,t_left,mode_k,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cell_index,t_left,mode_k,re,im")?;
        let width = self.spec.cell_width();
        for m in 0..self.cells() {
            for (i, k) in self.spec.modes.iter().enumerate() {
                let v = self.values[i][m];
                writeln!(w, "{m},{},{k},{:e},{:e}", m as f64 * width, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Spectral field of the noise at time `t`.
pub fn noise_field_at(path: &NoisePath, grid: Grid, t: f64) -> Result<FourierField> {
    let cell = path.cell_of(t)?;
    let mut f = FourierField::zeros(grid);
    for (i, &k) in path.spec.modes.iter().enumerate() {
        if grid.index(k).is_none() {
            return Err(Error::invalid(format!("noise mode {k} outside the grid band")));
        }
        f.set(k, path.values[i][cell] * (path.spec.amplitudes[i] * SQRT_2PI));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Piecewise-constant spectral forcing

/// Forcing on `[0, 1)` that is constant on `cells` equal cells and supported
/// on a finite mode set; `values[i][m]` is the coefficient of `e_{modes[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingPath {
    pub modes: Vec<i64>,
    pub values: Vec<Vec<Complex64>>,
}

impl ForcingPath {
    pub fn zero(modes: &[i64], cells: usize) -> Self {
        Self {
            modes: modes.to_vec(),
            values: vec![vec![Complex64::default(); cells]; modes.len()],
        }
    }

    /// Forcing `amplitude·h(t)·e_k` for a time profile given on cells.
    pub fn single(k: i64, profile: &[f64], amplitude: Complex64) -> Self {
        Self {
            modes: vec![k],
            values: vec![profile.iter().map(|&h| amplitude * h).collect()],
        }
    }

    pub fn cells(&self) -> usize {
        self.values.first().map_or(1, |v| v.len())
    }

    /// Active coefficients at time `t ∈ [0, 1)`.
    pub fn at(&self, t: f64) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let cells = self.cells();
        let m = ((t * cells as f64) as usize).min(cells - 1);
        self.modes
            .iter()
            .zip(&self.values)
            .map(move |(&k, v)| (k, v[m]))
    }

    /// `self + s·other`, refining to the finer of the two cell counts.
    pub fn axpy(&self, s: f64, other: &ForcingPath) -> ForcingPath {
        let cells = self.cells().max(other.cells());
        let mut modes = self.modes.clone();
        for k in &other.modes {
            if !modes.contains(k) {
                modes.push(*k);
            }
        }
        let sample = |fp: &ForcingPath, k: i64, m: usize| -> Complex64 {
            fp.modes
                .iter()
                .position(|&q| q == k)
                .map(|i| fp.values[i][m * fp.cells() / cells])
                .unwrap_or_default()
        };
        let values = modes
            .iter()
            .map(|&k| {
                (0..cells)
                    .map(|m| sample(self, k, m) + sample(other, k, m) * s)
                    .collect()
            })
            .collect();
        ForcingPath { modes, values }
    }

    /// `(∫₀¹ ‖f(t)‖²_{L²} dt)^{1/2}`.
    pub fn norm_l2(&self) -> f64 {
        let cells = self.cells() as f64;
        (self
            .values
            .iter()
            .flat_map(|v| v.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            / cells)
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    #[test]
    fn haar_values() {
        assert_eq!(haar_eval(0, 0, 0.5).unwrap(), 1.0);
        assert_eq!(haar_eval(0, 0, 1.0).unwrap(), 0.0);
        assert_eq!(haar_eval(1, 0, 0.2).unwrap(), 1.0);
        assert_eq!(haar_eval(1, 0, 0.3).unwrap(), -1.0);
        assert_eq!(haar_eval(1, 0, 0.6).unwrap(), 0.0);
        assert_eq!(haar_eval(2, 3, 0.80).unwrap(), 1.0);
        assert_eq!(haar_eval(2, 3, 0.90).unwrap(), -1.0);
        assert!(haar_eval(2, 4, 0.5).is_err());
        assert!(haar_eval(0, 1, 0.5).is_err());
        // left-closed cells
        assert_eq!(haar_eval(1, 1, 0.5).unwrap(), 1.0);
        assert_eq!(haar_eval(1, 1, 0.75).unwrap(), -1.0);
    }

    #[test]
    fn orthonormal_basis_is_orthonormal() {
        for level in 0..4 {
            let basis = orthonormal_time_basis(level);
            let cells = 1usize << (level + 1);
            assert_eq!(basis.len(), cells);
            for (a, (_, va)) in basis.iter().enumerate() {
                for (b, (_, vb)) in basis.iter().enumerate() {
                    let ip: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum::<f64>() / cells as f64;
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-14, "({a},{b}) -> {ip}");
                }
            }
        }
    }

    #[test]
    fn rho_properties() {
        for rho in [RhoSpec::RaisedCosine, RhoSpec::Triangular] {
            assert!((rho.integral() - 1.0).abs() < 1e-10);
            assert!(rho.density(0.0) > 0.0);
            assert_eq!(rho.density(1.5), 0.0);
            for u in [0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0] {
                let x = rho.quantile(u);
                assert!((-1.0..=1.0).contains(&x));
                assert!((rho.cdf(x) - u).abs() < 1e-12, "{rho:?} u={u}");
            }
        }
        assert!((RhoSpec::RaisedCosine.density(0.0) - 1.0).abs() < 1e-15);
        assert!((RhoSpec::RaisedCosine.density(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn raised_cosine_sampling_statistics() {
        let mut rng = substream(1, Purpose::Noise, 0, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut below = 0usize;
        for _ in 0..n {
            let x = sample_xi(RhoSpec::RaisedCosine, &mut rng);
            assert!((-1.0..=1.0).contains(&x));
            sum += x;
            below += (x < 0.0) as usize;
        }
        assert!((sum / n as f64).abs() < 3e-3);
        assert!((below as f64 / n as f64 - 0.5).abs() < 2e-3);
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        let bad_q = NoiseSpec {
            haar_q: 1.0,
            ..Default::default()
        };
        let err = bad_q.validate().unwrap_err().to_string();
        assert!(err.contains("q > 1"), "{err}");
        let empty = NoiseSpec {
            modes: vec![],
            amplitudes: vec![],
            ..Default::default()
        };
        assert!(empty.validate().is_err());
        assert!(NoiseSpec::default().silent().validate().is_ok());
    }

    #[test]
    fn level_zero_path_is_constant() {
        let spec = NoiseSpec {
            level_max: 0,
            ..Default::default()
        };
        let mut rng = substream(3, Purpose::Noise, 0, 0);
        for _ in 0..100 {
            let p = sample_noise_path(&spec, &mut rng, None);
            for v in &p.values {
                assert_eq!(v.len(), 2);
                assert_eq!(v[0], v[1]);
                assert!(v[0].norm() <= 2f64.sqrt());
            }
        }
    }

    #[test]
    fn path_bound_and_mean() {
        let spec = NoiseSpec::default();
        let bound = spec.path_bound();
        for i in 0..1000 {
            let p = sample_noise_path_seeded(&spec, SeedRecord::new(11, Purpose::Noise, i, 0));
            for m in 0..spec.modes.len() {
                assert!(p.sup_norm(m) <= bound * (1.0 + 1e-15));
            }
        }
        // time average equals the h0 coefficient
        let mut rng = substream(5, Purpose::Noise, 0, 0);
        let p = sample_noise_path(&spec, &mut rng, None);
        let mut rng = substream(5, Purpose::Noise, 0, 0);
        let xi0 = Complex64::new(
            sample_xi(spec.rho, &mut rng),
            sample_xi(spec.rho, &mut rng),
        );
        assert!((p.mean(0) - xi0).norm() < 1e-12);
    }

    #[test]
    fn noise_field_examples() {
        let g = Grid::default();
        let spec = NoiseSpec {
            amplitudes: vec![0.1, 0.1],
            ..Default::default()
        };
        let mut p = NoisePath::zero(&spec);
        p.values[0].iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0));
        let f = noise_field_at(&p, g, 0.3).unwrap();
        for v in crate::spectral::to_physical(&f) {
            assert!((v - Complex64::new(0.1, 0.0)).norm() < 1e-14);
        }
        let z = noise_field_at(&NoisePath::zero(&spec), g, 0.0).unwrap();
        assert_eq!(z.norm_l2(), 0.0);
        assert!(noise_field_at(&p, g, 1.0).is_err());
        for i in 0..100 {
            let p = sample_noise_path_seeded(&NoiseSpec::default(), SeedRecord::new(2, Purpose::Noise, i, 0));
            let f = noise_field_at(&p, g, 0.5).unwrap();
            for k in g.wavenumbers() {
                if k != 0 && k != 1 {
                    assert_eq!(f.get(k), Complex64::default());
                }
            }
        }
    }

    #[test]
    fn seeded_paths_are_bit_identical() {
        let spec = NoiseSpec::default();
        let r = SeedRecord::new(99, Purpose::Noise, 4, 17);
        assert_eq!(sample_noise_path_seeded(&spec, r), sample_noise_path_seeded(&spec, r));
    }

    #[test]
    fn shifting_round_trips_through_forcing() {
        let spec = NoiseSpec::default();
        let p = sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 0, 0));
        let profile = haar_cells(Some((1, 0)), 4);
        let delta = ForcingPath::single(1, &profile, Complex64::new(0.0, 0.3));
        let q = p.shifted(&delta).unwrap();
        let diff = q.forcing().axpy(-1.0, &p.forcing());
        let back = diff.axpy(-1.0, &delta);
        assert!(back.norm_l2() < 1e-14);
        assert!(p.shifted(&ForcingPath::single(5, &profile, Complex64::new(1.0, 0.0))).is_err());
    }

    #[test]
    fn csv_layout() {
        let spec = NoiseSpec {
            level_max: 1,
            ..Default::default()
        };
        let p = NoisePath::zero(&spec);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "cell_index,t_left,mode_k,re,im");
        assert_eq!(lines.len(), 1 + 4 * 2);
        assert!(lines[3].starts_with("1,0.25,0,"));
    }
}
