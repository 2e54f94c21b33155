//! Damped NLS flow `iu_t + u_xx + ia(x)u = |u|^{p-1}u + f` on the torus.
//!
//! One solver step of size `dt` is the symmetric composition
//!
//! ```text
//! L(dt/2) ∘ N(dt) ∘ L(dt/2),     L(τ) = D(τ/2) ∘ F(τ) ∘ D(τ/2)
//! ```
//!
//! where `F` is the exact free propagator `e^{-ik²τ}` (diagonal in Fourier),
//! `D` the exact pointwise decay `e^{-a(x)τ}`, and `N` solves
//! `iu_t = |u|^{p-1}u + f` pointwise: a half kick `u ← u − i f dt/2`, the
//! modulus-preserving rotation `u ← u e^{-i|u|^{p-1}dt}`, another half kick.
//! Every pointwise substep runs on a zero-padded physical grid and is
//! truncated back to `|k| <= k_max`. `L(τ)` is exactly one step of
//! [`linear_group`] with step `τ`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{ForcingPath, NoisePath};
use crate::spectral::{
    check_exponent, lebesgue_integral, sobolev_norm, DampingProfile, FourierField, Grid, Transform,
    SQRT_2PI,
};

/// H¹ norm above which a run is aborted.
pub const BLOW_UP_GUARD: f64 = 1e6;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    StrangSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub grid: Grid,
    pub p: u32,
    pub damping: DampingProfile,
    pub store_stride: usize,
}

impl SolverConfig {
    pub fn new(grid: Grid, dt: f64, p: u32, damping: DampingProfile) -> Result<Self> {
        let cfg = Self {
            dt,
            scheme: Scheme::StrangSplit,
            grid,
            p,
            damping,
            store_stride: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.store_stride = stride.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::invalid(format!(
                "solver: dt must lie in (0, 1e-2], got {}",
                self.dt
            )));
        }
        if self.store_stride == 0 {
            return Err(Error::invalid("solver: store_stride must be >= 1"));
        }
        if self.damping.values().len() != self.grid.n_points() {
            return Err(Error::invalid("solver: damping sampled on a different grid"));
        }
        Ok(())
    }

    /// Whether `dt` tiles cells of the given width exactly.
    pub fn divides(&self, width: f64) -> bool {
        let r = width / self.dt;
        (r - r.round()).abs() < 1e-9 && r.round() >= 1.0
    }
}

/// Forcing fed to the solver: nothing, or a sequence of unit-time paths
/// (path `i` acts on `[i, i+1)`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum Forcing {
    #[default]
    Zero,
    Paths(Vec<ForcingPath>),
}

impl Forcing {
    pub fn path(p: ForcingPath) -> Self {
        Forcing::Paths(vec![p])
    }

    pub fn noise(path: &NoisePath) -> Self {
        Forcing::Paths(vec![path.forcing()])
    }

    pub fn noise_chain(paths: &[NoisePath]) -> Self {
        Forcing::Paths(paths.iter().map(NoisePath::forcing).collect())
    }

    /// Coefficients active at time `t`.
    pub fn at(&self, t: f64) -> Vec<(i64, Complex64)> {
        match self {
            Forcing::Zero => Vec::new(),
            Forcing::Paths(ps) => {
                let idx = t.floor();
                if idx < 0.0 || idx as usize >= ps.len() {
                    return Vec::new();
                }
                ps[idx as usize].at(t - idx).collect()
            }
        }
    }

    fn check_alignment(&self, cfg: &SolverConfig) -> Result<()> {
        if let Forcing::Paths(ps) = self {
            for p in ps {
                let width = 1.0 / p.cells() as f64;
                if !cfg.divides(width) {
                    return Err(Error::invalid(format!(
                        "solver: dt = {} must divide the forcing cell width {width}",
                        cfg.dt
                    )));
                }
                for &k in &p.modes {
                    if cfg.grid.index(k).is_none() {
                        return Err(Error::invalid(format!("forcing mode {k} outside the band")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// States of a solver run at `times[0], times[0] + stride·dt, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FourierField>,
    pub config: SolverConfig,
    pub forcing: Forcing,
}

impl Trajectory {
    pub fn last(&self) -> &FourierField {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// CSV with columns `t,mode,re,im`, one row per stored coefficient.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mode,re,im")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            for (k, c) in s.grid().wavenumbers().zip(s.coeffs()) {
                writeln!(w, "{t},{k},{:e},{:e}", c.re, c.im)?;
            }
        }
        Ok(())
    }

    /// Compact little-endian dump: the 16-byte header
    /// `b"SMIX" | version: u32 | n_modes: u32 | count: u32`, then for each state
    /// its time as `f64` followed by `n_modes` pairs `(re, im)` of `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n_modes = self.config.grid.n_modes() as u32;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&n_modes.to_le_bytes())?;
        w.write_all(&(self.states.len() as u32).to_le_bytes())?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_all(&t.to_le_bytes())?;
            for c in s.coeffs() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

pub const BINARY_MAGIC: &[u8; 4] = b"SMIX";
pub const BINARY_VERSION: u32 = 1;

/// Reads a dump written by [`Trajectory::write_binary`] back as `(times, states)`.
pub fn read_binary<R: Read>(mut r: R, grid: Grid) -> Result<(Vec<f64>, Vec<FourierField>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != BINARY_MAGIC {
        return Err(Error::invalid("binary dump: bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != BINARY_VERSION {
        return Err(Error::invalid(format!("binary dump: unsupported version {}", word(4))));
    }
    let n_modes = word(8) as usize;
    if n_modes != grid.n_modes() {
        return Err(Error::SizeMismatch {
            expected: grid.n_modes(),
            found: n_modes,
        });
    }
    let count = word(12) as usize;
    let mut f = [0u8; 8];
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f)?;
        Ok(f64::from_le_bytes(f))
    };
    let mut times = Vec::with_capacity(count);
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        times.push(read_f64(&mut r)?);
        let mut coeff = Vec::with_capacity(n_modes);
        for _ in 0..n_modes {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            coeff.push(Complex64::new(re, im));
        }
        states.push(FourierField::from_coeffs(grid, coeff)?);
    }
    Ok((times, states))
}

// ---------------------------------------------------------------------------
// Substeps

/// Exact substep operators of the splitting, bound to one configuration.
pub(crate) struct Stepper {
    pub(crate) p: u32,
    pub(crate) dt: f64,
    m: usize,
    tr: Transform,
    buf: Vec<Complex64>,
    fbuf: Vec<Complex64>,
    /// `e^{-a dt/4}` on the padded grid; `None` when undamped.
    damp_quarter: Option<Vec<f64>>,
    /// `e^{-ik² dt/2}` per stored mode.
    free_half: Vec<Complex64>,
    roots: Vec<Complex64>,
}

impl Stepper {
    pub(crate) fn new(cfg: &SolverConfig) -> Self {
        Self::with_step(cfg, cfg.dt)
    }

    pub(crate) fn with_step(cfg: &SolverConfig, dt: f64) -> Self {
        let grid = cfg.grid;
        let m = grid.padded_points(cfg.p as usize);
        let damp_quarter = cfg
            .damping
            .is_active()
            .then(|| cfg.damping.sample(m).iter().map(|a| (-a * dt / 4.0).exp()).collect());
        let free_half = grid
            .wavenumbers()
            .map(|k| Complex64::from_polar(1.0, -((k * k) as f64) * dt / 2.0))
            .collect();
        let roots = (0..m)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))
            .collect();
        Self {
            p: cfg.p,
            dt,
            m,
            tr: Transform::new(m),
            buf: vec![Complex64::default(); m],
            fbuf: vec![Complex64::default(); m],
            damp_quarter,
            free_half,
            roots,
        }
    }

    pub(crate) fn padded(&self) -> usize {
        self.m
    }

    /// Runs `op` on the padded physical samples of `c`, then truncates back.
    fn pass(&mut self, c: &mut [Complex64], op: impl FnOnce(&mut [Complex64], &[Complex64])) {
        let mut buf = std::mem::take(&mut self.buf);
        self.tr.synthesize(c, &mut buf);
        op(&mut buf, &self.fbuf);
        self.tr.analyze(&mut buf, c);
        self.buf = buf;
    }

    fn damp(&mut self, c: &mut [Complex64]) {
        if let Some(q) = self.damp_quarter.take() {
            self.pass(c, |u, _| u.iter_mut().zip(&q).for_each(|(v, s)| *v *= *s));
            self.damp_quarter = Some(q);
        }
    }

    /// `L(dt/2) = D(dt/4) F(dt/2) D(dt/4)`.
    pub(crate) fn linear_half(&mut self, c: &mut [Complex64]) {
        self.damp(c);
        c.iter_mut().zip(&self.free_half).for_each(|(v, f)| *v *= f);
        self.damp(c);
    }

    /// Transpose of [`Stepper::linear_half`] for the real pairing `Re ∫ v φ̄`.
    pub(crate) fn linear_half_transpose(&mut self, c: &mut [Complex64]) {
        self.damp(c);
        c.iter_mut().zip(&self.free_half).for_each(|(v, f)| *v *= f.conj());
        self.damp(c);
    }

    /// Loads the physical forcing for `coeffs` into the forcing buffer.
    fn load_forcing(&mut self, coeffs: &[(i64, Complex64)]) {
        let m = self.m as i64;
        self.fbuf.iter_mut().for_each(|v| *v = Complex64::default());
        for &(k, c) in coeffs {
            let c = c / SQRT_2PI;
            for (j, v) in self.fbuf.iter_mut().enumerate() {
                *v += c * self.roots[((k * j as i64).rem_euclid(m)) as usize];
            }
        }
    }

    /// Kick–rotate–kick substep. When `record` is given, it receives the
    /// padded state entering the rotation.
    pub(crate) fn nonlinear(
        &mut self,
        c: &mut [Complex64],
        forcing: &[(i64, Complex64)],
        record: Option<&mut Vec<Complex64>>,
    ) {
        let forced = !forcing.is_empty();
        if forced {
            self.load_forcing(forcing);
        }
        let dt = self.dt;
        let kick = -I * (dt / 2.0);
        let half_pow = (self.p as i32 - 1) / 2;
        self.pass(c, |u, f| {
            if forced {
                u.iter_mut().zip(f).for_each(|(v, g)| *v += kick * g);
            }
            if let Some(rec) = record {
                rec.clear();
                rec.extend_from_slice(u);
            }
            for v in u.iter_mut() {
                let w = v.norm_sqr().powi(half_pow);
                *v *= Complex64::from_polar(1.0, -w * dt);
            }
            if forced {
                u.iter_mut().zip(f).for_each(|(v, g)| *v += kick * g);
            }
        });
    }

    /// Derivative of [`Stepper::nonlinear`] at the recorded state `base`,
    /// applied to `c`, with forcing direction `g`.
    pub(crate) fn nonlinear_tangent(
        &mut self,
        c: &mut [Complex64],
        base: &[Complex64],
        g: &[(i64, Complex64)],
    ) {
        let forced = !g.is_empty();
        if forced {
            self.load_forcing(g);
        }
        let dt = self.dt;
        let beta = (self.p as f64 - 1.0) / 2.0;
        let kick = -I * (dt / 2.0);
        let (hw, hz) = ((self.p as i32 - 1) / 2, (self.p as i32 - 3) / 2);
        self.pass(c, |v, f| {
            if forced {
                v.iter_mut().zip(f).for_each(|(x, g)| *x += kick * g);
            }
            for (x, u) in v.iter_mut().zip(base) {
                let r2 = u.norm_sqr();
                let w = r2.powi(hw);
                let z = r2.powi(hz) * u * u;
                let rot = Complex64::from_polar(1.0, -w * dt);
                *x = rot * (*x - I * (beta * dt) * (w * *x + z * x.conj()));
            }
            if forced {
                v.iter_mut().zip(f).for_each(|(x, g)| *x += kick * g);
            }
        });
    }

    /// Transpose of the homogeneous part of [`Stepper::nonlinear_tangent`].
    pub(crate) fn nonlinear_tangent_transpose(&mut self, c: &mut [Complex64], base: &[Complex64]) {
        let dt = self.dt;
        let beta = (self.p as f64 - 1.0) / 2.0;
        let (hw, hz) = ((self.p as i32 - 1) / 2, (self.p as i32 - 3) / 2);
        self.pass(c, |v, _| {
            for (x, u) in v.iter_mut().zip(base) {
                let r2 = u.norm_sqr();
                let w = r2.powi(hw);
                let z = r2.powi(hz) * u * u;
                let rot = Complex64::from_polar(1.0, w * dt);
                let pbar = rot * (1.0 + I * (beta * dt * w));
                let q = -I * (beta * dt) * rot.conj() * z;
                *x = pbar * *x + q * x.conj();
            }
        });
    }

    pub(crate) fn step(&mut self, c: &mut [Complex64], forcing: &[(i64, Complex64)]) {
        self.linear_half(c);
        self.nonlinear(c, forcing, None);
        self.linear_half(c);
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("time horizon must be >= 0, got {horizon}")));
    }
    let n = horizon / dt;
    let r = n.round();
    if (n - r).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "horizon {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(r as usize)
}

fn guard(f: &FourierField, time: f64) -> Result<()> {
    let norm = sobolev_norm(f, 1.0);
    if !(norm <= BLOW_UP_GUARD) {
        return Err(Error::BlowUp { time, norm });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operations

/// `S_a(t)u₀`: Strang steps `D(dt/2) F(dt) D(dt/2)`. A horizon that is not a
/// multiple of `dt` is covered with `⌈t/dt⌉` equal steps.
pub fn linear_group(u0: &FourierField, t: f64, damping: &DampingProfile, dt: f64) -> Result<FourierField> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("linear group needs t >= 0, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("linear group needs dt > 0"));
    }
    if t == 0.0 {
        return Ok(u0.clone());
    }
    let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / n as f64;
    // A linear step of size h is the solver's half step for a solver step 2h.
    let cfg = SolverConfig {
        dt: 2.0 * h,
        scheme: Scheme::StrangSplit,
        grid: u0.grid(),
        p: 3,
        damping: damping.clone(),
        store_stride: 1,
    };
    let mut st = Stepper::new(&cfg);
    let mut c = u0.clone().into_coeffs();
    for _ in 0..n {
        st.linear_half(&mut c);
    }
    FourierField::from_coeffs(u0.grid(), c)
}

/// Integrates the forced damped NLS from `u0` over `[0, horizon]`.
pub fn solve_nls(
    u0: &FourierField,
    forcing: &Forcing,
    horizon: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if u0.grid() != cfg.grid {
        return Err(Error::invalid("initial state and solver use different grids"));
    }
    forcing.check_alignment(cfg)?;
    let n = step_count(horizon, cfg.dt)?;
    let mut st = Stepper::new(cfg);
    let mut c = u0.clone().into_coeffs();
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    for step in 0..n {
        let t_mid = (step as f64 + 0.5) * cfg.dt;
        st.step(&mut c, &forcing.at(t_mid));
        let t = (step + 1) as f64 * cfg.dt;
        let done = step + 1 == n;
        if (step + 1) % cfg.store_stride == 0 || done {
            let f = FourierField::from_coeffs(cfg.grid, c.clone()).map_err(|_| Error::BlowUp {
                time: t,
                norm: f64::INFINITY,
            })?;
            guard(&f, t)?;
            times.push(t);
            states.push(f);
        } else if step % 64 == 0 {
            let norm: f64 = c.iter().map(|v| v.norm_sqr()).sum::<f64>();
            if !norm.is_finite() {
                return Err(Error::BlowUp {
                    time: t,
                    norm: f64::INFINITY,
                });
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        config: cfg.clone(),
        forcing: forcing.clone(),
    })
}

/// Unit-time Markov step `u ↦ S(u, η)`.
pub fn markov_step(u0: &FourierField, path: &NoisePath, cfg: &SolverConfig) -> Result<FourierField> {
    let cfg = cfg.clone().with_stride(usize::MAX);
    Ok(solve_nls(u0, &Forcing::noise(path), 1.0, &cfg)?.last().clone())
}

/// `θ_u(t) = ((p+1)/(4π)) ∫₀ᵗ ‖u(s)‖^{p-1}_{L^{p-1}} ds` by the trapezoid rule
/// over the stored states.
pub fn phase_theta(traj: &Trajectory, t: f64) -> Result<f64> {
    let t0 = traj.times[0];
    let t1 = traj.horizon();
    let tol = 1e-12 * t1.abs().max(1.0);
    if t < t0 - tol || t > t1 + tol {
        return Err(Error::invalid(format!("t = {t} outside trajectory span [{t0}, {t1}]")));
    }
    let p = traj.config.p;
    let integrand = |i: usize| lebesgue_integral(&traj.states[i], p - 1);
    let mut acc = 0.0;
    let mut prev = integrand(0);
    for i in 1..traj.times.len() {
        let (ta, tb) = (traj.times[i - 1], traj.times[i]);
        if t <= ta {
            break;
        }
        let cur = integrand(i);
        if t >= tb {
            acc += 0.5 * (prev + cur) * (tb - ta);
        } else {
            let s = (t - ta) / (tb - ta);
            let mid = prev + s * (cur - prev);
            acc += 0.5 * (prev + mid) * (t - ta);
        }
        prev = cur;
    }
    Ok((p as f64 + 1.0) / (4.0 * PI) * acc)
}

fn check_operands(fields: &[FourierField]) -> Result<(Grid, u32)> {
    let p = fields.len() as u32;
    if p < 3 || p % 2 == 0 {
        return Err(Error::invalid(format!(
            "p-multiplication needs an odd number >= 3 of factors, got {p}"
        )));
    }
    let grid = fields[0].grid();
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::invalid("p-multiplication operands live on different grids"));
    }
    Ok((grid, p))
}

/// Padded samples of `fields`, conjugating the even-indexed (1-based) ones.
fn signed_samples(fields: &[FourierField], m: usize) -> Vec<Vec<Complex64>> {
    let mut tr = Transform::new(m);
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut out = vec![Complex64::default(); m];
            tr.synthesize(f.coeffs(), &mut out);
            if i % 2 == 1 {
                out.iter_mut().for_each(|v| *v = v.conj());
            }
            out
        })
        .collect()
}

/// `N(u₁,…,u_p) = Π_{l odd} u_l Π_{l even} ū_l`, truncated to the band.
pub fn nmult(fields: &[FourierField]) -> Result<FourierField> {
    let (grid, p) = check_operands(fields)?;
    let m = grid.padded_points(p as usize);
    let samples = signed_samples(fields, m);
    let mut prod = vec![Complex64::new(1.0, 0.0); m];
    for s in &samples {
        prod.iter_mut().zip(s).for_each(|(a, b)| *a *= b);
    }
    let mut out = FourierField::zeros(grid);
    Transform::new(m).analyze(&mut prod, out.coeffs_mut());
    Ok(out)
}

/// Resonant part `N_R`: for each odd `m`, the configurations with `k_m = k`.
/// The constraint on the remaining indices collapses their sum to the mean of
/// their product, so each term is `û_m(k)·(1/2π)∫ Π_{l≠m} u_l^{(±)} dx`.
pub fn nres(fields: &[FourierField]) -> Result<FourierField> {
    let (grid, p) = check_operands(fields)?;
    let m = grid.padded_points(p as usize);
    let samples = signed_samples(fields, m);
    let w = 2.0 * PI / m as f64;
    let mut out = FourierField::zeros(grid);
    for odd in (0..p as usize).step_by(2) {
        let integral: Complex64 = (0..m)
            .map(|j| {
                samples
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| *l != odd)
                    .map(|(_, s)| s[j])
                    .product::<Complex64>()
            })
            .sum::<Complex64>()
            * w;
        let factor = integral / (2.0 * PI);
        out.coeffs_mut()
            .iter_mut()
            .zip(fields[odd].coeffs())
            .for_each(|(o, u)| *o += u * factor);
    }
    Ok(out)
}

/// Non-resonant part `N_NR = N − N_R`.
pub fn nnonres(fields: &[FourierField]) -> Result<FourierField> {
    Ok(&nmult(fields)? - &nres(fields)?)
}

/// `u(t) − e^{-iθ_u(t)} S_a(t) u₀`. The linear group is taken with step
/// `dt/2`, the resolution at which the solver applies it.
pub fn smoothing_remainder(
    u0: &FourierField,
    forcing: &Forcing,
    t: f64,
    cfg: &SolverConfig,
) -> Result<FourierField> {
    let cfg = cfg.clone().with_stride(1);
    let traj = solve_nls(u0, forcing, t, &cfg)?;
    let theta = phase_theta(&traj, t)?;
    let lin = linear_group(u0, t, &cfg.damping, cfg.dt / 2.0)?;
    Ok(traj.last() - &lin.scale(Complex64::from_polar(1.0, -theta)))
}
