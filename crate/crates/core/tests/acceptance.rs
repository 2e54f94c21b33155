//! Acceptance suite. Every test prints one `criterion NN ... PASS|FAIL` line
//! (run with `--nocapture` to see them) and then asserts the same verdict.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schrodmix::control::{
    assemble_control_map, contraction_search, gamma_grid, saturation_span, stabilizing_shift, ContractionOptions,
};
use schrodmix::dynamics::{markov_step, nmult, nnonres, nres, solve_nls, Forcing, SolverConfig};
use schrodmix::linear::{assemble_gramian, duality_pairing, solve_adjoint_backward, solve_linearized};
use schrodmix::mixing::{decay_experiment, mixing_experiment, random_state};
use schrodmix::noise::{orthonormal_time_basis, sample_noise_path_seeded, sample_xi, NoiseSpec, TimeBasisElement};
use schrodmix::rng::{Purpose, SeedRecord};
use schrodmix::spectral::{energy, DampingProfile, FourierField, Grid};

struct Verdict {
    id: u32,
    name: &'static str,
    clauses: Vec<(String, bool)>,
    start: Instant,
    limit: Duration,
}

impl Verdict {
    fn new(id: u32, name: &'static str, limit_secs: u64) -> Self {
        Self {
            id,
            name,
            clauses: Vec::new(),
            start: Instant::now(),
            limit: Duration::from_secs(limit_secs),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.clauses.push((detail, ok));
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            elapsed < self.limit,
            format!("runtime {:.2}s < {}s", elapsed.as_secs_f64(), self.limit.as_secs()),
        );
        let pass = self.clauses.iter().all(|(_, ok)| *ok);
        let detail: Vec<String> = self
            .clauses
            .iter()
            .map(|(d, ok)| format!("[{}] {d}", if *ok { "ok" } else { "FAILED" }))
            .collect();
        println!(
            "criterion {:02} {}: {} | {}",
            self.id,
            self.name,
            if pass { "PASS" } else { "FAIL" },
            detail.join("; ")
        );
        assert!(pass, "criterion {} failed", self.id);
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn bump_config(grid: Grid, dt: f64) -> SolverConfig {
    SolverConfig::new(grid, dt, 3, DampingProfile::bump(grid, 2.0, PI, 1.0).unwrap()).unwrap()
}

/// `warm` Markov steps of chain `chain` from a unit-H¹ random state.
fn warm_state(grid: Grid, cfg: &SolverConfig, spec: &NoiseSpec, master: u64, chain: u64, warm: u64) -> FourierField {
    let mut u = random_state(grid, 2.0, 1.0, master, chain);
    for s in 0..warm {
        let z = sample_noise_path_seeded(spec, SeedRecord::new(master, Purpose::Noise, chain, s));
        u = markov_step(&u, &z, cfg).unwrap();
    }
    u
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

#[test]
fn criterion_01_plane_wave() {
    let mut v = Verdict::new(1, "plane-wave exactness", 10);
    let grid = Grid::new(128, 42).unwrap();
    // e^{ix} has coefficient √(2π) on e_1; the exact solution is e^{i(x − 2t)}.
    let u0 = FourierField::mode(grid, 1, c((2.0 * PI).sqrt(), 0.0)).unwrap();
    let exact = u0.scale(Complex64::from_polar(1.0, -2.0));
    let err = |dt: f64| {
        let cfg = SolverConfig::new(grid, dt, 3, DampingProfile::none(grid))
            .unwrap()
            .with_stride(usize::MAX);
        let tr = solve_nls(&u0, &Forcing::Zero, 1.0, &cfg).unwrap();
        (tr.last() - &exact).norm_l2() / exact.norm_l2()
    };
    let (e1, e2) = (err(1e-4), err(5e-5));
    v.check(e1 <= 1e-6, format!("rel L2 error {e1:.3e} <= 1e-6 at dt = 1e-4"));
    v.check(
        e1 / e2 >= 3.5,
        format!("halving dt reduces error {:.3}x >= 3.5x ({e1:.3e} -> {e2:.3e})", e1 / e2),
    );
    v.finish();
}

#[test]
fn criterion_02_conservation() {
    let mut v = Verdict::new(2, "conservation", 10);
    let grid = Grid::default();
    let cfg = SolverConfig::new(grid, 1e-4, 3, DampingProfile::none(grid))
        .unwrap()
        .with_stride(500);
    let mut worst_e: f64 = 0.0;
    let mut worst_m: f64 = 0.0;
    for seed in 0..3 {
        let u0 = random_state(grid, 1.5, 1.0, 900 + seed, 0);
        let (e0, m0) = (energy(&u0, 3).unwrap(), u0.norm_l2());
        let tr = solve_nls(&u0, &Forcing::Zero, 1.0, &cfg).unwrap();
        for s in &tr.states {
            worst_e = worst_e.max((energy(s, 3).unwrap() - e0).abs() / e0);
            worst_m = worst_m.max((s.norm_l2() - m0).abs() / m0);
        }
    }
    v.check(worst_e <= 1e-8, format!("max relative energy drift {worst_e:.3e} <= 1e-8"));
    v.check(worst_m <= 1e-8, format!("max relative L2 drift {worst_m:.3e} <= 1e-8"));
    v.finish();
}

#[test]
fn criterion_03_global_stability() {
    let mut v = Verdict::new(3, "global stability trend", 120);
    let grid = Grid::default();
    let u0 = random_state(grid, 2.0, 1.0, 31, 0);
    let r = decay_experiment(&u0, 200.0, 2, &bump_config(grid, 1.0 / 256.0)).unwrap();
    let beta = r.beta.unwrap_or(f64::NAN);
    let corr = r.correlation.unwrap_or(0.0);
    let (e0, e200) = (r.energies[0], *r.energies.last().unwrap());
    v.check(beta > 0.0, format!("fitted beta {beta:.4} > 0"));
    v.check(corr.abs() >= 0.95, format!("|r| = {:.4} >= 0.95", corr.abs()));
    v.check(e200 < e0 / 10.0, format!("E(200) = {e200:.3e} < E(0)/10 = {:.3e}", e0 / 10.0));

    let alpha = 0.25;
    let small = u0.scale_real(1e-4);
    let flat = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::constant(grid, alpha).unwrap()).unwrap();
    let r = decay_experiment(&small, 20.0, 4, &flat).unwrap();
    let b = r.beta.unwrap_or(f64::NAN);
    let rel = (b - 2.0 * alpha).abs() / (2.0 * alpha);
    v.check(rel <= 0.15, format!("constant damping beta {b:.4} vs 2 alpha = {} (rel {rel:.2e} <= 0.15)", 2.0 * alpha));
    v.finish();
}

#[test]
fn criterion_04_duality() {
    let mut v = Verdict::new(4, "duality invariant", 60);
    let grid = Grid::default();
    let cfg = bump_config(grid, 1.0 / 256.0).with_stride(1);
    let spec = NoiseSpec::default();
    let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(4, Purpose::Noise, 0, 0));
    let base = solve_nls(&random_state(grid, 2.0, 1.0, 4, 0), &Forcing::noise(&zeta), 1.0, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for pair in 0..20u64 {
        let v0 = random_state(grid, 1.0, 1.0, 400 + pair, 0);
        let phi1 = random_state(grid, 1.0, 1.0, 400 + pair, 1);
        let fw = solve_linearized(&base, &v0, &Forcing::Zero).unwrap();
        let bw = solve_adjoint_backward(&base, &phi1).unwrap();
        let p0 = duality_pairing(&fw, &bw, 0.0).unwrap();
        let drift = base
            .times
            .iter()
            .map(|&t| (duality_pairing(&fw, &bw, t).unwrap() - p0).abs())
            .fold(0.0, f64::max);
        worst = worst.max(drift / (v0.norm_l2() * phi1.norm_l2()));
    }
    v.check(worst <= 1e-6, format!("max drift / (|v0| |phi1|) = {worst:.3e} <= 1e-6 over 20 pairs"));
    v.finish();
}

/// Direct configuration sum of the p-fold product on modes `|k| <= band`.
/// With `resonant`, only configurations with `k_m = k` for the odd factor
/// `m` are kept, summed over every odd `m`.
fn enumerate(fields: &[FourierField], band: i64, resonant: bool) -> HashMap<i64, Complex64> {
    let p = fields.len();
    let norm = (2.0 * PI).powf(-((p - 1) as f64) / 2.0);
    let mut out: HashMap<i64, Complex64> = HashMap::new();
    let mut idx = vec![-band; p];
    'outer: loop {
        let k: i64 = idx.iter().enumerate().map(|(l, &kl)| if l % 2 == 0 { kl } else { -kl }).sum();
        let mut prod = c(norm, 0.0);
        for (l, f) in fields.iter().enumerate() {
            let x = f.get(idx[l]);
            prod *= if l % 2 == 0 { x } else { x.conj() };
        }
        let weight = if resonant {
            (0..p).step_by(2).filter(|&m| idx[m] == k).count() as f64
        } else {
            1.0
        };
        *out.entry(k).or_default() += prod * weight;
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot <= band {
                continue 'outer;
            }
            *slot = -band;
        }
        return out;
    }
}

#[test]
fn criterion_05_resonance() {
    let mut v = Verdict::new(5, "resonance decomposition", 5);
    let grid = Grid::new(64, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = true;
    let mut sum_err: f64 = 0.0;
    let mut brute: f64 = 0.0;
    for p in [3usize, 5] {
        let fields: Vec<FourierField> = (0..p)
            .map(|_| {
                let mut f = FourierField::zeros(grid);
                for k in -3..=3 {
                    f.set(k, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                }
                f
            })
            .collect();
        let (n, r, nr) = (nmult(&fields).unwrap(), nres(&fields).unwrap(), nnonres(&fields).unwrap());
        exact &= (&n - &r) == nr;
        sum_err = sum_err.max((&(&r + &nr) - &n).norm_l2() / n.norm_l2());
        let (full, res) = (enumerate(&fields, 3, false), enumerate(&fields, 3, true));
        for k in grid.wavenumbers() {
            let want_n = full.get(&k).copied().unwrap_or_default();
            let want_r = res.get(&k).copied().unwrap_or_default();
            brute = brute
                .max((n.get(k) - want_n).norm())
                .max((r.get(k) - want_r).norm())
                .max((nr.get(k) - (want_n - want_r)).norm());
        }
    }
    v.check(exact, "N_NR = N - N_R bit for bit".into());
    v.check(
        sum_err <= 4.0 * f64::EPSILON,
        format!("|N_R + N_NR - N| / |N| = {sum_err:.1e} (rounding only)"),
    );
    v.check(brute <= 1e-12, format!("max deviation from enumeration (p = 3, 5; |k| <= 3) {brute:.2e} <= 1e-12"));
    let a = 0.8;
    let u = FourierField::mode(grid, 1, c(a, 0.0)).unwrap();
    let f = [u.clone(), u.clone(), u];
    let (r, nr) = (nres(&f).unwrap(), nnonres(&f).unwrap());
    let want_r = FourierField::mode(grid, 1, c(a.powi(3) / PI, 0.0)).unwrap();
    let want_nr = FourierField::mode(grid, 1, c(-a.powi(3) / (2.0 * PI), 0.0)).unwrap();
    let single = (&r - &want_r).norm_l2().max((&nr - &want_nr).norm_l2());
    v.check(single <= 1e-14, format!("single-mode closed forms reproduced to {single:.1e}"));
    v.finish();
}

#[test]
fn criterion_06_gramian() {
    let mut v = Verdict::new(6, "Gramian saturation", 300);
    let grid = Grid::default();
    let cfg = bump_config(grid, 1.0 / 256.0);
    let spec = NoiseSpec::default();
    let (level, k_g) = (6, 4);
    let mut worst_ratio = f64::INFINITY;
    let mut worst_mono: f64 = 0.0;
    for master in [1u64, 2, 3] {
        let u = warm_state(grid, &cfg, &spec, master, 0, 20);
        let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(master, Purpose::Noise, 0, 20));
        let base = solve_nls(&u, &Forcing::noise(&zeta), 1.0, &cfg.clone().with_stride(1)).unwrap();
        let g0 = assemble_gramian(&base, &[0], level, k_g).unwrap();
        let g01 = assemble_gramian(&base, &[0, 1], level, k_g).unwrap();
        worst_ratio = worst_ratio.min(g01.target_subspace_min_eig / g0.target_subspace_min_eig);
        let diff = g01.to_matrix() - g0.to_matrix();
        worst_mono = worst_mono.max(-SymmetricEigen::new(diff).eigenvalues.min());
    }
    v.check(
        worst_ratio > 10.0,
        format!("lambda_min(|k| <= 2): B = {{0,1}} over B = {{0}} >= {worst_ratio:.1}x > 10x on 3 warm bases"),
    );
    v.check(worst_mono <= 1e-10, format!("G_{{0}} <= G_{{0,1}}: difference eigenvalues >= -{worst_mono:.1e}"));

    let flat = SolverConfig::new(grid, 1.0 / 256.0, 3, DampingProfile::none(grid)).unwrap().with_stride(1);
    let zero = solve_nls(&FourierField::zeros(grid), &Forcing::Zero, 1.0, &flat).unwrap();
    let g = assemble_gramian(&zero, &[0], level, k_g).unwrap();
    let gm = g.to_matrix();
    // Real coordinates of mode k sit at 2(k + K_g) and 2(k + K_g) + 1.
    let i0 = 2 * k_g;
    let mut cross: f64 = 0.0;
    for k in 1..=k_g {
        for s in [-(k as i64), k as i64] {
            let i = (2 * (s + k_g as i64)) as usize;
            cross = cross.max(gm.view((i0, i), (2, 2)).norm()).max(gm.view((i, i), (2, 2)).norm());
        }
    }
    v.check(cross <= 1e-10, format!("u = 0, B = {{0}}: blocks off mode 0 have norm {cross:.1e} <= 1e-10"));
    v.finish();
}

#[test]
fn criterion_07_saturation() {
    let mut v = Verdict::new(7, "saturating sets", 1);
    let b: BTreeSet<i64> = [0, 1].into();
    let covered = (0..=20).all(|n| saturation_span(&b, n).contains_interval(-(n as i64), n as i64 + 1));
    v.check(covered, "saturation_span({0,1}, n) contains [-n, n+1] for n = 0..=20".into());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parity = true;
    for _ in 0..10 {
        let set: BTreeSet<i64> = (0..rng.random_range(1..5)).map(|_| 2 * rng.random_range(-6i64..6)).collect();
        parity &= saturation_span(&set, 6).set.iter().all(|k| k % 2 == 0);
    }
    v.check(parity, "10 all-even generator sets stay even".into());
    v.finish();
}

#[test]
fn criterion_08_stabilization() {
    let mut v = Verdict::new(8, "stabilization", 600);
    let grid = Grid::default();
    let cfg = bump_config(grid, 1.0 / 256.0);
    let spec = NoiseSpec::default();
    let master = 8;
    let gammas = gamma_grid(1e-4, 1e-1, 7);
    let opts = ContractionOptions::default();
    let draws = 50u64;
    let (mut q, mut qu) = (Vec::new(), Vec::new());
    // Every draw warm-starts its own chain and uses the next noise step.
    for draw in 0..draws {
        let y = warm_state(grid, &cfg, &spec, master, draw, 20);
        let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(master, Purpose::Noise, draw, 20));
        let d = random_state(grid, 2.0, 1e-3, master, 100 + draw);
        let r = contraction_search(&y, &(&y + &d), &zeta, &gammas, &cfg, &opts).unwrap();
        q.push(r.q_ratio);
        qu.push(r.q_uncontrolled);
    }
    let frac = q.iter().filter(|&&x| x < 1.0).count() as f64 / draws as f64;
    let (mq, mqu) = (median(&q), median(&qu));
    v.check(frac >= 0.7, format!("contraction in {:.0}% of {draws} draws >= 70%", 100.0 * frac));
    v.check(mq < mqu, format!("median controlled {mq:.4} < median uncontrolled {mqu:.4}"));

    let y = warm_state(grid, &cfg, &spec, master, 0, 20);
    let zeta = sample_noise_path_seeded(&spec, SeedRecord::new(master, Purpose::Noise, 0, 20));
    let base = solve_nls(&y, &Forcing::noise(&zeta), 1.0, &cfg.clone().with_stride(1)).unwrap();
    let map = assemble_control_map(&base, &spec.modes, opts.level).unwrap();
    let d = random_state(grid, 2.0, 1e-3, master, 100);
    let mut lin: f64 = 0.0;
    for gamma in [1e-3, 1e-2] {
        let s1 = stabilizing_shift(&base, &zeta, &(&y + &d), gamma, &map).unwrap().shift_norm;
        for scale in [0.1, 10.0] {
            let s = stabilizing_shift(&base, &zeta, &(&y + &d.scale_real(scale)), gamma, &map)
                .unwrap()
                .shift_norm;
            lin = lin.max((s - scale * s1).abs() / (scale * s1));
        }
    }
    v.check(lin <= 1e-8, format!("shift norm linear in |x - y| to {lin:.1e} <= 1e-8"));
    v.finish();
}

#[test]
fn criterion_09_mixing() {
    let mut v = Verdict::new(9, "mixing decay", 1800);
    let grid = Grid::default();
    let cfg = bump_config(grid, 1.0 / 256.0);
    let spec = NoiseSpec::default();
    let (m, steps, master) = (400, 60, 11);
    let ua = random_state(grid, 2.0, 1.5, 7, 0);
    let ub = random_state(grid, 2.0, 1.5, 7, 1);
    let r = mixing_experiment(&ua, &ub, m, steps, &spec, &cfg, master).unwrap();
    let floor = r.noise_floor;
    let min_d = r.distances.iter().copied().fold(f64::INFINITY, f64::min);
    let rate = r.fitted_rate.unwrap_or(f64::NAN);
    let corr = r.correlation.unwrap_or(0.0);
    v.check(
        min_d < 3.0 * floor,
        format!("distance {:.3} -> {min_d:.4} < 3 x 2/sqrt(M) = {:.4}", r.distances[0], 3.0 * floor),
    );
    v.check(rate > 0.0, format!("fitted rate {rate:.4} > 0 over steps {:?}", r.fit_window));
    v.check(corr.abs() >= 0.9, format!("|r| = {:.4} >= 0.9", corr.abs()));
    println!(
        "criterion 09 note: cosine-only dictionary rate {:?} vs standard {rate:.4}",
        r.fitted_rate_alt
    );

    let same = mixing_experiment(&ua, &ua, m, steps, &spec, &cfg, master).unwrap();
    let max_same = same.distances.iter().copied().fold(0.0, f64::max);
    v.check(
        max_same <= 3.0 * floor,
        format!("identical data: max distance {max_same:.4} <= 3 x 2/sqrt(M)"),
    );
    v.finish();
}

/// Exact `∫₀¹ f g` for two Haar basis functions given as (level, shift,
/// scale); the box is encoded as `None`.
fn haar_inner(a: (Option<(u32, u64)>, f64), b: (Option<(u32, u64)>, f64)) -> f64 {
    // Piecewise-constant pieces `(left, right, value)`.
    let pieces = |f: (Option<(u32, u64)>, f64)| -> Vec<(f64, f64, f64)> {
        match f.0 {
            None => vec![(0.0, 1.0, f.1)],
            Some((j, l)) => {
                let w = (-(j as f64)).exp2();
                let x = l as f64 * w;
                vec![(x, x + w / 2.0, f.1), (x + w / 2.0, x + w, -f.1)]
            }
        }
    };
    let mut s = 0.0;
    for (l1, r1, v1) in pieces(a) {
        for (l2, r2, v2) in pieces(b) {
            let overlap = r1.min(r2) - l1.max(l2);
            if overlap > 0.0 {
                s += overlap * v1 * v2;
            }
        }
    }
    s
}

#[test]
fn criterion_10_haar() {
    let mut v = Verdict::new(10, "Haar machinery", 30);
    let level = 6;
    let basis = orthonormal_time_basis(level);
    let desc: Vec<(Option<(u32, u64)>, f64)> = basis
        .iter()
        .map(|(e, vals)| match e {
            TimeBasisElement::Box => (None, vals[0]),
            TimeBasisElement::Wavelet { j, l } => (Some((*j, *l)), vals.iter().fold(0.0, |m: f64, x| m.max(*x))),
        })
        .collect();
    let mut ortho: f64 = 0.0;
    for (i, a) in desc.iter().enumerate() {
        for (k, b) in desc.iter().enumerate() {
            let want = if i == k { 1.0 } else { 0.0 };
            ortho = ortho.max((haar_inner(*a, *b) - want).abs());
        }
    }
    v.check(
        ortho <= 4.0 * f64::EPSILON && desc.len() == 1 << (level + 1),
        format!("{} functions to level {level}: max |<h_a,h_b> - delta| = {ortho:.1e}", desc.len()),
    );

    let spec = NoiseSpec::default();
    let per_mode = 2 * ((1 << (spec.level_max + 1)) - 2);
    let (mut sup_ok, mut mean_err) = (true, 0.0f64);
    for draw in 0..1000u64 {
        let record = SeedRecord::new(10, Purpose::Noise, draw, 0);
        let path = sample_noise_path_seeded(&spec, record);
        // The box coefficient is drawn first for each mode; the wavelet
        // fluctuations must average to zero, leaving it as the path mean.
        let mut rng = record.rng();
        for i in 0..spec.modes.len() {
            let xi0 = c(sample_xi(spec.rho, &mut rng), sample_xi(spec.rho, &mut rng));
            for _ in 0..per_mode {
                sample_xi(spec.rho, &mut rng);
            }
            sup_ok &= path.sup_norm(i) <= spec.path_bound();
            mean_err = mean_err.max((path.mean(i) - xi0).norm());
        }
    }
    v.check(sup_ok, format!("sup-norm bound {:.4} holds on 1000 draws", spec.path_bound()));
    v.check(mean_err <= 1e-12, format!("fluctuation mean {mean_err:.1e} <= 1e-12 on 1000 draws"));

    let grid = Grid::new(32, 10).unwrap();
    let cfg = bump_config(grid, 1.0 / 128.0);
    let ua = random_state(grid, 2.0, 1.0, 3, 0);
    let ub = random_state(grid, 2.0, 1.0, 3, 1);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| mixing_experiment(&ua, &ub, 24, 3, &spec, &cfg, 99).unwrap())
    };
    let (r1, r4) = (run(1), run(4));
    let bitwise = r1.distances.iter().zip(&r4.distances).all(|(a, b)| a.to_bits() == b.to_bits());
    let paths_equal = sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 2, 3))
        == sample_noise_path_seeded(&spec, SeedRecord::new(1, Purpose::Noise, 2, 3));
    v.check(bitwise && paths_equal, "ensemble distances bit-identical with 1 and 4 workers".into());
    v.finish();
}
