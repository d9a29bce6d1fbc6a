//! Continuum objects: strip Poisson kernel, gauged universal-cover hitting
//! density, sech-series annulus determinants, the COE hitting law, the disc
//! Green's function and the boundary harmonic function 𝔥.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::principal;
use crate::linalg::det_dense;
use crate::stats::{ks_critical, ks_statistic, ks_two_sample};

/// Numerically stable `sech`.
pub fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

fn check_r(r: f64) -> Result<f64> {
    if r > 0.0 && r < 1.0 {
        Ok(-r.ln())
    } else {
        Err(Error::InvalidInput(format!("inner radius must lie in (0, 1), got {r}")))
    }
}

/// Poisson kernel of the strip of height `|log r|` with Neumann bottom and
/// Dirichlet top, from `x1` on the bottom to `x2` on the top.
pub fn strip_poisson_kernel(r: f64, x1: f64, x2: f64) -> Result<f64> {
    let l = check_r(r)?;
    Ok(sech(PI * (x2 - x1) / (2.0 * l)) / (2.0 * l))
}

/// Same kernel from an interior point at height `y ∈ [0, L)` above the
/// Neumann line, by reflection into the Dirichlet strip of height `2L`.
fn strip_kernel_interior(l: f64, dx: f64, y: f64) -> f64 {
    let h = 2.0 * l;
    let phi = PI * (y + l) / h;
    let s = sech(PI * dx / h);
    let c = phi.cos();
    phi.sin() * s / (1.0 - c * c * s * s) / h
}

/// Truncated gauged sum over the copies `w_m` of an outer point in the
/// universal cover, with a bound on the omitted terms.
#[derive(Clone, Copy, Debug)]
pub struct HunivValue {
    pub value: Complex64,
    pub tail_bound: f64,
}

/// Tolerance on the omitted tail of [`huniv_beta`].
pub const HUNIV_TAIL_TOL: f64 = 1e-10;

/// `Σ_{|m| ≤ M} e^{imβ} H(p⁻¹(x), p⁻¹(w_m))` for `x` at angle `arg_x` and
/// radius `rad_x ∈ [r, 1)`, `w` at angle `arg_w` on the unit circle. Copy
/// `w_m` sits at angle `arg_w + 2πm`, i.e. `m` extra counterclockwise turns.
pub fn huniv_beta(r: f64, beta: f64, arg_x: f64, rad_x: f64, arg_w: f64, m_truncation: usize) -> Result<HunivValue> {
    let l = check_r(r)?;
    if m_truncation < 1 {
        return Err(Error::InvalidInput("truncation must be at least 1".into()));
    }
    if !(rad_x >= r && rad_x < 1.0) {
        return Err(Error::InvalidInput(format!("radial position {rad_x} outside [r, 1)")));
    }
    let y = (rad_x / r).ln();
    // reduce so that the m = 0 copy is the nearest one
    let d0 = arg_w - arg_x;
    let shift = ((d0 + PI) / (2.0 * PI)).floor();
    let d = d0 - 2.0 * PI * shift;
    let m_max = m_truncation as i64;
    let mut value = Complex64::new(0.0, 0.0);
    for m in -m_max..=m_max {
        let k = strip_kernel_interior(l, d + 2.0 * PI * m as f64, y);
        value += Complex64::from_polar(k, (m as f64 + shift) * beta);
    }
    // for |u| >= 1: kernel <= coth(1) sech-like bound 2 e^{-|u|} / ((1 - e^{-2}) h)
    let h = 2.0 * l;
    let u_min = PI * (2.0 * PI * (m_max + 1) as f64 - PI) / h;
    let tail_bound = if u_min >= 1.0 {
        let q = (-2.0 * PI * PI / h).exp();
        let c = (1.0f64).tanh().recip() * 2.0 / (1.0 - (-2.0f64).exp()) / h;
        2.0 * c * (-u_min).exp() / (1.0 - q)
    } else {
        f64::INFINITY
    };
    if tail_bound > HUNIV_TAIL_TOL {
        return Err(Error::TailBound { bound: tail_bound, tol: HUNIV_TAIL_TOL });
    }
    Ok(HunivValue { value, tail_bound })
}

/// Continuum annulus `A_r` with marked points on both boundaries.
#[derive(Clone, Debug)]
pub struct MarkedAnnulus {
    r: f64,
    inner_args: Vec<f64>,
    outer_args: Vec<f64>,
}

fn strictly_ccw(args: &[f64]) -> bool {
    let n = args.len();
    if n <= 1 {
        return true;
    }
    let mut total = 0.0;
    for i in 0..n {
        let d = (args[(i + 1) % n] - args[i]).rem_euclid(2.0 * PI);
        if d <= 0.0 {
            return false;
        }
        total += d;
    }
    (total - 2.0 * PI).abs() < 1e-9
}

impl MarkedAnnulus {
    pub fn new(r: f64, inner_args: Vec<f64>, outer_args: Vec<f64>) -> Result<Self> {
        check_r(r)?;
        if inner_args.is_empty() || inner_args.len() != outer_args.len() {
            return Err(Error::InvalidInput("need equally many (and at least one) inner and outer points".into()));
        }
        if !strictly_ccw(&inner_args) || !strictly_ccw(&outer_args) {
            return Err(Error::InvalidInput("marked angles must be strictly counterclockwise".into()));
        }
        Ok(Self { r, inner_args, outer_args })
    }

    pub fn n(&self) -> usize {
        self.inner_args.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(r, self.inner_args.clone(), self.outer_args.clone())
    }

    /// `c = Σ arg x_j − Σ arg v_j` with principal arguments.
    pub fn c(&self) -> f64 {
        self.inner_args.iter().map(|&a| principal(a)).sum::<f64>() - self.outer_args.iter().map(|&a| principal(a)).sum::<f64>()
    }

    /// `Π sin((arg x_j − arg x_i)/2) · Π sin((arg v_j − arg v_i)/2)`.
    pub fn upsilon(&self) -> f64 {
        let part = |a: &[f64]| {
            let mut p = 1.0;
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    p *= ((principal(a[j]) - principal(a[i])) / 2.0).sin();
                }
            }
            p
        };
        part(&self.inner_args) * part(&self.outer_args)
    }
}

/// Default k-window `(lo, hi)` for [`annulus_det_series`].
pub fn default_k_window(n: usize, beta: f64, r: f64) -> (i64, i64) {
    let l = -r.ln();
    let half = (n as i64 + 4).max((28.0 / l).ceil() as i64);
    let nb = beta.round() as i64;
    (nb - half, nb + half)
}

fn next_combination(c: &mut [i64], hi: i64) -> bool {
    let n = c.len();
    for i in (0..n).rev() {
        let limit = hi - (n - 1 - i) as i64;
        if c[i] < limit {
            c[i] += 1;
            for j in i + 1..n {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Relative size above which terms touching the window edge are an error.
pub const WINDOW_EDGE_TOL: f64 = 1e-10;

/// Sech-series continuum determinant
/// `(2π)⁻ⁿ Σ_{k_1<…<k_n} det(e^{i(β−k_i) arg x_j}) det(e^{−i(β−k_i) arg v_j}) Π sech(|log r|(β−k_i))`.
/// Here `β` is in turns (the lattice angle is `2πβ`).
pub fn annulus_det_series(marked: &MarkedAnnulus, beta: f64, k_range: Option<(i64, i64)>) -> Result<Complex64> {
    let n = marked.n();
    let l = -marked.r.ln();
    let (lo, hi) = k_range.unwrap_or_else(|| default_k_window(n, beta, marked.r));
    if hi - lo + 1 < n as i64 {
        return Err(Error::InvalidInput("k window narrower than n".into()));
    }
    let mut c: Vec<i64> = (0..n as i64).map(|i| lo + i).collect();
    let mut total = Complex64::new(0.0, 0.0);
    let mut edge = 0.0f64;
    let (mut a, mut b) = (vec![Complex64::new(0.0, 0.0); n * n], vec![Complex64::new(0.0, 0.0); n * n]);
    loop {
        for (i, &k) in c.iter().enumerate() {
            let f = beta - k as f64;
            for j in 0..n {
                a[i * n + j] = Complex64::from_polar(1.0, f * marked.inner_args[j]);
                b[i * n + j] = Complex64::from_polar(1.0, -f * marked.outer_args[j]);
            }
        }
        let w: f64 = c.iter().map(|&k| sech(l * (beta - k as f64))).product();
        let term = det_dense(n, &a) * det_dense(n, &b) * w;
        total += term;
        if c[0] == lo || c[n - 1] == hi {
            edge = edge.max(term.norm());
        }
        if !next_combination(&mut c, hi) {
            break;
        }
    }
    total /= (2.0 * PI).powi(n as i32);
    let edge = edge / (2.0 * PI).powi(n as i32);
    if edge > WINDOW_EDGE_TOL * total.norm() {
        return Err(Error::InvalidInput(format!(
            "k window ({lo}, {hi}) too small: edge terms {edge:e} vs total {:e}",
            total.norm()
        )));
    }
    Ok(total)
}

/// Continuum `Λ_0[L*] − Λ_π[L*]` for an annulus of radius ratio `ρ` with
/// reflecting inner and absorbing outer boundary:
/// `L/4 − log 2 + 2 Σ_{j odd} log(1 + e^{−jL}) − 2 Σ_{j even ≥ 2} log(1 + e^{−jL})`, `L = log ρ`.
///
/// Mode by mode on the flat cylinder the determinant is `cosh(|k + s| L)`;
/// the linear parts sum (zeta-regularised) to `L/4`.
pub fn loop_mass_gap(rho: f64) -> Result<f64> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("radius ratio must exceed 1, got {rho}")));
    }
    let l = rho.ln();
    let mut s = l / 4.0 - std::f64::consts::LN_2;
    for j in 1.. {
        let t = (-(j as f64) * l).exp();
        if t < 1e-18 {
            break;
        }
        let sign = if j % 2 == 1 { 2.0 } else { -2.0 };
        s += sign * t.ln_1p();
    }
    Ok(s)
}

/// The exponentially small part of [`loop_mass_gap`], i.e. without `L/4`.
pub fn loop_mass_gap_correction(rho: f64) -> Result<f64> {
    Ok(loop_mass_gap(rho)? - rho.ln() / 4.0)
}

/// Strong-coupling constants of a flow line.
#[derive(Clone, Copy, Debug)]
pub struct SleConstants {
    pub kappa: f64,
    pub chi: f64,
    pub lambda: f64,
}

impl SleConstants {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
        }
        let s = kappa.sqrt();
        Ok(Self { kappa, chi: 2.0 / s - s / 2.0, lambda: PI / s })
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `∫_a^b f` with `m`-point Gauss–Legendre.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let (x, w) = gauss_legendre(m);
    let (h, c) = ((b - a) / 2.0, (b + a) / 2.0);
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

fn vandermonde_abs(t: &[f64]) -> f64 {
    let mut p = 1.0;
    for j in 0..t.len() {
        for k in j + 1..t.len() {
            p *= 2.0 * ((t[k] - t[j]) / 2.0).sin().abs();
        }
    }
    p
}

fn sector_integral(n: usize, m: usize) -> f64 {
    // θ_1 = 0 by rotation invariance; nested rule over 0 < s_2 < … < s_n < 2π
    let (x, w) = gauss_legendre(m);
    fn rec(level: usize, n: usize, lo: f64, t: &mut Vec<f64>, x: &[f64], w: &[f64]) -> f64 {
        if level == n {
            return vandermonde_abs(t);
        }
        let (h, c) = ((2.0 * PI - lo) / 2.0, (2.0 * PI + lo) / 2.0);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            t.push(c + h * xi);
            s += wi * h * rec(level + 1, n, c + h * xi, t, x, w);
            t.pop();
        }
        s
    }
    2.0 * PI * rec(1, n, 0.0, &mut vec![0.0], &x, &w)
}

/// Normalisation `Z_n` of the COE density on the ordered sector, with an
/// error estimate. Nested Gauss–Legendre for `n ≤ 4`, seeded Monte Carlo
/// above.
pub fn coe_normalization(n: usize) -> (f64, f64) {
    static CACHE: [OnceLock<(f64, f64)>; 13] = [const { OnceLock::new() }; 13];
    let compute = || -> (f64, f64) {
        match n {
            0 | 1 => (2.0 * PI, 0.0),
            2..=4 => {
                let m = [0, 0, 24, 20, 16][n];
                let (a, b) = (sector_integral(n, m), sector_integral(n, 2 * m));
                (b, (a - b).abs())
            }
            _ => {
                let mut rng = crate::rng::stream_rng(0x05ee_dc0e, n as u64);
                let samples = 400_000;
                let mut acc = crate::stats::MeanEstimate::default();
                let mut t = vec![0.0; n];
                for _ in 0..samples {
                    t.iter_mut().for_each(|x| *x = rng.random::<f64>() * 2.0 * PI);
                    acc.push(vandermonde_abs(&t));
                }
                let fact: f64 = (1..n).map(|k| k as f64).product();
                let scale = (2.0 * PI).powi(n as i32) / fact;
                (acc.mean() * scale, acc.stderr() * scale)
            }
        }
    };
    if n < CACHE.len() {
        *CACHE[n].get_or_init(compute)
    } else {
        compute()
    }
}

/// Gaps `(θ_{k+1} − θ_1) mod 2π`, or `None` when not strictly ccw.
fn sector_offsets(thetas: &[f64]) -> Option<Vec<f64>> {
    let d: Vec<f64> = thetas[1..].iter().map(|&t| (t - thetas[0]).rem_euclid(2.0 * PI)).collect();
    if d.iter().any(|&x| x <= 0.0) || d.windows(2).any(|w| w[1] <= w[0]) {
        None
    } else {
        Some(d)
    }
}

/// COE density `Π|e^{iθ_j} − e^{iθ_k}| / Z_n` on the ccw sector, 0 off it.
pub fn coe_density(thetas: &[f64]) -> f64 {
    let n = thetas.len();
    if n == 0 {
        return 0.0;
    }
    if sector_offsets(thetas).is_none() {
        return 0.0;
    }
    vandermonde_abs(thetas) / coe_normalization(n).0
}

pub const COE_SAMPLE_MAX_N: usize = 8;

/// Exact COE sample by rejection against `2^{n(n−1)/2}`, labelled ccw
/// from a uniformly placed first point and lifted so that
/// `θ_1 < θ_2 < … < θ_1 + 2π`, `θ_1 ∈ [0, 2π)`.
pub fn coe_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 || n > COE_SAMPLE_MAX_N {
        return Err(Error::InvalidInput(format!("coe_sample supports 1 <= n <= {COE_SAMPLE_MAX_N}")));
    }
    let envelope = 2f64.powi((n * (n - 1) / 2) as i32);
    let mut t = vec![0.0; n];
    loop {
        t.iter_mut().for_each(|x| *x = rng.random::<f64>() * 2.0 * PI);
        if rng.random::<f64>() * envelope < vandermonde_abs(&t) {
            break;
        }
    }
    let first = t[0];
    let mut rest: Vec<f64> = t[1..].iter().map(|&x| first + (x - first).rem_euclid(2.0 * PI)).collect();
    rest.sort_by(f64::total_cmp);
    let mut out = vec![first];
    out.extend(rest);
    Ok(out)
}

/// CDF of the gap `θ_2 − θ_1` under the n = 2 COE law, by quadrature of
/// `2π · 2 sin(s/2) / Z_2`.
pub fn coe_gap_cdf_n2(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 2.0 * PI {
        return 1.0;
    }
    let z = coe_normalization(2).0;
    integrate(|t| 2.0 * PI * 2.0 * (t / 2.0).sin() / z, 0.0, s, 24)
}

/// `G_D(z, w) = −log|(z − w)/(1 − z̄w)|`.
pub fn disc_green(z: Complex64, w: Complex64) -> Result<f64> {
    if z.norm() >= 1.0 || w.norm() >= 1.0 {
        return Err(Error::InvalidInput("points must lie in the open unit disc".into()));
    }
    if z == w {
        return Err(Error::InvalidInput("Green's function is singular at z = w".into()));
    }
    Ok(-((z - w) / (Complex64::new(1.0, 0.0) - z.conj() * w)).norm().ln())
}

/// `arg((e^{iθ} − w)/(1 − w̄ e^{iθ}))` on the branch continuous in the disc
/// that equals `θ` at `w = 0`: `θ + 2 arg(1 − w e^{−iθ})`.
pub fn mobius_arg(theta: f64, w: Complex64) -> f64 {
    theta + 2.0 * (Complex64::new(1.0, 0.0) - w * Complex64::from_polar(1.0, -theta)).arg()
}

/// `𝔥(w) = −(1/√κ) Σ arg((e^{iθ_j} − w)/(1 − w̄ e^{iθ_j}))` with `θ_j`
/// taken in `[−π, π)`; the branch cut stays outside the disc.
pub fn frak_h(thetas: &[f64], kappa: f64, w: Complex64) -> Result<f64> {
    if w.norm() >= 1.0 {
        return Err(Error::InvalidInput("w must lie in the open unit disc".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput("kappa must be positive".into()));
    }
    Ok(frak_h_lifted(thetas.iter().map(|&t| principal(t)), kappa, w))
}

/// 𝔥 with caller-chosen (lifted) angles.
pub fn frak_h_lifted(thetas: impl IntoIterator<Item = f64>, kappa: f64, w: Complex64) -> f64 {
    -thetas.into_iter().map(|t| mobius_arg(t, w)).sum::<f64>() / kappa.sqrt()
}

/// Outcome of a goodness-of-fit test of hitting angles against the COE.
#[derive(Clone, Copy, Debug)]
pub struct GofResult {
    pub ks: f64,
    /// 1% critical value.
    pub critical: f64,
    pub pass: bool,
}

pub const GOF_MIN_SAMPLES: usize = 500;

/// Rotation-invariant coordinate of one sample: the ccw gap from the first
/// to the second point (the angle itself when n = 1).
pub fn first_gap(thetas: &[f64]) -> f64 {
    if thetas.len() == 1 {
        thetas[0].rem_euclid(2.0 * PI)
    } else {
        (thetas[1] - thetas[0]).rem_euclid(2.0 * PI)
    }
}

/// KS test of sampled hitting angles against the COE gap law: exact
/// quadrature CDF for n ≤ 2, a two-sample test against a fresh COE
/// reference ensemble (same size) for n ≥ 3.
pub fn hitting_gof_test<R: Rng + ?Sized>(angle_samples: &[Vec<f64>], n: usize, rng: &mut R) -> Result<GofResult> {
    if angle_samples.len() < GOF_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!("need at least {GOF_MIN_SAMPLES} samples, got {}", angle_samples.len())));
    }
    if angle_samples.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidInput(format!("every sample must have {n} angles")));
    }
    let gaps: Vec<f64> = angle_samples.iter().map(|s| first_gap(s)).collect();
    let (ks, critical) = match n {
        1 => (ks_statistic(&gaps, |s| s / (2.0 * PI)), ks_critical(0.01, gaps.len(), None)),
        2 => (ks_statistic(&gaps, coe_gap_cdf_n2), ks_critical(0.01, gaps.len(), None)),
        _ => {
            let reference = (0..gaps.len()).map(|_| coe_sample(n, rng).map(|t| first_gap(&t))).collect::<Result<Vec<_>>>()?;
            (ks_two_sample(&gaps, &reference), ks_critical(0.01, gaps.len(), Some(reference.len())))
        }
    };
    Ok(GofResult { ks, critical, pass: ks < critical })
}
