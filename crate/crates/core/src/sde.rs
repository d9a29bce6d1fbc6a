//! Circular Dyson Brownian motion, SLE_κ(ρ) drivers, the radial Loewner
//! flow with several driving points, traces, and the flow-line martingale
//! check.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::continuum::{coe_sample, disc_green, mobius_arg};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::MeanEstimate;

const TWO_PI: f64 = 2.0 * PI;
/// Gaps below this are treated as a collision.
pub const GAP_COLLAPSE: f64 = 1e-9;
const MAX_REFINE_DEPTH: u32 = 48;

/// Lifts ccw-ordered angles so that `θ_1 < θ_2 < … < θ_n < θ_1 + 2π`.
pub fn lift_ccw(thetas: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(thetas.len());
    for (i, &t) in thetas.iter().enumerate() {
        if i == 0 {
            out.push(t);
        } else {
            let prev = out[i - 1];
            out.push(prev + (t - prev).rem_euclid(TWO_PI));
        }
    }
    if thetas.len() > 1 && !is_ordered(&out) {
        return Err(Error::InvalidInput("angles must be distinct and in counterclockwise order".into()));
    }
    Ok(out)
}

fn is_ordered(t: &[f64]) -> bool {
    min_gap(t) > 0.0
}

/// Smallest cyclic gap of lifted angles (`+∞` for one angle).
fn min_gap(t: &[f64]) -> f64 {
    let n = t.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mut g = t[0] + TWO_PI - t[n - 1];
    for w in t.windows(2) {
        g = g.min(w[1] - w[0]);
    }
    g
}

fn check_dt(dt: f64, t_end: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= 1e-3) {
        return Err(Error::InvalidInput(format!("dt must lie in (0, 1e-3], got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end must be finite and nonnegative, got {t_end}")));
    }
    Ok(())
}

fn grid(t_end: f64, dt: f64) -> Vec<f64> {
    let m = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    (0..=m).map(|k| if k == m { t_end } else { k as f64 * dt }).collect()
}

/// Anything that supplies driving angles on a time grid.
pub trait Driving {
    fn times(&self) -> &[f64];
    /// Driving angles in effect on `[t_k, t_{k+1})`.
    fn drivers(&self, k: usize) -> &[f64];
}

/// Sampled Dyson path on a uniform grid.
#[derive(Clone, Debug)]
pub struct DysonPath {
    pub times: Vec<f64>,
    /// `thetas[k * n + j]`
    pub thetas: Vec<f64>,
    pub n: usize,
    pub kappa: f64,
    pub b: f64,
}

impl DysonPath {
    pub fn at(&self, k: usize) -> &[f64] {
        &self.thetas[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.times.len() - 1)
    }
}

impl Driving for DysonPath {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn drivers(&self, k: usize) -> &[f64] {
        self.at(k)
    }
}

fn dbm_drift(t: &[f64], b: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let n = t.len();
    for i in 0..n {
        for j in i + 1..n {
            let c = b / ((t[i] - t[j]) / 2.0).tan();
            out[i] += c;
            out[j] -= c;
        }
    }
}

/// Scratch space for Dyson steps.
struct DbmStepper {
    sk: f64,
    b: f64,
    drift: Vec<f64>,
    new: Vec<f64>,
    dw: Vec<f64>,
}

impl DbmStepper {
    fn new(n: usize, kappa: f64, b: f64) -> Self {
        Self { sk: kappa.sqrt(), b, drift: vec![0.0; n], new: vec![0.0; n], dw: vec![0.0; n] }
    }

    /// One Euler–Maruyama step; on an ordering violation the Brownian
    /// increment is split by a bridge and the halves are taken separately.
    fn substep<R: Rng + ?Sized>(&mut self, t: &mut [f64], h: f64, dw: &[f64], depth: u32, rng: &mut R) -> Result<()> {
        dbm_drift(t, self.b, &mut self.drift);
        for i in 0..t.len() {
            self.new[i] = t[i] + self.sk * dw[i] + self.drift[i] * h;
        }
        if min_gap(&self.new) > GAP_COLLAPSE {
            t.copy_from_slice(&self.new);
            return Ok(());
        }
        if depth >= MAX_REFINE_DEPTH || min_gap(t) < GAP_COLLAPSE {
            return Err(Error::Integrator(format!("Dyson gap collapsed (min gap {:e})", min_gap(t))));
        }
        let s = (h / 4.0).sqrt();
        let dw1: Vec<f64> = dw.iter().map(|&d| d / 2.0 + s * rng.sample::<f64, _>(StandardNormal)).collect();
        let dw2: Vec<f64> = dw.iter().zip(&dw1).map(|(d, d1)| d - d1).collect();
        self.substep(t, h / 2.0, &dw1, depth + 1, rng)?;
        self.substep(t, h / 2.0, &dw2, depth + 1, rng)
    }

    /// Advances lifted angles over `[0, span]` with steps capped at
    /// `(min gap)²/(8b)`.
    fn advance<R: Rng + ?Sized>(&mut self, t: &mut [f64], span: f64, rng: &mut R) -> Result<()> {
        let n = t.len();
        let mut left = span;
        let spread = n > 1 && self.b > 0.0;
        while left > 0.0 {
            let h = if spread { left.min(min_gap(t).powi(2) / (8.0 * self.b)) } else { left };
            if h < 1e-18 {
                return Err(Error::Integrator(format!("Dyson step underflow (min gap {:e})", min_gap(t))));
            }
            let s = h.sqrt();
            let mut dw = std::mem::take(&mut self.dw);
            dw.iter_mut().for_each(|d| *d = s * rng.sample::<f64, _>(StandardNormal));
            let r = self.substep(t, h, &dw, 0, rng);
            self.dw = dw;
            r?;
            left -= h;
            if left < 1e-15 * span {
                break;
            }
        }
        Ok(())
    }
}

fn check_dbm(n: usize, kappa: f64, b: f64, thetas0: &[f64]) -> Result<Vec<f64>> {
    if n == 0 || thetas0.len() != n {
        return Err(Error::InvalidInput(format!("need n = {n} >= 1 starting angles, got {}", thetas0.len())));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) || !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidInput("kappa and b must be finite and nonnegative".into()));
    }
    lift_ccw(thetas0)
}

/// `dΘ_i = √κ dW_i + b Σ_{j≠i} cot((Θ_i − Θ_j)/2) dt`, recorded on the grid
/// `0, dt, 2dt, …, t_end`.
pub fn simulate_dbm<R: Rng + ?Sized>(
    n: usize,
    kappa: f64,
    b: f64,
    thetas0: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<DysonPath> {
    check_dt(dt, t_end)?;
    let mut t = check_dbm(n, kappa, b, thetas0)?;
    let times = grid(t_end, dt);
    let mut thetas = Vec::with_capacity(times.len() * n);
    thetas.extend_from_slice(&t);
    let mut st = DbmStepper::new(n, kappa, b);
    for w in times.windows(2) {
        st.advance(&mut t, w[1] - w[0], rng)?;
        thetas.extend_from_slice(&t);
    }
    Ok(DysonPath { times, thetas, n, kappa, b })
}

/// Final lifted angles only, stepping on the same grid as [`simulate_dbm`].
pub fn dbm_endpoint<R: Rng + ?Sized>(
    kappa: f64,
    b: f64,
    thetas0: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dt(dt, t_end)?;
    let mut t = check_dbm(thetas0.len(), kappa, b, thetas0)?;
    let times = grid(t_end, dt);
    let mut st = DbmStepper::new(t.len(), kappa, b);
    for w in times.windows(2) {
        st.advance(&mut t, w[1] - w[0], rng)?;
    }
    Ok(t)
}

/// Equally spaced angles `2πj/n`.
pub fn equally_spaced(n: usize) -> Vec<f64> {
    (0..n).map(|j| TWO_PI * j as f64 / n as f64).collect()
}

/// COE start, then [`simulate_dbm`] with `b = 2`.
///
/// The invariant law of the process is the circular ensemble with
/// `β = 4b/κ`, so the COE is stationary only at `κ = 8`; for `κ = 2` the
/// gaps relax toward `∏ sin⁴`.
pub fn dbm_with_coe_start<R: Rng + ?Sized>(n: usize, kappa: f64, t_end: f64, dt: f64, rng: &mut R) -> Result<DysonPath> {
    let start = coe_sample(n, rng)?;
    simulate_dbm(n, kappa, 2.0, &start, t_end, dt, rng)
}

/// Increments `Θ(t_end) − Θ(0)` of `paths` independent Dyson paths, path
/// `i` on stream `i` of `seed`.
pub fn dbm_increments(
    kappa: f64,
    b: f64,
    thetas0: &[f64],
    t_end: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let start = check_dbm(thetas0.len(), kappa, b, thetas0)?;
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let end = dbm_endpoint(kappa, b, &start, t_end, dt, &mut rng)?;
            Ok(end.iter().zip(&start).map(|(a, s)| a - s).collect())
        })
        .collect()
}

/// Driver and force points of an SLE_κ(ρ) process.
#[derive(Clone, Debug)]
pub struct SleRhoPath {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// `force[k * m + j]`, lifted into `(Θ, Θ + 2π)`
    pub force: Vec<f64>,
    pub rhos: Vec<f64>,
    pub kappa: f64,
}

impl SleRhoPath {
    pub fn force_at(&self, k: usize) -> &[f64] {
        let m = self.rhos.len();
        &self.force[k * m..(k + 1) * m]
    }
}

impl Driving for SleRhoPath {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn drivers(&self, k: usize) -> &[f64] {
        &self.theta[k..k + 1]
    }
}

/// Lifted driver/force-point state.
#[derive(Clone, Debug)]
struct SleRhoState {
    theta: f64,
    v: Vec<f64>,
}

impl SleRhoState {
    fn new(theta0: f64, force: &[f64]) -> Result<Self> {
        let v: Vec<f64> = force.iter().map(|&a| theta0 + (a - theta0).rem_euclid(TWO_PI)).collect();
        let s = Self { theta: theta0, v };
        if !(s.min_gap() > GAP_COLLAPSE) {
            return Err(Error::InvalidInput("force points must be distinct from the driver".into()));
        }
        Ok(s)
    }

    fn ok(&self) -> bool {
        self.v.iter().all(|&v| v > self.theta && v < self.theta + TWO_PI)
    }

    fn min_gap(&self) -> f64 {
        self.v.iter().map(|&v| (v - self.theta).min(self.theta + TWO_PI - v)).fold(f64::INFINITY, f64::min)
    }

    fn drift_scale(rhos: &[f64]) -> f64 {
        1.0 + rhos.iter().fold(0.0f64, |m, r| m.max(r.abs() / 2.0))
    }

    /// Euler step with driver increment `dw`; the force points use the
    /// pre-step driver.
    fn euler(&self, h: f64, dw: f64, kappa: f64, rhos: &[f64]) -> Self {
        let mut dtheta = kappa.sqrt() * dw;
        let mut v = self.v.clone();
        for (j, vj) in v.iter_mut().enumerate() {
            let c = 1.0 / ((self.v[j] - self.theta) / 2.0).tan();
            dtheta -= rhos[j] / 2.0 * c * h;
            *vj += c * h;
        }
        Self { theta: self.theta + dtheta, v }
    }

    fn substep<R: Rng + ?Sized>(&mut self, h: f64, dw: f64, kappa: f64, rhos: &[f64], depth: u32, rng: &mut R) -> Result<()> {
        let new = self.euler(h, dw, kappa, rhos);
        if new.ok() {
            *self = new;
            return Ok(());
        }
        if depth >= MAX_REFINE_DEPTH || self.min_gap() < GAP_COLLAPSE {
            return Err(Error::Integrator(format!("driver hit a force point (gap {:e})", self.min_gap())));
        }
        let d1 = dw / 2.0 + (h / 4.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
        self.substep(h / 2.0, d1, kappa, rhos, depth + 1, rng)?;
        self.substep(h / 2.0, dw - d1, kappa, rhos, depth + 1, rng)
    }

    fn step_cap(&self, rhos: &[f64]) -> f64 {
        if self.v.is_empty() {
            f64::INFINITY
        } else {
            self.min_gap().powi(2) / (8.0 * Self::drift_scale(rhos))
        }
    }
}

/// `dΘ = √κ dW − Σ (ρ_j/2) cot((V_j − Θ)/2) dt`, `dV_j = cot((V_j − Θ)/2) dt`.
pub fn sle_rho_driver<R: Rng + ?Sized>(
    kappa: f64,
    rhos: &[f64],
    theta0: f64,
    force_args: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<SleRhoPath> {
    check_dt(dt, t_end)?;
    if rhos.len() != force_args.len() {
        return Err(Error::InvalidInput("one weight per force point".into()));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput("kappa must be finite and nonnegative".into()));
    }
    let mut s = SleRhoState::new(theta0, force_args)?;
    let times = grid(t_end, dt);
    let mut theta = vec![s.theta];
    let mut force = s.v.clone();
    for w in times.windows(2) {
        let mut left = w[1] - w[0];
        while left > 0.0 {
            let h = left.min(s.step_cap(rhos));
            if h < 1e-18 {
                return Err(Error::Integrator("driver step underflow".into()));
            }
            let dw = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
            s.substep(h, dw, kappa, rhos, 0, rng)?;
            left -= h;
            if left < 1e-15 {
                break;
            }
        }
        theta.push(s.theta);
        force.extend_from_slice(&s.v);
    }
    Ok(SleRhoPath { times, theta, force, rhos: rhos.to_vec(), kappa })
}

/// Radial Loewner vector field `g Σ (u+g)/(u−g)`, its `log g` and
/// `log g′` companions, and the distance to the nearest driver.
#[derive(Clone, Copy, Debug)]
struct FlowRhs {
    dlog_g: Complex64,
    dlog_gp: Complex64,
}

fn flow_rhs(us: &[Complex64], g: Complex64) -> FlowRhs {
    let mut dlog_g = Complex64::new(0.0, 0.0);
    let mut dlog_gp = Complex64::new(0.0, 0.0);
    for &u in us {
        let d = u - g;
        dlog_g += (u + g) / d;
        dlog_gp += 2.0 * u * u / (d * d) - 1.0;
    }
    FlowRhs { dlog_g, dlog_gp }
}

fn driver_distance(us: &[Complex64], g: Complex64) -> f64 {
    us.iter().map(|&u| (u - g).norm()).fold(f64::INFINITY, f64::min)
}

/// State of one flowed point: `log g` (absent for the origin) and `log g′`.
#[derive(Clone, Copy, Debug)]
struct PointState {
    log_g: Option<Complex64>,
    log_gp: Complex64,
}

impl PointState {
    fn new(z: Complex64) -> Self {
        Self { log_g: (z.norm() > 0.0).then(|| z.ln()), log_gp: Complex64::new(0.0, 0.0) }
    }

    fn g(&self) -> Complex64 {
        self.log_g.map_or(Complex64::new(0.0, 0.0), |l| l.exp())
    }

    fn deriv(&self, us: &[Complex64], log_g: Option<Complex64>) -> (Complex64, Complex64) {
        let g = log_g.map_or(Complex64::new(0.0, 0.0), |l| l.exp());
        let r = flow_rhs(us, g);
        (if log_g.is_some() { r.dlog_g } else { Complex64::new(0.0, 0.0) }, r.dlog_gp)
    }

    /// RK4 step of size `h` (negative for the reverse flow) with frozen drivers.
    fn rk4(&self, us: &[Complex64], h: f64) -> Self {
        let add = |l: Option<Complex64>, k: Complex64, s: f64| l.map(|l| l + k * s);
        let (a1, b1) = self.deriv(us, self.log_g);
        let (a2, b2) = self.deriv(us, add(self.log_g, a1, h / 2.0));
        let (a3, b3) = self.deriv(us, add(self.log_g, a2, h / 2.0));
        let (a4, b4) = self.deriv(us, add(self.log_g, a3, h));
        Self {
            log_g: add(self.log_g, a1 + 2.0 * a2 + 2.0 * a3 + a4, h / 6.0),
            log_gp: self.log_gp + (b1 + 2.0 * b2 + 2.0 * b3 + b4) * (h / 6.0),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoewnerOptions {
    /// Distance to a driving point at which a point counts as swallowed.
    pub cutoff: f64,
    /// Step control: `h ≤ step_factor · d² / n_drivers`.
    pub step_factor: f64,
    pub min_step: f64,
}

impl Default for LoewnerOptions {
    fn default() -> Self {
        Self { cutoff: 1e-3, step_factor: 0.02, min_step: 1e-16 }
    }
}

/// Flowed values `g_t(z)` on the driving grid, truncated at swallowing.
#[derive(Clone, Debug)]
pub struct FlowedPoint {
    pub z: Complex64,
    pub g: Vec<Complex64>,
    /// `log g_t′(z)` with a continuous imaginary part.
    pub log_derivative: Vec<Complex64>,
    /// Continuous `arg g_t(z)` (`None` for the origin).
    pub arg: Vec<Option<f64>>,
    pub swallowed_at: Option<f64>,
}

fn advance_point(
    p: &mut PointState,
    us: &[Complex64],
    span: f64,
    opts: &LoewnerOptions,
) -> Result<bool> {
    let mut left = span;
    while left > 0.0 {
        let d = driver_distance(us, p.g());
        if d < opts.cutoff {
            return Ok(false);
        }
        let h = left.min(opts.step_factor * d * d / us.len() as f64);
        if h < opts.min_step {
            return Err(Error::Integrator(format!("Loewner step underflow at distance {d:e}")));
        }
        *p = p.rk4(us, h);
        left -= h;
        if left < 1e-15 * span {
            break;
        }
    }
    Ok(driver_distance(us, p.g()) >= opts.cutoff)
}

fn unit_drivers(angles: &[f64]) -> Vec<Complex64> {
    angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()
}

/// Integrates `∂_t g = g Σ_j (e^{iΘ_j}+g)/(e^{iΘ_j}−g)` for each query
/// point with the drivers held constant on each grid interval.
pub fn loewner_flow<D: Driving + ?Sized>(driving: &D, points: &[Complex64], opts: LoewnerOptions) -> Result<Vec<FlowedPoint>> {
    let times = driving.times();
    let mut out = Vec::with_capacity(points.len());
    for &z in points {
        if z.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("query point {z} outside the closed disc")));
        }
        let us0 = unit_drivers(driving.drivers(0));
        if driver_distance(&us0, z) < opts.cutoff {
            return Err(Error::InvalidInput(format!("query point {z} sits on a driving point")));
        }
        let mut p = PointState::new(z);
        let mut fp = FlowedPoint {
            z,
            g: vec![z],
            log_derivative: vec![p.log_gp],
            arg: vec![p.log_g.map(|l| l.im)],
            swallowed_at: None,
        };
        for k in 0..times.len().saturating_sub(1) {
            let us = unit_drivers(driving.drivers(k));
            if !advance_point(&mut p, &us, times[k + 1] - times[k], &opts)? {
                fp.swallowed_at = Some(times[k + 1]);
                break;
            }
            fp.g.push(p.g());
            fp.log_derivative.push(p.log_gp);
            fp.arg.push(p.log_g.map(|l| l.im));
        }
        out.push(fp);
    }
    Ok(out)
}

/// Approximate traces: curve `j` at grid time `t_s` is the backward flow of
/// `e^{iΘ_j(t_s)}(1 − eps)` from `t_s` to 0. One polyline per curve, one
/// point per `stride` grid steps.
pub fn trace_points<D: Driving + ?Sized>(driving: &D, stride: usize, eps: f64) -> Result<Vec<Vec<Complex64>>> {
    if stride == 0 || !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidInput("stride must be positive and eps in (0, 1/2)".into()));
    }
    let times = driving.times();
    let n = driving.drivers(0).len();
    let opts = LoewnerOptions::default();
    let mut lines = vec![Vec::new(); n];
    for s in (0..times.len()).step_by(stride) {
        for (j, line) in lines.iter_mut().enumerate() {
            let mut w = Complex64::from_polar(1.0 - eps, driving.drivers(s)[j]);
            for k in (0..s).rev() {
                let us = unit_drivers(driving.drivers(k));
                let span = times[k + 1] - times[k];
                let mut left = span;
                while left > 0.0 {
                    let d = driver_distance(&us, w).max(1e-300);
                    let h = left.min(opts.step_factor * d * d / n as f64);
                    if h < opts.min_step {
                        return Err(Error::Integrator(format!("trace step underflow at distance {d:e}")));
                    }
                    w = rk4_point(&us, w, -h);
                    left -= h;
                    if left < 1e-15 * span {
                        break;
                    }
                }
            }
            line.push(w);
        }
    }
    Ok(lines)
}

fn rk4_point(us: &[Complex64], g: Complex64, h: f64) -> Complex64 {
    let f = |g: Complex64| us.iter().map(|&u| g * (u + g) / (u - g)).sum::<Complex64>();
    let k1 = f(g);
    let k2 = f(g + k1 * (h / 2.0));
    let k3 = f(g + k2 * (h / 2.0));
    let k4 = f(g + k3 * h);
    g + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
}

/// Normalised winding samples and their covariance.
#[derive(Clone, Debug)]
pub struct WindingSummary {
    pub n: usize,
    pub kappa: f64,
    pub t_end: f64,
    /// `(Θ_j(t) − Θ_j(0)) / √(κt/n)` per path.
    pub samples: Vec<Vec<f64>>,
    pub covariance: Vec<f64>,
}

pub const WINDING_MIN_T: f64 = 20.0;

/// Sample covariance matrix (row-major) of equal-length vectors.
pub fn covariance(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.first().map_or(0, |s| s.len());
    let m = samples.len() as f64;
    let mean: Vec<f64> = (0..n).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / m).collect();
    let mut c = vec![0.0; n * n];
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    c.iter_mut().for_each(|x| *x /= m - 1.0);
    c
}

/// Driving-function winding proxy for `n` curves started equally spaced.
pub fn sle_winding_experiment(n: usize, kappa: f64, t_end: f64, dt: f64, paths: usize, seed: u64) -> Result<WindingSummary> {
    if t_end < WINDING_MIN_T {
        return Err(Error::InvalidInput(format!("t_end must be at least {WINDING_MIN_T}")));
    }
    if !(kappa > 0.0) || paths < 2 {
        return Err(Error::InvalidInput("kappa must be positive and paths at least 2".into()));
    }
    let inc = dbm_increments(kappa, 2.0, &equally_spaced(n), t_end, dt, paths, seed)?;
    Ok(winding_summary(n, kappa, t_end, &inc))
}

/// Normalises raw increments by `√(κt/n)`.
pub fn winding_summary(n: usize, kappa: f64, t_end: f64, increments: &[Vec<f64>]) -> WindingSummary {
    let scale = (kappa * t_end / n as f64).sqrt();
    let samples: Vec<Vec<f64>> = increments.iter().map(|v| v.iter().map(|x| x / scale).collect()).collect();
    let covariance = covariance(&samples);
    WindingSummary { n, kappa, t_end, samples, covariance }
}

/// Result of the flow-line martingale check.
#[derive(Clone, Debug)]
pub struct GffCheck {
    pub paths: usize,
    /// Paths stopped before `t_end` because a point came close to the driver.
    pub stopped_early: usize,
    pub mean_drift: f64,
    pub drift_stderr: f64,
    pub mean_cross_variation: f64,
    pub mean_green_drop: f64,
    /// `|mean QV − mean ΔG| / mean ΔG`
    pub qv_mismatch: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GffOptions {
    /// Stop a path once a flowed point is this close to the driver.
    pub stop_distance: f64,
}

impl Default for GffOptions {
    fn default() -> Self {
        Self { stop_distance: 0.05 }
    }
}

struct GffPath {
    dh: f64,
    qv: f64,
    dg: f64,
    stopped: bool,
}

/// `H = (χ + n/√κ) arg g_t(z) + 𝔥_{Θ,V}(g_t(z)) − χ arg g_t′(z)`, with the
/// driver an SLE_κ(2,…,2) whose `n − 1` force points start equally spaced.
#[allow(clippy::too_many_arguments)]
pub fn gff_martingale_check(
    kappa: f64,
    n: usize,
    z: Complex64,
    w: Complex64,
    t_end: f64,
    dt: f64,
    paths: usize,
    seed: u64,
    opts: GffOptions,
) -> Result<GffCheck> {
    check_dt(dt, t_end)?;
    if !(kappa > 0.0) || n == 0 || paths < 2 {
        return Err(Error::InvalidInput("kappa must be positive, n and paths at least 1 and 2".into()));
    }
    if (z - w).norm() < 0.1 {
        return Err(Error::InvalidInput("z and w must be at least 0.1 apart".into()));
    }
    disc_green(z, w)?;
    let start = equally_spaced(n);
    for p in [z, w] {
        if 1.0 - p.norm() < 0.1 {
            return Err(Error::InvalidInput(format!("{p} too close to the boundary")));
        }
    }
    let res: Vec<GffPath> = (0..paths)
        .into_par_iter()
        .map(|i| gff_path(kappa, n, &start, z, w, t_end, dt, &opts, &mut stream_rng(seed, i as u64)))
        .collect::<Result<_>>()?;
    let (mut dh, mut qv, mut dg) = (MeanEstimate::default(), MeanEstimate::default(), MeanEstimate::default());
    for r in &res {
        dh.push(r.dh);
        qv.push(r.qv);
        dg.push(r.dg);
    }
    Ok(GffCheck {
        paths,
        stopped_early: res.iter().filter(|r| r.stopped).count(),
        mean_drift: dh.mean(),
        drift_stderr: dh.stderr(),
        mean_cross_variation: qv.mean(),
        mean_green_drop: dg.mean(),
        qv_mismatch: (qv.mean() - dg.mean()).abs() / dg.mean().abs(),
    })
}

#[allow(clippy::too_many_arguments)]
fn gff_path<R: Rng + ?Sized>(
    kappa: f64,
    n: usize,
    start: &[f64],
    z: Complex64,
    w: Complex64,
    t_end: f64,
    dt: f64,
    opts: &GffOptions,
    rng: &mut R,
) -> Result<GffPath> {
    let sk = kappa.sqrt();
    let chi = 2.0 / sk - sk / 2.0;
    let rhos = vec![2.0; n - 1];
    let mut s = SleRhoState::new(start[0], &start[1..])?;
    let (mut pz, mut pw) = (PointState::new(z), PointState::new(w));
    let frak = |s: &SleRhoState, p: &PointState| -> f64 {
        let g = p.g();
        -(mobius_arg(s.theta, g) + s.v.iter().map(|&v| mobius_arg(v, g)).sum::<f64>()) / sk
    };
    let arg = |p: &PointState| p.log_g.map_or(0.0, |l| l.im);
    let h_of = |s: &SleRhoState, p: &PointState| (chi + n as f64 / sk) * arg(p) + frak(s, p) - chi * p.log_gp.im;
    let h0 = h_of(&s, &pz);
    let (mut fz, mut fw) = (frak(&s, &pz), frak(&s, &pw));
    let mut qv = 0.0;
    let mut stopped = false;
    let times = grid(t_end, dt);
    'outer: for win in times.windows(2) {
        let mut left = win[1] - win[0];
        let prev = (s.theta, arg(&pz), arg(&pw));
        while left > 0.0 {
            let u = [Complex64::from_polar(1.0, s.theta)];
            let d = driver_distance(&u, pz.g()).min(driver_distance(&u, pw.g()));
            if d < opts.stop_distance {
                stopped = true;
                break 'outer;
            }
            let h = left.min(s.step_cap(&rhos)).min(0.02 * d * d);
            if h < 1e-16 {
                return Err(Error::Integrator("step underflow in the martingale check".into()));
            }
            let dw = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
            pz = pz.rk4(&u, h);
            pw = pw.rk4(&u, h);
            s.substep(h, dw, kappa, &rhos, 0, rng)?;
            left -= h;
            if left < 1e-15 {
                break;
            }
        }
        if (s.theta - prev.0).abs() > PI / 2.0 || (arg(&pz) - prev.1).abs() > PI / 2.0 || (arg(&pw) - prev.2).abs() > PI / 2.0 {
            return Err(Error::Integrator("lifted angle jumped by more than π/2 in one step".into()));
        }
        let (nz, nw) = (frak(&s, &pz), frak(&s, &pw));
        qv += (nz - fz) * (nw - fw);
        fz = nz;
        fw = nw;
    }
    let dg = disc_green(z, w)? - disc_green(pz.g(), pw.g())?;
    Ok(GffPath { dh: h_of(&s, &pz) - h0, qv, dg, stopped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::ks_statistic;

    #[test]
    fn lift_checks_order() {
        assert_eq!(lift_ccw(&[0.5, -3.0, -1.0]).unwrap(), vec![0.5, 2.0 * PI - 3.0, 2.0 * PI - 1.0]);
        assert!(lift_ccw(&[0.5, 0.5]).is_err());
        assert!(lift_ccw(&[0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn dbm_input_checks() {
        let mut rng = seeded(1);
        assert!(simulate_dbm(2, 2.0, 2.0, &[0.0, 1.0], 1.0, 1e-2, &mut rng).is_err());
        assert!(simulate_dbm(2, 2.0, 2.0, &[0.0], 1.0, 1e-3, &mut rng).is_err());
        assert!(simulate_dbm(3, 2.0, 2.0, &[0.0, 3.0, 1.0], 1.0, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn dbm_path_shape_and_order() {
        let mut rng = seeded(2);
        let p = simulate_dbm(4, 2.0, 2.0, &equally_spaced(4), 0.5, 1e-3, &mut rng).unwrap();
        assert_eq!(p.times.len(), 501);
        assert!((p.times[500] - 0.5).abs() < 1e-15);
        for k in 0..p.times.len() {
            assert!(is_ordered(p.at(k)));
        }
        // lifts are continuous
        for k in 1..p.times.len() {
            assert!(p.at(k).iter().zip(p.at(k - 1)).all(|(a, b)| (a - b).abs() < 0.5));
        }
    }

    #[test]
    fn single_angle_is_brownian() {
        let inc = dbm_increments(2.0, 2.0, &[0.3], 1.0, 1e-3, 40_000, 9).unwrap();
        let x: Vec<f64> = inc.iter().map(|v| v[0]).collect();
        let var = MeanEstimate::from_slice(&x).variance();
        assert!((var - 2.0).abs() < 0.05, "{var}");
        let z: Vec<f64> = x.iter().map(|v| v / 2f64.sqrt()).collect();
        let cdf = |t: f64| 0.5 * (1.0 + statrs::function::erf::erf(t / 2f64.sqrt()));
        assert!(ks_statistic(&z, cdf) < 0.03);
    }

    #[test]
    fn sum_of_angles_has_no_drift() {
        // pairwise cot terms cancel in the sum
        let mut rng = seeded(4);
        let p = simulate_dbm(3, 0.0, 2.0, &[0.0, 0.3, 2.0], 0.2, 1e-3, &mut rng).unwrap();
        let s0: f64 = p.at(0).iter().sum();
        let s1: f64 = p.last().iter().sum();
        assert!((s0 - s1).abs() < 1e-9);
        // and the gaps have spread out
        assert!(min_gap(p.last()) > 0.3);
    }

    #[test]
    fn coe_start_stays_ordered() {
        let mut rng = seeded(5);
        for _ in 0..50 {
            let p = dbm_with_coe_start(3, 2.0, 0.1, 1e-3, &mut rng).unwrap();
            assert!((0..p.times.len()).all(|k| is_ordered(p.at(k))));
        }
    }

    fn rk4_sle_ode(rhos: &[f64], theta: f64, v: &[f64], t_end: f64, steps: usize) -> (f64, Vec<f64>) {
        let f = |y: &[f64]| -> Vec<f64> {
            let mut d = vec![0.0; y.len()];
            for j in 1..y.len() {
                let c = 1.0 / ((y[j] - y[0]) / 2.0).tan();
                d[0] -= rhos[j - 1] / 2.0 * c;
                d[j] = c;
            }
            d
        };
        let mut y: Vec<f64> = std::iter::once(theta).chain(v.iter().copied()).collect();
        let h = t_end / steps as f64;
        for _ in 0..steps {
            let k1 = f(&y);
            let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + h / 2.0 * k).collect();
            let k2 = f(&y2);
            let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + h / 2.0 * k).collect();
            let k3 = f(&y3);
            let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
            let k4 = f(&y4);
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        (y[0], y[1..].to_vec())
    }

    #[test]
    fn zero_kappa_matches_ode() {
        let rhos = [2.0, 1.0];
        let v0 = [1.0, 4.0];
        let mut rng = seeded(6);
        let p = sle_rho_driver(0.0, &rhos, 0.2, &v0, 0.05, 1e-7, &mut rng).unwrap();
        let (th, v) = rk4_sle_ode(&rhos, 0.2, &v0, 0.05, 2000);
        let k = p.times.len() - 1;
        assert!((p.theta[k] - th).abs() < 1e-6, "{} {th}", p.theta[k]);
        for (f, v) in p.force_at(k).iter().zip(&v) {
            assert!((f - v).abs() < 1e-6);
        }
    }

    #[test]
    fn force_points_are_not_hit() {
        for i in 0..200u64 {
            let mut rng = stream_rng(7, i);
            let p = sle_rho_driver(2.0, &[2.0, 2.0], 0.0, &[2.0, 4.0], 1.0, 1e-3, &mut rng).unwrap();
            for k in 0..p.times.len() {
                assert!(p.force_at(k).iter().all(|&v| v > p.theta[k] && v < p.theta[k] + TWO_PI));
            }
        }
        let mut rng = seeded(8);
        assert!(sle_rho_driver(2.0, &[2.0], 1.0, &[1.0], 1.0, 1e-3, &mut rng).is_err());
        // no force points: plain Brownian driver
        let p = sle_rho_driver(2.0, &[], 0.0, &[], 0.5, 1e-3, &mut rng).unwrap();
        assert_eq!(p.theta.len(), 501);
    }

    #[test]
    fn loewner_capacity_and_symmetry() {
        let mut rng = seeded(10);
        let p = simulate_dbm(3, 2.0, 2.0, &equally_spaced(3), 0.3, 1e-3, &mut rng).unwrap();
        let f = loewner_flow(&p, &[Complex64::new(0.0, 0.0), Complex64::new(0.2, 0.1)], LoewnerOptions::default()).unwrap();
        assert!(f[0].g.iter().all(|g| g.norm() == 0.0));
        let last = *f[0].log_derivative.last().unwrap();
        assert!((last.re - 3.0 * 0.3).abs() < 1e-6 && last.im.abs() < 1e-12);
        // points move outward
        if f[1].swallowed_at.is_none() {
            assert!(f[1].g.windows(2).all(|w| w[1].norm() >= w[0].norm() - 1e-12));
        }

        let c = simulate_dbm(1, 0.0, 2.0, &[0.4], 1.0, 1e-3, &mut rng).unwrap();
        let z = Complex64::from_polar(1.0, 0.4 + PI);
        let f = loewner_flow(&c, &[z], LoewnerOptions::default()).unwrap();
        assert!(f[0].g.iter().all(|g| (g.norm() - 1.0).abs() < 1e-9));
        assert!(f[0].g.iter().all(|g| (g.arg() - (0.4 + PI - TWO_PI)).abs() < 1e-9));
        assert!(loewner_flow(&c, &[Complex64::new(1.5, 0.0)], LoewnerOptions::default()).is_err());
    }

    #[test]
    fn points_near_the_driver_get_swallowed() {
        let mut rng = seeded(11);
        let c = simulate_dbm(1, 0.0, 2.0, &[0.0], 1.0, 1e-3, &mut rng).unwrap();
        let f = loewner_flow(&c, &[Complex64::new(0.95, 0.0)], LoewnerOptions::default()).unwrap();
        assert!(f[0].swallowed_at.is_some());
    }

    #[test]
    fn straight_slit_trace() {
        let mut rng = seeded(12);
        let c = simulate_dbm(1, 0.0, 2.0, &[0.7], 0.5, 1e-3, &mut rng).unwrap();
        let tr = trace_points(&c, 50, 1e-3).unwrap();
        assert!((tr[0][0] - Complex64::from_polar(1.0 - 1e-3, 0.7)).norm() < 1e-12);
        for w in &tr[0] {
            let dev = (w * Complex64::from_polar(1.0, -0.7)).im.abs();
            assert!(dev < 1e-3);
            assert!(w.norm() < 1.0);
        }
        // the slit grows inward
        assert!(tr[0].windows(2).all(|p| p[1].norm() < p[0].norm()));
    }

    #[test]
    fn traces_of_dyson_curves() {
        let mut rng = seeded(13);
        let p = simulate_dbm(2, 2.0, 2.0, &equally_spaced(2), 0.2, 1e-3, &mut rng).unwrap();
        let tr = trace_points(&p, 40, 1e-3).unwrap();
        assert_eq!(tr.len(), 2);
        for line in &tr {
            assert!((line[0].norm() - (1.0 - 1e-3)).abs() < 1e-12);
            assert!(line.last().unwrap().norm() < 0.99);
        }
    }

    #[test]
    fn winding_experiment_guards() {
        assert!(sle_winding_experiment(2, 2.0, 5.0, 1e-3, 10, 0).is_err());
        let c = covariance(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        assert_eq!(c, vec![2.0, 4.0, 4.0, 8.0]);
    }

    #[test]
    fn gff_check_small_run() {
        let z = Complex64::new(0.3, 0.0);
        let w = Complex64::new(-0.3, 0.0);
        let r = gff_martingale_check(2.0, 2, z, w, 0.1, 2e-4, 400, 14, GffOptions::default()).unwrap();
        assert!(r.mean_drift.abs() < 4.0 * r.drift_stderr + 1e-3, "{r:?}");
        assert!(r.qv_mismatch < 0.15, "{r:?}");
        assert!(gff_martingale_check(2.0, 2, z, z, 0.1, 1e-3, 10, 0, GffOptions::default()).is_err());
    }
}
