//! Gauged hitting kernels, Fomin determinants, loop-mass ratios and the
//! exact winding characteristic function.
//!
//! Everything reduces to the Hermitian positive definite system
//! `M_β = D − A_β` over non-absorbed vertices, where `A_β[u][w]` is the
//! phase of the step `u → w`. Since `det(I − Q_β) = det M_β / det D`, ratios of
//! loop masses only need `log det M_β`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{AnnularLattice, VertexKind, Zipper};
use crate::linalg::{conjugate_gradient, det_dense, BandedCholesky, BandedHermitian, Scalar};

/// Unit-modulus phase per directed edge: `exp(iβ · crossing_sign)`.
#[derive(Clone, Debug)]
pub struct GaugeField {
    beta: f64,
    phase: Vec<Complex64>,
    real: bool,
}

impl GaugeField {
    pub fn new(lattice: &AnnularLattice, zipper: &Zipper, beta: f64) -> Self {
        let real = beta.sin().abs() < 1e-14;
        let phase = (0..lattice.num_directed_edges())
            .map(|p| match zipper.sign_at(p) {
                0 => Complex64::new(1.0, 0.0),
                s if real => Complex64::new((beta * f64::from(s)).cos().round(), 0.0),
                s => Complex64::from_polar(1.0, beta * f64::from(s)),
            })
            .collect();
        Self { beta, phase, real }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn phase(&self, pos: usize) -> Complex64 {
        self.phase[pos]
    }

    /// True when all phases are ±1 (β ≡ 0 or π).
    pub fn is_real(&self) -> bool {
        self.real
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Max-norm residual accepted for every solve.
    pub tol: f64,
    /// Above this many unknowns, solves switch to conjugate gradients.
    pub direct_limit: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, direct_limit: 50_000, max_iter: 200_000 }
    }
}

fn bandwidth(lattice: &AnnularLattice) -> usize {
    let mut bw = 0;
    for &u in lattice.free_vertices() {
        let i = lattice.free_index(u);
        for &w in lattice.neighbors(u) {
            if !lattice.is_outer(w) {
                bw = bw.max(i.abs_diff(lattice.free_index(w)));
            }
        }
    }
    bw
}

fn assemble<T: Scalar>(lattice: &AnnularLattice, gauge: &GaugeField, conv: impl Fn(Complex64) -> T) -> BandedHermitian<T> {
    let free = lattice.free_vertices();
    let mut m = BandedHermitian::zeros(free.len(), bandwidth(lattice));
    for (i, &u) in free.iter().enumerate() {
        m.set(i, i, T::from_real(lattice.degree(u) as f64));
        let off = lattice.edge_offset(u);
        for (k, &w) in lattice.neighbors(u).iter().enumerate() {
            let j = lattice.free_index(w);
            if !lattice.is_outer(w) && j < i {
                m.set(i, j, -conv(gauge.phase(off + k)));
            }
        }
    }
    m
}

fn apply_system(lattice: &AnnularLattice, gauge: &GaugeField, x: &[Complex64], y: &mut [Complex64]) {
    for (i, &u) in lattice.free_vertices().iter().enumerate() {
        let mut s = x[i] * lattice.degree(u) as f64;
        let off = lattice.edge_offset(u);
        for (k, &w) in lattice.neighbors(u).iter().enumerate() {
            if !lattice.is_outer(w) {
                s -= gauge.phase(off + k) * x[lattice.free_index(w)];
            }
        }
        y[i] = s;
    }
}

/// `log det(D − A_β)`, from one banded Cholesky factorization.
pub fn log_det_system(lattice: &AnnularLattice, zipper: &Zipper, beta: f64) -> Result<f64> {
    let gauge = GaugeField::new(lattice, zipper, beta);
    if gauge.is_real() {
        Ok(assemble(lattice, &gauge, |c| c.re).cholesky()?.log_det())
    } else {
        Ok(assemble(lattice, &gauge, |c| c).cholesky()?.log_det())
    }
}

enum Factor {
    Direct(BandedCholesky<Complex64>),
    Iterative,
}

/// Factorised (or matrix-free) gauged system, reused across right-hand sides.
pub struct GaugedSystem<'a> {
    lattice: &'a AnnularLattice,
    gauge: GaugeField,
    factor: Factor,
    opts: SolverOptions,
}

impl<'a> GaugedSystem<'a> {
    pub fn new(lattice: &'a AnnularLattice, zipper: &Zipper, beta: f64, opts: SolverOptions) -> Result<Self> {
        let gauge = GaugeField::new(lattice, zipper, beta);
        let factor = if lattice.free_vertices().len() <= opts.direct_limit {
            Factor::Direct(assemble(lattice, &gauge, |c| c).cholesky()?)
        } else {
            Factor::Iterative
        };
        Ok(Self { lattice, gauge, factor, opts })
    }

    /// Solves `M_β x = b` and verifies the residual.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let x = match &self.factor {
            Factor::Direct(f) => f.solve(b),
            Factor::Iterative => {
                let diag: Vec<f64> = self.lattice.free_vertices().iter().map(|&u| self.lattice.degree(u) as f64).collect();
                conjugate_gradient(
                    |x, y| apply_system(self.lattice, &self.gauge, x, y),
                    &diag,
                    b,
                    self.opts.tol * 0.1,
                    self.opts.max_iter,
                )?
            }
        };
        let mut r = vec![Complex64::new(0.0, 0.0); b.len()];
        apply_system(self.lattice, &self.gauge, &x, &mut r);
        let residual = r.iter().zip(b).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        if residual > self.opts.tol {
            return Err(Error::NoConvergence { residual, iterations: 0 });
        }
        Ok(x)
    }

    /// Hitting kernel `h_β(·, target)` on every vertex.
    pub fn hitting_kernel(&self, target: usize) -> Result<HittingKernel> {
        let l = self.lattice;
        if target >= l.num_vertices() || !l.is_outer(target) {
            return Err(Error::InvalidInput(format!("target {target} is not an outer-boundary vertex")));
        }
        let mut b = vec![Complex64::new(0.0, 0.0); l.free_vertices().len()];
        for (i, &u) in l.free_vertices().iter().enumerate() {
            let off = l.edge_offset(u);
            for (k, &w) in l.neighbors(u).iter().enumerate() {
                if w == target {
                    b[i] += self.gauge.phase(off + k);
                }
            }
        }
        let x = self.solve(&b)?;
        let mut values = vec![Complex64::new(0.0, 0.0); l.num_vertices()];
        values[target] = Complex64::new(1.0, 0.0);
        for (i, &u) in l.free_vertices().iter().enumerate() {
            values[u] = x[i];
        }
        Ok(HittingKernel { target, beta: self.gauge.beta(), values })
    }
}

/// `h_β(x, v)` for a fixed outer target `v`, indexed by vertex.
#[derive(Clone, Debug)]
pub struct HittingKernel {
    pub target: usize,
    pub beta: f64,
    pub values: Vec<Complex64>,
}

impl HittingKernel {
    pub fn value(&self, v: usize) -> Complex64 {
        self.values[v]
    }
}

pub fn hitting_kernel(lattice: &AnnularLattice, zipper: &Zipper, beta: f64, target: usize) -> Result<HittingKernel> {
    GaugedSystem::new(lattice, zipper, beta, SolverOptions::default())?.hitting_kernel(target)
}

/// True if the angles are in counterclockwise cyclic order.
pub fn is_ccw_cyclic(angles: &[f64]) -> bool {
    let n = angles.len();
    if n <= 2 {
        return true;
    }
    let descents = (0..n).filter(|&i| angles[(i + 1) % n] <= angles[i]).count();
    descents <= 1
}

fn check_points(lattice: &AnnularLattice, pts: &[usize], kind: VertexKind, what: &str) -> Result<()> {
    for (i, &p) in pts.iter().enumerate() {
        if p >= lattice.num_vertices() || lattice.kind(p) != kind {
            return Err(Error::InvalidInput(format!("{what}[{i}] is not on the {kind:?} boundary")));
        }
        if pts[..i].contains(&p) {
            return Err(Error::InvalidInput(format!("{what} has repeated point {:?}", lattice.site(p))));
        }
    }
    let angles: Vec<f64> = pts.iter().map(|&p| lattice.angle(p)).collect();
    if !is_ccw_cyclic(&angles) {
        return Err(Error::InvalidInput(format!("{what} must be in counterclockwise order")));
    }
    Ok(())
}

pub(crate) fn validate_marked(lattice: &AnnularLattice, xs: &[usize], vs: &[usize]) -> Result<()> {
    if xs.is_empty() || xs.len() != vs.len() {
        return Err(Error::InvalidInput("need equally many (and at least one) inner and outer points".into()));
    }
    check_points(lattice, xs, VertexKind::Inner, "xs")?;
    check_points(lattice, vs, VertexKind::Outer, "vs")
}

fn fomin_with(system: &GaugedSystem<'_>, xs: &[usize], vs: &[usize]) -> Result<Complex64> {
    let n = xs.len();
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for (j, &v) in vs.iter().enumerate() {
        let h = system.hitting_kernel(v)?;
        for (i, &x) in xs.iter().enumerate() {
            m[i * n + j] = h.value(x);
        }
    }
    Ok(det_dense(n, &m))
}

/// `det(h_β(x_i, v_j))`.
pub fn fomin_determinant(lattice: &AnnularLattice, zipper: &Zipper, beta: f64, xs: &[usize], vs: &[usize]) -> Result<Complex64> {
    validate_marked(lattice, xs, vs)?;
    fomin_with(&GaugedSystem::new(lattice, zipper, beta, SolverOptions::default())?, xs, vs)
}

/// `exp(Λ_{β1} − Λ_{β2}) = det(I − Q_{β2}) / det(I − Q_{β1})` (real positive).
pub fn loop_mass_ratio(lattice: &AnnularLattice, zipper: &Zipper, beta1: f64, beta2: f64) -> Result<Complex64> {
    let l1 = log_det_system(lattice, zipper, beta1)?;
    let l2 = if (beta1 - beta2).rem_euclid(2.0 * PI) == 0.0 { l1 } else { log_det_system(lattice, zipper, beta2)? };
    Ok(Complex64::new((l2 - l1).exp(), 0.0))
}

/// Sign of the permutation sorting `keys` increasingly.
fn sort_sign(keys: &[f64]) -> f64 {
    let mut inv = 0;
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            if keys[i] > keys[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Exact conditional characteristic function of the total crossing number
/// together with the probability of the conditioning event.
#[derive(Clone, Copy, Debug)]
pub struct ExactWinding {
    pub cf: Complex64,
    pub probability: f64,
}

pub fn winding_exact(lattice: &AnnularLattice, zipper: &Zipper, beta: f64, xs: &[usize], vs: &[usize]) -> Result<ExactWinding> {
    validate_marked(lattice, xs, vs)?;
    let opts = SolverOptions::default();
    let det_at = |b: f64| -> Result<Complex64> { fomin_with(&GaugedSystem::new(lattice, zipper, b, opts)?, xs, vs) };
    let (cf, probability) = if xs.len() % 2 == 1 {
        let h0 = det_at(0.0)?;
        if h0.re <= 0.0 {
            return Err(Error::EmptyEvent);
        }
        let hb = if beta.rem_euclid(2.0 * PI) == 0.0 { h0 } else { det_at(beta)? };
        (loop_mass_ratio(lattice, zipper, 0.0, beta)? * hb / h0, h0.re)
    } else {
        let hp = det_at(PI)?;
        let hbp = if beta.rem_euclid(2.0 * PI) == 0.0 { hp } else { det_at(beta + PI)? };
        // the even-n identity holds for labels starting just after the zipper
        let eps = sort_sign(&xs.iter().map(|&x| zipper.inner_key(lattice, x)).collect::<Vec<_>>())
            * sort_sign(&vs.iter().map(|&v| zipper.outer_key(lattice, v)).collect::<Vec<_>>());
        let p = eps * loop_mass_ratio(lattice, zipper, 0.0, PI)?.re * hp.re;
        if p <= 0.0 {
            return Err(Error::EmptyEvent);
        }
        (loop_mass_ratio(lattice, zipper, PI, beta + PI)? * hbp / hp, p)
    };
    Ok(ExactWinding { cf, probability })
}

pub fn winding_cf_exact(lattice: &AnnularLattice, zipper: &Zipper, beta: f64, xs: &[usize], vs: &[usize]) -> Result<Complex64> {
    Ok(winding_exact(lattice, zipper, beta, xs, vs)?.cf)
}

/// `P[E_{x,v}]`: the branches from `xs` are disjoint and end at `vs`.
pub fn event_probability_exact(lattice: &AnnularLattice, zipper: &Zipper, xs: &[usize], vs: &[usize]) -> Result<f64> {
    Ok(winding_exact(lattice, zipper, 0.0, xs, vs)?.probability)
}

/// Expected number of visits to `w` by a walk from `z` before absorption:
/// entry `(z, w)` of `(I − Q_0)⁻¹`.
pub fn green_nd(lattice: &AnnularLattice, z: usize, w: usize) -> Result<f64> {
    for p in [z, w] {
        if p >= lattice.num_vertices() || lattice.is_outer(p) {
            return Err(Error::InvalidInput("Green's function arguments must be non-absorbed vertices".into()));
        }
    }
    let zipper = Zipper::default_ray(lattice);
    let sys = GaugedSystem::new(lattice, &zipper, 0.0, SolverOptions::default())?;
    let mut b = vec![Complex64::new(0.0, 0.0); lattice.free_vertices().len()];
    b[lattice.free_index(w)] = Complex64::new(lattice.degree(w) as f64, 0.0);
    Ok(sys.solve(&b)?[lattice.free_index(z)].re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> (AnnularLattice, Zipper) {
        let l = AnnularLattice::square_annulus(2, 0).unwrap();
        let z = Zipper::default_ray(&l);
        (l, z)
    }

    #[test]
    fn boundary_values_and_total_mass() {
        let (l, z) = oracle();
        let outer = l.outer_boundary();
        let h = hitting_kernel(&l, &z, 0.9, outer[3]).unwrap();
        assert_eq!(h.value(outer[3]), Complex64::new(1.0, 0.0));
        assert_eq!(h.value(outer[4]), Complex64::new(0.0, 0.0));
        let mut total = vec![0.0; l.num_vertices()];
        for &v in &outer {
            let h = hitting_kernel(&l, &z, 0.0, v).unwrap();
            for (t, x) in total.iter_mut().zip(&h.values) {
                assert!(x.im == 0.0 && x.re >= 0.0 && x.re <= 1.0);
                *t += x.re;
            }
        }
        for &u in l.free_vertices() {
            assert!((total[u] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loop_ratio_basics() {
        let (l, z) = oracle();
        assert!((loop_mass_ratio(&l, &z, 0.4, 0.4).unwrap() - 1.0).norm() < 1e-14);
        assert!((loop_mass_ratio(&l, &z, 0.4 + 2.0 * PI, 0.4).unwrap() - 1.0).norm() < 1e-12);
        // noncontractible loops make the untwisted determinant smallest
        assert!(loop_mass_ratio(&l, &z, 0.0, PI).unwrap().re > 1.0);
    }

    #[test]
    fn fomin_antisymmetry_and_n1() {
        let (l, z) = oracle();
        let xs = [l.vertex((0, 1)).unwrap(), l.vertex((0, -1)).unwrap()];
        let vs = [l.vertex((-2, 1)).unwrap(), l.vertex((2, -1)).unwrap()];
        let d = fomin_determinant(&l, &z, 0.7, &xs, &vs).unwrap();
        let swapped = fomin_determinant(&l, &z, 0.7, &[xs[1], xs[0]], &vs).unwrap();
        assert!((d + swapped).norm() < 1e-13);
        let one = fomin_determinant(&l, &z, 0.7, &xs[..1], &vs[..1]).unwrap();
        let h = hitting_kernel(&l, &z, 0.7, vs[0]).unwrap();
        assert!((one - h.value(xs[0])).norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_points() {
        let (l, z) = oracle();
        let x = l.vertex((1, 0)).unwrap();
        let v = l.vertex((2, 0)).unwrap();
        assert!(fomin_determinant(&l, &z, 0.0, &[x, x], &[v, l.vertex((-2, 0)).unwrap()]).is_err());
        assert!(fomin_determinant(&l, &z, 0.0, &[v], &[x]).is_err());
        assert!(hitting_kernel(&l, &z, 0.0, x).is_err());
    }

    #[test]
    fn cf_trivial_properties() {
        let (l, z) = oracle();
        let xs = [l.vertex((1, 0)).unwrap(), l.vertex((-1, 0)).unwrap()];
        let vs = [l.vertex((1, 2)).unwrap(), l.vertex((-2, -1)).unwrap()];
        let c0 = winding_cf_exact(&l, &z, 0.0, &xs, &vs).unwrap();
        assert!((c0 - 1.0).norm() < 1e-12);
        for b in [0.3, 1.1, 2.5, PI] {
            let c = winding_cf_exact(&l, &z, b, &xs, &vs).unwrap();
            let cm = winding_cf_exact(&l, &z, -b, &xs, &vs).unwrap();
            assert!(c.norm() <= 1.0 + 1e-12);
            assert!((c - cm.conj()).norm() < 1e-12);
            let cp = winding_cf_exact(&l, &z, b + 2.0 * PI, &xs, &vs).unwrap();
            assert!((c - cp).norm() < 1e-10);
        }
    }

    #[test]
    fn green_function_basics() {
        // a spike whose middle vertex has all four neighbours absorbed
        let mut sites: Vec<_> = (-3..=3).flat_map(|x| (-3..=3).map(move |y| (x, y))).filter(|&s| s != (0, 0)).collect();
        sites.extend([(4, 0), (5, 0), (5, 1), (5, -1), (6, 0)]);
        let spike = AnnularLattice::from_sites(sites, 1.0 / 6.0).unwrap();
        let c = spike.vertex((5, 0)).unwrap();
        assert!(spike.neighbors(c).iter().all(|&w| spike.is_outer(w)));
        assert!((green_nd(&spike, c, c).unwrap() - 1.0).abs() < 1e-14);

        let l = AnnularLattice::square_annulus(3, 0).unwrap();
        let (a, b) = (l.vertex((1, 0)).unwrap(), l.vertex((2, 1)).unwrap());
        let gab = green_nd(&l, a, b).unwrap();
        let gba = green_nd(&l, b, a).unwrap();
        assert!((gab * l.degree(a) as f64 - gba * l.degree(b) as f64).abs() < 1e-12);
        assert!(green_nd(&l, a, l.vertex((3, 0)).unwrap()).is_err());
    }

    #[test]
    fn ccw_cyclic() {
        assert!(is_ccw_cyclic(&[0.1, 1.0, 3.0]));
        assert!(is_ccw_cyclic(&[3.0, -2.0, 0.1]));
        assert!(!is_ccw_cyclic(&[0.1, 3.0, 1.0]));
    }
}
