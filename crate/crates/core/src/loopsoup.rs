//! Random-walk loop soup with reflecting inner and absorbing outer boundary.
//!
//! Rooted loops at `z` of length `m` have total mass `(Q^m)_{zz}/m`, where
//! `Q = D⁻¹A` is the walk kernel restricted to free vertices. Lengths are
//! truncated at a point where a certified geometric bound on the omitted
//! mass drops below a tolerance.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{AnnularLattice, Zipper};
use crate::rng::stream_rng;
use crate::stats::MeanEstimate;

/// Default tolerance on the omitted intensity mass.
pub const DEFAULT_TAIL_EPS: f64 = 1e-6;
/// Largest truncation length tried when choosing one automatically.
pub const MAX_AUTO_LEN: usize = 50_000;
/// Cap on `N²·(max_len+1)` entries of the cached power table.
pub const POWER_TABLE_CAP: usize = 60_000_000;

/// Sparse walk kernel on free vertices.
struct WalkKernel {
    n: usize,
    inv_deg: Vec<f64>,
    nbrs: Vec<Vec<usize>>,
}

impl WalkKernel {
    fn new(l: &AnnularLattice) -> Self {
        let free = l.free_vertices();
        let inv_deg = free.iter().map(|&u| 1.0 / l.degree(u) as f64).collect();
        let nbrs = free
            .iter()
            .map(|&u| l.neighbors(u).iter().filter(|&&w| !l.is_outer(w)).map(|&w| l.free_index(w)).collect())
            .collect();
        Self { n: free.len(), inv_deg, nbrs }
    }

    /// `Q x` for a vector.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (u, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.nbrs[u].iter().map(|&w| x[w]).sum::<f64>() * self.inv_deg[u];
        }
    }

    /// `‖Q^m‖_∞` for `m = 0..=len`.
    fn row_sum_norms(&self, len: usize) -> Vec<f64> {
        let mut v = vec![1.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut out = Vec::with_capacity(len + 1);
        out.push(1.0);
        for _ in 0..len {
            self.apply(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            out.push(v.iter().cloned().fold(0.0, f64::max));
        }
        out
    }
}

/// Bound on `Σ_{m>M} Σ_z (Q^m)_{zz}/m` from the norms `a_m = ‖Q^m‖_∞`,
/// using `a_{M+j} ≤ a_M · a_P^{⌊j/P⌋}`.
fn tail_bound(n: usize, norms: &[f64]) -> f64 {
    let m = norms.len() - 1;
    let best = (1..=m)
        .filter(|&p| norms[p] < 1.0)
        .map(|p| p as f64 / (1.0 - norms[p]))
        .fold(f64::INFINITY, f64::min);
    n as f64 * norms[m] * best / (m + 1) as f64
}

/// Smallest truncation length whose tail bound is below `eps`.
pub fn auto_max_len(lattice: &AnnularLattice, eps: f64) -> Result<(usize, f64)> {
    let k = WalkKernel::new(lattice);
    let norms = k.row_sum_norms(MAX_AUTO_LEN);
    let mut len = 8;
    loop {
        let b = tail_bound(k.n, &norms[..=len]);
        if b < eps {
            return Ok((len, b));
        }
        if len == MAX_AUTO_LEN {
            return Err(Error::TailBound { bound: b, tol: eps });
        }
        len = (len + len / 4).min(MAX_AUTO_LEN);
    }
}

/// `(Q^m)_{zz}` for every free `z` and `2 ≤ m ≤ max_len`.
#[derive(Clone, Debug)]
pub struct ReturnWeights {
    max_len: usize,
    n: usize,
    /// `values[m * n + free_index(z)]`
    values: Vec<f64>,
    tail_bound: f64,
}

impl ReturnWeights {
    /// `(Q^m)_{zz}` for the lattice vertex `z` (0 on the outer boundary or
    /// beyond the table).
    pub fn get(&self, lattice: &AnnularLattice, z: usize, m: usize) -> f64 {
        if lattice.is_outer(z) || m < 2 || m > self.max_len {
            return 0.0;
        }
        self.values[m * self.n + lattice.free_index(z)]
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Certified bound on the omitted mass `Σ_{m > max_len} Σ_z (Q^m)_{zz}/m`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `Σ_z Σ_m (Q^m)_{zz}/m` over the table.
    pub fn total_mass(&self) -> f64 {
        (2..=self.max_len).map(|m| self.values[m * self.n..(m + 1) * self.n].iter().sum::<f64>() / m as f64).sum()
    }
}

/// Iterates `Q^m` densely, handing each power to `f`.
fn for_each_power(k: &WalkKernel, max_len: usize, mut f: impl FnMut(usize, &[f64])) {
    let n = k.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        p[i * n + i] = 1.0;
    }
    f(0, &p);
    let mut next = vec![0.0; n * n];
    for m in 1..=max_len {
        for u in 0..n {
            let row = &mut next[u * n..(u + 1) * n];
            row.iter_mut().for_each(|x| *x = 0.0);
            for &w in &k.nbrs[u] {
                for (r, &pw) in row.iter_mut().zip(&p[w * n..(w + 1) * n]) {
                    *r += pw;
                }
            }
            row.iter_mut().for_each(|x| *x *= k.inv_deg[u]);
        }
        std::mem::swap(&mut p, &mut next);
        f(m, &p);
    }
}

pub fn diagonal_return_weights(lattice: &AnnularLattice, max_len: usize) -> Result<ReturnWeights> {
    if max_len < 2 {
        return Err(Error::InvalidInput("max_len must be at least 2".into()));
    }
    let k = WalkKernel::new(lattice);
    let n = k.n;
    let mut values = vec![0.0; (max_len + 1) * n];
    for_each_power(&k, max_len, |m, p| {
        for z in 0..n {
            values[m * n + z] = p[z * n + z];
        }
    });
    let tail_bound = tail_bound(n, &k.row_sum_norms(max_len));
    Ok(ReturnWeights { max_len, n, values, tail_bound })
}

/// A rooted lattice loop.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedLoop {
    /// Closed vertex sequence, first = last = root.
    vertices: Vec<usize>,
    winding: i64,
    lifetime: f64,
}

impl RootedLoop {
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn root(&self) -> usize {
        self.vertices[0]
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scaled time `δ²|ℓ|/2`.
    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    /// Signed zipper crossings, i.e. the winding number around the hole.
    pub fn winding(&self) -> i64 {
        self.winding
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoopSoup {
    pub loops: Vec<RootedLoop>,
    pub max_len: usize,
    pub tail_bound: f64,
}

impl LoopSoup {
    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn total_winding(&self) -> i64 {
        self.loops.iter().map(|l| l.winding).sum()
    }

    pub fn odd_winding_count(&self) -> usize {
        self.loops.iter().filter(|l| l.winding % 2 != 0).count()
    }

    pub fn noncontractible_count(&self) -> usize {
        self.loops.iter().filter(|l| l.winding != 0).count()
    }

    /// Loops with at most `m` steps.
    pub fn count_up_to(&self, m: usize) -> usize {
        self.loops.iter().filter(|l| l.len() <= m).count()
    }
}

/// Loop soup sampler with cached powers `Q^k`, `k ≤ max_len`.
pub struct LoopSoupSampler<'a> {
    lattice: &'a AnnularLattice,
    zipper: &'a Zipper,
    kernel: WalkKernel,
    max_len: usize,
    tail_bound: f64,
    /// `powers[k * n² + w * n + z] = (Q^k)_{wz}`
    powers: Vec<f64>,
    /// cumulative intensity over cells `(m, z)` in row-major order
    cumulative: Vec<f64>,
}

impl<'a> LoopSoupSampler<'a> {
    /// Builds the table; `max_len = None` picks the shortest length whose
    /// tail bound is below `eps`.
    pub fn new(lattice: &'a AnnularLattice, zipper: &'a Zipper, max_len: Option<usize>, eps: f64) -> Result<Self> {
        let kernel = WalkKernel::new(lattice);
        let n = kernel.n;
        let (max_len, tail) = match max_len {
            Some(m) if m < 2 => return Err(Error::InvalidInput("max_len must be at least 2".into())),
            Some(m) => (m, tail_bound(n, &kernel.row_sum_norms(m))),
            None => auto_max_len(lattice, eps)?,
        };
        if !(tail < eps) {
            return Err(Error::TailBound { bound: tail, tol: eps });
        }
        if n.saturating_mul(n).saturating_mul(max_len + 1) > POWER_TABLE_CAP {
            return Err(Error::TooLarge(format!("power table with {n} free vertices and max_len {max_len}")));
        }
        let nn = n * n;
        let mut powers = vec![0.0; nn * (max_len + 1)];
        for_each_power(&kernel, max_len, |m, p| powers[m * nn..(m + 1) * nn].copy_from_slice(p));
        let mut cumulative = Vec::with_capacity((max_len - 1) * n);
        let mut acc = 0.0;
        for m in 2..=max_len {
            for z in 0..n {
                acc += powers[m * nn + z * n + z] / m as f64;
                cumulative.push(acc);
            }
        }
        Ok(Self { lattice, zipper, kernel, max_len, tail_bound: tail, powers, cumulative })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Expected number of loops per soup.
    pub fn expected_count(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Expected number of loops with at most `m` steps.
    pub fn expected_count_up_to(&self, m: usize) -> f64 {
        if m < 2 {
            return 0.0;
        }
        let m = m.min(self.max_len);
        self.cumulative[(m - 1) * self.kernel.n - 1]
    }

    #[inline]
    fn power(&self, k: usize, w: usize, z: usize) -> f64 {
        let n = self.kernel.n;
        self.powers[k * n * n + w * n + z]
    }

    /// Bridge of length `m` from free index `z` back to itself.
    fn bridge<R: Rng + ?Sized>(&self, z: usize, m: usize, rng: &mut R) -> Vec<usize> {
        let mut path = Vec::with_capacity(m + 1);
        let mut u = z;
        path.push(z);
        let mut weights = [0.0f64; 4];
        for s in 0..m {
            let rem = m - s - 1;
            let nb = &self.kernel.nbrs[u];
            let mut total = 0.0;
            for (i, &w) in nb.iter().enumerate() {
                weights[i] = self.power(rem, w, z);
                total += weights[i];
            }
            let mut t = rng.random::<f64>() * total;
            let mut pick = nb.len() - 1;
            for (i, &wt) in weights[..nb.len()].iter().enumerate() {
                if t < wt {
                    pick = i;
                    break;
                }
                t -= wt;
            }
            // guard against rounding onto a zero-weight neighbour
            if weights[pick] == 0.0 {
                pick = weights[..nb.len()].iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            u = nb[pick];
            path.push(u);
        }
        path
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LoopSoup> {
        let total = self.expected_count();
        let count = if total > 0.0 {
            Poisson::new(total).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(rng) as usize
        } else {
            0
        };
        let n = self.kernel.n;
        let free = self.lattice.free_vertices();
        let mesh = self.lattice.mesh();
        let mut loops = Vec::with_capacity(count);
        for _ in 0..count {
            let t = rng.random::<f64>() * total;
            let cell = self.cumulative.partition_point(|&c| c <= t).min(self.cumulative.len() - 1);
            let (m, z) = (cell / n + 2, cell % n);
            let vertices: Vec<usize> = self.bridge(z, m, rng).into_iter().map(|i| free[i]).collect();
            let winding = self.zipper.crossing_number(self.lattice, &vertices)?;
            loops.push(RootedLoop { vertices, winding, lifetime: mesh * mesh * m as f64 / 2.0 });
        }
        Ok(LoopSoup { loops, max_len: self.max_len, tail_bound: self.tail_bound })
    }

    /// `count` independent soups, soup `i` drawn from stream `i` of `seed`.
    pub fn sample_many(&self, count: usize, seed: u64) -> Result<Vec<LoopSoup>> {
        (0..count).into_par_iter().map(|i| self.sample(&mut stream_rng(seed, i as u64))).collect()
    }
}

/// One soup with an automatically chosen (or given) truncation length.
pub fn sample_loop_soup<R: Rng + ?Sized>(
    lattice: &AnnularLattice,
    zipper: &Zipper,
    rng: &mut R,
    max_len: Option<usize>,
) -> Result<LoopSoup> {
    LoopSoupSampler::new(lattice, zipper, max_len, DEFAULT_TAIL_EPS)?.sample(rng)
}

#[derive(Clone, Copy, Debug)]
pub struct CampbellEstimate {
    pub mean: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub stderr: (f64, f64),
    pub soups: usize,
}

pub const CAMPBELL_MIN_SOUPS: usize = 100;

/// Monte Carlo mean of `exp(iβ Σ_ℓ winding(ℓ))` over soups.
pub fn campbell_cf_mc(soups: &[LoopSoup], beta: f64) -> Result<CampbellEstimate> {
    if soups.is_empty() {
        return Err(Error::InvalidInput("empty soup sample".into()));
    }
    if soups.len() < CAMPBELL_MIN_SOUPS {
        return Err(Error::InvalidInput(format!("need at least {CAMPBELL_MIN_SOUPS} soups, got {}", soups.len())));
    }
    let (mut re, mut im) = (MeanEstimate::default(), MeanEstimate::default());
    for s in soups {
        let z = Complex64::from_polar(1.0, beta * s.total_winding() as f64);
        re.push(z.re);
        im.push(z.im);
    }
    Ok(CampbellEstimate {
        mean: Complex64::new(re.mean(), im.mean()),
        stderr: (re.stderr(), im.stderr()),
        soups: soups.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::loop_mass_ratio;
    use crate::rng::seeded;
    use std::f64::consts::PI;

    fn oracle() -> (AnnularLattice, Zipper) {
        let l = AnnularLattice::square_annulus(2, 0).unwrap();
        let z = Zipper::default_ray(&l);
        (l, z)
    }

    #[test]
    fn return_weight_examples() {
        let l = AnnularLattice::square_annulus(10, 1).unwrap();
        let t = diagonal_return_weights(&l, 6).unwrap();
        let z = l.vertex((5, 5)).unwrap();
        assert!((t.get(&l, z, 2) - 0.25).abs() < 1e-15);
        assert!((t.get(&l, z, 4) - 36.0 / 256.0).abs() < 1e-15);
        for v in l.free_vertices() {
            assert_eq!(t.get(&l, *v, 3), 0.0);
            assert_eq!(t.get(&l, *v, 5), 0.0);
        }
        assert!(diagonal_return_weights(&l, 1).is_err());
    }

    #[test]
    fn tail_bound_is_certified() {
        let (l, _) = oracle();
        let (m, bound) = auto_max_len(&l, 1e-6).unwrap();
        assert!(bound < 1e-6);
        let short = diagonal_return_weights(&l, m).unwrap();
        let long = diagonal_return_weights(&l, 4 * m).unwrap();
        let omitted = long.total_mass() - short.total_mass();
        assert!(omitted >= 0.0 && omitted <= short.tail_bound(), "{omitted} {}", short.tail_bound());
    }

    /// Every rooted loop of length ≤ `max_len` with weight and winding.
    fn enumerate_loops(l: &AnnularLattice, z: &Zipper, max_len: usize, mut f: impl FnMut(usize, f64, i64)) {
        #[allow(clippy::too_many_arguments)]
        fn dfs(
            l: &AnnularLattice,
            z: &Zipper,
            root: usize,
            u: usize,
            len: usize,
            w: f64,
            k: i64,
            max_len: usize,
            f: &mut dyn FnMut(usize, f64, i64),
        ) {
            if len > 0 && u == root {
                f(len, w, k);
            }
            if len == max_len {
                return;
            }
            let wt = w / l.degree(u) as f64;
            for &v in l.neighbors(u) {
                if !l.is_outer(v) {
                    let s = z.crossing_sign(l, u, v).unwrap() as i64;
                    dfs(l, z, root, v, len + 1, wt, k + s, max_len, f);
                }
            }
        }
        for &r in l.free_vertices() {
            dfs(l, z, r, r, 0, 1.0, 0, max_len, &mut f);
        }
    }

    #[test]
    fn explicit_loop_sum_matches_determinant_ratio() {
        let (l, z) = oracle();
        assert!(l.free_vertices().len() <= 12);
        let max_len = 20;
        for (b1, b2) in [(0.0, PI), (0.7, 2.1), (PI / 2.0, 0.0)] {
            let mut sum = Complex64::new(0.0, 0.0);
            enumerate_loops(&l, &z, max_len, |m, w, k| {
                let d = Complex64::from_polar(w, b1 * k as f64) - Complex64::from_polar(w, b2 * k as f64);
                sum += d / m as f64;
            });
            let exact = loop_mass_ratio(&l, &z, b1, b2).unwrap();
            // each omitted loop differs by at most twice its unsigned weight
            let tail = 2.0 * diagonal_return_weights(&l, max_len).unwrap().tail_bound();
            assert!((sum.exp() - exact).norm() <= tail * exact.norm() * 1.01 + 1e-14, "{b1} {b2}: {} vs {exact}", sum.exp());
        }
    }

    #[test]
    fn loops_are_closed_and_avoid_outer() {
        let (l, z) = oracle();
        let sampler = LoopSoupSampler::new(&l, &z, None, DEFAULT_TAIL_EPS).unwrap();
        let mut rng = seeded(3);
        for _ in 0..200 {
            let soup = sampler.sample(&mut rng).unwrap();
            for lp in &soup.loops {
                let v = lp.vertices();
                assert_eq!(v.first(), v.last());
                assert!(lp.len() >= 2 && lp.len() % 2 == 0);
                assert!(v.iter().all(|&u| !l.is_outer(u)));
                assert!(v.windows(2).all(|w| l.edge_position(w[0], w[1]).is_some()));
                assert!((lp.lifetime() - l.mesh().powi(2) * lp.len() as f64 / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn short_loops_do_not_wind() {
        let l = AnnularLattice::square_annulus(6, 2).unwrap();
        let z = Zipper::default_ray(&l);
        let sampler = LoopSoupSampler::new(&l, &z, Some(400), 1.0).unwrap();
        let soups = sampler.sample_many(200, 5).unwrap();
        // a loop of at most 4 steps has diameter ≤ 2 < distance from hole to the ray start
        for s in &soups {
            assert!(s.loops.iter().filter(|lp| lp.len() <= 4).all(|lp| lp.winding() == 0));
        }
    }

    #[test]
    fn soup_counts_and_odd_windings() {
        let (l, z) = oracle();
        let sampler = LoopSoupSampler::new(&l, &z, None, DEFAULT_TAIL_EPS).unwrap();
        let soups = sampler.sample_many(10_000, 11).unwrap();

        let counts: Vec<f64> = soups.iter().map(|s| s.len() as f64).collect();
        let c = MeanEstimate::from_slice(&counts);
        assert!((c.mean() - sampler.expected_count()).abs() < 3.0 * c.stderr());

        let short: Vec<f64> = soups.iter().map(|s| s.count_up_to(6) as f64).collect();
        let s = MeanEstimate::from_slice(&short);
        let disp = s.variance() / s.mean();
        assert!((0.95..=1.05).contains(&disp), "{disp}");
        assert!((s.mean() - sampler.expected_count_up_to(6)).abs() < 3.0 * s.stderr());

        let odd: Vec<f64> = soups.iter().map(|s| s.odd_winding_count() as f64).collect();
        let o = MeanEstimate::from_slice(&odd);
        let want = 0.5 * loop_mass_ratio(&l, &z, 0.0, PI).unwrap().re.ln();
        assert!((o.mean() - want).abs() < 3.0 * o.stderr(), "{} vs {want}", o.mean());

        let cf = campbell_cf_mc(&soups, PI / 2.0).unwrap();
        let exact = loop_mass_ratio(&l, &z, PI / 2.0, 0.0).unwrap();
        assert!((cf.mean.re - exact.re).abs() < 3.0 * cf.stderr.0);
        assert!((cf.mean.im - exact.im).abs() < 3.0 * cf.stderr.1.max(1e-3));

        let zero = campbell_cf_mc(&soups, 0.0).unwrap();
        assert_eq!(zero.mean, Complex64::new(1.0, 0.0));
        assert!(cf.mean.norm() <= 1.0);
        assert!(campbell_cf_mc(&soups[..10], 0.3).is_err());
        assert!(campbell_cf_mc(&[], 0.3).is_err());
    }

    #[test]
    fn rejects_loose_truncation() {
        let (l, z) = oracle();
        assert!(matches!(LoopSoupSampler::new(&l, &z, Some(4), 1e-6), Err(Error::TailBound { .. })));
    }
}
