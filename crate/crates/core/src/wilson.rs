//! Random walks, loop erasure, Wilson's algorithm, rejection sampling of the
//! disjoint-branch event and the exhaustive spanning-tree oracles.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::harmonic::validate_marked;
use crate::lattice::{AnnularLattice, LatticePath, VertexKind, Zipper};
use crate::linalg::det_integer;
use crate::stats::MeanEstimate;

/// Graph whose absorbed vertices are wired into a single root.
pub trait WiredGraph {
    fn num_vertices(&self) -> usize;
    fn neighbors(&self, v: usize) -> &[usize];
    fn is_absorbed(&self, v: usize) -> bool;
}

impl WiredGraph for AnnularLattice {
    fn num_vertices(&self) -> usize {
        AnnularLattice::num_vertices(self)
    }
    fn neighbors(&self, v: usize) -> &[usize] {
        AnnularLattice::neighbors(self, v)
    }
    fn is_absorbed(&self, v: usize) -> bool {
        self.is_outer(v)
    }
}

/// Plain adjacency-list graph, mostly for oracles on tiny examples.
#[derive(Clone, Debug)]
pub struct AdjacencyGraph {
    adj: Vec<Vec<usize>>,
    absorbed: Vec<bool>,
}

impl AdjacencyGraph {
    pub fn new(n: usize, edges: &[(usize, usize)], absorbed: &[usize]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidInput(format!("bad edge ({a}, {b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut flags = vec![false; n];
        for &a in absorbed {
            *flags.get_mut(a).ok_or_else(|| Error::InvalidInput(format!("bad root {a}")))? = true;
        }
        Ok(Self { adj, absorbed: flags })
    }
}

impl WiredGraph for AdjacencyGraph {
    fn num_vertices(&self) -> usize {
        self.adj.len()
    }
    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }
    fn is_absorbed(&self, v: usize) -> bool {
        self.absorbed[v]
    }
}

/// Spanning tree oriented toward the wired root: each non-absorbed vertex
/// points to one neighbour (possibly a specific absorbed vertex).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arborescence {
    pub parent: Vec<Option<usize>>,
}

impl Arborescence {
    /// Root-directed path from `start`, ending at an absorbed vertex.
    pub fn branch(&self, start: usize) -> Vec<usize> {
        let mut path = vec![start];
        let mut v = start;
        while let Some(p) = self.parent[v] {
            path.push(p);
            v = p;
        }
        path
    }

    /// Parent map is acyclic, uses graph edges, and leaves exactly the
    /// absorbed vertices without a parent.
    pub fn is_valid<G: WiredGraph>(&self, g: &G) -> bool {
        let n = g.num_vertices();
        if self.parent.len() != n {
            return false;
        }
        for v in 0..n {
            match self.parent[v] {
                None if !g.is_absorbed(v) => return false,
                Some(_) if g.is_absorbed(v) => return false,
                Some(p) if !g.neighbors(v).contains(&p) => return false,
                _ => {}
            }
            let mut steps = 0;
            let mut u = v;
            while let Some(p) = self.parent[u] {
                u = p;
                steps += 1;
                if steps > n {
                    return false;
                }
            }
        }
        true
    }
}

/// Simple random walk from `start`, stopped on its first visit to an
/// absorbed vertex. Reflection at free boundaries is the reduced degree.
pub fn random_walk<G: WiredGraph, R: Rng + ?Sized>(g: &G, start: usize, rng: &mut R) -> LatticePath {
    let mut path = vec![start];
    let mut u = start;
    while !g.is_absorbed(u) {
        let nb = g.neighbors(u);
        u = nb[rng.random_range(0..nb.len())];
        path.push(u);
    }
    LatticePath::from_vertices_unchecked(path)
}

/// Chronological loop erasure.
pub fn loop_erase(path: &LatticePath) -> LatticePath {
    let mut out: Vec<usize> = Vec::new();
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for &v in path.vertices() {
        if let Some(&i) = pos.get(&v) {
            for w in out.drain(i + 1..) {
                pos.remove(&w);
            }
        } else {
            pos.insert(v, out.len());
            out.push(v);
        }
    }
    LatticePath::from_vertices_unchecked(out)
}

/// Wilson's algorithm with the wired root. `order` lists the starting
/// vertices to process first; remaining vertices follow in index order.
pub fn wilson_ust<G: WiredGraph, R: Rng + ?Sized>(g: &G, rng: &mut R, order: Option<&[usize]>) -> Arborescence {
    let n = g.num_vertices();
    let mut in_tree: Vec<bool> = (0..n).map(|v| g.is_absorbed(v)).collect();
    let mut next = vec![usize::MAX; n];
    let starts = order.unwrap_or(&[]).iter().copied().chain(0..n);
    for start in starts {
        let mut u = start;
        while !in_tree[u] {
            let nb = g.neighbors(u);
            next[u] = nb[rng.random_range(0..nb.len())];
            u = next[u];
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u];
        }
    }
    let parent = (0..n).map(|v| if g.is_absorbed(v) { None } else { Some(next[v]) }).collect();
    Arborescence { parent }
}

/// Maximum number of non-absorbed vertices accepted by the enumerator.
pub const ENUMERATION_CAP: usize = 16;

/// Calls `f` on every spanning arborescence of the wired graph.
pub fn for_each_spanning_tree<G: WiredGraph>(g: &G, mut f: impl FnMut(&[Option<usize>])) -> Result<()> {
    let n = g.num_vertices();
    let free: Vec<usize> = (0..n).filter(|&v| !g.is_absorbed(v)).collect();
    if free.len() > ENUMERATION_CAP {
        return Err(Error::TooLarge(format!("{} non-root vertices exceeds the enumeration cap {ENUMERATION_CAP}", free.len())));
    }
    let mut parent: Vec<Option<usize>> = vec![None; n];
    fn rec<G: WiredGraph>(g: &G, free: &[usize], k: usize, parent: &mut [Option<usize>], f: &mut dyn FnMut(&[Option<usize>])) {
        if k == free.len() {
            f(parent);
            return;
        }
        let v = free[k];
        for &p in g.neighbors(v) {
            // cycle check through already-assigned parents
            let mut u = p;
            let mut cycle = false;
            while let Some(q) = parent[u] {
                if u == v {
                    break;
                }
                u = q;
            }
            if u == v {
                cycle = true;
            }
            if cycle {
                continue;
            }
            parent[v] = Some(p);
            rec(g, free, k + 1, parent, f);
            parent[v] = None;
        }
    }
    rec(g, &free, 0, &mut parent, &mut f);
    Ok(())
}

pub fn enumerate_spanning_trees<G: WiredGraph>(g: &G) -> Result<Vec<Arborescence>> {
    let mut out = Vec::new();
    for_each_spanning_tree(g, |p| out.push(Arborescence { parent: p.to_vec() }))?;
    Ok(out)
}

/// Kirchhoff count: determinant of the reduced Laplacian over non-absorbed
/// vertices, computed exactly.
pub fn matrix_tree_count<G: WiredGraph>(g: &G) -> Result<i128> {
    let free: Vec<usize> = (0..g.num_vertices()).filter(|&v| !g.is_absorbed(v)).collect();
    let idx: HashMap<usize, usize> = free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let m = free.len();
    let mut a = vec![0i64; m * m];
    for (i, &v) in free.iter().enumerate() {
        a[i * m + i] = g.neighbors(v).len() as i64;
        for w in g.neighbors(v) {
            if let Some(&j) = idx.get(w) {
                a[i * m + j] -= 1;
            }
        }
    }
    det_integer(m, &a)
}

/// Branches `γ_1..γ_n` from `x_1..x_n`, each ending at an outer vertex.
#[derive(Clone, Debug)]
pub struct BranchTuple {
    pub branches: Vec<LatticePath>,
}

impl BranchTuple {
    pub fn endpoints(&self) -> Vec<usize> {
        self.branches.iter().map(|b| b.last()).collect()
    }

    pub fn crossing_numbers(&self, lattice: &AnnularLattice, zipper: &Zipper) -> Result<Vec<i64>> {
        self.branches.iter().map(|b| zipper.crossing_number(lattice, b.vertices())).collect()
    }
}

/// Reusable rejection sampler for the event that the branches from
/// `x_1..x_n` are disjoint (outer endpoints included).
///
/// Wilson's algorithm started from `x_1, .., x_n` builds branch `j` as the
/// loop erasure of a walk stopped on hitting the boundary or an earlier
/// branch; the event holds iff every such walk reaches the boundary first.
pub struct ConditionedSampler<'a> {
    lattice: &'a AnnularLattice,
    xs: Vec<usize>,
    next: Vec<usize>,
    mark: Vec<u64>,
    stamp: u64,
    paths: Vec<Vec<usize>>,
}

impl<'a> ConditionedSampler<'a> {
    pub fn new(lattice: &'a AnnularLattice, xs: &[usize]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidInput("need at least one starting point".into()));
        }
        for (i, &x) in xs.iter().enumerate() {
            if x >= lattice.num_vertices() || lattice.kind(x) != VertexKind::Inner {
                return Err(Error::InvalidInput(format!("xs[{i}] is not an inner-boundary vertex")));
            }
            if xs[..i].contains(&x) {
                return Err(Error::InvalidInput("xs has repeated points".into()));
            }
        }
        let angles: Vec<f64> = xs.iter().map(|&x| lattice.angle(x)).collect();
        if !crate::harmonic::is_ccw_cyclic(&angles) {
            return Err(Error::InvalidInput("xs must be in counterclockwise order".into()));
        }
        let n = lattice.num_vertices();
        Ok(Self { lattice, xs: xs.to_vec(), next: vec![0; n], mark: vec![0; n], stamp: 0, paths: vec![Vec::new(); xs.len()] })
    }

    /// One attempt; on success the branches are available via [`take`](Self::take).
    pub fn attempt<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.stamp += 1;
        let l = self.lattice;
        for j in 0..self.xs.len() {
            let x = self.xs[j];
            if self.mark[x] == self.stamp {
                return false;
            }
            let mut u = x;
            while !l.is_outer(u) && self.mark[u] != self.stamp {
                let nb = l.neighbors(u);
                let w = nb[rng.random_range(0..nb.len())];
                self.next[u] = w;
                u = w;
            }
            if self.mark[u] == self.stamp {
                return false;
            }
            let path = &mut self.paths[j];
            path.clear();
            let mut v = x;
            path.push(v);
            self.mark[v] = self.stamp;
            while v != u {
                v = self.next[v];
                path.push(v);
                self.mark[v] = self.stamp;
            }
        }
        true
    }

    pub fn take(&self) -> BranchTuple {
        BranchTuple { branches: self.paths.iter().map(|p| LatticePath::from_vertices_unchecked(p.clone())).collect() }
    }

    /// Outer endpoints of the last accepted tuple.
    pub fn endpoints(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p[p.len() - 1]).collect()
    }

    /// Crossing numbers of the last accepted tuple.
    pub fn crossing_numbers(&self, zipper: &Zipper) -> Vec<i64> {
        self.paths
            .iter()
            .map(|p| p.windows(2).map(|w| i64::from(zipper.crossing_sign(self.lattice, w[0], w[1]).unwrap_or(0))).sum())
            .collect()
    }
}

/// Samples the branch tuple conditioned on disjointness. Returns the tuple
/// and the number of attempts used.
pub fn sample_conditioned_branches<R: Rng + ?Sized>(
    lattice: &AnnularLattice,
    xs: &[usize],
    rng: &mut R,
    max_attempts: u64,
) -> Result<(BranchTuple, u64)> {
    let mut s = ConditionedSampler::new(lattice, xs)?;
    for a in 1..=max_attempts {
        if s.attempt(rng) {
            return Ok((s.take(), a));
        }
    }
    Err(Error::AttemptsExhausted { attempts: max_attempts, accepted: 0 })
}

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

fn same_set(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

/// Monte Carlo estimate of the conditional characteristic function of the
/// total crossing number.
#[derive(Clone, Debug)]
pub struct CfEstimate {
    pub mean: Complex64,
    /// Componentwise standard errors (real, imaginary).
    pub stderr: (f64, f64),
    pub accepted: u64,
    pub attempts: u64,
}

pub fn winding_cf_mc<R: Rng + ?Sized>(
    lattice: &AnnularLattice,
    zipper: &Zipper,
    beta: f64,
    xs: &[usize],
    vs: Option<&[usize]>,
    samples: u64,
    rng: &mut R,
) -> Result<CfEstimate> {
    if let Some(vs) = vs {
        validate_marked(lattice, xs, vs)?;
    }
    let mut s = ConditionedSampler::new(lattice, xs)?;
    let (mut re, mut im) = (MeanEstimate::default(), MeanEstimate::default());
    let mut attempts = 0u64;
    while re.count() < samples {
        if attempts >= DEFAULT_MAX_ATTEMPTS {
            if re.count() == 0 {
                return Err(Error::AttemptsExhausted { attempts, accepted: 0 });
            }
            break;
        }
        attempts += 1;
        if !s.attempt(rng) {
            continue;
        }
        if let Some(vs) = vs {
            if !same_set(&s.endpoints(), vs) {
                continue;
            }
        }
        let k: i64 = s.crossing_numbers(zipper).iter().sum();
        let z = Complex64::from_polar(1.0, beta * k as f64);
        re.push(z.re);
        im.push(z.im);
    }
    Ok(CfEstimate {
        mean: Complex64::new(re.mean(), im.mean()),
        stderr: (re.stderr(), im.stderr()),
        accepted: re.count(),
        attempts,
    })
}

/// Exhaustive oracle over all spanning trees: total crossing numbers of the
/// trees in `E_{x,v}` (branches disjoint, endpoint set equal to `vs`).
#[derive(Clone, Debug)]
pub struct BruteForceWinding {
    /// Σ_j K(γ_j) for every tree in the event.
    pub totals: Vec<i64>,
    /// Offset `k` (branch `j` ends at `v_{j+k}`, labels starting just after
    /// the zipper) for every tree in the event.
    pub offsets: Vec<usize>,
    pub tree_count: usize,
}

impl BruteForceWinding {
    pub fn new(lattice: &AnnularLattice, zipper: &Zipper, xs: &[usize], vs: &[usize]) -> Result<Self> {
        validate_marked(lattice, xs, vs)?;
        let n = xs.len();
        let mut xs_c = xs.to_vec();
        xs_c.sort_by(|&a, &b| zipper.inner_key(lattice, a).total_cmp(&zipper.inner_key(lattice, b)));
        let mut vs_c = vs.to_vec();
        vs_c.sort_by(|&a, &b| zipper.outer_key(lattice, a).total_cmp(&zipper.outer_key(lattice, b)));
        let (mut totals, mut offsets) = (Vec::new(), Vec::new());
        let mut tree_count = 0usize;
        let mut used = vec![false; lattice.num_vertices()];
        let mut err = None;
        for_each_spanning_tree(lattice, |parent| {
            tree_count += 1;
            let tree = Arborescence { parent: parent.to_vec() };
            let branches: Vec<Vec<usize>> = xs_c.iter().map(|&x| tree.branch(x)).collect();
            used.iter_mut().for_each(|u| *u = false);
            for b in &branches {
                for &v in b {
                    if used[v] {
                        return;
                    }
                    used[v] = true;
                }
            }
            let ends: Vec<usize> = branches.iter().map(|b| b[b.len() - 1]).collect();
            if !same_set(&ends, &vs_c) {
                return;
            }
            let mut total = 0;
            for b in &branches {
                match zipper.crossing_number(lattice, b) {
                    Ok(k) => total += k,
                    Err(e) => err = Some(e),
                }
            }
            let k = vs_c.iter().position(|&v| v == ends[0]).unwrap_or(0);
            totals.push(total);
            offsets.push(k % n);
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(Self { totals, offsets, tree_count })
    }

    pub fn probability(&self) -> f64 {
        self.totals.len() as f64 / self.tree_count as f64
    }

    pub fn cf(&self, beta: f64) -> Result<Complex64> {
        if self.totals.is_empty() {
            return Err(Error::EmptyEvent);
        }
        let s: Complex64 = self.totals.iter().map(|&k| Complex64::from_polar(1.0, beta * k as f64)).sum();
        Ok(s / self.totals.len() as f64)
    }
}

pub fn brute_force_winding_cf(lattice: &AnnularLattice, zipper: &Zipper, beta: f64, xs: &[usize], vs: &[usize]) -> Result<Complex64> {
    BruteForceWinding::new(lattice, zipper, xs, vs)?.cf(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn cycle4() -> AdjacencyGraph {
        AdjacencyGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &[0]).unwrap()
    }

    #[test]
    fn cycle_has_n_trees() {
        let g = cycle4();
        let trees = enumerate_spanning_trees(&g).unwrap();
        assert_eq!(trees.len(), 4);
        assert_eq!(matrix_tree_count(&g).unwrap(), 4);
        assert!(trees.iter().all(|t| t.is_valid(&g)));
    }

    #[test]
    fn tree_graph_is_deterministic() {
        // a path 0 - 1 - 2 - 3 with a leaf 4 hanging off 2, rooted at 0
        let g = AdjacencyGraph::new(5, &[(0, 1), (1, 2), (2, 3), (2, 4)], &[0]).unwrap();
        let mut rng = seeded(3);
        for _ in 0..20 {
            let t = wilson_ust(&g, &mut rng, None);
            assert_eq!(t.parent, vec![None, Some(0), Some(1), Some(2), Some(2)]);
        }
    }

    #[test]
    fn loop_erasure_examples() {
        let l = AnnularLattice::build_annulus(5.0, 0.0).unwrap();
        let p = LatticePath::from_sites(&l, &[(0, 1), (1, 1), (1, 2), (1, 1), (2, 1)]).unwrap();
        let e = loop_erase(&p);
        let want = LatticePath::from_sites(&l, &[(0, 1), (1, 1), (2, 1)]).unwrap();
        assert_eq!(e, want);
        assert_eq!(loop_erase(&e), e);
        let mut rng = seeded(11);
        for _ in 0..50 {
            let w = random_walk(&l, l.vertex((1, 0)).unwrap(), &mut rng);
            assert!(l.is_outer(w.last()));
            assert!(w.vertices()[..w.len()].iter().all(|&v| !l.is_outer(v)));
            let e = loop_erase(&w);
            assert_eq!(loop_erase(&e), e);
            assert_eq!((e.first(), e.last()), (w.first(), w.last()));
            let mut s = e.vertices().to_vec();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), e.vertices().len());
        }
        let o = l.outer_boundary()[0];
        assert_eq!(random_walk(&l, o, &mut rng).len(), 0);
    }

    #[test]
    fn wilson_output_is_valid() {
        let l = AnnularLattice::build_annulus(6.0, 1.5).unwrap();
        let mut rng = seeded(5);
        for _ in 0..20 {
            assert!(wilson_ust(&l, &mut rng, None).is_valid(&l));
        }
    }

    #[test]
    fn enumeration_cap() {
        let l = AnnularLattice::build_annulus(6.0, 0.0).unwrap();
        assert!(matches!(enumerate_spanning_trees(&l), Err(Error::TooLarge(_))));
    }

    #[test]
    fn conditioned_tuples_are_disjoint() {
        let l = AnnularLattice::build_annulus(8.0, 0.0).unwrap();
        let z = Zipper::default_ray(&l);
        let xs: Vec<usize> = [(1, 0), (0, 1), (-1, 0)].iter().map(|&s| l.vertex(s).unwrap()).collect();
        let mut rng = seeded(9);
        let (_, a) = sample_conditioned_branches(&l, &xs[..1], &mut rng, 1).unwrap();
        assert_eq!(a, 1);
        for _ in 0..30 {
            let (t, _) = sample_conditioned_branches(&l, &xs, &mut rng, 1_000_000).unwrap();
            let mut all: Vec<usize> = t.branches.iter().flat_map(|b| b.vertices().to_vec()).collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), total);
            let ends: Vec<f64> = t.endpoints().iter().map(|&v| l.angle(v)).collect();
            assert!(crate::harmonic::is_ccw_cyclic(&ends));
            assert_eq!(t.crossing_numbers(&l, &z).unwrap().len(), 3);
        }
    }

    #[test]
    fn crossing_number_antisymmetry() {
        let l = AnnularLattice::build_annulus(8.0, 0.0).unwrap();
        let z = Zipper::default_ray(&l);
        let mut rng = seeded(1);
        for _ in 0..50 {
            let w = random_walk(&l, l.vertex((0, -1)).unwrap(), &mut rng);
            let k = z.crossing_number(&l, w.vertices()).unwrap();
            assert_eq!(z.crossing_number(&l, w.reversed().vertices()).unwrap(), -k);
        }
        // once around counterclockwise, then out along the negative x-axis
        let mut sites = vec![(0, -2), (1, -2), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (-1, 2), (-2, 2), (-2, 1), (-2, 0), (-2, -1), (-2, -2), (-1, -2), (0, -2), (0, -3)];
        sites.extend((4..=8).map(|y| (0, -y)));
        let p = LatticePath::from_sites(&l, &sites).unwrap();
        assert_eq!(z.crossing_number(&l, p.vertices()).unwrap(), 1);
        let away = LatticePath::from_sites(&l, &[(-1, 0), (-2, 0), (-3, 0), (-4, 0)]).unwrap();
        assert_eq!(z.crossing_number(&l, away.vertices()).unwrap(), 0);
    }
}
