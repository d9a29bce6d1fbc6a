//! Doubly connected square-lattice domains with a wired outer boundary, a
//! free (reflecting) inner boundary and a zipper cutting the annulus.
//!
//! Vertices are stored row-major (by `y`, then `x`), which keeps the
//! bandwidth of the Laplacian close to the width of one row.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer lattice point, relative to the centre of the hole.
pub type Site = (i32, i32);

const STEPS: [Site; 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexKind {
    /// Wired outer boundary (absorbing).
    Outer,
    /// Free inner boundary (reflecting through reduced degree).
    Inner,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Domain,
    Hole,
    Outside,
}

#[derive(Clone, Debug)]
pub struct AnnularLattice {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    kind: Vec<VertexKind>,
    free_index: Vec<usize>,
    free: Vec<usize>,
    mesh: f64,
    // complement labelling on the padded bounding box
    x0: i32,
    y0: i32,
    width: i32,
    height: i32,
    region: Vec<Region>,
}

/// Sentinel returned by [`AnnularLattice::free_index`] for outer vertices.
pub const ABSORBED: usize = usize::MAX;

impl AnnularLattice {
    /// Lattice points with `inner < |v| <= outer`; when `inner == 0` only the
    /// origin is removed.
    pub fn build_annulus(outer_radius: f64, inner_radius: f64) -> Result<Self> {
        if !(outer_radius.is_finite() && inner_radius.is_finite()) || inner_radius < 0.0 {
            return Err(Error::InvalidDomain("radii must be finite and non-negative".into()));
        }
        if outer_radius < inner_radius + 2.0 {
            return Err(Error::InvalidDomain(format!(
                "outer radius {outer_radius} must exceed inner radius {inner_radius} by at least 2"
            )));
        }
        let (r2_out, r2_in) = (outer_radius * outer_radius, inner_radius * inner_radius);
        let m = outer_radius.floor() as i32;
        let mut sites = Vec::new();
        for y in -m..=m {
            for x in -m..=m {
                let d2 = f64::from(x * x + y * y);
                if d2 <= r2_out && d2 > r2_in && (x, y) != (0, 0) {
                    sites.push((x, y));
                }
            }
        }
        Self::from_sites(sites, 1.0 / outer_radius)
    }

    /// `(2 outer_half + 1)²` block with the `(2 inner_half + 1)²` centre block
    /// removed. `square_annulus(2, 0)` is the 5×5-minus-centre oracle lattice.
    pub fn square_annulus(outer_half: i32, inner_half: i32) -> Result<Self> {
        if inner_half < 0 || outer_half < inner_half + 2 {
            return Err(Error::InvalidDomain(format!(
                "square annulus needs outer_half >= inner_half + 2, got {outer_half}, {inner_half}"
            )));
        }
        let mut sites = Vec::new();
        for y in -outer_half..=outer_half {
            for x in -outer_half..=outer_half {
                if x.abs() > inner_half || y.abs() > inner_half {
                    sites.push((x, y));
                }
            }
        }
        Self::from_sites(sites, 1.0 / f64::from(outer_half))
    }

    /// Builds the domain from an explicit site set. The complement (with
    /// 8-connectivity) must have exactly one bounded component and the site
    /// set must be 4-connected.
    pub fn from_sites(sites: impl IntoIterator<Item = Site>, mesh: f64) -> Result<Self> {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort_by_key(|&(x, y)| (y, x));
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::InvalidDomain("empty site set".into()));
        }
        if !(mesh > 0.0) {
            return Err(Error::InvalidDomain("mesh must be positive".into()));
        }
        let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();

        let xmin = sites.iter().map(|s| s.0).min().unwrap_or(0);
        let xmax = sites.iter().map(|s| s.0).max().unwrap_or(0);
        let ymin = sites.iter().map(|s| s.1).min().unwrap_or(0);
        let ymax = sites.iter().map(|s| s.1).max().unwrap_or(0);
        let (x0, y0) = (xmin - 1, ymin - 1);
        let (width, height) = (xmax - xmin + 3, ymax - ymin + 3);
        let cell = |x: i32, y: i32| ((y - y0) * width + (x - x0)) as usize;

        // 0 = domain, otherwise complement component id (1 = unbounded)
        let mut label = vec![0u32; (width * height) as usize];
        let mut is_site = vec![false; label.len()];
        for &(x, y) in &sites {
            is_site[cell(x, y)] = true;
        }
        let mut components = 0u32;
        for start in 0..label.len() {
            if is_site[start] || label[start] != 0 {
                continue;
            }
            components += 1;
            label[start] = components;
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                let (cx, cy) = ((c as i32) % width, (c as i32) / width);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (cx + dx, cy + dy);
                        if nx < 0 || ny < 0 || nx >= width || ny >= height {
                            continue;
                        }
                        let nc = (ny * width + nx) as usize;
                        if !is_site[nc] && label[nc] == 0 {
                            label[nc] = components;
                            queue.push_back(nc);
                        }
                    }
                }
            }
        }
        // cell 0 is a padding corner, always in the unbounded component
        if components != 2 {
            return Err(Error::InvalidDomain(format!(
                "domain must be doubly connected, found {} bounded complement components",
                components.saturating_sub(1)
            )));
        }
        let region: Vec<Region> = label
            .iter()
            .map(|&l| match l {
                0 => Region::Domain,
                1 => Region::Outside,
                _ => Region::Hole,
            })
            .collect();

        let mut offsets = Vec::with_capacity(sites.len() + 1);
        let mut neighbors = Vec::with_capacity(4 * sites.len());
        let mut kind = Vec::with_capacity(sites.len());
        offsets.push(0);
        for &(x, y) in &sites {
            let (mut outer, mut inner) = (false, false);
            for (dx, dy) in STEPS {
                let n = (x + dx, y + dy);
                match index.get(&n) {
                    Some(&j) => neighbors.push(j),
                    None => match region[cell(n.0, n.1)] {
                        Region::Outside => outer = true,
                        _ => inner = true,
                    },
                }
            }
            offsets.push(neighbors.len());
            kind.push(match (outer, inner) {
                (true, true) => {
                    return Err(Error::InvalidDomain(format!(
                        "vertex {:?} touches both boundaries",
                        (x, y)
                    )))
                }
                (true, false) => VertexKind::Outer,
                (false, true) => VertexKind::Inner,
                (false, false) => VertexKind::Interior,
            });
        }
        if !kind.contains(&VertexKind::Outer) || !kind.contains(&VertexKind::Inner) {
            return Err(Error::InvalidDomain("both boundaries must be nonempty".into()));
        }

        // 4-connectivity of the domain itself
        let mut seen = vec![false; sites.len()];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbors[offsets[v]..offsets[v + 1]] {
                if !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached != sites.len() {
            return Err(Error::InvalidDomain("domain is disconnected".into()));
        }

        let mut free_index = vec![ABSORBED; sites.len()];
        let mut free = Vec::new();
        for v in 0..sites.len() {
            if kind[v] != VertexKind::Outer {
                free_index[v] = free.len();
                free.push(v);
            }
        }
        Ok(Self { sites, index, offsets, neighbors, kind, free_index, free, mesh, x0, y0, width, height, region })
    }

    pub fn num_vertices(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, v: usize) -> Site {
        self.sites[v]
    }

    pub fn vertex(&self, s: Site) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn vertex_or_err(&self, s: Site) -> Result<usize> {
        self.vertex(s).ok_or(Error::UnknownVertex(s))
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Start of `v`'s slice in the flattened neighbour array; directed edge
    /// `v -> neighbors(v)[k]` has position `edge_offset(v) + k`.
    pub fn edge_offset(&self, v: usize) -> usize {
        self.offsets[v]
    }

    pub fn num_directed_edges(&self) -> usize {
        self.neighbors.len()
    }

    /// Position of the directed edge `u -> w`, if adjacent.
    pub fn edge_position(&self, u: usize, w: usize) -> Option<usize> {
        self.neighbors(u).iter().position(|&x| x == w).map(|k| self.offsets[u] + k)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.kind[v]
    }

    pub fn is_outer(&self, v: usize) -> bool {
        self.kind[v] == VertexKind::Outer
    }

    pub fn outer_boundary(&self) -> Vec<usize> {
        (0..self.sites.len()).filter(|&v| self.kind[v] == VertexKind::Outer).collect()
    }

    pub fn inner_boundary(&self) -> Vec<usize> {
        (0..self.sites.len()).filter(|&v| self.kind[v] == VertexKind::Inner).collect()
    }

    /// Non-absorbed vertices, in the order used for matrix rows.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Matrix row of `v`, or [`ABSORBED`].
    pub fn free_index(&self, v: usize) -> usize {
        self.free_index[v]
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn region(&self, s: Site) -> Region {
        if self.index.contains_key(&s) {
            return Region::Domain;
        }
        let (cx, cy) = (s.0 - self.x0, s.1 - self.y0);
        if cx < 0 || cy < 0 || cx >= self.width || cy >= self.height {
            return Region::Outside;
        }
        self.region[(cy * self.width + cx) as usize]
    }

    pub fn bounding_box(&self) -> (Site, Site) {
        ((self.x0 + 1, self.y0 + 1), (self.x0 + self.width - 2, self.y0 + self.height - 2))
    }

    /// Polar angle of a vertex in `[-π, π)`.
    pub fn angle(&self, v: usize) -> f64 {
        let (x, y) = self.sites[v];
        principal(f64::from(y).atan2(f64::from(x)))
    }

    pub fn to_json(&self, zipper: Option<&Zipper>) -> Result<String> {
        let doc = LatticeDoc {
            mesh: self.mesh,
            vertices: self.sites.clone(),
            outer_boundary: self.outer_boundary().into_iter().map(|v| self.sites[v]).collect(),
            inner_boundary: self.inner_boundary().into_iter().map(|v| self.sites[v]).collect(),
            zipper: zipper.map(|z| ZipperDoc { faces: z.faces.clone(), crossed_edges: z.crossed.clone() }),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Rebuilds a lattice (and its zipper, when present) from [`to_json`](Self::to_json).
    pub fn from_json(json: &str) -> Result<(Self, Option<Zipper>)> {
        let doc: LatticeDoc = serde_json::from_str(json)?;
        let lattice = Self::from_sites(doc.vertices, doc.mesh)?;
        let zipper = match doc.zipper {
            Some(z) => Some(Zipper::from_faces(&lattice, &z.faces)?),
            None => None,
        };
        Ok((lattice, zipper))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeDoc {
    mesh: f64,
    vertices: Vec<Site>,
    outer_boundary: Vec<Site>,
    inner_boundary: Vec<Site>,
    zipper: Option<ZipperDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZipperDoc {
    faces: Vec<Site>,
    crossed_edges: Vec<(Site, Site)>,
}

/// Wraps an angle into `[-π, π)`.
pub fn principal(a: f64) -> f64 {
    let t = (a + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Dual-lattice path from the hole to the outside. Face `(i, j)` is the unit
/// square with lower-left corner `(i, j)`.
#[derive(Clone, Debug)]
pub struct Zipper {
    faces: Vec<Site>,
    /// Crossed edges in path order, oriented so that `.0 -> .1` counts +1.
    crossed: Vec<(Site, Site)>,
    /// Sign per directed edge, aligned with the lattice neighbour array.
    sign: Vec<i8>,
}

impl Zipper {
    /// The default zipper: the dual ray at height 1/2 along the positive
    /// x-axis. Upward traversals `(x, 0) -> (x, 1)` count +1, i.e. positive
    /// means counterclockwise around the hole.
    pub fn default_ray(lattice: &AnnularLattice) -> Self {
        let (_, (xmax, _)) = lattice.bounding_box();
        let faces: Vec<Site> = (0..=xmax.max(0)).map(|i| (i, 0)).collect();
        Self::from_faces(lattice, &faces).expect("default ray is a valid zipper for annuli centred at the origin")
    }

    /// A second, independently routed zipper: up one face, then along
    /// height 3/2.
    pub fn bent(lattice: &AnnularLattice) -> Result<Self> {
        let (_, (xmax, _)) = lattice.bounding_box();
        let mut faces = vec![(0, 0)];
        faces.extend((0..=xmax.max(0)).map(|i| (i, 1)));
        Self::from_faces(lattice, &faces)
    }

    pub fn from_faces(lattice: &AnnularLattice, faces: &[Site]) -> Result<Self> {
        if faces.len() < 2 {
            return Err(Error::InvalidInput("zipper needs at least two faces".into()));
        }
        let corners = |(i, j): Site| [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
        if !corners(faces[0]).iter().any(|&c| lattice.region(c) == Region::Hole) {
            return Err(Error::InvalidInput(format!("zipper must start at the hole, face {:?} does not", faces[0])));
        }
        let last = faces[faces.len() - 1];
        if !corners(last).iter().any(|&c| lattice.region(c) == Region::Outside) {
            return Err(Error::InvalidInput(format!("zipper must end outside, face {last:?} does not")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut crossed = Vec::new();
        for w in faces.windows(2) {
            let ((i, j), (k, l)) = (w[0], w[1]);
            if !seen.insert(w[0]) {
                return Err(Error::InvalidInput(format!("zipper revisits face {:?}", w[0])));
            }
            let edge = match (k - i, l - j) {
                (1, 0) => ((i + 1, j), (i + 1, j + 1)),
                (-1, 0) => ((i, j + 1), (i, j)),
                (0, 1) => ((i + 1, j + 1), (i, j + 1)),
                (0, -1) => ((i, j), (i + 1, j)),
                _ => return Err(Error::InvalidInput(format!("faces {:?} and {:?} are not adjacent", w[0], w[1]))),
            };
            if lattice.vertex(edge.0).is_some() && lattice.vertex(edge.1).is_some() {
                crossed.push(edge);
            }
        }
        if !seen.insert(last) {
            return Err(Error::InvalidInput(format!("zipper revisits face {last:?}")));
        }
        let mut sign = vec![0i8; lattice.num_directed_edges()];
        for &(a, b) in &crossed {
            let (u, w) = (lattice.vertex_or_err(a)?, lattice.vertex_or_err(b)?);
            let fw = lattice.edge_position(u, w).ok_or(Error::NotAdjacent(a, b))?;
            let bw = lattice.edge_position(w, u).ok_or(Error::NotAdjacent(b, a))?;
            sign[fw] = 1;
            sign[bw] = -1;
        }
        Ok(Self { faces: faces.to_vec(), crossed, sign })
    }

    pub fn faces(&self) -> &[Site] {
        &self.faces
    }

    pub fn crossed_edges(&self) -> &[(Site, Site)] {
        &self.crossed
    }

    /// Sign of the directed edge at neighbour-array position `pos`.
    #[inline]
    pub fn sign_at(&self, pos: usize) -> i8 {
        self.sign[pos]
    }

    pub fn crossing_sign(&self, lattice: &AnnularLattice, from: usize, to: usize) -> Result<i8> {
        lattice
            .edge_position(from, to)
            .map(|p| self.sign[p])
            .ok_or_else(|| Error::NotAdjacent(lattice.site(from), lattice.site(to)))
    }

    /// Sum of crossing signs along consecutive vertices.
    pub fn crossing_number(&self, lattice: &AnnularLattice, path: &[usize]) -> Result<i64> {
        let mut k = 0i64;
        for w in path.windows(2) {
            k += i64::from(self.crossing_sign(lattice, w[0], w[1])?);
        }
        Ok(k)
    }

    fn face_angle(f: Site) -> f64 {
        (f64::from(f.1) + 0.5).atan2(f64::from(f.0) + 0.5)
    }

    /// Counterclockwise position of an inner-boundary vertex, measured from
    /// where the zipper leaves the hole. Sorting by this key labels points
    /// "starting just after the zipper".
    pub fn inner_key(&self, lattice: &AnnularLattice, v: usize) -> f64 {
        (lattice.angle(v) - Self::face_angle(self.faces[0])).rem_euclid(2.0 * PI)
    }

    /// As [`inner_key`](Self::inner_key), measured from where the zipper exits.
    pub fn outer_key(&self, lattice: &AnnularLattice, v: usize) -> f64 {
        (lattice.angle(v) - Self::face_angle(self.faces[self.faces.len() - 1])).rem_euclid(2.0 * PI)
    }
}

/// Nonempty sequence of pairwise adjacent vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticePath {
    vertices: Vec<usize>,
}

impl LatticePath {
    pub fn new(lattice: &AnnularLattice, vertices: Vec<usize>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidInput("empty path".into()));
        }
        for w in vertices.windows(2) {
            if lattice.edge_position(w[0], w[1]).is_none() {
                return Err(Error::NotAdjacent(lattice.site(w[0]), lattice.site(w[1])));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_sites(lattice: &AnnularLattice, sites: &[Site]) -> Result<Self> {
        let v = sites.iter().map(|&s| lattice.vertex_or_err(s)).collect::<Result<Vec<_>>>()?;
        Self::new(lattice, v)
    }

    /// Caller guarantees adjacency.
    pub(crate) fn from_vertices_unchecked(vertices: Vec<usize>) -> Self {
        debug_assert!(!vertices.is_empty());
        Self { vertices }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<usize> {
        self.vertices
    }

    pub fn first(&self) -> usize {
        self.vertices[0]
    }

    pub fn last(&self) -> usize {
        self.vertices[self.vertices.len() - 1]
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() == 1
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Self { vertices: v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_square_counts() {
        let l = AnnularLattice::square_annulus(2, 0).unwrap();
        assert_eq!(l.num_vertices(), 24);
        assert_eq!(l.outer_boundary().len(), 16);
        assert_eq!(l.inner_boundary().len(), 4);
        assert_eq!(l.free_vertices().len(), 8);
        for v in 0..l.num_vertices() {
            assert!((1..=4).contains(&l.degree(v)));
            if l.kind(v) == VertexKind::Interior {
                assert_eq!(l.degree(v), 4);
            }
        }
    }

    #[test]
    fn small_disc_minus_origin() {
        let l = AnnularLattice::build_annulus(2.0, 0.0).unwrap();
        let mut inner: Vec<Site> = l.inner_boundary().into_iter().map(|v| l.site(v)).collect();
        inner.sort();
        assert_eq!(inner, vec![(-1, 0), (0, -1), (0, 1), (1, 0)]);
        assert!(l.vertex((0, 0)).is_none());
        assert_eq!(l.num_vertices(), 12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AnnularLattice::build_annulus(3.0, 2.0).is_err());
        // simply connected: no hole
        assert!(AnnularLattice::from_sites((-2..=2).flat_map(|x| (-2..=2).map(move |y| (x, y))), 0.5).is_err());
        // two holes
        let two: Vec<Site> = (-3..=3)
            .flat_map(|x| (-2..=2).map(move |y| (x, y)))
            .filter(|&s| s != (-1, 0) && s != (1, 0))
            .collect();
        assert!(AnnularLattice::from_sites(two, 0.5).is_err());
    }

    #[test]
    fn default_zipper_geometry() {
        let l = AnnularLattice::square_annulus(2, 0).unwrap();
        let z = Zipper::default_ray(&l);
        assert_eq!(z.crossed_edges(), &[((1, 0), (1, 1)), ((2, 0), (2, 1))]);
        let (a, b) = (l.vertex((1, 0)).unwrap(), l.vertex((1, 1)).unwrap());
        assert_eq!(z.crossing_sign(&l, a, b).unwrap(), 1);
        assert_eq!(z.crossing_sign(&l, b, a).unwrap(), -1);
        let c = l.vertex((0, 1)).unwrap();
        assert_eq!(z.crossing_sign(&l, b, c).unwrap(), 0);
        assert!(z.crossing_sign(&l, a, c).is_err());
    }

    fn ring_loop(l: &AnnularLattice, turns: i32) -> Vec<usize> {
        // the 8-cycle around the origin, counterclockwise
        let ring = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
        let mut p = Vec::new();
        let seq: Vec<Site> = if turns >= 0 { ring.to_vec() } else { ring.iter().rev().copied().collect() };
        for _ in 0..turns.abs() {
            for &s in &seq {
                p.push(l.vertex(s).unwrap());
            }
        }
        p.push(l.vertex(seq[0]).unwrap());
        p
    }

    #[test]
    fn loop_winding_matches_crossings() {
        let l = AnnularLattice::build_annulus(6.0, 0.0).unwrap();
        for z in [Zipper::default_ray(&l), Zipper::bent(&l).unwrap()] {
            for turns in -2..=2 {
                let p = ring_loop(&l, turns);
                assert_eq!(z.crossing_number(&l, &p).unwrap(), i64::from(turns));
            }
            // contractible loop next to the zipper
            let sq: Vec<usize> = [(2, 0), (3, 0), (3, 1), (2, 1), (2, 0)].iter().map(|&s| l.vertex(s).unwrap()).collect();
            assert_eq!(z.crossing_number(&l, &sq).unwrap(), 0);
        }
    }

    #[test]
    fn json_roundtrip() {
        let l = AnnularLattice::build_annulus(5.0, 1.5).unwrap();
        let z = Zipper::bent(&l).unwrap();
        let s = l.to_json(Some(&z)).unwrap();
        let (l2, z2) = AnnularLattice::from_json(&s).unwrap();
        assert_eq!(l2.sites(), l.sites());
        assert_eq!(z2.unwrap().crossed_edges(), z.crossed_edges());
    }

    #[test]
    fn principal_branch() {
        assert_eq!(principal(PI), -PI);
        assert!((principal(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(principal(0.25), 0.25);
    }
}
