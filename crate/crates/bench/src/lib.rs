//! Fixtures shared by the benchmarks in `benches/`.

use ustwind::{AnnularLattice, Zipper};

/// Round annulus of outer radius `r` around a hole of radius 2.
pub fn disc(r: f64) -> (AnnularLattice, Zipper) {
    let lattice = AnnularLattice::build_annulus(r, 2.0).expect("valid radii");
    let zipper = Zipper::default_ray(&lattice);
    (lattice, zipper)
}

/// Inner-boundary vertices closest to the angles `2πj/n`.
pub fn spread_inner(lattice: &AnnularLattice, n: usize) -> Vec<usize> {
    let inner = lattice.inner_boundary();
    let mut picked: Vec<usize> = (0..n)
        .map(|j| {
            let a = std::f64::consts::TAU * j as f64 / n as f64;
            let d = |v: usize| (lattice.angle(v) - a).rem_euclid(std::f64::consts::TAU).min((a - lattice.angle(v)).rem_euclid(std::f64::consts::TAU));
            *inner.iter().min_by(|&&u, &&v| d(u).total_cmp(&d(v))).expect("non-empty inner boundary")
        })
        .collect();
    picked.sort_by(|&a, &b| lattice.angle(a).total_cmp(&lattice.angle(b)));
    picked.dedup();
    picked
}
