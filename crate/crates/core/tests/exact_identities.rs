//! Cross-module identities of the exact engine.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use ustwind::harmonic::{fomin_determinant, loop_mass_ratio, winding_cf_exact, winding_exact};
use ustwind::rng::seeded;
use ustwind::wilson::BruteForceWinding;
use ustwind::{AnnularLattice, Error, Zipper};

fn close(a: ustwind::Complex64, b: ustwind::Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

/// Sorted ccw by angle so the sets are valid marked points.
fn ccw(lattice: &AnnularLattice, mut vs: Vec<usize>) -> Vec<usize> {
    vs.sort_by(|&a, &b| lattice.angle(a).total_cmp(&lattice.angle(b)));
    vs
}

#[test]
fn random_marked_sets_match_enumeration() {
    let lattice = AnnularLattice::square_annulus(2, 0).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    let (inner, outer) = (lattice.inner_boundary(), lattice.outer_boundary());
    let mut rng = seeded(31);
    let mut checked = 0;
    while checked < 30 {
        let n = rng.random_range(1..=3);
        let xs = ccw(&lattice, sample(&mut rng, inner.len(), n).into_iter().map(|i| inner[i]).collect());
        let vs = ccw(&lattice, sample(&mut rng, outer.len(), n).into_iter().map(|i| outer[i]).collect());
        let bf = BruteForceWinding::new(&lattice, &zipper, &xs, &vs).unwrap();
        if bf.totals.is_empty() {
            assert!(matches!(winding_exact(&lattice, &zipper, 0.3, &xs, &vs), Err(Error::EmptyEvent)));
            continue;
        }
        let beta = rng.random_range(-PI..PI);
        let ex = winding_exact(&lattice, &zipper, beta, &xs, &vs).unwrap();
        assert!(close(ex.cf, bf.cf(beta).unwrap(), 1e-9), "n={n} xs={xs:?} vs={vs:?}");
        assert!((ex.probability - bf.probability()).abs() < 1e-12);
        checked += 1;
    }
}

#[test]
fn loop_mass_ratio_does_not_depend_on_the_zipper() {
    let lattice = AnnularLattice::square_annulus(4, 1).unwrap();
    let a = loop_mass_ratio(&lattice, &Zipper::default_ray(&lattice), 0.0, 0.9).unwrap();
    let b = loop_mass_ratio(&lattice, &Zipper::bent(&lattice).unwrap(), 0.0, 0.9).unwrap();
    assert!(close(a, b, 1e-10 * a.norm()));
}

#[test]
fn characteristic_function_is_periodic_and_hermitian() {
    let lattice = AnnularLattice::square_annulus(4, 1).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    let site = |s| lattice.vertex(s).unwrap();
    let cases = [
        (vec![site((2, 0))], vec![site((-4, 1))]),
        (vec![site((2, 0)), site((-2, 0))], vec![site((1, 4)), site((-1, -4))]),
        (vec![site((2, 0)), site((0, 2)), site((-2, -1))], vec![site((4, -2)), site((2, 4)), site((-4, 0))]),
    ];
    for (xs, vs) in &cases {
        let cf = |b: f64| winding_cf_exact(&lattice, &zipper, b, xs, vs).unwrap();
        assert!(close(cf(0.0), ustwind::Complex64::new(1.0, 0.0), 1e-10));
        for beta in [0.4, 1.3, 2.9] {
            assert!(close(cf(beta + 2.0 * PI), cf(beta), 1e-9), "n={}", xs.len());
            assert!(close(cf(-beta), cf(beta).conj(), 1e-9));
            assert!(cf(beta).norm() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn single_branch_determinant_is_harmonic_measure() {
    let lattice = AnnularLattice::square_annulus(4, 1).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    for &x in lattice.inner_boundary().iter().step_by(3) {
        let total: f64 = lattice
            .outer_boundary()
            .iter()
            .map(|&v| fomin_determinant(&lattice, &zipper, 0.0, &[x], &[v]).unwrap().re)
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }
}

#[test]
fn json_round_trip_preserves_the_exact_engine() {
    let lattice = AnnularLattice::build_annulus(7.0, 2.0).unwrap();
    let zipper = Zipper::bent(&lattice).unwrap();
    let (back, z) = AnnularLattice::from_json(&lattice.to_json(Some(&zipper)).unwrap()).unwrap();
    let z = z.unwrap();
    let a = loop_mass_ratio(&lattice, &zipper, 0.0, PI).unwrap();
    let b = loop_mass_ratio(&back, &z, 0.0, PI).unwrap();
    assert!(close(a, b, 1e-12 * a.norm()));
}
