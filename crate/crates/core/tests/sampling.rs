//! Samplers against the exact engine and the continuum laws.

use std::f64::consts::PI;

use rand::Rng;
use ustwind::continuum::{coe_gap_cdf_n2, first_gap, integrate};
use ustwind::harmonic::{event_probability_exact, fomin_determinant, winding_cf_exact};
use ustwind::rng::{seeded, stream_rng};
use ustwind::sde::{dbm_with_coe_start, simulate_dbm};
use ustwind::stats::{ks_critical, ks_statistic};
use ustwind::wilson::{wilson_ust, winding_cf_mc, ConditionedSampler};
use ustwind::{AnnularLattice, Zipper};

fn marked(lattice: &AnnularLattice) -> (Vec<usize>, Vec<usize>) {
    let v = |s| lattice.vertex(s).unwrap();
    (vec![v((2, 0)), v((-2, 0))], vec![v((4, 1)), v((-4, -1))])
}

#[test]
fn conditioned_sampler_hits_the_exact_event_probability() {
    let lattice = AnnularLattice::square_annulus(4, 1).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    let (xs, vs) = marked(&lattice);
    let p = event_probability_exact(&lattice, &zipper, &xs, &vs).unwrap();
    let mut s = ConditionedSampler::new(&lattice, &xs).unwrap();
    let mut rng = seeded(5);
    let trials = 400_000;
    let mut hits = 0u64;
    for _ in 0..trials {
        if s.attempt(&mut rng) {
            let e = s.endpoints();
            if e.len() == vs.len() && e.iter().all(|v| vs.contains(v)) {
                hits += 1;
            }
        }
    }
    let f = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((f - p).abs() < 4.0 * se, "{f} vs {p} (se {se})");
}

#[test]
fn monte_carlo_winding_matches_exact() {
    let lattice = AnnularLattice::square_annulus(4, 1).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    let (xs, vs) = marked(&lattice);
    let beta = 0.8;
    let mc = winding_cf_mc(&lattice, &zipper, beta, &xs, Some(&vs), 20_000, &mut seeded(9)).unwrap();
    let ex = winding_cf_exact(&lattice, &zipper, beta, &xs, &vs).unwrap();
    assert!((mc.mean.re - ex.re).abs() < 4.0 * mc.stderr.0, "{} vs {}", mc.mean, ex);
    assert!((mc.mean.im - ex.im).abs() < 4.0 * mc.stderr.1, "{} vs {}", mc.mean, ex);
}

#[test]
fn wilson_branch_ends_by_harmonic_measure() {
    let lattice = AnnularLattice::square_annulus(3, 0).unwrap();
    let zipper = Zipper::default_ray(&lattice);
    let x = lattice.vertex((0, 1)).unwrap();
    let outer = lattice.outer_boundary();
    let trees = 40_000;
    let mut counts = vec![0u64; lattice.num_vertices()];
    let mut rng = seeded(2);
    for _ in 0..trees {
        let b = wilson_ust(&lattice, &mut rng, None).branch(x);
        counts[b[b.len() - 1]] += 1;
    }
    for &v in &outer {
        let p = fomin_determinant(&lattice, &zipper, 0.0, &[x], &[v]).unwrap().re;
        let f = counts[v] as f64 / trees as f64;
        let se = (p * (1.0 - p) / trees as f64).sqrt().max(1e-12);
        assert!((f - p).abs() < 4.5 * se, "{:?}: {f} vs {p}", lattice.site(v));
    }
}

/// CDF of the n = 2 gap under the invariant density `∝ sin⁴(g/2)`.
fn gap_cdf_beta4(g: f64) -> f64 {
    let f = |x: f64| (x / 2.0).sin().powi(4);
    integrate(f, 0.0, g, 64) / integrate(f, 0.0, 2.0 * PI, 64)
}

#[test]
fn dyson_motion_preserves_its_invariant_ensemble() {
    // κ = 2, b = 2 leaves ∏ sin⁴ invariant; start there by rejection
    let paths = 2_000u64;
    let gaps: Vec<f64> = (0..paths)
        .map(|i| {
            let mut rng = stream_rng(17, i);
            let g = loop {
                let g = rng.random_range(0.0..2.0 * PI);
                if rng.random::<f64>() < (g / 2.0).sin().powi(4) {
                    break g;
                }
            };
            let p = simulate_dbm(2, 2.0, 2.0, &[0.3, 0.3 + g], 1.0, 1e-3, &mut rng).unwrap();
            first_gap(p.last())
        })
        .collect();
    let ks = ks_statistic(&gaps, gap_cdf_beta4);
    assert!(ks < ks_critical(0.01, paths as usize, None), "ks {ks}");
}

#[test]
fn coe_start_relaxes_away_from_coe_at_kappa_two() {
    let paths = 2_000u64;
    let (mut start, mut end) = (Vec::new(), Vec::new());
    for i in 0..paths {
        let p = dbm_with_coe_start(2, 2.0, 1.0, 1e-3, &mut stream_rng(23, i)).unwrap();
        start.push(first_gap(p.at(0)));
        end.push(first_gap(p.last()));
    }
    let crit = ks_critical(0.01, paths as usize, None);
    assert!(ks_statistic(&start, coe_gap_cdf_n2) < crit);
    assert!(ks_statistic(&end, gap_cdf_beta4) < crit);
}
