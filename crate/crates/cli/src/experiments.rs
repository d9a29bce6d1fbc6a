//! The registered experiments. Each takes a resolved config and returns a
//! table plus a JSON summary; nothing here touches the filesystem.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde_json::json;
use ustwind::continuum::{annulus_det_series, hitting_gof_test, first_gap, MarkedAnnulus, GOF_MIN_SAMPLES};
use ustwind::harmonic::{loop_mass_ratio, winding_cf_exact, winding_exact};
use ustwind::loopsoup::{campbell_cf_mc, LoopSoupSampler, DEFAULT_TAIL_EPS};
use ustwind::rng::stream_rng;
use ustwind::sde::{dbm_increments, equally_spaced, gff_martingale_check, simulate_dbm, trace_points, winding_summary, GffOptions};
use ustwind::stats::{slope, MeanEstimate};
use ustwind::wilson::{winding_cf_mc, BruteForceWinding, ConditionedSampler, DEFAULT_MAX_ATTEMPTS};
use ustwind::{AnnularLattice, Complex64, Error, Site, Zipper};

use crate::config::{default_marked, sites_to_vertices, Effective, Experiment, MarkedConfig};
use crate::error::{CliError, Result};
use crate::output::{Cell, Outcome, Table, AGGREGATE_STREAM};

/// Drift constant of the Dyson process driving the curves.
pub const DBM_B: f64 = 2.0;

pub fn run(cfg: &Effective) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::VerifyFomin => verify_fomin(cfg),
        Experiment::WindingCf => winding_cf(cfg),
        Experiment::HittingStats => hitting_stats(cfg),
        Experiment::LoopSoup => loop_soup(cfg),
        Experiment::Exponents => exponents(cfg),
        Experiment::Dbm => dbm(cfg),
        Experiment::WindingVariance => winding_variance(cfg),
        Experiment::GffCheck => gff_check(cfg),
        Experiment::Trace => trace(cfg),
    }
}

fn marked_or_default(cfg: &Effective) -> MarkedConfig {
    if cfg.marked.inner_angles.is_empty() {
        default_marked(cfg.n)
    } else {
        cfg.marked.clone()
    }
}

// ---------------------------------------------------------------- exact

/// Marked-point sets on the 5x5-minus-centre lattice, as `(xs, vs)` sites.
pub fn oracle_cases(odd: bool) -> Vec<(Vec<Site>, Vec<Site>)> {
    if odd {
        vec![
            (vec![(1, 0)], vec![(-2, 1)]),
            (vec![(0, -1)], vec![(2, 1)]),
            (vec![(0, 1), (-1, 0), (0, -1)], vec![(0, 2), (-2, 0), (1, -2)]),
            (vec![(1, 0), (0, 1), (-1, 0)], vec![(2, -1), (1, 2), (-2, 0)]),
        ]
    } else {
        vec![
            (vec![(1, 0), (-1, 0)], vec![(1, 2), (-2, -1)]),
            (vec![(0, 1), (0, -1)], vec![(-1, 2), (1, -2)]),
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FominRow {
    pub case: usize,
    pub n: usize,
    pub beta: f64,
    pub exact: Complex64,
    pub brute: Complex64,
    pub prob_exact: f64,
    pub prob_brute: f64,
}

impl FominRow {
    pub fn cf_diff(&self) -> f64 {
        (self.exact - self.brute).norm()
    }

    pub fn prob_diff(&self) -> f64 {
        (self.prob_exact - self.prob_brute).abs()
    }
}

/// Determinant formula against exhaustive enumeration, every case and β.
pub fn fomin_rows(lattice: &AnnularLattice, zipper: &Zipper, cases: &[(Vec<usize>, Vec<usize>)], betas: &[f64]) -> Result<Vec<FominRow>> {
    let mut rows = Vec::new();
    for (case, (xs, vs)) in cases.iter().enumerate() {
        let bf = BruteForceWinding::new(lattice, zipper, xs, vs)?;
        for &beta in betas {
            let ex = winding_exact(lattice, zipper, beta, xs, vs)?;
            rows.push(FominRow {
                case,
                n: xs.len(),
                beta,
                exact: ex.cf,
                brute: bf.cf(beta)?,
                prob_exact: ex.probability,
                prob_brute: bf.probability(),
            });
        }
    }
    Ok(rows)
}

fn verify_fomin(cfg: &Effective) -> Result<Outcome> {
    let lattice = cfg.domain.build()?;
    let zipper = Zipper::default_ray(&lattice);
    let cases = if cfg.marked.is_empty() {
        let mut sites = oracle_cases(true);
        sites.extend(oracle_cases(false));
        sites
            .iter()
            .map(|(x, v)| Ok((sites_to_vertices(&lattice, x)?, sites_to_vertices(&lattice, v)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| CliError::Config(format!("default cases need the oracle lattice ({e})")))?
    } else {
        vec![(cfg.marked.resolve_inner(&lattice)?, cfg.marked.resolve_outer(&lattice)?)]
    };
    let rows = fomin_rows(&lattice, &zipper, &cases, &cfg.beta)?;
    let mut table = Table::new(cfg.seed, &["case", "n", "beta", "exact_re", "exact_im", "brute_re", "brute_im", "abs_diff", "prob_exact", "prob_brute"]);
    for r in &rows {
        table.push(
            0,
            vec![
                r.case.into(),
                r.n.into(),
                r.beta.into(),
                r.exact.re.into(),
                r.exact.im.into(),
                r.brute.re.into(),
                r.brute.im.into(),
                r.cf_diff().into(),
                r.prob_exact.into(),
                r.prob_brute.into(),
            ],
        );
    }
    let max_diff = rows.iter().map(FominRow::cf_diff).fold(0.0, f64::max);
    let max_prob = rows.iter().map(FominRow::prob_diff).fold(0.0, f64::max);
    let tol = cfg.tolerance.exact;
    let pass = max_diff <= tol && max_prob <= tol;
    let summary = json!({ "max_abs_diff": max_diff, "max_probability_diff": max_prob, "tolerance": tol, "pass": pass });
    let failure = (!pass).then(|| format!("max |diff| {max_diff:e} (probability {max_prob:e}) exceeds {tol:e}"));
    Ok(Outcome { table, summary, failure })
}

/// Continuum annulus with `x_j = v_j = phase + 2πj/n`.
pub fn aligned_annulus(n: usize, r: f64, phase: f64) -> Result<MarkedAnnulus> {
    let args: Vec<f64> = (0..n).map(|j| phase + 2.0 * PI * j as f64 / n as f64).collect();
    Ok(MarkedAnnulus::new(r, args.clone(), args)?)
}

/// Phase offset making the even-n winding determinant real and positive.
pub fn parity_shift(n: usize) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        0.5
    }
}

/// Fitted decay exponents and the `(|S(β)|, |S(β + s)/S(s)|)` values per radius.
pub struct SeriesFit {
    pub decay: f64,
    pub parity: f64,
    pub points: Vec<(f64, f64)>,
}

/// Slope of `log |S(β)|` and of `log |S(β + s)/S(s)|` against `log r`.
pub fn series_exponents(marked: &MarkedAnnulus, beta_turns: f64, radii: &[f64]) -> Result<SeriesFit> {
    let s = parity_shift(marked.n());
    let mut pts = Vec::with_capacity(radii.len());
    for &r in radii {
        let m = marked.with_r(r)?;
        let det = annulus_det_series(&m, beta_turns, None)?.norm();
        let ratio = (annulus_det_series(&m, beta_turns + s, None)? / annulus_det_series(&m, s, None)?).norm();
        pts.push((det, ratio));
    }
    let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let det_exp = slope(&lr, &pts.iter().map(|p| p.0.ln()).collect::<Vec<_>>());
    let ratio_exp = slope(&lr, &pts.iter().map(|p| p.1.ln()).collect::<Vec<_>>());
    Ok(SeriesFit { decay: det_exp, parity: ratio_exp, points: pts })
}

fn exponents(cfg: &Effective) -> Result<Outcome> {
    let configs: Vec<MarkedAnnulus> = if cfg.marked.inner_angles.is_empty() {
        (1..=cfg.n).map(|n| aligned_annulus(n, cfg.radii[0], 0.4)).collect::<Result<_>>()?
    } else {
        let outer: Vec<f64> = cfg.marked.outer_arcs.iter().map(|[a, b]| (a + b) / 2.0).collect();
        if outer.len() != cfg.marked.inner_angles.len() {
            return Err(CliError::Config("exponents needs an outer arc for every inner angle".into()));
        }
        vec![MarkedAnnulus::new(cfg.radii[0], cfg.marked.inner_angles.clone(), outer).map_err(|e| CliError::Config(e.to_string()))?]
    };
    let mut table = Table::new(cfg.seed, &["n", "beta_turns", "r", "det_abs", "parity_ratio"]);
    let mut fits = Vec::new();
    for m in &configs {
        for &beta in &cfg.beta {
            let fit = series_exponents(m, beta, &cfg.radii)?;
            for (&r, &(det, ratio)) in cfg.radii.iter().zip(&fit.points) {
                table.push(0, vec![m.n().into(), beta.into(), r.into(), det.into(), ratio.into()]);
            }
            fits.push(json!({ "n": m.n(), "beta_turns": beta, "decay_exponent": fit.decay, "parity_exponent": fit.parity }));
        }
    }
    Ok(Outcome { table, summary: json!({ "fits": fits }), failure: None })
}

// ---------------------------------------------------------------- lattice MC

fn winding_cf(cfg: &Effective) -> Result<Outcome> {
    let lattice = cfg.domain.build()?;
    let zipper = Zipper::default_ray(&lattice);
    let marked = marked_or_default(cfg);
    if marked.outer_arcs.is_empty() {
        return Err(CliError::Config("winding-cf needs outer arcs".into()));
    }
    let xs = marked.resolve_inner(&lattice)?;
    let vs = marked.resolve_outer(&lattice)?;
    let probability = winding_exact(&lattice, &zipper, 0.0, &xs, &vs)?.probability;
    let est: Vec<_> = cfg
        .beta
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| {
            let mc = winding_cf_mc(&lattice, &zipper, beta, &xs, Some(&vs), cfg.samples, &mut stream_rng(cfg.seed, i as u64))?;
            let exact = winding_cf_exact(&lattice, &zipper, beta, &xs, &vs)?;
            Ok::<_, Error>((mc, exact))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut table = Table::new(
        cfg.seed,
        &["beta", "mc_re", "mc_im", "mc_stderr_re", "mc_stderr_im", "exact_re", "exact_im", "accepted", "attempts"],
    );
    let mut max_z = 0.0f64;
    for (i, (&beta, (mc, exact))) in cfg.beta.iter().zip(&est).enumerate() {
        max_z = max_z.max(z_score(mc.mean.re, exact.re, mc.stderr.0)).max(z_score(mc.mean.im, exact.im, mc.stderr.1));
        table.push(
            i as i64,
            vec![
                beta.into(),
                mc.mean.re.into(),
                mc.mean.im.into(),
                mc.stderr.0.into(),
                mc.stderr.1.into(),
                exact.re.into(),
                exact.im.into(),
                mc.accepted.into(),
                mc.attempts.into(),
            ],
        );
    }
    let summary = json!({ "event_probability": probability, "max_z_score": max_z, "within_sigmas": max_z <= cfg.tolerance.sigmas });
    Ok(Outcome { table, summary, failure: None })
}

/// `|mc − exact| / stderr`, treating a vanishing stderr as exact agreement
/// only when the values coincide.
pub fn z_score(mc: f64, exact: f64, stderr: f64) -> f64 {
    let d = (mc - exact).abs();
    if stderr > 0.0 {
        d / stderr
    } else if d < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// One accepted hitting sample per stream: outer endpoint angles (in the
/// order of `xs`) and the number of attempts it took.
pub fn hitting_samples(lattice: &AnnularLattice, xs: &[usize], count: usize, seed: u64) -> Result<Vec<(Vec<f64>, u64)>> {
    ConditionedSampler::new(lattice, xs)?;
    (0..count)
        .into_par_iter()
        .map_init(
            || ConditionedSampler::new(lattice, xs).expect("validated above"),
            |s, i| {
                let mut rng = stream_rng(seed, i as u64);
                for a in 1..=DEFAULT_MAX_ATTEMPTS {
                    if s.attempt(&mut rng) {
                        return Ok((s.endpoints().iter().map(|&v| lattice.angle(v)).collect(), a));
                    }
                }
                Err(CliError::Core(Error::AttemptsExhausted { attempts: DEFAULT_MAX_ATTEMPTS, accepted: i as u64 }))
            },
        )
        .collect()
}

/// Stream used for reference ensembles drawn alongside the samples.
pub const REFERENCE_STREAM: u64 = u64::MAX;

fn hitting_stats(cfg: &Effective) -> Result<Outcome> {
    let lattice = cfg.domain.build()?;
    let xs = marked_or_default(cfg).resolve_inner(&lattice)?;
    let n = xs.len();
    let samples = hitting_samples(&lattice, &xs, cfg.samples as usize, cfg.seed)?;
    let mut cols = vec!["attempts".to_owned(), "gap".to_owned()];
    cols.extend((1..=n).map(|j| format!("theta_{j}")));
    let mut table = Table::new(cfg.seed, &cols);
    for (i, (angles, attempts)) in samples.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*attempts).into(), first_gap(angles).into()];
        row.extend(angles.iter().map(|&a| Cell::Float(a)));
        table.push(i as i64, row);
    }
    let total: u64 = samples.iter().map(|s| s.1).sum();
    let mut summary = json!({ "n": n, "accepted": samples.len(), "mean_attempts": total as f64 / samples.len() as f64 });
    if samples.len() >= GOF_MIN_SAMPLES && n <= ustwind::continuum::COE_SAMPLE_MAX_N {
        let angles: Vec<Vec<f64>> = samples.into_iter().map(|s| s.0).collect();
        let gof = hitting_gof_test(&angles, n, &mut stream_rng(cfg.seed, REFERENCE_STREAM))?;
        summary["ks"] = json!(gof.ks);
        summary["ks_critical_1pct"] = json!(gof.critical);
        summary["pass"] = json!(gof.pass);
    }
    Ok(Outcome { table, summary, failure: None })
}

fn loop_soup(cfg: &Effective) -> Result<Outcome> {
    let lattice = cfg.domain.build()?;
    let zipper = Zipper::default_ray(&lattice);
    let sampler = LoopSoupSampler::new(&lattice, &zipper, None, DEFAULT_TAIL_EPS)?;
    let soups = sampler.sample_many(cfg.samples as usize, cfg.seed)?;
    let mut table = Table::new(cfg.seed, &["loops", "noncontractible", "odd_winding", "total_winding"]);
    let mut count = MeanEstimate::default();
    for (i, s) in soups.iter().enumerate() {
        count.push(s.len() as f64);
        table.push(i as i64, vec![s.len().into(), s.noncontractible_count().into(), s.odd_winding_count().into(), s.total_winding().into()]);
    }
    let mut campbell = Vec::new();
    if soups.len() >= ustwind::loopsoup::CAMPBELL_MIN_SOUPS {
        for &beta in &cfg.beta {
            let mc = campbell_cf_mc(&soups, beta)?;
            let exact = loop_mass_ratio(&lattice, &zipper, beta, 0.0)?;
            let z = z_score(mc.mean.re, exact.re, mc.stderr.0).max(z_score(mc.mean.im, exact.im, mc.stderr.1));
            campbell.push(json!({
                "beta": beta, "mc_re": mc.mean.re, "mc_im": mc.mean.im,
                "stderr_re": mc.stderr.0, "stderr_im": mc.stderr.1, "exact": exact.re, "z_score": z,
            }));
        }
    }
    let summary = json!({
        "max_len": sampler.max_len(),
        "tail_bound": sampler.tail_bound(),
        "expected_loops": sampler.expected_count(),
        "mean_loops": count.mean(),
        "campbell": campbell,
    });
    Ok(Outcome { table, summary, failure: None })
}

// ---------------------------------------------------------------- SDE

fn dbm(cfg: &Effective) -> Result<Outcome> {
    let start = equally_spaced(cfg.n);
    let paths: Vec<_> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| simulate_dbm(cfg.n, cfg.kappa, DBM_B, &start, cfg.t_end, cfg.dt, &mut stream_rng(cfg.seed, i)))
        .collect::<std::result::Result<_, _>>()?;
    let mut cols = vec!["step".to_owned(), "t".to_owned()];
    cols.extend((1..=cfg.n).map(|j| format!("theta_{j}")));
    let mut table = Table::new(cfg.seed, &cols);
    let mut sum_var = MeanEstimate::default();
    for (i, p) in paths.iter().enumerate() {
        let last = p.times.len() - 1;
        for k in (0..=last).step_by(cfg.stride).chain((last % cfg.stride != 0).then_some(last)) {
            let mut row: Vec<Cell> = vec![k.into(), p.times[k].into()];
            row.extend(p.at(k).iter().map(|&x| Cell::Float(x)));
            table.push(i as i64, row);
        }
        sum_var.push(p.last().iter().sum::<f64>() - start.iter().sum::<f64>());
    }
    let summary = json!({
        "paths": paths.len(),
        "sum_increment_mean": sum_var.mean(),
        "sum_increment_variance": if paths.len() > 1 { sum_var.variance() } else { f64::NAN },
        "predicted_sum_variance": cfg.kappa * cfg.n as f64 * cfg.t_end,
    });
    Ok(Outcome { table, summary, failure: None })
}

fn winding_variance(cfg: &Effective) -> Result<Outcome> {
    let inc = dbm_increments(cfg.kappa, DBM_B, &equally_spaced(cfg.n), cfg.t_end, cfg.dt, cfg.samples as usize, cfg.seed)?;
    let w = winding_summary(cfg.n, cfg.kappa, cfg.t_end, &inc);
    let mut cols: Vec<String> = (1..=cfg.n).map(|j| format!("w_{j}")).collect();
    cols.push("sum".into());
    let mut table = Table::new(cfg.seed, &cols);
    for (i, s) in w.samples.iter().enumerate() {
        let mut row: Vec<Cell> = s.iter().map(|&x| Cell::Float(x)).collect();
        row.push(s.iter().sum::<f64>().into());
        table.push(i as i64, row);
    }
    let n = cfg.n;
    let var_over_t: Vec<f64> = (0..n).map(|j| w.covariance[j * n + j] * cfg.kappa / n as f64).collect();
    let max_dev = w.covariance.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
    let summary = json!({
        "covariance": w.covariance,
        "max_abs_deviation_from_ones": max_dev,
        "var_theta_over_t": var_over_t,
        "predicted_var_over_t": cfg.kappa / n as f64,
    });
    Ok(Outcome { table, summary, failure: None })
}

fn gff_check(cfg: &Effective) -> Result<Outcome> {
    let z = Complex64::new(cfg.z[0], cfg.z[1]);
    let w = Complex64::new(cfg.w[0], cfg.w[1]);
    let g = gff_martingale_check(cfg.kappa, cfg.n, z, w, cfg.t_end, cfg.dt, cfg.samples as usize, cfg.seed, GffOptions::default())?;
    let mut table = Table::new(
        cfg.seed,
        &["paths", "stopped_early", "mean_drift", "drift_stderr", "mean_cross_variation", "mean_green_drop", "qv_mismatch"],
    );
    table.push(
        AGGREGATE_STREAM,
        vec![
            g.paths.into(),
            g.stopped_early.into(),
            g.mean_drift.into(),
            g.drift_stderr.into(),
            g.mean_cross_variation.into(),
            g.mean_green_drop.into(),
            g.qv_mismatch.into(),
        ],
    );
    let drift_ok = g.mean_drift.abs() < cfg.tolerance.sigmas * g.drift_stderr;
    let qv_ok = g.qv_mismatch < cfg.tolerance.relative;
    let summary = json!({ "drift_z": g.mean_drift / g.drift_stderr, "qv_mismatch": g.qv_mismatch, "drift_ok": drift_ok, "qv_ok": qv_ok });
    Ok(Outcome { table, summary, failure: None })
}

/// Start radius of the backward flow when drawing traces.
pub const TRACE_EPS: f64 = 1e-2;

fn trace(cfg: &Effective) -> Result<Outcome> {
    let path = simulate_dbm(cfg.n, cfg.kappa, DBM_B, &equally_spaced(cfg.n), cfg.t_end, cfg.dt, &mut stream_rng(cfg.seed, 0))?;
    let lines = trace_points(&path, cfg.stride, TRACE_EPS)?;
    let mut table = Table::new(cfg.seed, &["curve", "step", "t", "re", "im"]);
    for (j, line) in lines.iter().enumerate() {
        for (s, p) in line.iter().enumerate() {
            let k = s * cfg.stride;
            table.push(0, vec![(j + 1).into(), k.into(), path.times[k].into(), p.re.into(), p.im.into()]);
        }
    }
    let summary = json!({ "curves": lines.len(), "points_per_curve": lines.first().map_or(0, |l| l.len()) });
    Ok(Outcome { table, summary, failure: None })
}
