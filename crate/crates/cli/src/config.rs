//! Experiment configuration.
//!
//! A config is one JSON document. Unknown keys are rejected and every field
//! is checked by [`ExperimentConfig::validate`] before anything runs. Fields
//! left out of the `run` block take per-experiment defaults; the resolved
//! form ([`Effective`]) is what gets hashed into the manifest.

use std::f64::consts::PI;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use ustwind::{AnnularLattice, Site};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyFomin,
    WindingCf,
    HittingStats,
    LoopSoup,
    Exponents,
    Dbm,
    WindingVariance,
    GffCheck,
    Trace,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyFomin => "verify-fomin",
            Self::WindingCf => "winding-cf",
            Self::HittingStats => "hitting-stats",
            Self::LoopSoup => "loop-soup",
            Self::Exponents => "exponents",
            Self::Dbm => "dbm",
            Self::WindingVariance => "winding-variance",
            Self::GffCheck => "gff-check",
            Self::Trace => "trace",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `inner < |v| <= outer` (origin always removed).
    Disc,
    /// Square block minus a centred square block; radii are half-widths.
    #[default]
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub shape: Shape,
    pub outer_radius: f64,
    pub inner_radius: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        // the 5x5-minus-centre oracle lattice
        Self { shape: Shape::Square, outer_radius: 2.0, inner_radius: 0.0 }
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<AnnularLattice> {
        let lattice = match self.shape {
            Shape::Disc => AnnularLattice::build_annulus(self.outer_radius, self.inner_radius),
            Shape::Square => {
                if self.outer_radius.fract() != 0.0 || self.inner_radius.fract() != 0.0 {
                    return Err(CliError::Config("square domains need integer half-widths".into()));
                }
                AnnularLattice::square_annulus(self.outer_radius as i32, self.inner_radius as i32)
            }
        };
        lattice.map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Marked points given geometrically. Each inner angle picks the nearest
/// inner-boundary vertex; each outer arc `[a, b]` (radians, ccw) picks the
/// outer vertex in the arc closest to its midpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkedConfig {
    #[serde(default)]
    pub inner_angles: Vec<f64>,
    #[serde(default)]
    pub outer_arcs: Vec<[f64; 2]>,
}

impl MarkedConfig {
    pub fn is_empty(&self) -> bool {
        self.inner_angles.is_empty() && self.outer_arcs.is_empty()
    }

    pub fn resolve_inner(&self, lattice: &AnnularLattice) -> Result<Vec<usize>> {
        let cands = lattice.inner_boundary();
        let mut out = Vec::with_capacity(self.inner_angles.len());
        for &a in &self.inner_angles {
            let v = nearest(lattice, &cands, a).ok_or_else(|| CliError::Config("domain has no inner boundary".into()))?;
            if out.contains(&v) {
                return Err(CliError::Config(format!("inner angle {a} resolves to an already used vertex {:?}", lattice.site(v))));
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn resolve_outer(&self, lattice: &AnnularLattice) -> Result<Vec<usize>> {
        let outer = lattice.outer_boundary();
        let mut out = Vec::with_capacity(self.outer_arcs.len());
        for &[a, b] in &self.outer_arcs {
            let inside: Vec<usize> = outer.iter().copied().filter(|&v| (lattice.angle(v) - a).rem_euclid(2.0 * PI) <= b - a).collect();
            let v = nearest(lattice, &inside, (a + b) / 2.0)
                .ok_or_else(|| CliError::Config(format!("outer arc [{a}, {b}] contains no outer vertex")))?;
            if out.contains(&v) {
                return Err(CliError::Config(format!("outer arc [{a}, {b}] resolves to an already used vertex {:?}", lattice.site(v))));
            }
            out.push(v);
        }
        Ok(out)
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn nearest(lattice: &AnnularLattice, cands: &[usize], angle: f64) -> Option<usize> {
    cands.iter().copied().min_by(|&u, &v| {
        angular_distance(lattice.angle(u), angle).total_cmp(&angular_distance(lattice.angle(v), angle))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute tolerance for exact identities.
    pub exact: f64,
    /// Width, in standard errors, of Monte Carlo agreement bands.
    pub sigmas: f64,
    /// Relative tolerance for SDE identities.
    pub relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { exact: 1e-8, sigmas: 3.0, relative: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Lattice angles in radians; the `exponents` experiment reads them in
    /// turns (continuum convention).
    pub beta: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub n: Option<usize>,
    /// Continuum inner radii for `exponents`.
    pub radii: Option<Vec<f64>>,
    /// Output thinning for `dbm` and `trace`.
    pub stride: Option<usize>,
    /// Interior points `[re, im]` for `gff-check`.
    pub z: Option<[f64; 2]>,
    pub w: Option<[f64; 2]>,
    pub tolerance: Option<Tolerances>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub marked: MarkedConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Fully resolved run parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Effective {
    pub experiment: Experiment,
    pub domain: DomainConfig,
    pub marked: MarkedConfig,
    pub seed: u64,
    pub samples: u64,
    pub dt: f64,
    pub t_end: f64,
    pub beta: Vec<f64>,
    pub kappa: f64,
    pub n: usize,
    pub radii: Vec<f64>,
    pub stride: usize,
    pub z: [f64; 2],
    pub w: [f64; 2],
    pub tolerance: Tolerances,
    pub path: PathBuf,
    pub format: Format,
}

const LATTICE_BETAS: [f64; 4] = [0.0, 0.7, PI / 3.0, PI];
pub const MAX_N: usize = 8;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    /// Field checks that do not need the lattice.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.outer_radius.is_finite() && d.inner_radius.is_finite()) || d.inner_radius < 0.0 {
            return Err(bad("domain radii must be finite and non-negative"));
        }
        if d.outer_radius < d.inner_radius + 2.0 {
            return Err(bad("outer_radius must exceed inner_radius by at least 2"));
        }
        if self.marked.inner_angles.iter().any(|a| !a.is_finite()) {
            return Err(bad("inner angles must be finite"));
        }
        for &[a, b] in &self.marked.outer_arcs {
            if !(a.is_finite() && b.is_finite() && a < b && b - a < 2.0 * PI) {
                return Err(bad(format!("outer arc [{a}, {b}] must satisfy a < b < a + 2pi")));
            }
        }
        let m = &self.marked;
        if !m.outer_arcs.is_empty() && m.outer_arcs.len() != m.inner_angles.len() {
            return Err(bad("outer_arcs and inner_angles must have equal length"));
        }
        let r = &self.run;
        if r.samples == Some(0) {
            return Err(bad("samples must be positive"));
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt <= 1e-3) {
                return Err(bad(format!("dt must lie in (0, 1e-3], got {dt}")));
            }
        }
        if let Some(t) = r.t_end {
            positive("t_end", t)?;
        }
        if let Some(k) = r.kappa {
            positive("kappa", k)?;
        }
        if let Some(n) = r.n {
            if n == 0 || n > MAX_N {
                return Err(bad(format!("n must lie in 1..={MAX_N}, got {n}")));
            }
            if !m.inner_angles.is_empty() && m.inner_angles.len() != n {
                return Err(bad("n disagrees with the number of inner angles"));
            }
        }
        if let Some(b) = &r.beta {
            if b.is_empty() || b.iter().any(|x| !x.is_finite()) {
                return Err(bad("beta must be a non-empty list of finite numbers"));
            }
        }
        if let Some(radii) = &r.radii {
            if radii.len() < 2 || radii.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(bad("radii needs at least two values in (0, 1)"));
            }
        }
        if r.stride == Some(0) {
            return Err(bad("stride must be positive"));
        }
        for (name, p) in [("z", r.z), ("w", r.w)] {
            if let Some([x, y]) = p {
                if !(x.is_finite() && y.is_finite()) || x * x + y * y >= 1.0 {
                    return Err(bad(format!("{name} must lie in the open unit disc")));
                }
            }
        }
        if let Some(t) = r.tolerance {
            positive("tolerance.exact", t.exact)?;
            positive("tolerance.sigmas", t.sigmas)?;
            positive("tolerance.relative", t.relative)?;
        }
        Ok(())
    }

    /// Validates and fills in the per-experiment defaults.
    pub fn effective(&self, experiment: Experiment) -> Result<Effective> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(bad(format!("config is for {}, not {}", e.name(), experiment.name())));
            }
        }
        self.validate()?;
        use Experiment::*;
        let r = &self.run;
        let marked_n = (!self.marked.inner_angles.is_empty()).then_some(self.marked.inner_angles.len());
        let n = r.n.or(marked_n).unwrap_or(match experiment {
            VerifyFomin | WindingCf | HittingStats => 2,
            Exponents => 4,
            Dbm | WindingVariance | Trace => 3,
            LoopSoup | GffCheck => 2,
        });
        let samples = r.samples.unwrap_or(match experiment {
            WindingCf => 10_000,
            Dbm | Trace => 1,
            _ => 1_000,
        });
        let (t_default, dt_default) = match experiment {
            WindingVariance => (50.0, 1e-3),
            GffCheck => (0.3, 1e-4),
            Trace => (0.5, 1e-3),
            _ => (1.0, 1e-3),
        };
        let t_end = r.t_end.unwrap_or(t_default);
        if experiment == WindingVariance && t_end < ustwind::sde::WINDING_MIN_T {
            return Err(bad(format!("winding-variance needs t_end >= {}", ustwind::sde::WINDING_MIN_T)));
        }
        let beta = r.beta.clone().unwrap_or_else(|| match experiment {
            Exponents => vec![0.0, 0.3],
            _ => LATTICE_BETAS.to_vec(),
        });
        let ext = match self.output.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        Ok(Effective {
            experiment,
            domain: self.domain.clone(),
            marked: self.marked.clone(),
            seed: r.seed.unwrap_or(0),
            samples,
            dt: r.dt.unwrap_or(dt_default),
            t_end,
            beta,
            kappa: r.kappa.unwrap_or(2.0),
            n,
            radii: r.radii.clone().unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]),
            stride: r.stride.unwrap_or(10),
            z: r.z.unwrap_or([0.3, 0.0]),
            w: r.w.unwrap_or([-0.3, 0.0]),
            tolerance: r.tolerance.unwrap_or_default(),
            path: self.output.path.clone().unwrap_or_else(|| PathBuf::from(format!("{}.{ext}", experiment.name()))),
            format: self.output.format,
        })
    }
}

/// Inner angles `2πj/n` with outer arcs of width `π/n` centred on them.
pub fn default_marked(n: usize) -> MarkedConfig {
    let step = 2.0 * PI / n as f64;
    let inner_angles: Vec<f64> = (0..n).map(|j| step * j as f64).collect();
    let outer_arcs = inner_angles.iter().map(|&a| [a - step / 4.0, a + step / 4.0]).collect();
    MarkedConfig { inner_angles, outer_arcs }
}

/// Looks up lattice sites, mapping a missing site to a config error.
pub fn sites_to_vertices(lattice: &AnnularLattice, sites: &[Site]) -> Result<Vec<usize>> {
    sites.iter().map(|&s| lattice.vertex(s).ok_or_else(|| bad(format!("site {s:?} is not in the domain")))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"domain": {"outer_radius": 4, "inner_radius": 0, "colour": 1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"run": {"seeds": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "winding-cf", "run": {"seed": 3}}"#).is_ok());
    }

    #[test]
    fn defaults_depend_on_experiment() {
        let c = ExperimentConfig::default();
        let e = c.effective(Experiment::GffCheck).unwrap();
        assert_eq!((e.t_end, e.dt, e.n), (0.3, 1e-4, 2));
        let e = c.effective(Experiment::Exponents).unwrap();
        assert_eq!(e.beta, vec![0.0, 0.3]);
        assert_eq!(e.path, PathBuf::from("exponents.csv"));
    }

    #[test]
    fn invalid_fields_fail_validation() {
        let mut c = ExperimentConfig::default();
        c.run.dt = Some(0.01);
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::default();
        c.run.n = Some(3);
        c.marked.inner_angles = vec![0.0, 1.0];
        assert!(c.validate().is_err());
        let c = ExperimentConfig { experiment: Some(Experiment::Dbm), ..Default::default() };
        assert!(c.effective(Experiment::Trace).is_err());
        let mut c = ExperimentConfig::default();
        c.run.t_end = Some(5.0);
        assert!(c.effective(Experiment::WindingVariance).is_err());
    }

    #[test]
    fn marked_points_resolve_to_boundary_vertices() {
        let lattice = AnnularLattice::square_annulus(2, 0).unwrap();
        let m = MarkedConfig { inner_angles: vec![0.0, PI], outer_arcs: vec![[0.2, 0.7], [3.5, 3.8]] };
        let xs = m.resolve_inner(&lattice).unwrap();
        assert_eq!(xs.iter().map(|&v| lattice.site(v)).collect::<Vec<_>>(), vec![(1, 0), (-1, 0)]);
        let vs = m.resolve_outer(&lattice).unwrap();
        assert_eq!(vs.iter().map(|&v| lattice.site(v)).collect::<Vec<_>>(), vec![(2, 1), (-2, -1)]);
        let dup = MarkedConfig { inner_angles: vec![0.0, 0.01], outer_arcs: vec![] };
        assert!(dup.resolve_inner(&lattice).is_err());
    }
}
