//! Declarative JSON scenarios: schema, validation, study dispatch and
//! deterministic CSV/manifest output.
//!
//! Frequencies are in units of the cavity decay rate, lengths in emitter
//! wavelengths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::fluctuations::{
    build_fluctuation_system, detected_correlations_finite_t, detected_means, detected_point, detected_statistics,
    intracavity_quadratures, solve_lyapunov, FiniteTOptions, SpectrumMatrix,
};
use crate::freespace::{exciton_energy, exciton_state, plane_grid, plane_integral, radiation_intensity};
use crate::greens::{coupling_kernels, CouplingKernels, EmitterEnsemble, Orientation};
use crate::kerr::{fit_kerr_rows, kerr_distance_row, kerr_scaling_row};
use crate::oracle::{free_decay_evolution, logarithmic_negativity, single_excitation_state, steady_state, EvolveOptions};
use crate::steadystate::{
    cooperativity_row, fit_rows, match_cavity, response_at, solve_classical, solve_classical_full, CavitySystem, ChainSpec,
    Symmetry, FIT_MIN_N,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
}

impl ScenarioError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            ScenarioError::Schema(_) | ScenarioError::Io { .. } => 1,
            ScenarioError::Numerical(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, ScenarioError>;

fn schema(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    ResponseScan,
    DetectedStats,
    CooperativityScan,
    KerrScan,
    RadiationMap,
    FreeDecay,
    OracleCheck,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::ResponseScan,
        Study::DetectedStats,
        Study::CooperativityScan,
        Study::KerrScan,
        Study::RadiationMap,
        Study::FreeDecay,
        Study::OracleCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::ResponseScan => "response_scan",
            Study::DetectedStats => "detected_stats",
            Study::CooperativityScan => "cooperativity_scan",
            Study::KerrScan => "kerr_scan",
            Study::RadiationMap => "radiation_map",
            Study::FreeDecay => "free_decay",
            Study::OracleCheck => "oracle_check",
        }
    }

    pub fn summary(&self) -> &'static str {
        match self {
            Study::ResponseScan => "linear transmission/reflection and emitter phase against laser detuning",
            Study::DetectedStats => "detected quadrature variances, photon number and g2 against detuning",
            Study::CooperativityScan => "matched effective cooperativity against chain length",
            Study::KerrScan => "Kerr magnitude against chain length or emitter spacing",
            Study::RadiationMap => "free-space intensity map of an exciton state on a plane",
            Study::FreeDecay => "free decay of an exciton state with site negativities",
            Study::OracleCheck => "master-equation steady state against the linearized solution",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub n: Option<usize>,
    pub d: Option<f64>,
    #[serde(default)]
    pub orientation: Orientation,
    pub positions: Option<Vec<[f64; 3]>>,
    pub dipole: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    #[serde(default = "one")]
    pub kappa_a: f64,
    #[serde(default = "one")]
    pub kappa_b: f64,
    pub gamma: f64,
    pub g: Option<f64>,
    pub g_vector: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: f64,
    /// Fixed cavity-emitter offset added to the emitter detuning.
    #[serde(default)]
    pub emitter_offset: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Delta,
    N,
    D,
    T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub axis: Axis,
    pub range: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub log: bool,
}

impl Scan {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.values {
            if v.is_empty() {
                return Err(schema("scan.values must be nonempty"));
            }
            return Ok(v.clone());
        }
        let [lo, hi] = self.range.ok_or_else(|| schema("scan.range or scan.values is required"))?;
        let pts = self.points.ok_or_else(|| schema("scan.points is required with scan.range"))?;
        if pts < 2 {
            return Err(schema("scan.points must be at least 2"));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(schema("scan.range must be a finite nonempty interval"));
        }
        if self.log && lo <= 0.0 {
            return Err(schema("scan.range must be positive for a log scan"));
        }
        Ok((0..pts)
            .map(|k| {
                let f = k as f64 / (pts - 1) as f64;
                if self.log {
                    (lo.ln() + f * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + f * (hi - lo)
                }
            })
            .collect())
    }

    fn integer_grid(&self) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = Vec::new();
        for v in self.grid()? {
            if !(v >= 1.0) {
                return Err(schema("scan over n needs values >= 1"));
            }
            let n = v.round() as usize;
            if out.last() != Some(&n) {
                out.push(n);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub t: f64,
    #[serde(default)]
    pub finite_window: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Cavity and emitters at the configured offset.
    #[default]
    None,
    /// Cavity matched to exciton `m` of the chain.
    Collective(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plane {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub exciton: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for Output {
    fn default() -> Self {
        Self { directory: default_dir(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub study: Study,
    #[serde(default)]
    pub geometry: Geometry,
    pub rates: Rates,
    pub scan: Option<Scan>,
    pub detection: Option<Detection>,
    /// Cavity matching; Kerr chain scans match unless this is `"none"`.
    pub matching: Option<Matching>,
    /// Coupling pattern for single-configuration studies.
    pub coupling: Option<Symmetry>,
    /// Patterns compared in chain-length and spacing scans.
    pub symmetries: Option<Vec<Symmetry>>,
    pub plane: Option<Plane>,
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub output: Output,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    fn scan_axis(&self, allowed: &[Axis]) -> Result<&Scan> {
        let scan = self.scan.as_ref().ok_or_else(|| schema(format!("study {} requires scan", self.study.name())))?;
        if !allowed.contains(&scan.axis) {
            return Err(schema(format!("scan.axis {:?} not valid for study {}", scan.axis, self.study.name())));
        }
        scan.grid()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rates;
        for (name, v) in [("rates.kappa_a", r.kappa_a), ("rates.kappa_b", r.kappa_b), ("rates.gamma", r.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(format!("{name} must be positive")));
            }
        }
        if !(r.eta >= 0.0 && r.eta.is_finite()) {
            return Err(schema("rates.eta must be non-negative"));
        }
        if r.g.is_some() && r.g_vector.is_some() {
            return Err(schema("give rates.g or rates.g_vector, not both"));
        }
        let g = &self.geometry;
        match (&g.positions, g.n, g.d) {
            (Some(_), None, None) => {}
            (None, Some(_), Some(d)) if d > 0.0 => {}
            (None, Some(_), Some(_)) => return Err(schema("geometry.d must be positive")),
            (None, _, None) if matches!(self.scan.as_ref().map(|s| s.axis), Some(Axis::D)) => {}
            (None, Some(_), None) if self.study == Study::CooperativityScan || self.study == Study::KerrScan => {}
            _ => return Err(schema("geometry needs either n and d or positions")),
        }
        if let Some(n) = self.fixed_n() {
            if let Some(v) = &r.g_vector {
                if v.len() != n {
                    return Err(schema(format!("rates.g_vector has {} entries for {n} emitters", v.len())));
                }
            }
        }
        let need_g = || if r.g.is_none() && r.g_vector.is_none() { Err(schema("rates.g is required")) } else { Ok(()) };
        match self.study {
            Study::ResponseScan => {
                need_g()?;
                self.scan_axis(&[Axis::Delta])?;
            }
            Study::DetectedStats => {
                need_g()?;
                self.scan_axis(&[Axis::Delta])?;
                let det = self.detection.ok_or_else(|| schema("study detected_stats requires detection"))?;
                if !(det.t > 0.0) {
                    return Err(schema("detection.t must be positive"));
                }
            }
            Study::CooperativityScan => {
                r.g.ok_or_else(|| schema("rates.g is required"))?;
                self.scan_axis(&[Axis::N])?.integer_grid()?;
                self.symmetry_list()?;
                if g.d.is_none() {
                    return Err(schema("geometry.d is required"));
                }
            }
            Study::KerrScan => {
                r.g.ok_or_else(|| schema("rates.g is required"))?;
                let scan = self.scan_axis(&[Axis::N, Axis::D])?;
                if scan.axis == Axis::N {
                    scan.integer_grid()?;
                    if g.d.is_none() {
                        return Err(schema("geometry.d is required"));
                    }
                } else if scan.grid()?.iter().any(|&d| !(d > 0.0)) {
                    return Err(schema("scan over d needs positive spacings"));
                }
                self.symmetry_list()?;
                if !(r.eta > 0.0) {
                    return Err(schema("rates.eta must be positive for a Kerr scan"));
                }
            }
            Study::RadiationMap => {
                let p = self.plane.ok_or_else(|| schema("study radiation_map requires plane"))?;
                if p.nx < 2 || p.ny < 2 || !(p.x[0] < p.x[1]) || !(p.y[0] < p.y[1]) {
                    return Err(schema("plane needs nx, ny >= 2 and nonempty ranges"));
                }
                self.exciton_index()?;
            }
            Study::FreeDecay => {
                self.scan_axis(&[Axis::T])?;
                if self.scan.as_ref().unwrap().grid()?.iter().any(|&t| t < 0.0) {
                    return Err(schema("scan over t needs non-negative times"));
                }
                self.exciton_index()?;
            }
            Study::OracleCheck => {
                need_g()?;
                self.scan_axis(&[Axis::Delta])?;
                if self.fixed_n().unwrap_or(0) > crate::oracle::MAX_EMITTERS_WITH_CAVITY {
                    return Err(schema("oracle_check supports at most 3 emitters"));
                }
            }
        }
        Ok(())
    }

    fn fixed_n(&self) -> Option<usize> {
        self.geometry.positions.as_ref().map(|p| p.len()).or(self.geometry.n)
    }

    fn exciton_index(&self) -> Result<usize> {
        let m = self.state.ok_or_else(|| schema(format!("study {} requires state", self.study.name())))?.exciton;
        let n = self.fixed_n().ok_or_else(|| schema("geometry.n is required"))?;
        if m == 0 || m > n {
            return Err(schema(format!("state.exciton must be in 1..={n}")));
        }
        Ok(m)
    }

    fn symmetry_list(&self) -> Result<Vec<Symmetry>> {
        match &self.symmetries {
            Some(v) if !v.is_empty() => Ok(v.clone()),
            Some(_) => Err(schema("symmetries must be nonempty")),
            None => Ok(vec![self.coupling.unwrap_or(Symmetry::Symmetric)]),
        }
    }

    fn ensemble(&self) -> Result<EmitterEnsemble> {
        let g = &self.geometry;
        let ens = match &g.positions {
            Some(p) => {
                let dipole = g.dipole.map(Vector3::from).unwrap_or_else(Vector3::y);
                EmitterEnsemble::new(p.iter().map(|v| Vector3::from(*v)).collect(), dipole, self.rates.gamma, 2.0 * std::f64::consts::PI)
            }
            None => EmitterEnsemble::chain(g.n.unwrap_or(0), g.d.unwrap_or(1.0), g.orientation, self.rates.gamma),
        };
        ens.map_err(|e| schema(format!("geometry: {e}")))
    }

    fn kernels(&self) -> Result<CouplingKernels> {
        let ens = self.ensemble()?;
        if self.coupling == Some(Symmetry::Independent) {
            return Ok(CouplingKernels::independent(ens.len(), self.rates.gamma));
        }
        Ok(coupling_kernels(&ens)?)
    }

    fn chain_spec(&self) -> ChainSpec {
        ChainSpec {
            d: self.geometry.d.unwrap_or(1.0),
            orientation: self.geometry.orientation,
            gamma: self.rates.gamma,
            kappa: self.rates.kappa_a,
            g: self.rates.g.unwrap_or(0.0),
        }
    }

    /// The configured cavity system at zero laser detuning, plus the
    /// cavity-emitter offset selected by the matching mode.
    pub fn base_system(&self) -> Result<(CavitySystem, f64)> {
        let kernels = self.kernels()?;
        let n = kernels.len();
        let g = match (&self.rates.g_vector, self.rates.g) {
            (Some(v), _) => DVector::from_vec(v.clone()),
            (None, Some(g)) => self.coupling.unwrap_or(Symmetry::Symmetric).coupling(n, g),
            (None, None) => DVector::zeros(n),
        };
        let r = &self.rates;
        let sys = CavitySystem::new(r.kappa_a, r.kappa_b, 0.0, r.emitter_offset, r.eta, g, kernels)?;
        let offset = match self.matching.unwrap_or_default() {
            Matching::None => r.emitter_offset,
            Matching::Collective(m) => {
                if m == 0 || m > n {
                    return Err(schema(format!("matching.collective must be in 1..={n}")));
                }
                let omega12 = if n > 1 { sys.kernels.omega[(0, 1)] } else { 0.0 };
                match_cavity(&sys, 0.0, exciton_energy(n, m, 0.0, omega12)?)?
            }
        };
        Ok((sys.with_detunings(0.0, offset), offset))
    }
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e15)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub report: Value,
}

impl StudyOutput {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| match &r[k] {
                Cell::Num(v) => Some(*v),
                Cell::Int(v) => Some(*v as f64),
                _ => None,
            })
            .collect()
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn par_map<T, U, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    pool.install(|| items.par_iter().map(&f).collect())
}

fn response_scan(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let (sys, offset) = sc.base_system()?;
    let grid = sc.scan.as_ref().unwrap().grid()?;
    let rows = par_map(pool, &grid, |&d| Ok(response_at(&sys.with_detunings(d, d + offset))?))?;
    let rows = rows
        .into_iter()
        .zip(&grid)
        .map(|(r, &d)| {
            vec![
                Cell::Num(d),
                Cell::Num(r.t_c.re),
                Cell::Num(r.t_c.im),
                Cell::Num(r.t_c.norm_sqr()),
                Cell::Num(r.r_c.norm_sqr()),
                Cell::Num(r.abs_s2),
                Cell::Num(r.phi),
                Cell::Num(r.phi_emitter),
            ]
        })
        .collect();
    Ok(StudyOutput {
        header: header(&["delta", "t_re", "t_im", "t_abs2", "r_abs2", "s_abs2", "phi", "phi_emitter"]),
        rows,
        report: json!({ "emitter_offset": offset }),
    })
}

fn detected_stats(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let (sys, offset) = sc.base_system()?;
    let det = sc.detection.unwrap();
    let grid = sc.scan.as_ref().unwrap().grid()?;
    let rows = par_map(pool, &grid, |&d| {
        let s = sys.with_detunings(d, d + offset);
        let st = solve_classical_full(&s)?;
        let (mut stats, ok) = detected_point(&s, &st, det.t)?;
        if det.finite_window {
            let fs = build_fluctuation_system(&s, &st)?;
            let corr = detected_correlations_finite_t(&fs, det.t, FiniteTOptions::default())?;
            let (b, a) = detected_means(&s, &st, det.t);
            stats = detected_statistics(&SpectrumMatrix { s: corr, omega: 0.0 }, b, a, det.t)?;
        }
        Ok(vec![
            Cell::Num(d),
            Cell::Num(stats.mean_amp_t.norm()),
            Cell::Num(stats.var_x),
            Cell::Num(stats.var_y),
            Cell::Num(stats.n_det),
            Cell::Num(stats.var_n),
            Cell::Num(stats.var_n_closed),
            Cell::Num(stats.g2),
            Cell::Flag(ok),
        ])
    })?;
    Ok(StudyOutput {
        header: header(&["delta", "mean_b_abs", "var_x", "var_y", "n_det", "var_n", "var_n_closed", "g2", "window_ok"]),
        rows,
        report: json!({ "emitter_offset": offset, "t_window": det.t, "finite_window": det.finite_window }),
    })
}

fn cooperativity_scan(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let spec = sc.chain_spec();
    let ns = sc.scan.as_ref().unwrap().integer_grid()?;
    let mut rows = Vec::new();
    let mut fits = serde_json::Map::new();
    for sym in sc.symmetry_list()? {
        let part = par_map(pool, &ns, |&n| Ok(cooperativity_row(&spec, n, sym)?))?;
        fits.insert(sym.tag().into(), json!({ "exponent": fit_rows(&part), "fit_min_n": FIT_MIN_N }));
        for r in part {
            rows.push(vec![Cell::Text(sym.tag().into()), Cell::Int(r.n), Cell::Num(r.c_eff), Cell::Num(r.gamma_eff), Cell::Num(r.shift)]);
        }
    }
    Ok(StudyOutput {
        header: header(&["symmetry", "n", "c_eff", "gamma_eff", "shift"]),
        rows,
        report: json!({ "fits": fits }),
    })
}

fn kerr_scan(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let spec = sc.chain_spec();
    let scan = sc.scan.as_ref().unwrap();
    let eta = sc.rates.eta;
    let matched = sc.matching != Some(Matching::None);
    let mut rows = Vec::new();
    let mut fits = serde_json::Map::new();
    for sym in sc.symmetry_list()? {
        let part = if scan.axis == Axis::N {
            let ns = scan.integer_grid()?;
            let part = par_map(pool, &ns, |&n| Ok(kerr_scaling_row(&spec, n, sym, eta, matched)?))?;
            let top = ns.last().copied().unwrap_or(1);
            fits.insert(
                sym.tag().into(),
                json!({
                    "exponent": fit_kerr_rows(&part, FIT_MIN_N, usize::MAX),
                    "fit_min_n": FIT_MIN_N,
                    "exponent_tail": fit_kerr_rows(&part, (top / 5).max(FIT_MIN_N), top),
                    "tail_min_n": (top / 5).max(FIT_MIN_N),
                }),
            );
            part
        } else {
            par_map(pool, &scan.grid()?, |&d| Ok(kerr_distance_row(&spec, d, sym, eta)?))?
        };
        for r in part {
            rows.push(vec![
                Cell::Num(r.x),
                Cell::Num(r.norm_beta3),
                Cell::Num(r.t_lin_abs2),
                Cell::Num(r.t_nl_abs2),
                Cell::Text(sym.tag().into()),
            ]);
        }
    }
    let x = if scan.axis == Axis::N { "n" } else { "d" };
    Ok(StudyOutput {
        header: header(&[x, "norm_beta3", "t_lin_abs2", "t_nl_abs2", "symmetry"]),
        rows,
        report: json!({ "fits": fits, "matched": matched }),
    })
}

fn radiation_map(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let ens = sc.ensemble()?;
    let p = sc.plane.unwrap();
    let m = sc.exciton_index()?;
    let state = exciton_state(ens.len(), m)?;
    let grid = plane_grid((p.x[0], p.x[1]), (p.y[0], p.y[1]), p.nx, p.ny, p.z);
    let coh = state.coherence();
    let chunks: Vec<&[Vector3<f64>]> = grid.chunks(p.nx).collect();
    let parts = par_map(pool, &chunks, |pts| Ok(radiation_intensity(&ens, &coh, pts)?))?;
    let mut map = parts[0].clone();
    for part in &parts[1..] {
        map.points.extend_from_slice(&part.points);
        map.intensity.extend_from_slice(&part.intensity);
    }
    let scale = map.max();
    let integral = plane_integral(&map, (p.x[0], p.x[1]), (p.y[0], p.y[1]), p.nx, p.ny);
    let rows = map
        .points
        .iter()
        .zip(&map.intensity)
        .map(|(pt, v)| {
            vec![
                Cell::Num(pt[0]),
                Cell::Num(pt[1]),
                match v {
                    Some(v) if scale > 0.0 => Cell::Num(v / scale),
                    Some(v) => Cell::Num(*v),
                    None => Cell::Text("nan".into()),
                },
            ]
        })
        .collect();
    Ok(StudyOutput {
        header: header(&["x", "y", "intensity"]),
        rows,
        report: json!({
            "normalization": "divided by the grid maximum; raw values omit the (3 gamma / 4 mu)^2 prefactor",
            "raw_max": scale,
            "raw_plane_integral": integral,
            "skipped_points": map.skipped(),
            "state": { "n": ens.len(), "exciton": m, "coeffs": state.coeffs },
            "plane": p,
        }),
    })
}

fn free_decay(sc: &Scenario, _pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let kernels = sc.kernels()?;
    let n = kernels.len();
    let m = sc.exciton_index()?;
    let mut times = sc.scan.as_ref().unwrap().grid()?;
    times.sort_by(f64::total_cmp);
    let init = single_excitation_state(&exciton_state(n, m)?.coeffs);
    let states = free_decay_evolution(&kernels, &init, &times, None)?;
    let mut rows = Vec::new();
    for s in &states {
        let rho = s.emitter_state();
        let mut row = vec![Cell::Num(s.time), Cell::Num(s.total_excitation())];
        for j in 0..n {
            let e = if n > 1 { logarithmic_negativity(&rho, n, &[j])? } else { 0.0 };
            row.push(Cell::Num(e));
        }
        rows.push(row);
    }
    let mut cols = vec!["t".to_string(), "population".to_string()];
    cols.extend((0..n).map(|j| format!("negativity_{j}")));
    Ok(StudyOutput { header: cols, rows, report: json!({ "exciton": m, "n": n }) })
}

fn oracle_check(sc: &Scenario, pool: &rayon::ThreadPool) -> Result<StudyOutput> {
    let (sys, offset) = sc.base_system()?;
    let grid = sc.scan.as_ref().unwrap().grid()?;
    let rows = par_map(pool, &grid, |&d| {
        let s = sys.with_detunings(d, d + offset);
        let cl = solve_classical(&s)?;
        let full = solve_classical_full(&s)?;
        let fs = build_fluctuation_system(&s, &full)?;
        let v = solve_lyapunov(&fs.m, &fs.d)?;
        let (lx, ly) = intracavity_quadratures(&v);
        let ora = steady_state(&s, 6, EvolveOptions::default())?;
        let a = ora.cavity_amplitude();
        let alpha_err = (a - cl.alpha).norm() / cl.alpha.norm().max(f64::MIN_POSITIVE);
        let beta_err = (0..s.n())
            .map(|j| (ora.emitter_amplitude(j) - cl.beta[j]).norm() / cl.beta[j].norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let (ox, oy) = ora.cavity_quadratures();
        let same_sign = (lx < ly) == (ox < oy);
        Ok(vec![
            Cell::Num(d),
            Cell::Num(a.re),
            Cell::Num(a.im),
            Cell::Num(cl.alpha.re),
            Cell::Num(cl.alpha.im),
            Cell::Num(alpha_err),
            Cell::Num(beta_err),
            Cell::Num(ox),
            Cell::Num(oy),
            Cell::Num(lx),
            Cell::Num(ly),
            Cell::Flag(same_sign),
            Cell::Flag(ora.converged),
        ])
    })?;
    Ok(StudyOutput {
        header: header(&[
            "delta",
            "alpha_oracle_re",
            "alpha_oracle_im",
            "alpha_lin_re",
            "alpha_lin_im",
            "alpha_rel_err",
            "beta_rel_err",
            "var_x_oracle",
            "var_y_oracle",
            "var_x_lin",
            "var_y_lin",
            "squeezing_match",
            "converged",
        ]),
        rows,
        report: json!({ "emitter_offset": offset }),
    })
}

/// Evaluate a validated scenario with `workers` threads (0 picks the rayon default).
pub fn run_study(sc: &Scenario, workers: usize) -> Result<StudyOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| schema(format!("worker pool: {e}")))?;
    match sc.study {
        Study::ResponseScan => response_scan(sc, &pool),
        Study::DetectedStats => detected_stats(sc, &pool),
        Study::CooperativityScan => cooperativity_scan(sc, &pool),
        Study::KerrScan => kerr_scan(sc, &pool),
        Study::RadiationMap => radiation_map(sc, &pool),
        Study::FreeDecay => free_decay(sc, &pool),
        Study::OracleCheck => oracle_check(sc, &pool),
    }
}

/// Run a scenario and write `<study>.csv` and `manifest.json` under `out`.
/// Returns the written paths.
pub fn run_to_dir(sc: &Scenario, out: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let result = run_study(sc, workers)?;
    std::fs::create_dir_all(out).map_err(|source| ScenarioError::Io { path: out.into(), source })?;
    let write = |path: PathBuf, text: String| -> Result<PathBuf> {
        std::fs::write(&path, text).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
        Ok(path)
    };
    let mut written = Vec::new();
    let csv_name = format!("{}.csv", sc.study.name());
    if sc.output.formats.iter().any(|f| f == "csv") {
        written.push(write(out.join(&csv_name), result.to_csv())?);
    }
    let manifest = json!({
        "library": env!("CARGO_PKG_NAME"),
        "library_version": env!("CARGO_PKG_VERSION"),
        "study": sc.study.name(),
        "scenario": sc,
        "rows": result.rows.len(),
        "columns": result.header,
        "report": result.report,
        "files": [csv_name],
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| schema(e.to_string()))?;
    written.push(write(out.join("manifest.json"), text + "\n")?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"{
        "study": "detected_stats",
        "geometry": { "n": 1, "d": 1.0 },
        "rates": { "gamma": 0.05, "g": 0.2, "eta": 0.05 },
        "scan": { "axis": "delta", "range": [-0.3, 0.3], "points": 5 },
        "detection": { "t": 1000 }
    }"#;

    #[test]
    fn parses_and_runs() {
        let sc = Scenario::from_json(FIG3).unwrap();
        let out = run_study(&sc, 2).unwrap();
        assert_eq!(out.rows.len(), 5);
        assert!(out.to_csv().starts_with("delta,mean_b_abs,var_x"));
    }

    #[test]
    fn missing_field_is_named() {
        let bad = FIG3.replace("\"gamma\": 0.05,", "");
        let err = Scenario::from_json(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn rejects_short_scans() {
        let bad = FIG3.replace("\"points\": 5", "\"points\": 1");
        assert!(Scenario::from_json(&bad).unwrap_err().to_string().contains("scan.points"));
        let empty = FIG3.replace("[-0.3, 0.3]", "[0.3, 0.3]");
        assert!(Scenario::from_json(&empty).is_err());
        let no_det = FIG3.replace(",\n        \"detection\": { \"t\": 1000 }", "");
        assert!(Scenario::from_json(&no_det).unwrap_err().to_string().contains("detection"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = FIG3.replace("\"eta\": 0.05", "\"eta\": 0.05, \"etta\": 1");
        assert!(Scenario::from_json(&bad).unwrap_err().to_string().contains("etta"));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let sc = Scenario::from_json(FIG3).unwrap();
        assert_eq!(run_study(&sc, 1).unwrap(), run_study(&sc, 4).unwrap());
    }

    #[test]
    fn numerical_failure_has_exit_code_two() {
        let strong = FIG3.replace("\"eta\": 0.05", "\"eta\": 5.0");
        let sc = Scenario::from_json(&strong).unwrap();
        assert_eq!(run_study(&sc, 1).unwrap_err().exit_code(), 2);
    }
}
