//! Boundary-cell detection and the box-counting dimension estimate.
//!
//! A base initial condition and `k` perturbed copies drawn uniformly from the
//! hypercube of half-edge `epsilon` around it form a cell. The cell is a
//! boundary cell when the predicate, evaluated on the final states, does not
//! agree across all `k + 1` orbits. Regressing `ln(N_B / N)` on `ln(delta)`
//! gives the slope `alpha` and the boundary dimension `D - alpha`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{stream, Cancelled, Exec, STREAM_IC, STREAM_PERTURB};
use crate::integrate::{integrate_final, IntegrateError, IntegratorConfig, Status, Trajectory};
use crate::regression::{fit_line, RegressionError};
use crate::sysdsl::{Predicate, SystemDef};

pub use crate::ensemble::integrate_ensemble;

pub const DEFAULT_K: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum BoundaryError {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no testable cells at epsilon {epsilon:e}")]
    NoTestableCells { epsilon: f64 },
    #[error("only {usable} usable regression points (dropped epsilons {dropped:?})")]
    TooFewPoints { usable: usize, dropped: Vec<f64> },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Cancelled(#[from] Cancelled),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct AxisRange {
    pub var: String,
    pub lo: f64,
    pub hi: f64,
}

/// Axis-aligned box of initial conditions, one range per state variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct InitRegion {
    pub ranges: Vec<AxisRange>,
}

impl InitRegion {
    pub fn new(ranges: Vec<AxisRange>) -> Result<InitRegion, BoundaryError> {
        let region = InitRegion { ranges };
        region.check()?;
        Ok(region)
    }

    fn check(&self) -> Result<(), BoundaryError> {
        if self.ranges.is_empty() {
            return Err(BoundaryError::InvalidRegion("no axes".into()));
        }
        for r in &self.ranges {
            if !r.lo.is_finite() || !r.hi.is_finite() {
                return Err(BoundaryError::InvalidRegion(format!("non-finite bound on {}", r.var)));
            }
            if r.lo > r.hi {
                return Err(BoundaryError::InvalidRegion(format!("{}: lo {} > hi {}", r.var, r.lo, r.hi)));
            }
        }
        Ok(())
    }

    /// Checks bounds and that the axes match `sys.state_vars()` in order.
    pub fn validate(&self, sys: &SystemDef) -> Result<(), BoundaryError> {
        self.check()?;
        let names: Vec<&str> = self.ranges.iter().map(|r| r.var.as_str()).collect();
        if names != sys.state_vars().iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(BoundaryError::InvalidRegion(format!(
                "axes [{}] do not match state variables [{}]",
                names.join(", "),
                sys.state_vars().join(", ")
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn longest_edge(&self) -> f64 {
        self.ranges.iter().map(|r| r.hi - r.lo).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.ranges.len() && self.ranges.iter().zip(x).all(|(r, v)| r.lo <= *v && *v <= r.hi)
    }
}

/// Parses `x=-1.001..1.001, y=-1..1, z=22`.
impl FromStr for InitRegion {
    type Err = BoundaryError;

    fn from_str(s: &str) -> Result<InitRegion, BoundaryError> {
        let bad = |msg: String| BoundaryError::InvalidRegion(msg);
        let mut ranges = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (var, span) = item.split_once('=').ok_or_else(|| bad(format!("expected var=lo..hi, got '{item}'")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("bad number '{}' in '{item}'", v.trim())));
            let (lo, hi) = match span.split_once("..") {
                Some((lo, hi)) => (num(lo)?, num(hi)?),
                None => {
                    let v = num(span)?;
                    (v, v)
                }
            };
            ranges.push(AxisRange { var: var.trim().to_string(), lo, hi });
        }
        InitRegion::new(ranges)
    }
}

impl fmt::Display for InitRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.ranges.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}={:?}..{:?}", r.var, r.lo, r.hi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSet {
    pub region: InitRegion,
    pub seed: u64,
    pub count: usize,
    pub points: Vec<Vec<f64>>,
}

/// Uniform draws per axis; point `i` depends only on `(region, seed, i)`.
pub fn sample_ics(region: &InitRegion, count: usize, seed: u64) -> IcSet {
    let points = (0..count)
        .map(|i| {
            let mut rng = stream(seed, STREAM_IC, i as u64, 0);
            region
                .ranges
                .iter()
                .map(|r| {
                    let u: f64 = rng.random();
                    (r.lo + (r.hi - r.lo) * u).clamp(r.lo, r.hi)
                })
                .collect()
        })
        .collect();
    IcSet { region: region.clone(), seed, count, points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Class {
    True,
    False,
    Untestable { reason: String },
}

impl Class {
    pub fn is_testable(&self) -> bool {
        !matches!(self, Class::Untestable { .. })
    }
}

fn classify_final(sys: &SystemDef, status: &Status, t: f64, x: &[f64], p: &Predicate) -> Class {
    if let Status::Failed { reason, .. } = status {
        return Class::Untestable { reason: reason.clone() };
    }
    match p.eval_at(sys, t, x) {
        Ok(true) => Class::True,
        Ok(false) => Class::False,
        Err(e) => Class::Untestable { reason: format!("predicate: {e}") },
    }
}

pub fn classify(sys: &SystemDef, traj: &Trajectory, p: &Predicate) -> Class {
    match traj.final_state() {
        Some((t, x)) => classify_final(sys, &traj.status, t, x, p),
        None => Class::Untestable { reason: "empty trajectory".into() },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct BoxcountResult {
    pub epsilon: f64,
    pub delta: f64,
    pub n_testable: usize,
    pub n_boundary: usize,
    pub n_excluded: usize,
}

impl BoxcountResult {
    pub fn fraction(&self) -> f64 {
        if self.n_testable == 0 {
            f64::NAN
        } else {
            self.n_boundary as f64 / self.n_testable as f64
        }
    }
}

/// Settings shared by [`boxcount`] and [`fdimension`].
#[derive(Debug, Clone)]
pub struct Cells<'a> {
    pub sys: &'a SystemDef,
    pub ics: &'a IcSet,
    pub predicate: &'a Predicate,
    pub t_final: f64,
    pub cfg: &'a IntegratorConfig,
    pub k: usize,
    pub seed: u64,
}

impl Cells<'_> {
    fn validate(&self) -> Result<IntegratorConfig, BoundaryError> {
        self.ics.region.validate(self.sys)?;
        if self.k < 2 {
            return Err(BoundaryError::InvalidArgument(format!("k must be at least 2, got {}", self.k)));
        }
        if self.ics.points.is_empty() {
            return Err(BoundaryError::InvalidArgument("empty initial-condition set".into()));
        }
        if !(self.t_final.is_finite() && self.t_final > self.cfg.t0) {
            return Err(BoundaryError::InvalidArgument(format!(
                "final time {} must exceed t0 = {}",
                self.t_final, self.cfg.t0
            )));
        }
        if self.ics.region.longest_edge() <= 0.0 {
            return Err(BoundaryError::InvalidRegion("region has zero extent, delta is undefined".into()));
        }
        let cfg = self.cfg.until(self.t_final);
        cfg.validate()?;
        Ok(cfg)
    }

    fn run(&self, cfg: &IntegratorConfig, x0: &[f64]) -> Result<Class, IntegrateError> {
        let (status, t, x) = integrate_final(self.sys, x0, cfg)?;
        Ok(classify_final(self.sys, &status, t, &x, self.predicate))
    }

    fn base_classes(&self, cfg: &IntegratorConfig, exec: &Exec) -> Result<Vec<Class>, BoundaryError> {
        let pts = &self.ics.points;
        let out = exec.map(pts.len(), |i| self.run(cfg, &pts[i]))?;
        Ok(out.into_iter().collect::<Result<_, _>>()?)
    }

    /// Offsets in `[-1, 1)^D`, scaled by epsilon, so every epsilon sees the
    /// same draws.
    fn unit_offset(&self, base: usize, copy: usize) -> Vec<f64> {
        let mut rng = stream(self.seed, STREAM_PERTURB, base as u64, copy as u64);
        (0..self.sys.dim()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
    }

    fn count(
        &self,
        cfg: &IntegratorConfig,
        bases: &[Class],
        epsilon: f64,
        exec: &Exec,
    ) -> Result<BoxcountResult, BoundaryError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(BoundaryError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let pts = &self.ics.points;
        // Some(true) boundary, Some(false) interior, None untestable.
        let cells = exec.map(pts.len(), |i| -> Result<Option<bool>, IntegrateError> {
            let base = &bases[i];
            if !base.is_testable() {
                return Ok(None);
            }
            let mut differs = false;
            for j in 0..self.k {
                let x: Vec<f64> =
                    pts[i].iter().zip(self.unit_offset(i, j)).map(|(x0, u)| x0 + epsilon * u).collect();
                let c = self.run(cfg, &x)?;
                if !c.is_testable() {
                    return Ok(None);
                }
                differs |= c != *base;
            }
            Ok(Some(differs))
        })?;
        let mut result = BoxcountResult {
            epsilon,
            delta: epsilon / self.ics.region.longest_edge(),
            n_testable: 0,
            n_boundary: 0,
            n_excluded: 0,
        };
        for cell in cells {
            match cell? {
                Some(b) => {
                    result.n_testable += 1;
                    result.n_boundary += b as usize;
                }
                None => result.n_excluded += 1,
            }
        }
        if result.n_testable == 0 {
            return Err(BoundaryError::NoTestableCells { epsilon });
        }
        Ok(result)
    }
}

pub fn boxcount(cells: &Cells<'_>, epsilon: f64, exec: &Exec) -> Result<BoxcountResult, BoundaryError> {
    let cfg = cells.validate()?;
    let bases = cells.base_classes(&cfg, exec)?;
    cells.count(&cfg, &bases, epsilon, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct FdimPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub fraction: f64,
    /// False when no boundary cell was found, so the point is left out of the fit.
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct FdimResult {
    #[serde(rename = "D")]
    pub dim: usize,
    pub alpha: f64,
    #[serde(rename = "d_B")]
    pub d_b: f64,
    pub se_slope: f64,
    pub se_percent: f64,
    pub pearson_r: f64,
    pub points: Vec<FdimPoint>,
    pub dropped: Vec<f64>,
    pub runs: Vec<BoxcountResult>,
}

impl FdimResult {
    /// `delta,fraction,used` rows in run order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,fraction,used\n");
        for p in &self.points {
            s.push_str(&format!("{:.16e},{:.16e},{}\n", p.delta, p.fraction, p.used));
        }
        s
    }
}

/// `n` values from `lo` to `hi` inclusive, evenly spaced in `ln`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Fits the dimension to already computed box counts.
pub fn fdimension_from_runs(dim: usize, runs: Vec<BoxcountResult>) -> Result<FdimResult, BoundaryError> {
    let mut points = Vec::with_capacity(runs.len());
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for r in &runs {
        let fraction = r.fraction();
        let used = r.n_boundary > 0;
        if used {
            pairs.push((r.delta.ln(), fraction.ln()));
        } else {
            dropped.push(r.epsilon);
        }
        points.push(FdimPoint { epsilon: r.epsilon, delta: r.delta, fraction, used });
    }
    if pairs.len() < 2 {
        return Err(BoundaryError::TooFewPoints { usable: pairs.len(), dropped });
    }
    let fit = fit_line(&pairs)?;
    let alpha = fit.slope;
    let d_b = dim as f64 - alpha;
    Ok(FdimResult {
        dim,
        alpha,
        d_b,
        se_slope: fit.se_slope,
        se_percent: 100.0 * fit.se_slope / d_b.abs(),
        pearson_r: fit.pearson_r,
        points,
        dropped,
        runs,
    })
}

pub fn fdimension(
    cells: &Cells<'_>,
    eps_range: (f64, f64),
    n_epsilons: usize,
    exec: &Exec,
) -> Result<FdimResult, BoundaryError> {
    let (lo, hi) = eps_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(BoundaryError::InvalidArgument(format!("epsilon range needs 0 < lo < hi, got {lo}..{hi}")));
    }
    if n_epsilons < 2 {
        return Err(BoundaryError::InvalidArgument(format!("n_epsilons must be at least 2, got {n_epsilons}")));
    }
    let cfg = cells.validate()?;
    let bases = cells.base_classes(&cfg, exec)?;
    let runs = log_spaced(lo, hi, n_epsilons)
        .into_iter()
        .map(|eps| cells.count(&cfg, &bases, eps, exec))
        .collect::<Result<Vec<_>, _>>()?;
    fdimension_from_runs(cells.sys.dim(), runs)
}
