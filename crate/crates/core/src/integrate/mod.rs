//! Fixed-step integration of a [`SystemDef`], natively or through an
//! external compiled kernel.

pub mod plugin;
mod rk5;

use serde::{Deserialize, Serialize};

use crate::sysdsl::SystemDef;

pub use plugin::{build_plugin, run_plugin, PluginSpec, DEFAULT_COMPILE_COMMAND};
pub use rk5::{rk5_step, Rk5};

#[derive(Debug, thiserror::Error)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial condition has length {got}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Dsl(#[from] crate::sysdsl::DslError),
    #[error("compiler `{0}` not found")]
    CompilerNotFound(String),
    #[error("compilation failed ({status}): {diagnostics}")]
    CompileFailed { status: String, diagnostics: String },
    #[error("plugin handshake failed: {0}")]
    Handshake(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("plugin exited with {status}: {reason}")]
    Exec { status: String, reason: String },
    #[error("malformed plugin output at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("plugin timed out after {0:.1} s")]
    Timeout(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    NativeRk5,
    Plugin(PluginSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Calculation step.
    pub h: f64,
    pub t0: f64,
    pub t1: f64,
    /// A state is recorded every `sample_stride` steps; the plot step is `h * sample_stride`.
    pub sample_stride: usize,
}

impl IntegratorConfig {
    pub fn native(t0: f64, t1: f64, h: f64, sample_stride: usize) -> IntegratorConfig {
        IntegratorConfig { method: Method::NativeRk5, h, t0, t1, sample_stride }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: String| Err(IntegrateError::InvalidConfig(msg));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("step must be positive, got {}", self.h));
        }
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return bad(format!("time range {}..{} is empty", self.t0, self.t1));
        }
        if self.sample_stride == 0 {
            return bad("sample stride must be at least 1".into());
        }
        if step_count(self.t0, self.t1, self.h) < 1 || (self.t1 - self.t0) / self.h < 1.0 - GRID_TOL {
            return bad(format!("step {} exceeds the time range {}..{}", self.h, self.t0, self.t1));
        }
        Ok(())
    }

    /// Same configuration over a different final time.
    pub fn until(&self, t1: f64) -> IntegratorConfig {
        IntegratorConfig { t1, ..self.clone() }
    }

    pub fn step_count(&self) -> usize {
        step_count(self.t0, self.t1, self.h)
    }

    /// Number of samples a completed trajectory records.
    pub fn sample_count(&self) -> usize {
        let n = self.step_count();
        n / self.sample_stride + 1 + usize::from(n % self.sample_stride != 0)
    }
}

/// Relative tolerance for treating `(t1 - t0) / h` as a whole number.
pub(crate) const GRID_TOL: f64 = 1e-9;

/// Steps from `t0` to `t1`, counting a final shortened step if the range is
/// not a whole number of `h`.
pub(crate) fn step_count(t0: f64, t1: f64, h: f64) -> usize {
    let ratio = (t1 - t0) / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= GRID_TOL * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Completed,
    Failed { reason: String, last_good_time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Trajectory {
    pub ic_index: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub status: Status,
}

impl Trajectory {
    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<(f64, &[f64])> {
        Some((*self.times.last()?, self.states.last()?.as_slice()))
    }
}

/// Fixed-step stepping loop shared by [`integrate`] and the ensemble code.
/// `record` sees the initial state, every `stride`-th state, and the final one.
pub(crate) fn step_native(
    sys: &SystemDef,
    x0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
    stride: usize,
    mut record: impl FnMut(f64, &[f64]),
) -> Status {
    let n = step_count(t0, t1, h);
    let mut rk = Rk5::new(x0.len());
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x0.len()];
    record(t0, &x);
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let last = i + 1 == n;
        let step = if last { t1 - t } else { h };
        if let Err(e) = rk.step(sys, t, &x, step, &mut next) {
            return Status::Failed { reason: e.to_string(), last_good_time: t };
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Status::Failed { reason: "non-finite state".into(), last_good_time: t };
        }
        std::mem::swap(&mut x, &mut next);
        if last {
            record(t1, &x);
        } else if (i + 1) % stride == 0 {
            record(t0 + (i + 1) as f64 * h, &x);
        }
    }
    Status::Completed
}

/// Integrates `sys` from `x0` over the configured range.
///
/// Numerical failure (a domain error or a non-finite state) is reported
/// through [`Status::Failed`] with the recorded prefix retained. `Err` is
/// reserved for invalid input and plugin infrastructure faults.
pub fn integrate(sys: &SystemDef, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    if x0.len() != sys.dim() {
        return Err(IntegrateError::DimensionMismatch { expected: sys.dim(), got: x0.len() });
    }
    match &cfg.method {
        Method::NativeRk5 => {
            let cap = cfg.sample_count();
            let mut times = Vec::with_capacity(cap);
            let mut states = Vec::with_capacity(cap);
            let status = step_native(sys, x0, cfg.t0, cfg.t1, cfg.h, cfg.sample_stride, |t, x| {
                times.push(t);
                states.push(x.to_vec());
            });
            Ok(Trajectory { ic_index: 0, times, states, status })
        }
        Method::Plugin(spec) => run_plugin(spec, x0, cfg),
    }
}

/// Final state only, without recording intermediate samples.
pub(crate) fn integrate_final(
    sys: &SystemDef,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Status, f64, Vec<f64>), IntegrateError> {
    match &cfg.method {
        Method::NativeRk5 => {
            let mut last = (cfg.t0, x0.to_vec());
            let status = step_native(sys, x0, cfg.t0, cfg.t1, cfg.h, usize::MAX, |t, x| {
                last.0 = t;
                last.1.copy_from_slice(x);
            });
            Ok((status, last.0, last.1))
        }
        Method::Plugin(_) => {
            let traj = integrate(sys, x0, &IntegratorConfig { sample_stride: usize::MAX, ..cfg.clone() })?;
            let (t, x) = traj.final_state().map(|(t, x)| (t, x.to_vec())).unwrap_or((cfg.t0, x0.to_vec()));
            Ok((traj.status, t, x))
        }
    }
}
