//! Requests shared by the command line and the HTTP service: validation,
//! execution and persistence of solve, boxcount and fdim runs.

use std::time::Instant;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    boxcount, classify, fdimension, sample_ics, BoundaryError, Cells, Class, InitRegion, DEFAULT_K,
};
use crate::ensemble::{integrate_ensemble, EnsembleError, Exec};
use crate::integrate::{build_plugin, IntegrateError, IntegratorConfig, Method, DEFAULT_COMPILE_COMMAND};
use crate::store::{RunKind, RunManifest, RunResults, Store, StoreError};
use crate::sysdsl::{parse_predicate, DslError, Predicate, SystemDef};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SYSTEM_NAME: &str = "system";

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cancelled")]
    Cancelled,
}

impl WorkflowError {
    /// True for errors caused by the request itself rather than by running it.
    pub fn is_validation(&self) -> bool {
        match self {
            WorkflowError::Invalid(_) | WorkflowError::Dsl(_) => true,
            WorkflowError::Boundary(e) => {
                matches!(e, BoundaryError::InvalidRegion(_) | BoundaryError::InvalidArgument(_))
            }
            WorkflowError::Integrate(e) => {
                matches!(e, IntegrateError::InvalidConfig(_) | IntegrateError::DimensionMismatch { .. })
            }
            _ => false,
        }
    }
}

impl From<EnsembleError> for WorkflowError {
    fn from(e: EnsembleError) -> WorkflowError {
        match e {
            EnsembleError::Integrate(e) => WorkflowError::Integrate(e),
            EnsembleError::Cancelled(_) => WorkflowError::Cancelled,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, WorkflowError> {
    Err(WorkflowError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Native,
    Plugin,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_name() -> String {
    DEFAULT_SYSTEM_NAME.to_string()
}

/// Integrate `number_ic` random initial conditions and store the trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub system: String,
    #[serde(default = "default_name")]
    pub system_name: String,
    /// Optional two-class colouring of the final states.
    #[serde(default)]
    pub predicate: Option<String>,
    pub region: InitRegion,
    pub t_range: [f64; 2],
    pub t_calc_step: f64,
    /// Spacing of stored samples; a whole multiple of `t_calc_step`.
    #[serde(default)]
    pub t_plot_step: Option<f64>,
    pub number_ic: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub compile_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BoxcountRequest {
    pub system: String,
    #[serde(default = "default_name")]
    pub system_name: String,
    pub predicate: String,
    pub region: InitRegion,
    pub number_ic: usize,
    pub epsilon: f64,
    pub final_time: f64,
    #[serde(default)]
    pub t0: f64,
    pub t_calc_step: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub compile_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FdimRequest {
    pub system: String,
    #[serde(default = "default_name")]
    pub system_name: String,
    pub predicate: String,
    pub region: InitRegion,
    pub number_ic: usize,
    pub epsilon_range: [f64; 2],
    pub n_epsilons: usize,
    pub final_time: f64,
    #[serde(default)]
    pub t0: f64,
    pub t_calc_step: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub compile_command: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobRequest {
    Solve(SolveRequest),
    Boxcount(BoxcountRequest),
    Fdim(FdimRequest),
}

struct Prepared {
    sys: SystemDef,
    predicate: Option<Predicate>,
    cfg: IntegratorConfig,
}

fn stride(t_calc_step: f64, t_plot_step: Option<f64>) -> Result<usize, WorkflowError> {
    let Some(plot) = t_plot_step else { return Ok(1) };
    if !(plot.is_finite() && plot > 0.0) {
        return invalid(format!("t_plot_step must be positive, got {plot}"));
    }
    let ratio = plot / t_calc_step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return invalid(format!("t_plot_step {plot} is not a whole multiple of t_calc_step {t_calc_step}"));
    }
    Ok(n as usize)
}

fn prepare(
    system: &str,
    name: &str,
    predicate: Option<&str>,
    region: &InitRegion,
    number_ic: usize,
    cfg: IntegratorConfig,
) -> Result<Prepared, WorkflowError> {
    let sys = SystemDef::from_source(name, system)?;
    let predicate = predicate.map(|p| parse_predicate(p, &sys)).transpose()?;
    region.validate(&sys)?;
    if number_ic == 0 {
        return invalid("number_ic must be at least 1");
    }
    cfg.validate()?;
    Ok(Prepared { sys, predicate, cfg })
}

fn check_cells(k: usize, t0: f64, final_time: f64, region: &InitRegion) -> Result<(), WorkflowError> {
    if k < 2 {
        return invalid(format!("k must be at least 2, got {k}"));
    }
    if !(final_time.is_finite() && final_time > t0) {
        return invalid(format!("final_time {final_time} must exceed t0 {t0}"));
    }
    if region.longest_edge() <= 0.0 {
        return invalid("region has zero extent, delta is undefined");
    }
    Ok(())
}

impl JobRequest {
    pub fn kind(&self) -> RunKind {
        match self {
            JobRequest::Solve(_) => RunKind::Solve,
            JobRequest::Boxcount(_) => RunKind::Boxcount,
            JobRequest::Fdim(_) => RunKind::Fdim,
        }
    }

    /// Base-IC evaluations the run performs, for progress reporting.
    pub fn work_units(&self) -> usize {
        match self {
            JobRequest::Solve(r) => r.number_ic,
            JobRequest::Boxcount(r) => 2 * r.number_ic,
            JobRequest::Fdim(r) => (1 + r.n_epsilons) * r.number_ic,
        }
    }

    fn method(&self) -> (MethodChoice, Option<&str>) {
        match self {
            JobRequest::Solve(r) => (r.method, r.compile_command.as_deref()),
            JobRequest::Boxcount(r) => (r.method, r.compile_command.as_deref()),
            JobRequest::Fdim(r) => (r.method, r.compile_command.as_deref()),
        }
    }

    fn prepare(&self) -> Result<Prepared, WorkflowError> {
        match self {
            JobRequest::Solve(r) => {
                let mut cfg = IntegratorConfig::native(r.t_range[0], r.t_range[1], r.t_calc_step, 1);
                cfg.validate()?;
                cfg.sample_stride = stride(r.t_calc_step, r.t_plot_step)?;
                prepare(&r.system, &r.system_name, r.predicate.as_deref(), &r.region, r.number_ic, cfg)
            }
            JobRequest::Boxcount(r) => {
                if !(r.epsilon.is_finite() && r.epsilon > 0.0) {
                    return invalid(format!("epsilon must be positive, got {}", r.epsilon));
                }
                check_cells(r.k, r.t0, r.final_time, &r.region)?;
                let cfg = IntegratorConfig::native(r.t0, r.final_time, r.t_calc_step, 1);
                prepare(&r.system, &r.system_name, Some(&r.predicate), &r.region, r.number_ic, cfg)
            }
            JobRequest::Fdim(r) => {
                let [lo, hi] = r.epsilon_range;
                if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                    return invalid(format!("epsilon_range needs 0 < lo < hi, got {lo}..{hi}"));
                }
                if r.n_epsilons < 2 {
                    return invalid(format!("n_epsilons must be at least 2, got {}", r.n_epsilons));
                }
                check_cells(r.k, r.t0, r.final_time, &r.region)?;
                let cfg = IntegratorConfig::native(r.t0, r.final_time, r.t_calc_step, 1);
                prepare(&r.system, &r.system_name, Some(&r.predicate), &r.region, r.number_ic, cfg)
            }
        }
    }

    /// Checks everything that can be checked without integrating.
    pub fn validate(&self) -> Result<(), WorkflowError> {
        self.prepare().map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub results: RunResults,
    pub elapsed_secs: f64,
}

/// Validates, runs and saves `req`. A plugin is compiled into a temporary
/// directory that lives for the duration of the call.
pub fn execute(req: &JobRequest, store: &Store, exec: &Exec) -> Result<Outcome, WorkflowError> {
    let started = Instant::now();
    let created_at = Utc::now();
    let Prepared { sys, predicate, mut cfg } = req.prepare()?;

    let _plugin_dir = match req.method() {
        (MethodChoice::Native, _) => None,
        (MethodChoice::Plugin, command) => {
            let dir = tempfile::tempdir().map_err(|e| {
                WorkflowError::Integrate(IntegrateError::Io { path: "plugin workdir".into(), source: e })
            })?;
            let spec = build_plugin(&sys, "c99", command.unwrap_or(DEFAULT_COMPILE_COMMAND), dir.path())?;
            cfg.method = Method::Plugin(spec);
            Some(dir)
        }
    };

    let (region, number_ic, seed, predicate_source) = match req {
        JobRequest::Solve(r) => (&r.region, r.number_ic, r.seed, r.predicate.clone()),
        JobRequest::Boxcount(r) => (&r.region, r.number_ic, r.seed, Some(r.predicate.clone())),
        JobRequest::Fdim(r) => (&r.region, r.number_ic, r.seed, Some(r.predicate.clone())),
    };
    exec.add_total(req.work_units());
    let ics = sample_ics(region, number_ic, seed);
    let mut trajectories = Vec::new();
    let mut classes = None;
    let results = match req {
        JobRequest::Solve(_) => {
            trajectories = integrate_ensemble(&sys, &ics.points, &cfg, exec)?;
            classes = predicate
                .as_ref()
                .map(|p| trajectories.iter().map(|t| classify(&sys, t, p)).collect::<Vec<Class>>());
            RunResults::None
        }
        JobRequest::Boxcount(r) => {
            let p = predicate.as_ref().expect("boxcount predicate");
            let cells = Cells { sys: &sys, ics: &ics, predicate: p, t_final: r.final_time, cfg: &cfg, k: r.k, seed: r.seed };
            RunResults::Boxcount(boxcount(&cells, r.epsilon, exec).map_err(cancel_aware)?)
        }
        JobRequest::Fdim(r) => {
            let p = predicate.as_ref().expect("fdim predicate");
            let cells = Cells { sys: &sys, ics: &ics, predicate: p, t_final: r.final_time, cfg: &cfg, k: r.k, seed: r.seed };
            let range = (r.epsilon_range[0], r.epsilon_range[1]);
            RunResults::Fdim(fdimension(&cells, range, r.n_epsilons, exec).map_err(cancel_aware)?)
        }
    };

    let manifest = RunManifest {
        run_id: RunManifest::new_run_id(created_at),
        created_at,
        kind: req.kind(),
        system_name: sys.name().to_string(),
        system_source: sys.to_string(),
        predicate_source,
        region: region.clone(),
        cfg,
        seed,
        number_ic,
        result_refs: vec![],
        trajectories: vec![],
        request: serde_json::to_value(req).expect("serializable request"),
    };
    let manifest = store.save_run(manifest, sys.state_vars(), &trajectories, classes.as_deref(), &results)?;
    Ok(Outcome { manifest, results, elapsed_secs: started.elapsed().as_secs_f64() })
}

fn cancel_aware(e: BoundaryError) -> WorkflowError {
    match e {
        BoundaryError::Cancelled(_) => WorkflowError::Cancelled,
        e => WorkflowError::Boundary(e),
    }
}
