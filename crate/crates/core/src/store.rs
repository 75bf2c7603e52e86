//! On-disk run store.
//!
//! Layout of one run:
//!
//! ```text
//! <root>/<run_id>/manifest.json
//! <root>/<run_id>/ic_<i>.csv        t,<state vars...>
//! <root>/<run_id>/results.json      boxcount and fdim runs
//! <root>/<run_id>/fdim_points.csv   fdim runs
//! ```
//!
//! A run is written into a hidden staging directory and renamed into place,
//! so readers never see a partial run. Reals are written with 17
//! significant digits and read back bit for bit.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::boundary::{BoxcountResult, Class, FdimResult, InitRegion};
use crate::integrate::{IntegratorConfig, Status, Trajectory};

pub const STORE_ENV: &str = "CHAOSCOPE_STORE";
pub const DEFAULT_ROOT: &str = "chaoscope-store";
const MANIFEST: &str = "manifest.json";
const RESULTS: &str = "results.json";
const FDIM_POINTS: &str = "fdim_points.csv";
const STAGING_PREFIX: &str = ".staging-";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run {0} not found")]
    NotFound(String),
    #[error("run {0} already exists")]
    Duplicate(String),
    #[error("run {run_id} is inconsistent: {detail}")]
    Integrity { run_id: String, detail: String },
    #[error("{path}: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Solve,
    Boxcount,
    Fdim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct TrajectoryEntry {
    pub ic_index: usize,
    pub file: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<Class>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub kind: RunKind,
    pub system_name: String,
    pub system_source: String,
    #[serde(default)]
    pub predicate_source: Option<String>,
    pub region: InitRegion,
    pub cfg: IntegratorConfig,
    pub seed: u64,
    pub number_ic: usize,
    #[serde(default)]
    pub result_refs: Vec<String>,
    #[serde(default)]
    pub trajectories: Vec<TrajectoryEntry>,
    /// The request that produced the run, as submitted.
    #[serde(default)]
    pub request: serde_json::Value,
}

impl RunManifest {
    /// Time-sortable id with a random suffix.
    pub fn new_run_id(created_at: DateTime<Utc>) -> String {
        let suffix = uuid::Uuid::new_v4().simple().to_string();
        format!("{}-{}", created_at.format("%Y%m%dT%H%M%S%3fZ"), &suffix[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunResults {
    None,
    Boxcount(BoxcountResult),
    Fdim(FdimResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct RunSummary {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub kind: RunKind,
    pub system_name: String,
}

/// Trajectory CSV with a `t,<vars>` header and 17 significant digits.
pub fn write_trajectory_csv(out: &mut impl Write, vars: &[String], traj: &Trajectory) -> io::Result<()> {
    writeln!(out, "t,{}", vars.join(","))?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        write!(out, "{t:.16e}")?;
        for v in x {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn ic_file(i: usize) -> String {
    format!("ic_{i}.csv")
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Store {
        Store { root: root.into() }
    }

    /// `flag`, else `$CHAOSCOPE_STORE`, else `./chaoscope-store`.
    pub fn resolve(flag: Option<&Path>) -> Store {
        match flag {
            Some(p) => Store::new(p),
            None => Store::new(std::env::var_os(STORE_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_ROOT.into())),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_dir(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        let ok = !run_id.is_empty()
            && !run_id.starts_with('.')
            && run_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !ok {
            return Err(StoreError::NotFound(run_id.to_string()));
        }
        Ok(self.root.join(run_id))
    }

    /// Writes the run and returns its id. `manifest.trajectories` and
    /// `manifest.result_refs` are filled in from the arguments.
    pub fn save_run(
        &self,
        mut manifest: RunManifest,
        vars: &[String],
        trajectories: &[Trajectory],
        classes: Option<&[Class]>,
        results: &RunResults,
    ) -> Result<RunManifest, StoreError> {
        let final_dir = self.run_dir(&manifest.run_id)?;
        if final_dir.exists() {
            return Err(StoreError::Duplicate(manifest.run_id));
        }
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let staging = tempfile::Builder::new()
            .prefix(&format!("{STAGING_PREFIX}{}-", manifest.run_id))
            .tempdir_in(&self.root)
            .map_err(io_err(&self.root))?;

        manifest.trajectories.clear();
        for (n, traj) in trajectories.iter().enumerate() {
            let name = ic_file(traj.ic_index);
            let path = staging.path().join(&name);
            let mut f = io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
            write_trajectory_csv(&mut f, vars, traj).and_then(|_| f.flush()).map_err(io_err(&path))?;
            manifest.trajectories.push(TrajectoryEntry {
                ic_index: traj.ic_index,
                file: name,
                status: traj.status.clone(),
                class: classes.map(|c| c[n].clone()),
            });
        }

        manifest.result_refs.clear();
        let mut put = |name: &str, bytes: &[u8]| -> Result<(), StoreError> {
            let path = staging.path().join(name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            manifest.result_refs.push(name.to_string());
            Ok(())
        };
        match results {
            RunResults::None => {}
            RunResults::Boxcount(_) => put(RESULTS, &to_json(results))?,
            RunResults::Fdim(fd) => {
                put(RESULTS, &to_json(results))?;
                put(FDIM_POINTS, fd.to_csv().as_bytes())?;
            }
        }

        let path = staging.path().join(MANIFEST);
        fs::write(&path, to_json(&manifest)).map_err(io_err(&path))?;
        let staged = staging.keep();
        if let Err(e) = fs::rename(&staged, &final_dir) {
            let _ = fs::remove_dir_all(&staged);
            return Err(if final_dir.exists() {
                StoreError::Duplicate(manifest.run_id)
            } else {
                StoreError::Io { path: final_dir.display().to_string(), source: e }
            });
        }
        Ok(manifest)
    }

    pub fn load_run(&self, run_id: &str) -> Result<StoredRun, StoreError> {
        let dir = self.run_dir(run_id)?;
        let path = dir.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(run_id.to_string())),
            Err(e) => return Err(StoreError::Io { path: path.display().to_string(), source: e }),
        };
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| StoreError::Corrupt { path: path.display().to_string(), detail: e.to_string() })?;
        if manifest.run_id != run_id {
            return Err(StoreError::Integrity {
                run_id: run_id.to_string(),
                detail: format!("manifest names run {}", manifest.run_id),
            });
        }
        let refs = manifest.result_refs.iter().chain(manifest.trajectories.iter().map(|t| &t.file));
        for name in refs {
            if name.contains('/') || name.contains('\\') || !dir.join(name).is_file() {
                return Err(StoreError::Integrity {
                    run_id: run_id.to_string(),
                    detail: format!("missing file {name}"),
                });
            }
        }
        Ok(StoredRun { dir, manifest })
    }

    /// Runs under the root, newest first. Entries without a readable manifest
    /// are skipped.
    pub fn list_runs(&self) -> Result<Vec<RunSummary>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::Io { path: self.root.display().to_string(), source: e }),
        };
        let mut runs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !entry.path().is_dir() {
                continue;
            }
            let Ok(text) = fs::read_to_string(entry.path().join(MANIFEST)) else { continue };
            let Ok(m) = serde_json::from_str::<RunManifest>(&text) else { continue };
            if m.run_id == name {
                runs.push(RunSummary { run_id: m.run_id, created_at: m.created_at, kind: m.kind, system_name: m.system_name });
            }
        }
        runs.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| b.run_id.cmp(&a.run_id)));
        Ok(runs)
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone)]
pub struct StoredRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl StoredRun {
    pub fn trajectory_count(&self) -> usize {
        self.manifest.trajectories.len()
    }

    /// Reads the `n`-th stored trajectory from disk.
    pub fn trajectory(&self, n: usize) -> Result<Trajectory, StoreError> {
        let entry = self.manifest.trajectories.get(n).ok_or_else(|| StoreError::Integrity {
            run_id: self.manifest.run_id.clone(),
            detail: format!("no trajectory #{n}"),
        })?;
        let path = self.dir.join(&entry.file);
        let (times, states) = read_trajectory_csv(&path)?;
        Ok(Trajectory { ic_index: entry.ic_index, times, states, status: entry.status.clone() })
    }

    pub fn results(&self) -> Result<RunResults, StoreError> {
        if !self.manifest.result_refs.iter().any(|r| r == RESULTS) {
            return Ok(RunResults::None);
        }
        let path = self.dir.join(RESULTS);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.display().to_string(), detail: e.to_string() })
    }
}

type Samples = (Vec<f64>, Vec<Vec<f64>>);

fn read_trajectory_csv(path: &Path) -> Result<Samples, StoreError> {
    let corrupt = |line: usize, detail: String| StoreError::Corrupt { path: format!("{}:{line}", path.display()), detail };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(io_err(path))?,
        None => return Err(corrupt(1, "empty file".into())),
    };
    let width = header.split(',').count();
    if width < 2 || !header.starts_with("t,") {
        return Err(corrupt(1, format!("bad header '{header}'")));
    }
    let (mut times, mut states) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        let values: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| corrupt(i + 2, e.to_string()))?;
        if values.len() != width {
            return Err(corrupt(i + 2, format!("expected {width} fields, got {}", values.len())));
        }
        times.push(values[0]);
        states.push(values[1..].to_vec());
    }
    Ok((times, states))
}
