//! Background job table.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use chaoscope_core::ensemble::{Exec, Progress};
use chaoscope_core::store::{RunKind, Store};
use chaoscope_core::workflow::{execute, JobRequest, WorkflowError};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Canceled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Canceled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct JobView {
    pub job_id: String,
    pub kind: RunKind,
    pub state: JobState,
    /// Completed work units over total, in `[0, 1]`.
    pub progress: f64,
    /// Run id of the saved result once `state` is `done`.
    pub result_ref: Option<String>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub request: JobRequest,
}

struct Job {
    view: Mutex<JobView>,
    progress: Arc<Progress>,
    cancel: Arc<AtomicBool>,
}

impl Job {
    fn snapshot(&self) -> JobView {
        let mut v = self.view.lock().unwrap().clone();
        v.progress = match v.state {
            JobState::Done => 1.0,
            JobState::Queued => 0.0,
            _ => self.progress.fraction(),
        };
        v
    }

    /// Moves forward only; returns false if the job already finished.
    fn advance(&self, state: JobState, f: impl FnOnce(&mut JobView)) -> bool {
        let mut v = self.view.lock().unwrap();
        if v.state.is_terminal() {
            return false;
        }
        v.state = state;
        f(&mut v);
        true
    }
}

#[derive(Debug, PartialEq)]
pub enum CancelOutcome {
    NotFound,
    /// Already done or failed.
    Conflict(JobView),
    Accepted(JobView),
}

/// Jobs run one at a time, each on `workers` threads.
pub struct JobTable {
    jobs: Mutex<HashMap<String, Arc<Job>>>,
    slots: Arc<Semaphore>,
    workers: usize,
    store: Store,
}

impl std::fmt::Debug for JobTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobTable").field("workers", &self.workers).finish_non_exhaustive()
    }
}

impl JobTable {
    pub fn new(store: Store, workers: usize) -> JobTable {
        JobTable { jobs: Mutex::new(HashMap::new()), slots: Arc::new(Semaphore::new(1)), workers, store }
    }

    /// Queues a validated request and starts it in the background.
    pub fn submit(self: &Arc<Self>, request: JobRequest) -> Result<JobView, WorkflowError> {
        request.validate()?;
        let job_id = uuid::Uuid::new_v4().simple().to_string();
        let job = Arc::new(Job {
            view: Mutex::new(JobView {
                job_id: job_id.clone(),
                kind: request.kind(),
                state: JobState::Queued,
                progress: 0.0,
                result_ref: None,
                error: None,
                created_at: Utc::now(),
                request: request.clone(),
            }),
            progress: Arc::new(Progress::default()),
            cancel: Arc::new(AtomicBool::new(false)),
        });
        self.jobs.lock().unwrap().insert(job_id.clone(), job.clone());
        let view = job.snapshot();

        let table = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = table.slots.clone().acquire_owned().await else { return };
            if job.cancel.load(Ordering::Relaxed) || !job.advance(JobState::Running, |_| {}) {
                return;
            }
            let exec = Exec { workers: table.workers, progress: Some(job.progress.clone()), cancel: Some(job.cancel.clone()) };
            let store = table.store.clone();
            let outcome = tokio::task::spawn_blocking(move || execute(&request, &store, &exec)).await;
            match outcome {
                Ok(Ok(out)) => job.advance(JobState::Done, |v| v.result_ref = Some(out.manifest.run_id)),
                Ok(Err(WorkflowError::Cancelled)) => job.advance(JobState::Canceled, |_| {}),
                Ok(Err(e)) => job.advance(JobState::Failed, |v| v.error = Some(e.to_string())),
                Err(e) => job.advance(JobState::Failed, |v| v.error = Some(format!("job panicked: {e}"))),
            };
        });
        Ok(view)
    }

    pub fn get(&self, job_id: &str) -> Option<JobView> {
        self.jobs.lock().unwrap().get(job_id).map(|j| j.snapshot())
    }

    /// All jobs, newest first.
    pub fn list(&self) -> Vec<JobView> {
        let mut v: Vec<JobView> = self.jobs.lock().unwrap().values().map(|j| j.snapshot()).collect();
        v.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| b.job_id.cmp(&a.job_id)));
        v
    }

    /// Queued jobs are canceled at once; running jobs stop at the next batch
    /// boundary.
    pub fn cancel(&self, job_id: &str) -> CancelOutcome {
        let Some(job) = self.jobs.lock().unwrap().get(job_id).cloned() else {
            return CancelOutcome::NotFound;
        };
        let state = job.view.lock().unwrap().state;
        match state {
            JobState::Done | JobState::Failed => CancelOutcome::Conflict(job.snapshot()),
            JobState::Canceled => CancelOutcome::Accepted(job.snapshot()),
            JobState::Queued | JobState::Running => {
                job.cancel.store(true, Ordering::Relaxed);
                {
                    let mut v = job.view.lock().unwrap();
                    if v.state == JobState::Queued {
                        v.state = JobState::Canceled;
                    }
                }
                CancelOutcome::Accepted(job.snapshot())
            }
        }
    }
}
