//! Parallel execution over initial conditions.
//!
//! Random draws come from per-index ChaCha streams keyed by
//! `(seed, purpose, index, copy)`, and results are gathered by index, so the
//! output never depends on the number of workers or on scheduling.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::integrate::{integrate, IntegrateError, IntegratorConfig, Trajectory};
use crate::sysdsl::SystemDef;

/// Initial conditions handled between cancellation checks.
pub const BATCH: usize = 256;

pub(crate) const STREAM_IC: u64 = 1;
pub(crate) const STREAM_PERTURB: u64 = 2;

pub(crate) fn stream(seed: u64, purpose: u64, index: u64, copy: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&copy.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Default)]
pub struct Progress {
    pub done: AtomicUsize,
    pub total: AtomicUsize,
}

impl Progress {
    pub fn fraction(&self) -> f64 {
        let total = self.total.load(Ordering::Relaxed);
        if total == 0 {
            0.0
        } else {
            (self.done.load(Ordering::Relaxed) as f64 / total as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cancelled")]
pub struct Cancelled;

/// Worker cap plus optional progress and cancellation hooks.
#[derive(Debug, Clone, Default)]
pub struct Exec {
    /// Thread count; 0 uses every available core.
    pub workers: usize,
    pub progress: Option<Arc<Progress>>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Exec {
    pub fn with_workers(workers: usize) -> Exec {
        Exec { workers, ..Exec::default() }
    }

    /// Adds `n` to the progress total; `map` counts finished items against it.
    pub fn add_total(&self, n: usize) {
        if let Some(p) = &self.progress {
            p.total.fetch_add(n, Ordering::Relaxed);
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }

    /// `f(0..n)` in index order, in batches of [`BATCH`].
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>, Cancelled>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("thread pool");
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(BATCH) {
            if self.cancelled() {
                return Err(Cancelled);
            }
            let end = (start + BATCH).min(n);
            let batch: Vec<T> = pool.install(|| (start..end).into_par_iter().map(&f).collect());
            out.extend(batch);
            if let Some(p) = &self.progress {
                p.done.fetch_add(end - start, Ordering::Relaxed);
            }
        }
        if self.cancelled() {
            return Err(Cancelled);
        }
        Ok(out)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Cancelled(#[from] Cancelled),
}

/// Integrates every point; trajectory `i` carries `ic_index = i`.
pub fn integrate_ensemble(
    sys: &SystemDef,
    points: &[Vec<f64>],
    cfg: &IntegratorConfig,
    exec: &Exec,
) -> Result<Vec<Trajectory>, EnsembleError> {
    let results = exec.map(points.len(), |i| {
        integrate(sys, &points[i], cfg).map(|mut t| {
            t.ic_index = i;
            t
        })
    })?;
    Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?)
}
