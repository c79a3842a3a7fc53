//! In-memory job registry. Each job runs on tokio's blocking pool and
//! publishes progress through a mutex the handlers read.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use bilayer_core::api::{
    ApiError, ErrorKind, JobKind, JobOutput, JobState, JobStatus, RunSummary, VerifyRequest,
};
use bilayer_core::output::render_diagnostics;
use bilayer_core::simulation::{run, Progress, RunOptions, ScenarioConfig};
use bilayer_core::sweep::{sweep_epsilon, SweepOptions};
use bilayer_core::verify::{verify_cylinder, verify_heat, VerifyReport};
use bilayer_core::Error;

#[derive(Debug)]
struct JobData {
    state: JobState,
    progress: Option<Progress>,
    sweep_j: Option<i32>,
    output: Option<JobOutput>,
    diagnostics: Option<String>,
    error: Option<ApiError>,
}

#[derive(Debug)]
pub struct Job {
    pub id: u64,
    pub kind: JobKind,
    cancel: Arc<AtomicBool>,
    data: Mutex<JobData>,
}

impl Job {
    fn new(id: u64, kind: JobKind) -> Self {
        Job {
            id,
            kind,
            cancel: Arc::new(AtomicBool::new(false)),
            data: Mutex::new(JobData {
                state: JobState::Running,
                progress: None,
                sweep_j: None,
                output: None,
                diagnostics: None,
                error: None,
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, JobData> {
        self.data.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn status(&self) -> JobStatus {
        let d = self.lock();
        JobStatus {
            id: self.id,
            kind: self.kind,
            state: d.state,
            sweep_j: d.sweep_j,
            progress: d.progress,
            error: d.error.clone(),
        }
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    pub fn output(&self) -> Result<JobOutput, ApiError> {
        let d = self.lock();
        match d.state {
            JobState::Running => Err(ApiError::new(
                ErrorKind::Conflict,
                format!("job {} is still running", self.id),
            )),
            JobState::Completed => Ok(d.output.clone().expect("completed job has output")),
            _ => Err(d.error.clone().expect("failed job has an error")),
        }
    }

    /// `diagnostics.csv` of a finished run job.
    pub fn diagnostics(&self) -> Result<String, ApiError> {
        let d = self.lock();
        if self.kind != JobKind::Run {
            return Err(ApiError::new(
                ErrorKind::NotFound,
                format!("job {} is not a run", self.id),
            ));
        }
        d.diagnostics.clone().ok_or_else(|| {
            ApiError::new(
                ErrorKind::Conflict,
                format!("job {} has no diagnostics yet", self.id),
            )
        })
    }

    fn set_progress(&self, p: &Progress) {
        self.lock().progress = Some(*p);
    }

    fn finish(&self, result: Result<JobOutput, Error>) {
        let mut d = self.lock();
        match result {
            Ok(out) => {
                d.state = JobState::Completed;
                d.output = Some(out);
            }
            Err(e) => {
                let err = ApiError::from(&e);
                d.state = if err.kind == ErrorKind::Cancelled {
                    JobState::Cancelled
                } else {
                    JobState::Failed
                };
                log::warn!("job {} ended: {}", self.id, err.message);
                d.error = Some(err);
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    next: AtomicU64,
    jobs: Mutex<BTreeMap<u64, Arc<Job>>>,
}

impl Registry {
    fn insert(&self, kind: JobKind) -> Arc<Job> {
        let id = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let job = Arc::new(Job::new(id, kind));
        self.lock().insert(id, job.clone());
        job
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<u64, Arc<Job>>> {
        self.jobs.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn get(&self, id: u64) -> Option<Arc<Job>> {
        self.lock().get(&id).cloned()
    }

    pub fn list(&self) -> Vec<JobStatus> {
        self.lock().values().map(|j| j.status()).collect()
    }

    /// Drops a finished job; running jobs must be cancelled first.
    pub fn remove(&self, id: u64) -> Result<(), ApiError> {
        let mut jobs = self.lock();
        match jobs.get(&id) {
            None => Err(not_found(id)),
            Some(j) if !j.status().state.is_finished() => Err(ApiError::new(
                ErrorKind::Conflict,
                format!("job {id} is still running"),
            )),
            Some(_) => {
                jobs.remove(&id);
                Ok(())
            }
        }
    }

    pub fn start_run(&self, config: ScenarioConfig, out_dir: Option<String>, heat_only: bool) -> Arc<Job> {
        let job = self.insert(JobKind::Run);
        let worker = job.clone();
        tokio::task::spawn_blocking(move || {
            let progress_job = worker.clone();
            let result = run(
                &config,
                RunOptions {
                    out_dir: out_dir.as_ref().map(PathBuf::from),
                    heat_only,
                    cancel: Some(worker.cancel.clone()),
                    progress: Some(Box::new(move |p| progress_job.set_progress(p))),
                    ..Default::default()
                },
            );
            let result = result.map(|res| {
                worker.lock().diagnostics = Some(render_diagnostics(&res.diagnostics));
                JobOutput::Run(RunSummary::from_result(&config.name, &res, out_dir))
            });
            worker.finish(result);
        });
        job
    }

    pub fn start_sweep(&self, config: ScenarioConfig, options: SweepOptions) -> Arc<Job> {
        let job = self.insert(JobKind::Sweep);
        let worker = job.clone();
        tokio::task::spawn_blocking(move || {
            let progress_job = worker.clone();
            let result = sweep_epsilon(
                &config,
                &options,
                Some(worker.cancel.clone()),
                Some(Box::new(move |j| {
                    progress_job.lock().sweep_j = Some(j);
                    let inner = progress_job.clone();
                    Some(Box::new(move |p: &Progress| inner.set_progress(p)))
                })),
            );
            worker.finish(result.map(JobOutput::Sweep));
        });
        job
    }

    pub fn start_verify(&self, request: VerifyRequest) -> Arc<Job> {
        let job = self.insert(JobKind::Verify);
        let worker = job.clone();
        tokio::task::spawn_blocking(move || {
            let result = verify_heat(&request.heat).and_then(|heat| {
                if worker.cancel.load(Ordering::Relaxed) {
                    return Err(Error::Cancelled);
                }
                let cylinder = verify_cylinder(&request.cylinder)?;
                Ok(JobOutput::Verify(VerifyReport { heat, cylinder }))
            });
            worker.finish(result);
        });
        job
    }
}

pub fn not_found(id: u64) -> ApiError {
    ApiError::new(ErrorKind::NotFound, format!("no job with id {id}"))
}
