//! Generation jobs and their FIFO queue.
//!
//! Jobs move `queued -> running -> complete | failed` and nothing else. The
//! queue is bounded; a single worker drains it oldest-first, resuming a job
//! left `running` by a crash before claiming new work.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::domain::{ArtistId, GenreId, JobId, Millis, PrimeId, SongId};
use crate::error::{Error, Result};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Complete,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Complete | JobState::Failed)
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Complete => "complete",
            JobState::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: JobId,
    pub prime_id: PrimeId,
    pub artist_prompt: ArtistId,
    pub genre_prompt: GenreId,
    pub state: JobState,
    pub enqueued_at: Millis,
    pub started_at: Option<Millis>,
    pub finished_at: Option<Millis>,
    pub result_song_id: Option<SongId>,
    pub failure_reason: Option<String>,
    /// Seed handed to the generator backend.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "to", rename_all = "snake_case")]
pub enum JobTransition {
    Running { at: Millis },
    Complete { at: Millis, song_id: SongId },
    Failed { at: Millis, reason: String },
}

impl JobTransition {
    pub fn target(&self) -> JobState {
        match self {
            JobTransition::Running { .. } => JobState::Running,
            JobTransition::Complete { .. } => JobState::Complete,
            JobTransition::Failed { .. } => JobState::Failed,
        }
    }
}

impl GenerationJob {
    pub fn queued(
        job_id: JobId,
        prime_id: PrimeId,
        artist_prompt: ArtistId,
        genre_prompt: GenreId,
        enqueued_at: Millis,
        seed: u64,
    ) -> Self {
        Self {
            job_id,
            prime_id,
            artist_prompt,
            genre_prompt,
            state: JobState::Queued,
            enqueued_at,
            started_at: None,
            finished_at: None,
            result_song_id: None,
            failure_reason: None,
            seed,
        }
    }

    /// Song id a job produces; one per job, so a retried step can detect a
    /// song it already persisted.
    pub fn song_id(&self) -> SongId {
        song_id_for(&self.job_id)
    }

    /// Apply a transition, rejecting illegal moves and clock regressions.
    pub fn apply(&mut self, t: &JobTransition) -> Result<()> {
        let illegal = || Error::IllegalTransition {
            job_id: self.job_id.to_string(),
            from: self.state.to_string(),
            to: t.target().to_string(),
        };
        match (self.state, t) {
            (JobState::Queued, JobTransition::Running { at }) => {
                if *at < self.enqueued_at {
                    return Err(illegal());
                }
                self.state = JobState::Running;
                self.started_at = Some(*at);
            }
            (JobState::Running, JobTransition::Complete { at, song_id }) => {
                if Some(*at) < self.started_at {
                    return Err(illegal());
                }
                self.state = JobState::Complete;
                self.finished_at = Some(*at);
                self.result_song_id = Some(song_id.clone());
            }
            (JobState::Running, JobTransition::Failed { at, reason }) => {
                if Some(*at) < self.started_at {
                    return Err(illegal());
                }
                self.state = JobState::Failed;
                self.finished_at = Some(*at);
                self.failure_reason = Some(reason.clone());
            }
            _ => return Err(illegal()),
        }
        Ok(())
    }

    /// Structural invariants that must hold in every state.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        match self.state {
            JobState::Queued => {
                if self.started_at.is_some() || self.finished_at.is_some() {
                    return Err("queued job has timestamps".into());
                }
            }
            JobState::Running => {
                if self.started_at.is_none() || self.finished_at.is_some() {
                    return Err("running job timestamps inconsistent".into());
                }
            }
            JobState::Complete => {
                if self.result_song_id.is_none() {
                    return Err("complete job without song".into());
                }
            }
            JobState::Failed => {
                if self.failure_reason.is_none() {
                    return Err("failed job without reason".into());
                }
            }
        }
        let started = self.started_at.unwrap_or(self.enqueued_at);
        if started < self.enqueued_at || self.finished_at.is_some_and(|f| f < started) {
            return Err("timestamps not monotone".into());
        }
        Ok(())
    }
}

pub fn song_id_for(job: &JobId) -> SongId {
    SongId(format!("song-{}", job.as_str().trim_start_matches("job-")))
}

/// Bounded FIFO of generation jobs, keyed by id in enqueue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobQueue {
    jobs: IndexMap<JobId, GenerationJob>,
    capacity: usize,
}

impl Default for JobQueue {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_QUEUE_CAPACITY)
    }
}

impl JobQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            jobs: IndexMap::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Jobs not yet finished.
    pub fn outstanding(&self) -> usize {
        self.jobs.values().filter(|j| !j.state.is_terminal()).count()
    }

    pub fn is_full(&self) -> bool {
        self.outstanding() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn get(&self, id: &JobId) -> Option<&GenerationJob> {
        self.jobs.get(id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &GenerationJob> {
        self.jobs.values()
    }

    pub fn next_job_id(&self) -> JobId {
        JobId(format!("job-{:06}", self.jobs.len() + 1))
    }

    pub fn insert(&mut self, job: GenerationJob) -> Result<()> {
        if job.state != JobState::Queued {
            return Err(Error::Validation(format!(
                "job {} must be enqueued in state queued",
                job.job_id
            )));
        }
        if self.jobs.contains_key(&job.job_id) {
            return Err(Error::Validation(format!("duplicate job id {}", job.job_id)));
        }
        if self.is_full() {
            return Err(Error::QueueFull {
                capacity: self.capacity,
            });
        }
        self.jobs.insert(job.job_id.clone(), job);
        Ok(())
    }

    pub fn transition(&mut self, id: &JobId, t: &JobTransition) -> Result<&GenerationJob> {
        let job = self.jobs.get_mut(id).ok_or_else(|| Error::UnknownId {
            kind: "job",
            id: id.to_string(),
        })?;
        job.apply(t)?;
        Ok(job)
    }

    /// The job the worker should handle next: a job left running by an
    /// interrupted step first, then the oldest queued job.
    pub fn next_runnable(&self) -> Option<&GenerationJob> {
        self.jobs
            .values()
            .find(|j| j.state == JobState::Running)
            .or_else(|| self.jobs.values().find(|j| j.state == JobState::Queued))
    }
}
