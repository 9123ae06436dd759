//! Event-sourced state: primes, jobs, songs, ratings and preferences.
//!
//! State only changes by applying an [`Event`]; command helpers validate a
//! request against the current state and return the event to commit. An
//! [`EventSink`] decides where committed events go (memory only, or an
//! append-only log first).

use std::collections::BTreeMap;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, Standardization};
use crate::domain::{
    concat_prompt, ArtistId, ArtistProfile, FeatureVector, GenreId, GenreProfile, JobId, ListenerId, Millis,
    PreferenceProfile, PreferenceWeights, Prime, PrimeId, Rating, RatingId, RatingQuestion, Song, SongId, Stars,
};
use crate::error::{Error, Result};
use crate::generator::{GeneratedAudio, GenerationRequest, GeneratorBackend};
use crate::queue::{GenerationJob, JobQueue, JobState, JobTransition};
use crate::recommender::QuestionMeans;
use crate::scheduler::StoreCounts;

/// One answer to one question; ratings are upserted answer by answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSubmitted {
    pub rating_id: RatingId,
    pub listener_id: ListenerId,
    pub song_id: SongId,
    pub question: RatingQuestion,
    pub stars: Stars,
    pub submitted_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTransitioned {
    pub job_id: JobId,
    pub transition: JobTransition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    PrimeAdded(Prime),
    JobEnqueued(GenerationJob),
    JobTransition(JobTransitioned),
    SongAdded(Song),
    RatingSubmitted(AnswerSubmitted),
    PreferenceUpdated(PreferenceProfile),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::PrimeAdded(_) => "prime_added",
            Event::JobEnqueued(_) => "job_enqueued",
            Event::JobTransition(_) => "job_transition",
            Event::SongAdded(_) => "song_added",
            Event::RatingSubmitted(_) => "rating_submitted",
            Event::PreferenceUpdated(_) => "preference_updated",
        }
    }
}

/// A line of the append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub sequence_number: u64,
    pub timestamp: Millis,
    #[serde(flatten)]
    pub event: Event,
}

/// Canonical, order-stable view of the store used for equality checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub primes: Vec<Prime>,
    pub jobs: Vec<GenerationJob>,
    pub songs: Vec<Song>,
    pub ratings: Vec<Rating>,
    pub preferences: Vec<PreferenceProfile>,
    pub standardization: Standardization,
}

impl StoreSnapshot {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RadioStore {
    catalog: Catalog,
    primes: BTreeMap<PrimeId, Prime>,
    songs: IndexMap<SongId, Song>,
    /// Keyed by song first so a song's ratings are a contiguous range.
    ratings: BTreeMap<(SongId, ListenerId), Rating>,
    preferences: BTreeMap<ListenerId, PreferenceProfile>,
    queue: JobQueue,
    answer_count: usize,
}

impl RadioStore {
    pub fn new(catalog: Catalog, queue_capacity: usize) -> Self {
        Self {
            catalog,
            primes: BTreeMap::new(),
            songs: IndexMap::new(),
            ratings: BTreeMap::new(),
            preferences: BTreeMap::new(),
            queue: JobQueue::with_capacity(queue_capacity),
            answer_count: 0,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn prime(&self, id: &PrimeId) -> Option<&Prime> {
        self.primes.get(id)
    }

    pub fn primes(&self) -> impl Iterator<Item = &Prime> {
        self.primes.values()
    }

    pub fn song(&self, id: &SongId) -> Option<&Song> {
        self.songs.get(id)
    }

    /// Songs in the order they were persisted.
    pub fn songs(&self) -> impl Iterator<Item = &Song> {
        self.songs.values()
    }

    pub fn song_ids(&self) -> impl Iterator<Item = &SongId> {
        self.songs.keys()
    }

    pub fn song_count(&self) -> usize {
        self.songs.len()
    }

    pub fn ratings(&self) -> impl Iterator<Item = &Rating> {
        self.ratings.values()
    }

    pub fn ratings_vec(&self) -> Vec<Rating> {
        self.ratings.values().cloned().collect()
    }

    pub fn ratings_for_song(&self, song: &SongId) -> Vec<&Rating> {
        self.ratings
            .range((song.clone(), ListenerId::new(""))..)
            .take_while(|((s, _), _)| s == song)
            .map(|(_, r)| r)
            .collect()
    }

    pub fn rating(&self, listener: &ListenerId, song: &SongId) -> Option<&Rating> {
        self.ratings.get(&(song.clone(), listener.clone()))
    }

    /// Stored answers across all ratings.
    pub fn answer_count(&self) -> usize {
        self.answer_count
    }

    pub fn counts(&self) -> StoreCounts {
        StoreCounts {
            ratings: self.ratings.len(),
            songs: self.songs.len(),
        }
    }

    pub fn preference(&self, listener: &ListenerId) -> PreferenceProfile {
        self.preferences
            .get(listener)
            .cloned()
            .unwrap_or_else(|| PreferenceProfile::defaults(listener.clone()))
    }

    /// Mean centered answer per question over everyone who rated `song`.
    pub fn question_means(&self, song: &SongId) -> QuestionMeans {
        let mut acc: BTreeMap<RatingQuestion, (f64, u32)> = BTreeMap::new();
        for r in self.ratings_for_song(song) {
            for (q, s) in &r.answers {
                let e = acc.entry(*q).or_insert((0.0, 0));
                e.0 += s.centered();
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(q, (sum, n))| (q, sum / f64::from(n)))
            .collect()
    }

    pub fn queue(&self) -> &JobQueue {
        &self.queue
    }

    pub fn job(&self, id: &JobId) -> Option<&GenerationJob> {
        self.queue.get(id)
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let mut songs: Vec<Song> = self.songs.values().cloned().collect();
        songs.sort_by(|a, b| a.song_id.cmp(&b.song_id));
        let mut jobs: Vec<GenerationJob> = self.queue.jobs().cloned().collect();
        jobs.sort_by(|a, b| a.job_id.cmp(&b.job_id));
        let mut ratings: Vec<Rating> = self.ratings.values().cloned().collect();
        ratings.sort_by(|a, b| a.rating_id.cmp(&b.rating_id));
        StoreSnapshot {
            primes: self.primes.values().cloned().collect(),
            jobs,
            songs,
            ratings,
            preferences: self.preferences.values().cloned().collect(),
            standardization: self.catalog.standardization.clone(),
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::PrimeAdded(p) => {
                if self.primes.contains_key(&p.prime_id) {
                    return Err(Error::Validation(format!("duplicate prime {}", p.prime_id)));
                }
                self.primes.insert(p.prime_id.clone(), p.clone());
            }
            Event::JobEnqueued(job) => {
                self.check_refs(&job.prime_id, &job.artist_prompt, &job.genre_prompt)?;
                self.queue.insert(job.clone())?;
            }
            Event::JobTransition(t) => {
                if let JobTransition::Complete { song_id, .. } = &t.transition {
                    if !self.songs.contains_key(song_id) {
                        return Err(Error::UnknownId {
                            kind: "song",
                            id: song_id.to_string(),
                        });
                    }
                }
                self.queue.transition(&t.job_id, &t.transition)?;
            }
            Event::SongAdded(song) => {
                if self.songs.contains_key(&song.song_id) {
                    return Err(Error::Validation(format!("song {} already persisted", song.song_id)));
                }
                self.check_refs(&song.prime_id, &song.artist_prompt, &song.genre_prompt)?;
                self.songs.insert(song.song_id.clone(), song.clone());
                let feats: Vec<&FeatureVector> = self.songs.values().map(|s| &s.song_features).collect();
                let standardization = Standardization::from_samples(feats);
                self.catalog.standardization = standardization;
            }
            Event::RatingSubmitted(a) => {
                if !self.songs.contains_key(&a.song_id) {
                    return Err(Error::UnknownId {
                        kind: "song",
                        id: a.song_id.to_string(),
                    });
                }
                let key = (a.song_id.clone(), a.listener_id.clone());
                let rating = self.ratings.entry(key).or_insert_with(|| Rating {
                    rating_id: a.rating_id.clone(),
                    listener_id: a.listener_id.clone(),
                    song_id: a.song_id.clone(),
                    answers: BTreeMap::new(),
                    submitted_at: a.submitted_at,
                });
                if rating.answers.insert(a.question, a.stars).is_none() {
                    self.answer_count += 1;
                }
                rating.submitted_at = a.submitted_at;
            }
            Event::PreferenceUpdated(p) => {
                p.weights.validate()?;
                self.preferences.insert(p.listener_id.clone(), p.clone());
            }
        }
        Ok(())
    }

    fn check_refs(&self, prime: &PrimeId, artist: &ArtistId, genre: &GenreId) -> Result<()> {
        if !self.primes.contains_key(prime) {
            return Err(Error::UnknownId {
                kind: "prime",
                id: prime.to_string(),
            });
        }
        self.catalog.artist(artist)?;
        self.catalog.genre(genre)?;
        Ok(())
    }

    pub fn next_prime_id(&self) -> PrimeId {
        PrimeId(format!("prime-{:06}", self.primes.len() + 1))
    }

    pub fn prime_event(
        &self,
        contributor_name: impl Into<String>,
        prime_artist_features: FeatureVector,
        audio_ref: impl Into<String>,
        at: Millis,
    ) -> Event {
        Event::PrimeAdded(Prime {
            prime_id: self.next_prime_id(),
            contributor_name: contributor_name.into(),
            prime_artist_features,
            audio_ref: audio_ref.into(),
            submitted_at: at,
        })
    }

    pub fn enqueue_event(&self, prime: &PrimeId, artist: &ArtistId, genre: &GenreId, at: Millis) -> Result<Event> {
        self.check_refs(prime, artist, genre)?;
        if self.queue.is_full() {
            return Err(Error::QueueFull {
                capacity: self.queue.capacity(),
            });
        }
        let job_id = self.queue.next_job_id();
        let seed = job_seed(&job_id);
        Ok(Event::JobEnqueued(GenerationJob::queued(
            job_id,
            prime.clone(),
            artist.clone(),
            genre.clone(),
            at,
            seed,
        )))
    }

    /// Upsert one answer. `None` when the stored answer already equals it.
    pub fn answer_event(
        &self,
        listener: &ListenerId,
        song: &SongId,
        question: RatingQuestion,
        stars: Stars,
        at: Millis,
    ) -> Result<Option<Event>> {
        if !self.songs.contains_key(song) {
            return Err(Error::UnknownId {
                kind: "song",
                id: song.to_string(),
            });
        }
        if self
            .rating(listener, song)
            .and_then(|r| r.answers.get(&question))
            == Some(&stars)
        {
            return Ok(None);
        }
        Ok(Some(Event::RatingSubmitted(AnswerSubmitted {
            rating_id: Rating::id_for(listener, song),
            listener_id: listener.clone(),
            song_id: song.clone(),
            question,
            stars,
            submitted_at: at,
        })))
    }

    pub fn preference_event(&self, listener: &ListenerId, weights: PreferenceWeights) -> Result<Event> {
        Ok(Event::PreferenceUpdated(PreferenceProfile::new(listener.clone(), weights)?))
    }

    /// Rebuild a store by replaying log records in order.
    pub fn replay<'a, I>(catalog: Catalog, queue_capacity: usize, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LogRecord>,
    {
        let mut store = Self::new(catalog, queue_capacity);
        let mut expected = 1;
        for rec in records {
            if rec.sequence_number != expected {
                return Err(Error::Replay {
                    sequence: rec.sequence_number,
                    reason: format!("expected sequence {expected}"),
                });
            }
            store.apply(&rec.event).map_err(|e| Error::Replay {
                sequence: rec.sequence_number,
                reason: e.to_string(),
            })?;
            expected += 1;
        }
        Ok(store)
    }
}

fn job_seed(job: &JobId) -> u64 {
    let digest = Sha256::digest(job.as_str().as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Where committed events go. Implementations must apply the event to their
/// store only after it is durably recorded.
pub trait EventSink {
    fn store(&self) -> &RadioStore;
    fn commit(&mut self, event: Event) -> Result<()>;
}

impl EventSink for RadioStore {
    fn store(&self) -> &RadioStore {
        self
    }

    fn commit(&mut self, event: Event) -> Result<()> {
        self.apply(&event)
    }
}

/// Inputs for one generation, detached from the store so the slow backend
/// call can run without holding it.
#[derive(Debug, Clone)]
pub struct WorkItem {
    pub job: GenerationJob,
    pub prime: Prime,
    pub artist: ArtistProfile,
    pub genre: GenreProfile,
    /// Song already persisted by an interrupted step.
    pub existing_song: Option<SongId>,
}

impl WorkItem {
    pub fn request(&self) -> GenerationRequest<'_> {
        GenerationRequest {
            prime: &self.prime,
            artist: &self.artist,
            genre: &self.genre,
            seed: self.job.seed,
        }
    }
}

/// Pick the next job and, if it is still queued, the event moving it to
/// running.
pub fn claim_next_job(store: &RadioStore, now: Millis) -> Result<Option<(WorkItem, Option<Event>)>> {
    let Some(job) = store.queue().next_runnable().cloned() else {
        return Ok(None);
    };
    let prime = store
        .prime(&job.prime_id)
        .cloned()
        .ok_or_else(|| Error::UnknownId {
            kind: "prime",
            id: job.prime_id.to_string(),
        })?;
    let artist = store.catalog().artist(&job.artist_prompt)?.clone();
    let genre = store.catalog().genre(&job.genre_prompt)?.clone();
    let start = (job.state == JobState::Queued).then(|| {
        Event::JobTransition(JobTransitioned {
            job_id: job.job_id.clone(),
            transition: JobTransition::Running {
                at: now.max(job.enqueued_at),
            },
        })
    });
    let existing_song = store.song(&job.song_id()).map(|s| s.song_id.clone());
    Ok(Some((
        WorkItem {
            job,
            prime,
            artist,
            genre,
            existing_song,
        },
        start,
    )))
}

/// Events closing a job once the backend has answered.
pub fn finish_job(item: &WorkItem, outcome: Result<GeneratedAudio>, now: Millis) -> Vec<Event> {
    let started = item.job.started_at.unwrap_or(item.job.enqueued_at);
    let at = now.max(started);
    let close = |transition| {
        Event::JobTransition(JobTransitioned {
            job_id: item.job.job_id.clone(),
            transition,
        })
    };
    if let Some(song_id) = &item.existing_song {
        return vec![close(JobTransition::Complete {
            at,
            song_id: song_id.clone(),
        })];
    }
    match outcome {
        Ok(audio) => {
            let song = Song {
                song_id: item.job.song_id(),
                prime_id: item.prime.prime_id.clone(),
                artist_prompt: item.artist.artist_id.clone(),
                genre_prompt: item.genre.genre_id.clone(),
                prompt_features: concat_prompt(
                    &item.prime.prime_artist_features,
                    &item.artist.features,
                    &item.genre.features,
                ),
                song_features: audio.song_features,
                audio_ref: audio.audio_ref,
                created_at: at,
            };
            let song_id = song.song_id.clone();
            vec![Event::SongAdded(song), close(JobTransition::Complete { at, song_id })]
        }
        Err(e) => vec![close(JobTransition::Failed {
            at,
            reason: e.to_string(),
        })],
    }
}

/// Advance the oldest runnable job to a terminal state. Backend failures are
/// recorded on the job, not returned.
pub fn run_worker_step<S: EventSink + ?Sized>(
    sink: &mut S,
    backend: &dyn GeneratorBackend,
    clock: &mut dyn FnMut() -> Millis,
    latency: Duration,
) -> Result<Option<GenerationJob>> {
    let Some((mut item, start)) = claim_next_job(sink.store(), clock())? else {
        return Ok(None);
    };
    if let Some(ev) = start {
        sink.commit(ev)?;
        item.job = sink
            .store()
            .job(&item.job.job_id)
            .cloned()
            .expect("job just transitioned");
    }
    let outcome = if item.existing_song.is_some() {
        Err(Error::Generator("unused".into()))
    } else {
        if !latency.is_zero() {
            std::thread::sleep(latency);
        }
        backend.generate(&item.request())
    };
    for ev in finish_job(&item, outcome, clock()) {
        sink.commit(ev)?;
    }
    Ok(sink.store().job(&item.job.job_id).cloned())
}
