//! Shared service state and the operations behind each endpoint.
//!
//! Every mutation goes through [`Core::commit`] under the store's write lock:
//! the event is applied (which validates it) and then appended to the log.
//! Reads take the read lock. The generation worker holds the write lock only
//! to commit, never while the backend runs.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use parking_lot::{Mutex, RwLock};
use radio_core::analytics::{render_report, stats_report, AnalysisUnit};
use radio_core::catalog::{provider_registry, Catalog};
use radio_core::domain::{
    feature_domain, now_millis, FeatureVector, PreferenceWeights, PrimeId, RatingQuestion, Song, SongId,
    Stars, FEATURE_NAMES,
};
use radio_core::generator::{generator_registry, GeneratorBackend};
use radio_core::queue::GenerationJob;
use radio_core::recommender::{
    advance_session, quality_score, sample_index, selection_rule_registry, unplayed, ScoredSong, SelectionRule,
};
use radio_core::scheduler::{PromptDecision, Scheduler};
use radio_core::store::{claim_next_job, finish_job, Event, RadioStore};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audio::render_wav;
use crate::config::ServiceConfig;
use crate::error::{ApiError, ServiceError};
use crate::log::{read_log, EventLog};
use crate::sessions::{self, RateLimited, Sessions};

/// The store together with the log that backs it.
pub struct Core {
    pub store: RadioStore,
    log: EventLog,
    catalog: Catalog,
    queue_capacity: usize,
}

impl Core {
    pub fn commit(&mut self, event: Event) -> Result<(), ServiceError> {
        self.store.apply(&event)?;
        if let Err(e) = self.log.append(event, now_millis()) {
            // memory is now ahead of disk; fall back to what is durable
            tracing::error!(error = %e, "log append failed, reloading from disk");
            let records = read_log(self.log.path())?;
            self.store = RadioStore::replay(self.catalog.clone(), self.queue_capacity, &records)?;
            return Err(e);
        }
        Ok(())
    }
}

pub struct Engine {
    cfg: ServiceConfig,
    core: RwLock<Core>,
    sessions: Sessions,
    scheduler: Scheduler,
    generator: Box<dyn GeneratorBackend>,
    rule: Box<dyn SelectionRule>,
    worker: Mutex<()>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SongView {
    #[serde(flatten)]
    pub song: Song,
    pub audio_url: String,
}

impl SongView {
    fn of(song: &Song) -> Self {
        Self {
            song: song.clone(),
            audio_url: format!("/audio/{}.wav", song.song_id),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextSong {
    pub session: String,
    pub song: SongView,
    pub audio_url: String,
    pub question_order: Vec<RatingQuestion>,
    /// Q of the song that just finished; absent at session start.
    pub quality_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimeSubmission {
    pub contributor_name: String,
    pub prime_artist_features: Vec<f64>,
    #[serde(default)]
    pub audio_ref: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimeAccepted {
    pub prime_id: PrimeId,
    pub job_id: radio_core::domain::JobId,
    pub decision: PromptDecision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateAck {
    pub status: &'static str,
    /// False when the answer was already stored with the same value.
    pub changed: bool,
}

impl Engine {
    pub fn open(cfg: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        cfg.validate()?;
        let provider = provider_registry().build(
            &cfg.catalog_provider,
            &json!({ "path": cfg.catalog_path.to_string_lossy() }),
        )?;
        let catalog = provider.load()?;
        Self::with_catalog(cfg, catalog)
    }

    pub fn with_catalog(cfg: ServiceConfig, catalog: Catalog) -> Result<Arc<Self>, ServiceError> {
        cfg.validate()?;
        let (log, records) = EventLog::open(&cfg.log_path(), cfg.fsync)?;
        let store = RadioStore::replay(catalog.clone(), cfg.queue_capacity, &records)?;
        tracing::info!(events = records.len(), songs = store.song_count(), "state restored");
        let scheduler = Scheduler::new(cfg.scheduler.clone())?;
        let generator = generator_registry().build(&cfg.generator.backend, &cfg.generator.params)?;
        let rule = selection_rule_registry().build(&cfg.selection_rule, &serde_json::Value::Null)?;
        Ok(Arc::new(Self {
            core: RwLock::new(Core {
                store,
                log,
                catalog,
                queue_capacity: cfg.queue_capacity,
            }),
            cfg,
            sessions: Sessions::default(),
            scheduler,
            generator,
            rule,
            worker: Mutex::new(()),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    /// Read access to the store, for tests and tooling.
    pub fn read<T>(&self, f: impl FnOnce(&RadioStore) -> T) -> T {
        f(&self.core.read().store)
    }

    pub fn snapshot_json(&self) -> String {
        self.core.read().store.snapshot().canonical_json()
    }

    /// Resolve a client token: absent means a new session, present must be
    /// well formed.
    pub fn resolve_token(token: Option<&str>) -> Result<String, ApiError> {
        match token {
            None | Some("") => Ok(sessions::new_token()),
            Some(t) if sessions::is_well_formed(t) => Ok(t.to_owned()),
            Some(_) => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_session",
                "session token must be 32-128 hex digits",
            )),
        }
    }

    fn with_session<T>(
        &self,
        token: &str,
        f: impl FnOnce(&mut sessions::Session) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        match self.sessions.with(token, now_millis(), self.cfg.rate_limit_per_sec, f) {
            Ok(r) => r,
            Err(RateLimited) => Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "rate_limited",
                format!("more than {} requests per second", self.cfg.rate_limit_per_sec),
            )),
        }
    }

    pub fn next_song(&self, token: &str) -> Result<NextSong, ApiError> {
        self.with_session(token, |session| {
            let core = self.core.read();
            let store = &core.store;
            if store.song_count() == 0 {
                return Err(ApiError::new(StatusCode::CONFLICT, "catalog_empty", "no songs have been generated yet"));
            }
            let listener = session.state.listener_id.clone();
            session.state.preference = store.preference(&listener);
            let std = &store.catalog().standardization;

            let current = session.state.current_song_id.as_ref().and_then(|id| store.song(id));
            let q = current.map(|song| {
                quality_score(
                    store.rating(&listener, &song.song_id),
                    &store.question_means(&song.song_id),
                    &session.state.preference.weights,
                )
            });
            let mut candidates = unplayed(&session.state, store.songs(), std);
            if candidates.is_empty() {
                // only the current song exists
                candidates = store
                    .songs()
                    .map(|s| ScoredSong {
                        song_id: s.song_id.clone(),
                        features: std.apply(&s.song_features),
                    })
                    .collect();
            }
            let mut rng = session.state.next_rng();
            let probs = match current {
                Some(song) => {
                    let x = std.apply(&song.song_features);
                    let d: Vec<f64> = candidates.iter().map(|c| c.features.distance(&x)).collect();
                    self.rule.probabilities(&d, q.unwrap_or(0.0), &self.cfg.recommender)
                }
                None => vec![1.0 / candidates.len() as f64; candidates.len()],
            };
            let chosen = candidates[sample_index(&probs, &mut rng)].song_id.clone();
            let mut order = RatingQuestion::ALL.to_vec();
            order.shuffle(&mut rng);

            let state = std::mem::replace(
                &mut session.state,
                radio_core::recommender::SessionState::new(listener.clone(), 0),
            );
            session.state = advance_session(state, chosen.clone(), store.song_ids());
            let song = store.song(&chosen).expect("chosen from the store");
            Ok(NextSong {
                session: session.token.clone(),
                song: SongView::of(song),
                audio_url: format!("/audio/{chosen}.wav"),
                question_order: order,
                quality_score: q,
            })
        })
    }

    pub fn rate(&self, token: &str, song: &SongId, question: RatingQuestion, stars: i64) -> Result<RateAck, ApiError> {
        let listener = self.with_session(token, |s| Ok(s.state.listener_id.clone()))?;
        let stars = Stars::new(stars)?;
        let mut core = self.core.write();
        match core.store.answer_event(&listener, song, question, stars, now_millis())? {
            None => Ok(RateAck { status: "ok", changed: false }),
            Some(ev) => {
                core.commit(ev)?;
                Ok(RateAck { status: "ok", changed: true })
            }
        }
    }

    pub fn preferences(&self, token: &str) -> Result<PreferenceWeights, ApiError> {
        let listener = self.with_session(token, |s| Ok(s.state.listener_id.clone()))?;
        Ok(self.core.read().store.preference(&listener).weights)
    }

    pub fn set_preferences(&self, token: &str, weights: PreferenceWeights) -> Result<PreferenceWeights, ApiError> {
        let listener = self.with_session(token, |s| Ok(s.state.listener_id.clone()))?;
        let mut core = self.core.write();
        let ev = core.store.preference_event(&listener, weights)?;
        core.commit(ev)?;
        Ok(weights)
    }

    pub fn check_admin(&self, authorization: Option<&str>) -> Result<(), ApiError> {
        let presented = authorization.and_then(|h| h.strip_prefix("Bearer "));
        match (&self.cfg.admin_token, presented) {
            (Some(expected), Some(got)) if !expected.is_empty() && expected == got => Ok(()),
            _ => Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "admin token required")),
        }
    }

    pub fn submit_prime(&self, sub: PrimeSubmission) -> Result<PrimeAccepted, ApiError> {
        if sub.contributor_name.trim().is_empty() {
            return Err(ApiError::validation("contributor_name must not be empty"));
        }
        let features = FeatureVector::try_from(sub.prime_artist_features)?;
        for (i, v) in features.as_array().iter().enumerate() {
            let (lo, hi) = feature_domain(i);
            if !(lo..=hi).contains(v) {
                return Err(ApiError::validation(format!(
                    "{} = {v} outside [{lo}, {hi}]",
                    FEATURE_NAMES[i]
                )));
            }
        }
        let mut core = self.core.write();
        if core.store.queue().is_full() {
            return Err(radio_core::Error::QueueFull {
                capacity: core.store.queue().capacity(),
            }
            .into());
        }
        let now = now_millis();
        let audio_ref = sub.audio_ref.unwrap_or_default();
        let ev = core.store.prime_event(sub.contributor_name, features, audio_ref, now);
        let Event::PrimeAdded(prime) = &ev else { unreachable!() };
        let prime = prime.clone();
        core.commit(ev)?;

        let store = &core.store;
        let counts = store.counts();
        let model = self
            .scheduler
            .fit(store.songs(), |s| store.ratings_for_song(&s.song_id), counts)?;
        let mut rng = self.decision_rng(store.primes().count() as u64);
        let decision = self
            .scheduler
            .select_prompt(&prime, store.catalog(), model.as_ref(), counts, &mut rng)?;
        let ev = store.enqueue_event(&prime.prime_id, &decision.artist_prompt, &decision.genre_prompt, now)?;
        let Event::JobEnqueued(job) = &ev else { unreachable!() };
        let job_id = job.job_id.clone();
        core.commit(ev)?;
        Ok(PrimeAccepted {
            prime_id: prime.prime_id,
            job_id,
            decision,
        })
    }

    /// Seeded configs give one reproducible stream per prime.
    fn decision_rng(&self, prime_number: u64) -> ChaCha8Rng {
        let mut rng = match self.cfg.scheduler.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::seed_from_u64(rand::rng().next_u64()),
        };
        rng.set_stream(prime_number);
        rng
    }

    pub fn stats(&self, unit: Option<AnalysisUnit>) -> String {
        let ratings = self.core.read().store.ratings_vec();
        render_report(&stats_report(&ratings, unit.unwrap_or(self.cfg.stats_unit)))
    }

    pub fn song(&self, id: &SongId) -> Result<SongView, ApiError> {
        self.core
            .read()
            .store
            .song(id)
            .map(SongView::of)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown song {id}")))
    }

    pub fn job(&self, id: &radio_core::domain::JobId) -> Result<GenerationJob, ApiError> {
        self.core
            .read()
            .store
            .job(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown job {id}")))
    }

    /// WAV bytes for a song, cached under `data_dir/audio`.
    pub fn audio(&self, id: &SongId) -> Result<Vec<u8>, ApiError> {
        let path = self.cfg.audio_dir().join(format!("{id}.wav"));
        if let Ok(bytes) = std::fs::read(&path) {
            return Ok(bytes);
        }
        let song = self.song(id)?.song;
        let bytes = render_wav(&song);
        if let Err(e) = write_audio(&path, &bytes) {
            tracing::warn!(error = %e, "could not cache audio");
        }
        Ok(bytes)
    }

    /// Drive the oldest runnable job to a terminal state.
    pub fn worker_step(&self) -> Result<Option<GenerationJob>, ServiceError> {
        let _single_consumer = self.worker.lock();
        let item = {
            let mut core = self.core.write();
            let Some((mut item, start)) = claim_next_job(&core.store, now_millis())? else {
                return Ok(None);
            };
            if let Some(ev) = start {
                core.commit(ev)?;
                item.job = core.store.job(&item.job.job_id).cloned().expect("job exists");
            }
            item
        };
        let outcome = if item.existing_song.is_some() {
            Err(radio_core::Error::Generator("already generated".into()))
        } else {
            if self.cfg.generation_latency_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.generation_latency_ms));
            }
            self.generator.generate(&item.request())
        };
        let events = finish_job(&item, outcome, now_millis());
        let mut core = self.core.write();
        for ev in events {
            if let Event::SongAdded(song) = &ev {
                let path = self.cfg.audio_dir().join(format!("{}.wav", song.song_id));
                if let Err(e) = write_audio(&path, &render_wav(song)) {
                    tracing::warn!(error = %e, "could not write audio");
                }
            }
            core.commit(ev)?;
        }
        let job = core.store.job(&item.job.job_id).cloned();
        if let Some(j) = &job {
            tracing::info!(job = %j.job_id, state = %j.state, "job finished");
        }
        Ok(job)
    }

    /// Run worker steps until the queue is idle; returns how many ran.
    pub fn drain_queue(&self) -> Result<usize, ServiceError> {
        let mut n = 0;
        while self.worker_step()?.is_some() {
            n += 1;
        }
        Ok(n)
    }
}

fn write_audio(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)
}
