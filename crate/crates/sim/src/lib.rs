//! Closed-loop simulation: synthetic listeners rate mock-generated songs,
//! the scheduler refits each epoch, and each epoch reports how good the
//! scheduled prompts were under the planted preferences.
//!
//! Runs go through the same store, scheduler and worker step as the service,
//! so a simulation exercises the production decision path end to end.

pub mod population;

use std::io::Write;
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radio_core::catalog::Catalog;
use radio_core::domain::{ArtistId, GenreId, Prime, RatingQuestion, Stars};
use radio_core::error::{Error, Result};
use radio_core::generator::MockGenerator;
use radio_core::queue::JobState;
use radio_core::scheduler::{sample_candidates, DecisionMode, Scheduler, SchedulerConfig};
use radio_core::store::{run_worker_step, EventSink, RadioStore};
use serde::{Deserialize, Serialize};

pub use population::{
    oracle_pairs, population_registry, LatentFunction, PopulationModel, PromptScaling, SyntheticListener,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub listeners: usize,
    pub epochs: usize,
    pub primes_per_epoch: usize,
    pub ratings_per_song: usize,
    pub gamma: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub noise_sd: f64,
    /// Name in the population registry.
    pub population: String,
    pub ridge_lambda: f64,
    pub min_ratings_for_fit: usize,
    pub min_songs_for_fit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            listeners: 40,
            epochs: 20,
            primes_per_epoch: 5,
            ratings_per_song: 5,
            gamma: 8,
            m: 64,
            seed: 7,
            noise_sd: 0.0,
            population: "linear".into(),
            ridge_lambda: 1.0,
            min_ratings_for_fit: 30,
            min_songs_for_fit: 10,
        }
    }
}

impl SimConfig {
    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            m: self.m,
            gamma: self.gamma,
            ridge_lambda: self.ridge_lambda,
            min_ratings_for_fit: self.min_ratings_for_fit,
            min_songs_for_fit: self.min_songs_for_fit,
            seed: Some(self.seed),
            ..SchedulerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("listeners", self.listeners),
            ("epochs", self.epochs),
            ("primes-per-epoch", self.primes_per_epoch),
            ("ratings-per-song", self.ratings_per_song),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.ratings_per_song > self.listeners {
            return Err(Error::Validation(format!(
                "ratings-per-song ({}) exceeds the population ({})",
                self.ratings_per_song, self.listeners
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Validation("noise-sd must be a nonnegative number".into()));
        }
        self.scheduler().validate()
    }
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Songs generated during the epoch.
    pub songs: usize,
    /// Mean population score of the prompts scheduled this epoch.
    pub mean_true: f64,
    /// Mean centered `like` answer collected this epoch.
    pub mean_like: f64,
    /// Mean gap to the best catalog pair for each prime; never negative.
    pub regret: f64,
}

/// Per-decision detail kept alongside the epoch rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub epoch: usize,
    pub mode: DecisionMode,
    pub artist: ArtistId,
    pub genre: GenreId,
    pub true_score: f64,
    pub best_score: f64,
    /// Fraction of the replayed candidate pool scoring strictly higher than
    /// the chosen pair; 0 means the pool's best.
    pub pool_fraction_above: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub epochs: Vec<EpochReport>,
    pub decisions: Vec<DecisionTrace>,
}

impl SimReport {
    /// Mean of `mean_true` over epochs `range` (0-based, clipped).
    pub fn mean_true_over(&self, range: std::ops::Range<usize>) -> f64 {
        let end = range.end.min(self.epochs.len());
        let rows = &self.epochs[range.start.min(end)..end];
        rows.iter().map(|r| r.mean_true).sum::<f64>() / rows.len() as f64
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.decisions.iter().map(|d| d.best_score - d.true_score).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.epochs {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Exhaustive best (artist, genre) for `prime` under `f`. Ties keep the first
/// pair in catalog order.
pub fn oracle_best_pair(catalog: &Catalog, prime: &Prime, f: &LatentFunction) -> (ArtistId, GenreId, f64) {
    let scaling = PromptScaling::from_catalog(catalog);
    let mut best: Option<(ArtistId, GenreId, f64)> = None;
    for (a, g, s) in oracle_pairs(catalog, prime, f, &scaling) {
        if best.as_ref().is_none_or(|b| s > b.2) {
            best = Some((a, g, s));
        }
    }
    best.expect("catalog has at least one pair")
}

fn sched_rng(seed: u64, decision: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(decision);
    rng
}

pub fn run_simulation(catalog: &Catalog, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let model = population_registry().build(&cfg.population, &serde_json::Value::Null)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let listeners = model.build(catalog, cfg.listeners, cfg.noise_sd, &mut rng);
    let mean_fn = LatentFunction::average(listeners.iter().map(|l| &l.latent));
    let scaling = PromptScaling::from_catalog(catalog);
    let scheduler = Scheduler::new(cfg.scheduler())?;

    let mut store = RadioStore::new(catalog.clone(), usize::MAX);
    let mut clock = 0i64;
    let mut tick = move || {
        clock += 1;
        clock
    };
    let mut decision_no = 0u64;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut decisions = Vec::new();

    for epoch in 1..=cfg.epochs {
        let counts = store.counts();
        let fitted = scheduler.fit(store.songs(), |s| store.ratings_for_song(&s.song_id), counts)?;
        let (mut true_sum, mut regret_sum, mut like_sum, mut like_n, mut songs) = (0.0, 0.0, 0.0, 0usize, 0);

        for _ in 0..cfg.primes_per_epoch {
            let features = population::random_prime(catalog, &mut rng)?;
            let ev = store.prime_event("sim", features, "sim://prime", tick());
            store.commit(ev)?;
            let prime = store.primes().last().cloned().expect("just added");

            decision_no += 1;
            let mut srng = sched_rng(cfg.seed, decision_no);
            let d = scheduler.select_prompt(&prime, catalog, fitted.as_ref(), counts, &mut srng)?;
            let score = |a: &ArtistId, g: &GenreId| {
                mean_fn.score_z(&scaling.apply(&population::pair_features(catalog, &prime, a, g)))
            };
            let chosen = score(&d.artist_prompt, &d.genre_prompt);
            let (_, _, best) = oracle_best_pair(catalog, &prime, &mean_fn);
            let pool_fraction_above = (d.mode_used == DecisionMode::Fitted).then(|| {
                let pool = sample_candidates(catalog, cfg.m, &mut sched_rng(cfg.seed, decision_no))
                    .expect("catalog is non-empty");
                let above = pool.iter().filter(|c| score(&c.artist, &c.genre) > chosen).count();
                above as f64 / pool.len() as f64
            });
            decisions.push(DecisionTrace {
                epoch,
                mode: d.mode_used,
                artist: d.artist_prompt.clone(),
                genre: d.genre_prompt.clone(),
                true_score: chosen,
                best_score: best,
                pool_fraction_above,
            });
            true_sum += chosen;
            regret_sum += best - chosen;

            let ev = store.enqueue_event(&prime.prime_id, &d.artist_prompt, &d.genre_prompt, tick())?;
            store.commit(ev)?;
            let job = run_worker_step(&mut store, &MockGenerator, &mut tick, Duration::ZERO)?
                .expect("job was just queued");
            if job.state != JobState::Complete {
                return Err(Error::Generator(format!("{} ended {}", job.job_id, job.state)));
            }
            songs += 1;
            let song = store.song(job.result_song_id.as_ref().expect("complete")).cloned().expect("persisted");

            let z = scaling.apply(&song.prompt_features);
            for idx in sample(&mut rng, listeners.len(), cfg.ratings_per_song) {
                let l = &listeners[idx];
                for (q, stars) in l.answers(&z, &song.song_features, &mut rng) {
                    if q == RatingQuestion::Like {
                        like_sum += (stars - 3) as f64;
                        like_n += 1;
                    }
                    let ev = store.answer_event(&l.listener_id, &song.song_id, q, Stars::new(stars)?, tick())?;
                    if let Some(ev) = ev {
                        store.commit(ev)?;
                    }
                }
            }
        }
        let n = cfg.primes_per_epoch as f64;
        epochs.push(EpochReport {
            epoch,
            songs,
            mean_true: true_sum / n,
            mean_like: like_sum / like_n as f64,
            regret: regret_sum / n,
        });
    }
    Ok(SimReport {
        config: cfg.clone(),
        epochs,
        decisions,
    })
}
